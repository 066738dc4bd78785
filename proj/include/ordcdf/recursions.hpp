#pragma once

#include <cstddef>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "ordcdf/pair.hpp"
#include "ordcdf/scalar.hpp"

namespace ordcdf {

enum class KernelId { bolshev, steck, noe };

// Bolshev and Steck subtract computed intermediates, so pair arithmetic gives
// no faithfulness guarantee for them; only Noe is cancellation-free.
template <class S>
inline constexpr bool allows_cancellation = true;
template <>
inline constexpr bool allows_cancellation<Pair> = false;
template <class S>
inline constexpr bool allows_cancellation<Counted<S>> = allows_cancellation<S>;

// u_i = b_i and f_i = F(b_i) for the canonical Uniform[0,1]-vs-F problem.
template <class S>
struct TransformedBoundaries {
    std::vector<S> u, f;
    std::size_t n1 = 0, n2 = 0;
};

template <class S>
struct PsiTable {
    std::size_t n1 = 0, n2 = 0;
    std::vector<S> cells;

    PsiTable() = default;
    PsiTable(std::size_t a, std::size_t b)
        : n1(a), n2(b), cells((a + 1) * (b + 1), scalar_traits<S>::zero()) {}

    S& operator()(std::size_t i1, std::size_t i2) { return cells[i1 * (n2 + 1) + i2]; }
    const S& operator()(std::size_t i1, std::size_t i2) const {
        return cells[i1 * (n2 + 1) + i2];
    }
};

template <class S>
void validate_monotone_01(const std::vector<S>& v, const char* what) {
    const S zero = scalar_traits<S>::zero(), one = scalar_traits<S>::one();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < zero || v[i] > one)
            throw std::invalid_argument(std::string(what) + " values must lie in [0,1]");
        if (i > 0 && v[i] < v[i - 1])
            throw std::invalid_argument(std::string(what) + " values must be nondecreasing");
    }
}

template <class S>
void validate_boundaries(const TransformedBoundaries<S>& tb) {
    if (tb.u.size() != tb.n1 + tb.n2 || tb.f.size() != tb.u.size())
        throw std::invalid_argument("boundary vectors must have length n1 + n2");
    validate_monotone_01(tb.u, "threshold");
    validate_monotone_01(tb.f, "cdf");
}

// x^e by squaring; O(log e) multiplications, pow(x, 0) == 1.
template <class S>
S pow_scalar(S base, std::size_t e) {
    S r = scalar_traits<S>::one();
    while (e != 0) {
        if (e & 1) r = S(r * base);
        e >>= 1;
        if (e != 0) base = S(base * base);
    }
    return r;
}

// Row C(k, 0..k) via the backward recursion a(k,k) = 1,
// a(k,j) = (j+1)/(k-j) * a(k,j+1); no floating factorials.
template <class S>
std::vector<S> binomial_row(std::size_t k) {
    using T = scalar_traits<S>;
    std::vector<S> a(k + 1, T::one());
    for (std::size_t j = k; j-- > 0;) {
        S ratio = S(T::from_integer(j + 1) / T::from_integer(k - j));
        a[j] = S(ratio * a[j + 1]);
    }
    return a;
}

// One-group recursion, P(U_{1:n} <= b_1, ..., U_{n:n} <= b_n).
// Costs exactly 3n^2 + n - 1 scalar operations: n complement subtractions,
// 6 ops per inner step, 2 per outer step, n + 1 for the final sum.
// Invariant after outer iteration k, writing c = 1 - b:
//   s[j] = C(k, j-1) * c_j^{k-j+1} * Psi(j-1).
template <class S>
S bolshev_one_group(std::vector<S> b) {
    using T = scalar_traits<S>;
    static_assert(allows_cancellation<S>);
    validate_monotone_01(b, "threshold");
    const std::size_t n = b.size();
    const S one = T::one();
    if (n == 0) return one;
    for (std::size_t i = 0; i < n; ++i) b[i] = S(one - b[i]);
    std::vector<S> s(n, T::zero());
    s[0] = b[0];
    for (std::size_t k = 2; k <= n; ++k) {
        const S K = T::from_integer(k);
        S v = one;
        for (std::size_t j = 1; j < k; ++j) {
            v = S(v - s[j - 1]);
            S jm1 = S(T::from_integer(j) - one);
            S den = S(K - jm1);
            s[j - 1] = S(S(S(s[j - 1] * b[j - 1]) * K) / den);
        }
        s[k - 1] = S(S(K * v) * b[k - 1]);
    }
    S acc = T::zero();
    for (std::size_t i = 0; i < n; ++i) acc = S(acc + s[i]);
    return S(one - acc);
}

// Two-group Bolshev recursion with in-place coefficient-matrix updates.
// Returns the full table; cell (m1, m2) is final once the (m1, m2) loop
// iteration ends. Scratch: one coefficient matrix M plus the next block
// row's first column M0.
template <class S>
PsiTable<S> bolshev_two_group(const TransformedBoundaries<S>& tb) {
    using T = scalar_traits<S>;
    static_assert(allows_cancellation<S>);
    validate_boundaries(tb);
    const std::size_t n1 = tb.n1, n2 = tb.n2;
    const S one = T::one();
    const std::vector<S>& v1 = tb.u;
    const std::vector<S>& v2 = tb.f;

    PsiTable<S> r(n1, n2);
    for (S& c : r.cells) c = one;
    std::vector<S> M((n1 + 1) * (n2 + 1), one);
    auto mat = [&](std::size_t k1, std::size_t k2) -> S& { return M[k1 * (n2 + 1) + k2]; };
    std::vector<S> M0(n1 + 1, one);

    for (std::size_t m1 = 0; m1 <= n1; ++m1) {
        for (std::size_t m2 = 0; m2 <= n2; ++m2) {
            for (std::size_t k1 = 0; k1 <= m1; ++k1) {
                for (std::size_t k2 = 0; k2 <= m2; ++k2) {
                    if (k1 < m1 || k2 < m2)
                        r(m1, m2) = S(r(m1, m2) - S(mat(k1, k2) * r(k1, k2)));
                    if (m2 < n2) {
                        S ratio = S(T::from_integer(m2 + 1) / T::from_integer(m2 + 1 - k2));
                        mat(k1, k2) = S(S(mat(k1, k2) * ratio) * S(one - v2[k1 + k2]));
                    }
                }
                if (m2 < n2 && k1 < m1) {
                    S ratio = S(T::from_integer(k1 + 1) / T::from_integer(m1 - k1));
                    mat(k1, m2 + 1) = S(S(mat(k1 + 1, m2) * ratio) * S(one - v1[k1 + m2 + 1]));
                }
            }
        }
        if (m1 < n1) {
            for (std::size_t k1 = 0; k1 <= m1; ++k1) {
                S ratio = S(T::from_integer(m1 + 1) / T::from_integer(m1 + 1 - k1));
                M0[k1] = S(S(M0[k1] * ratio) * S(one - v1[k1]));
                mat(k1, 0) = M0[k1];
            }
        }
    }
    return r;
}

// Two-group Steck recursion. Coefficients are generated one anti-diagonal
// (constant k1 + k2) at a time: closed form for the first cell, then the
// in-diagonal walk; powers by squaring. b_0 := 0.
template <class S>
PsiTable<S> steck_two_group(const TransformedBoundaries<S>& tb) {
    using T = scalar_traits<S>;
    static_assert(allows_cancellation<S>);
    validate_boundaries(tb);
    const std::size_t n1 = tb.n1, n2 = tb.n2;
    const S one = T::one(), zero = T::zero();
    const std::vector<S>& u = tb.u;
    const std::vector<S>& f = tb.f;

    std::vector<std::vector<S>> binom1(n1 + 1), binom2(n2 + 1);
    for (std::size_t i = 0; i <= n1; ++i) binom1[i] = binomial_row<S>(i);
    for (std::size_t i = 0; i <= n2; ++i) binom2[i] = binomial_row<S>(i);

    PsiTable<S> psi(n1, n2);
    psi(0, 0) = one;
    for (std::size_t m1 = 0; m1 <= n1; ++m1) {
        for (std::size_t m2 = 0; m2 <= n2; ++m2) {
            const std::size_t m = m1 + m2;
            if (m == 0) continue;
            S base = S(pow_scalar(u[m - 1], m1) * pow_scalar(f[m - 1], m2));
            S acc = zero;
            for (std::size_t s = 0; s + 2 <= m; ++s) {
                const S D = S(u[m - 1] - u[s]);
                const S E = S(f[m - 1] - f[s]);
                const std::size_t k1lo = s > m2 ? s - m2 : 0;
                const std::size_t k1hi = std::min(m1, s);
                if (D == zero) {
                    // every cell with m1 > k1 vanishes; at k1 = m1 only the
                    // E-power remains (and E is 0 too for consistent inputs)
                    if (m1 >= k1lo && m1 <= k1hi) {
                        const std::size_t k2 = s - m1;
                        S cell = S(binom2[m2][k2] * pow_scalar(E, m2 - k2));
                        acc = S(acc + S(cell * psi(m1, k2)));
                    }
                    continue;
                }
                std::size_t k1 = k1lo;
                S cell = s <= m2 ? S(S(binom2[m2][s] * pow_scalar(D, m1)) *
                                     pow_scalar(E, m2 - s))
                                 : S(binom1[m1][k1] * pow_scalar(D, m1 - k1));
                const S ratio = S(E / D);
                for (;;) {
                    acc = S(acc + S(cell * psi(k1, s - k1)));
                    if (k1 == k1hi) break;
                    const std::size_t k2 = s - k1;
                    S r1 = S(T::from_integer(m1 - k1) / T::from_integer(k1 + 1));
                    S r2 = S(T::from_integer(k2) / T::from_integer(m2 - k2 + 1));
                    cell = S(S(S(cell * ratio) * r1) * r2);
                    ++k1;
                }
            }
            psi(m1, m2) = S(base - acc);
        }
    }
    return psi;
}

namespace detail {

// Layer-m cells, i.e. (i1, i2) with m <= i1 + i2; each is written by exactly
// one worker, the previous layer is read-only, so any partition of the cell
// list yields bit-identical results.
template <class S>
void noe_layer(const std::vector<std::pair<std::size_t, std::size_t>>& cells,
               std::size_t begin, std::size_t end, std::size_t m,
               const std::vector<std::vector<S>>& binom1,
               const std::vector<std::vector<S>>& binom2, const std::vector<S>& pw1,
               const std::vector<S>& pw2, const PsiTable<S>& prev, PsiTable<S>& cur) {
    using T = scalar_traits<S>;
    std::vector<S> w2(pw2.size(), T::zero());
    for (std::size_t c = begin; c < end; ++c) {
        const auto [i1, i2] = cells[c];
        const std::vector<S>& c1 = binom1[i1];
        const std::vector<S>& c2 = binom2[i2];
        for (std::size_t k2 = 0; k2 <= i2; ++k2) w2[k2] = S(c2[k2] * pw2[i2 - k2]);
        S sum = T::zero();
        const std::size_t k1lo = m - 1 > i2 ? m - 1 - i2 : 0;
        for (std::size_t k1 = k1lo; k1 <= i1; ++k1) {
            const S w1 = S(c1[k1] * pw1[i1 - k1]);
            const std::size_t k2lo = m - 1 > k1 ? m - 1 - k1 : 0;
            for (std::size_t k2 = k2lo; k2 <= i2; ++k2)
                sum = S(sum + S(S(w1 * w2[k2]) * prev(k1, k2)));
        }
        cur(i1, i2) = sum;
    }
}

}  // namespace detail

// Two-group Noe recursion: layers Q(m) for m = 1..n, keeping only the
// previous layer; Psi(i1, i2) = Q_{i1,i2}(i1 + i2). The only subtractions
// are on inputs (consecutive threshold differences) and all summands are
// nonnegative, so the pair backend stays faithful. Layers can be computed
// in parallel across cells; output is identical for any thread count.
template <class S>
PsiTable<S> noe_two_group(const TransformedBoundaries<S>& tb, unsigned threads = 1) {
    using T = scalar_traits<S>;
    validate_boundaries(tb);
    const std::size_t n1 = tb.n1, n2 = tb.n2, n = n1 + n2;
    const std::vector<S>& u = tb.u;
    const std::vector<S>& f = tb.f;

    PsiTable<S> psi(n1, n2);
    psi(0, 0) = T::one();
    if (n == 0) return psi;

    std::vector<std::vector<S>> binom1(n1 + 1), binom2(n2 + 1);
    for (std::size_t i = 0; i <= n1; ++i) binom1[i] = binomial_row<S>(i);
    for (std::size_t i = 0; i <= n2; ++i) binom2[i] = binomial_row<S>(i);

    PsiTable<S> prev(n1, n2), cur(n1, n2);
    std::vector<S> pw1(n1 + 1, T::one()), pw2(n2 + 1, T::one());
    for (std::size_t j = 1; j <= n1; ++j) pw1[j] = S(pw1[j - 1] * u[0]);
    for (std::size_t j = 1; j <= n2; ++j) pw2[j] = S(pw2[j - 1] * f[0]);
    for (std::size_t i1 = 0; i1 <= n1; ++i1)
        for (std::size_t i2 = 0; i2 <= n2; ++i2) prev(i1, i2) = S(pw1[i1] * pw2[i2]);
    if (n1 >= 1) psi(1, 0) = prev(1, 0);
    if (n2 >= 1) psi(0, 1) = prev(0, 1);

    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t m = 2; m <= n; ++m) {
        const S d1 = S(u[m - 1] - u[m - 2]);
        const S d2 = S(f[m - 1] - f[m - 2]);
        pw1[0] = T::one();
        pw2[0] = T::one();
        for (std::size_t j = 1; j <= n1; ++j) pw1[j] = S(pw1[j - 1] * d1);
        for (std::size_t j = 1; j <= n2; ++j) pw2[j] = S(pw2[j - 1] * d2);

        cells.clear();
        for (std::size_t i1 = 0; i1 <= n1; ++i1) {
            const std::size_t lo = m > i1 ? m - i1 : 0;
            for (std::size_t i2 = lo; i2 <= n2; ++i2) cells.emplace_back(i1, i2);
        }

        if (threads > 1 && cells.size() >= 2 * threads) {
            std::vector<std::thread> pool;
            const std::size_t chunk = (cells.size() + threads - 1) / threads;
            for (unsigned t = 0; t < threads; ++t) {
                const std::size_t lo = t * chunk;
                const std::size_t hi = std::min(cells.size(), lo + chunk);
                if (lo >= hi) break;
                pool.emplace_back([&, lo, hi] {
                    detail::noe_layer(cells, lo, hi, m, binom1, binom2, pw1, pw2, prev, cur);
                });
            }
            for (std::thread& t : pool) t.join();
        } else {
            detail::noe_layer(cells, 0, cells.size(), m, binom1, binom2, pw1, pw2, prev, cur);
        }

        for (const auto& [i1, i2] : cells)
            if (i1 + i2 == m) psi(i1, i2) = cur(i1, i2);
        std::swap(prev, cur);
    }
    return psi;
}

template <class S>
PsiTable<S> compute_psi(const TransformedBoundaries<S>& tb, KernelId kernel,
                        unsigned threads = 1) {
    if constexpr (!allows_cancellation<S>) {
        if (kernel != KernelId::noe)
            throw std::invalid_argument("pair backend supports only the noe kernel");
        return noe_two_group(tb, threads);
    } else {
        switch (kernel) {
            case KernelId::bolshev: return bolshev_two_group(tb);
            case KernelId::steck: return steck_two_group(tb);
            case KernelId::noe: return noe_two_group(tb, threads);
        }
        throw std::invalid_argument("unknown kernel");
    }
}

// Psi_{n1,n2} on explicitly supplied (already transformed) suffix
// boundaries; empty vectors encode the empty constraint set.
template <class S>
S psi_suffix(const std::vector<S>& u, const std::vector<S>& f, std::size_t n1, std::size_t n2,
             KernelId kernel = KernelId::noe, unsigned threads = 1) {
    if (u.size() != n1 + n2 || f.size() != u.size())
        throw std::invalid_argument("suffix boundary vectors must have length n1 + n2");
    if (n1 + n2 == 0) return scalar_traits<S>::one();
    TransformedBoundaries<S> tb{u, f, n1, n2};
    return compute_psi(tb, kernel, threads)(n1, n2);
}

enum class CountedKernel { bolshev1, bolshev2, steck2, noe2 };

// Instrumented single-threaded run; counts one increment per scalar
// add/sub/mul/div executed (integer conversions are free).
template <class S>
OpCounter count_operations(CountedKernel kernel, const TransformedBoundaries<S>& tb) {
    TransformedBoundaries<Counted<S>> ctb;
    ctb.n1 = tb.n1;
    ctb.n2 = tb.n2;
    for (const S& x : tb.u) ctb.u.emplace_back(x);
    for (const S& x : tb.f) ctb.f.emplace_back(x);
    OpCounter c;
    CountingScope scope(c);
    if constexpr (allows_cancellation<S>) {
        switch (kernel) {
            case CountedKernel::bolshev1:
                if (tb.n2 != 0)
                    throw std::invalid_argument("bolshev1 is the one-group kernel (n2 must be 0)");
                bolshev_one_group(ctb.u);
                break;
            case CountedKernel::bolshev2: bolshev_two_group(ctb); break;
            case CountedKernel::steck2: steck_two_group(ctb); break;
            case CountedKernel::noe2: noe_two_group(ctb); break;
        }
    } else {
        if (kernel != CountedKernel::noe2)
            throw std::invalid_argument("pair backend supports only the noe kernel");
        noe_two_group(ctb);
    }
    return c;
}

// Enclosure under multiplicative (1 +- eps) perturbation of the consecutive
// threshold differences: Psi * (1 - 2 eps)^(i1+i2) <= perturbed Psi <=
// Psi * (1 + 2 eps)^(i1+i2).
struct EnclosureTables {
    PsiTable<Rational> lower, upper;
};

inline EnclosureTables enclosure_bounds(const PsiTable<Rational>& psi, const Rational& eps) {
    EnclosureTables e{PsiTable<Rational>(psi.n1, psi.n2), PsiTable<Rational>(psi.n1, psi.n2)};
    const Rational lo = 1 - 2 * eps, hi = 1 + 2 * eps;
    for (std::size_t i1 = 0; i1 <= psi.n1; ++i1)
        for (std::size_t i2 = 0; i2 <= psi.n2; ++i2) {
            e.lower(i1, i2) = psi(i1, i2) * pow_scalar(lo, i1 + i2);
            e.upper(i1, i2) = psi(i1, i2) * pow_scalar(hi, i1 + i2);
        }
    return e;
}

}  // namespace ordcdf
