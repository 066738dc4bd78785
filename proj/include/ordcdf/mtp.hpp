#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "ordcdf/distributions.hpp"
#include "ordcdf/recursions.hpp"
#include "ordcdf/scalar.hpp"

namespace ordcdf {

// Critical values are kept as exact rationals; each backend converts once.
struct StepUpProcedure {
    std::vector<Rational> t;
    std::size_t m() const { return t.size(); }
};

inline void validate_procedure(const StepUpProcedure& proc) {
    if (proc.t.empty()) throw std::invalid_argument("step-up procedure needs m >= 1");
    for (std::size_t i = 0; i < proc.t.size(); ++i) {
        if (proc.t[i] <= 0 || proc.t[i] >= 1)
            throw std::invalid_argument("critical values must lie in (0,1)");
        if (i > 0 && proc.t[i] < proc.t[i - 1])
            throw std::invalid_argument("critical values must be nondecreasing");
    }
}

inline StepUpProcedure bh_thresholds(std::size_t m, const Rational& alpha) {
    if (m == 0) throw std::invalid_argument("bh_thresholds needs m >= 1");
    if (alpha <= 0 || alpha >= 1) throw std::invalid_argument("alpha must lie in (0,1)");
    StepUpProcedure proc;
    proc.t.reserve(m);
    for (std::size_t i = 1; i <= m; ++i)
        proc.t.push_back(Rational(static_cast<unsigned long>(i)) * alpha /
                         Rational(static_cast<unsigned long>(m)));
    return proc;
}

// P(V = j, R = k); square (m+1) x (m+1) storage, j > k structurally zero.
template <class S>
struct JointVR {
    std::size_t m = 0;
    std::vector<S> p;

    JointVR() = default;
    explicit JointVR(std::size_t m_)
        : m(m_), p((m_ + 1) * (m_ + 1), scalar_traits<S>::zero()) {}

    S& operator()(std::size_t j, std::size_t k) { return p[j * (m + 1) + k]; }
    const S& operator()(std::size_t j, std::size_t k) const { return p[j * (m + 1) + k]; }

    S total() const {
        S acc = scalar_traits<S>::zero();
        for (const S& x : p) acc = S(acc + x);
        return acc;
    }
};

// Critical values plus the F(t_i) values, fixed once per threshold; every
// prefactor and every suffix boundary below reuses these same numbers, so
// the whole (V,R) table is the exact table of SOME continuous cdf even when
// F itself is only evaluated in double precision.
template <class S>
struct MtpInputs {
    std::size_t m = 0;
    std::vector<S> t, Ft;
};

template <class S>
MtpInputs<S> make_mtp_inputs(const StepUpProcedure& proc, const ContinuousCdf& F) {
    validate_procedure(proc);
    using T = scalar_traits<S>;
    MtpInputs<S> in;
    in.m = proc.m();
    for (const Rational& ti : proc.t) {
        in.t.push_back(T::from_rational(ti));
        if constexpr (std::is_same_v<S, Rational>) {
            if (F.exact_rational()) {
                in.Ft.push_back(F.eval_rational(ti));
                continue;
            }
        }
        in.Ft.push_back(S(F.eval(rational_to_double(ti))));
    }
    for (std::size_t i = 0; i < in.m; ++i) {
        if (i > 0 && in.Ft[i] < in.Ft[i - 1])
            throw std::invalid_argument("cdf values must be nondecreasing over the thresholds");
    }
    return in;
}

namespace detail {

// Psi table over the reversed complementary suffix (t_{k+1}..t_m), padded
// with ones so one kernel run serves every j at this k.
template <class S>
PsiTable<S> fm_suffix_table(const MtpInputs<S>& in, std::size_t m0, std::size_t k,
                            KernelId kernel, unsigned threads) {
    using T = scalar_traits<S>;
    const S one = T::one();
    const std::size_t m = in.m;
    const std::size_t nfree = m - k;
    const std::size_t n1 = std::min(m0, nfree);
    const std::size_t n2 = std::min(m - m0, nfree);
    TransformedBoundaries<S> tb;
    tb.n1 = n1;
    tb.n2 = n2;
    for (std::size_t i = 0; i < nfree; ++i) {
        tb.u.push_back(S(one - in.t[m - 1 - i]));
        tb.f.push_back(S(one - in.Ft[m - 1 - i]));
    }
    for (std::size_t i = nfree; i < n1 + n2; ++i) {
        tb.u.push_back(one);
        tb.f.push_back(one);
    }
    return compute_psi(tb, kernel, threads);
}

template <class S>
S one_group_suffix(const std::vector<S>& g, std::size_t k, KernelId kernel,
                   unsigned threads) {
    using T = scalar_traits<S>;
    const S one = T::one();
    const std::size_t m = g.size();
    const std::size_t nfree = m - k;
    if (nfree == 0) return one;
    TransformedBoundaries<S> tb;
    tb.n1 = nfree;
    tb.n2 = 0;
    for (std::size_t i = 0; i < nfree; ++i) tb.u.push_back(S(one - g[m - 1 - i]));
    tb.f = tb.u;
    return compute_psi(tb, kernel, threads)(nfree, 0);
}

}  // namespace detail

// Conditional model FM(m, m0, F): exactly m0 true nulls (uniform p-values),
// m - m0 false nulls with p-value cdf F. p[j][k] couples the binomial
// rejection prefactors with Psi on the reversed complementary thresholds,
// evaluated for the survival-transformed alternative. The number of
// still-uniform variables in that suffix problem is m0 - j and the number
// of transformed-F variables is (m - m0) - (k - j).
template <class S>
JointVR<S> joint_vr_fm(const MtpInputs<S>& in, std::size_t m0,
                       KernelId kernel = KernelId::noe, unsigned threads = 1) {
    const std::size_t m = in.m;
    if (m0 > m) throw std::invalid_argument("FM model needs m0 <= m");
    const std::size_t m1 = m - m0;
    JointVR<S> vr(m);
    const std::vector<S> binom0 = binomial_row<S>(m0);
    const std::vector<S> binom1 = binomial_row<S>(m1);
    for (std::size_t k = 0; k <= m; ++k) {
        const PsiTable<S> psi = detail::fm_suffix_table(in, m0, k, kernel, threads);
        const std::size_t jlo = k > m1 ? k - m1 : 0;
        const std::size_t jhi = std::min(k, m0);
        for (std::size_t j = jlo; j <= jhi; ++j) {
            const std::size_t i1 = m0 - j;
            const std::size_t i2 = (m - k) - i1;
            S cell = psi(i1, i2);
            if (k > 0) {
                S pref = S(binom0[j] * binom1[k - j]);
                pref = S(pref * pow_scalar(in.t[k - 1], j));
                pref = S(pref * pow_scalar(in.Ft[k - 1], k - j));
                cell = S(pref * cell);
            }
            vr(j, k) = cell;
        }
    }
    return vr;
}

// Unconditional model RM(m, pi0, F): each hypothesis is truly null with
// probability pi0, p-value cdf G = pi0 * t + (1 - pi0) * F. Conditioning on
// R = k makes V binomial with success probability pitilde = pi0 t_k / G(t_k);
// its complement is computed as (1 - pi0) F(t_k) / G(t_k) to stay exact.
template <class S>
JointVR<S> joint_vr_rm(const MtpInputs<S>& in, const Rational& pi0,
                       KernelId kernel = KernelId::noe, unsigned threads = 1) {
    using T = scalar_traits<S>;
    if (pi0 < 0 || pi0 > 1) throw std::invalid_argument("RM model needs pi0 in [0,1]");
    const std::size_t m = in.m;
    const S zero = T::zero();
    const S p0 = T::from_rational(pi0);
    const S q0 = T::from_rational(1 - pi0);
    std::vector<S> G;
    G.reserve(m);
    for (std::size_t i = 0; i < m; ++i)
        G.push_back(S(S(p0 * in.t[i]) + S(q0 * in.Ft[i])));

    JointVR<S> vr(m);
    const std::vector<S> binom_m = binomial_row<S>(m);
    for (std::size_t k = 0; k <= m; ++k) {
        const S psi = detail::one_group_suffix(G, k, kernel, threads);
        if (k == 0) {
            vr(0, 0) = psi;
            continue;
        }
        const S gk = G[k - 1];
        if (gk == zero) continue;  // G(t_k)^k = 0, entire column vanishes
        const S pitilde = S(S(p0 * in.t[k - 1]) / gk);
        const S pitilde_c = S(S(q0 * in.Ft[k - 1]) / gk);
        const S common = S(S(binom_m[k] * pow_scalar(gk, k)) * psi);
        const std::vector<S> binom_k = binomial_row<S>(k);
        for (std::size_t j = 0; j <= k; ++j) {
            S cell = S(binom_k[j] * pow_scalar(pitilde, j));
            cell = S(cell * pow_scalar(pitilde_c, k - j));
            vr(j, k) = S(common * cell);
        }
    }
    return vr;
}

// E[V / max(R, 1)]
template <class S>
S fdr(const JointVR<S>& vr) {
    using T = scalar_traits<S>;
    S acc = T::zero();
    for (std::size_t k = 1; k <= vr.m; ++k) {
        const S kk = T::from_integer(k);
        for (std::size_t j = 1; j <= k; ++j)
            acc = S(acc + S(S(T::from_integer(j) / kk) * vr(j, k)));
    }
    return acc;
}

// atoms of V / max(R, 1), keyed by the exact reduced fraction
template <class S>
std::vector<std::pair<Rational, S>> fdp_distribution(const JointVR<S>& vr) {
    std::map<Rational, S> atoms;
    for (std::size_t k = 0; k <= vr.m; ++k)
        for (std::size_t j = 0; j <= k; ++j) {
            Rational v(static_cast<unsigned long>(j), static_cast<unsigned long>(std::max<std::size_t>(k, 1)));
            v.canonicalize();
            auto [it, fresh] = atoms.emplace(v, vr(j, k));
            if (!fresh) it->second = S(it->second + vr(j, k));
        }
    return {atoms.begin(), atoms.end()};
}

// E[(R - V) / (m - m0)] with 0/0 = 0
template <class S>
S avg_power_fm(const JointVR<S>& vr, std::size_t m0) {
    using T = scalar_traits<S>;
    S acc = T::zero();
    if (m0 >= vr.m) return acc;
    const S denom = T::from_integer(vr.m - m0);
    for (std::size_t k = 1; k <= vr.m; ++k)
        for (std::size_t j = 0; j < k; ++j)
            acc = S(acc + S(S(T::from_integer(k - j) / denom) * vr(j, k)));
    return acc;
}

// P((R - V) / (m - m0) >= lambda); the m0 = m case compares 0/0 = 0 < lambda
template <class S>
S lambda_power_fm(const JointVR<S>& vr, std::size_t m0, const Rational& lambda) {
    using T = scalar_traits<S>;
    if (lambda <= 0 || lambda > 1) throw std::invalid_argument("lambda must lie in (0,1]");
    S acc = T::zero();
    if (m0 >= vr.m) return acc;
    const Rational cut = lambda * Rational(static_cast<unsigned long>(vr.m - m0));
    for (std::size_t k = 1; k <= vr.m; ++k)
        for (std::size_t j = 0; j < k; ++j)
            if (Rational(static_cast<unsigned long>(k - j)) >= cut)
                acc = S(acc + vr(j, k));
    return acc;
}

namespace detail {

// C(m, m0) pi0^m0 (1-pi0)^(m-m0) for m0 = 0..m
template <class S>
std::vector<S> rm_mixture_weights(std::size_t m, const Rational& pi0) {
    using T = scalar_traits<S>;
    const S p0 = T::from_rational(pi0);
    const S q0 = T::from_rational(1 - pi0);
    const std::vector<S> binom = binomial_row<S>(m);
    std::vector<S> w(m + 1);
    for (std::size_t m0 = 0; m0 <= m; ++m0)
        w[m0] = S(S(binom[m0] * pow_scalar(p0, m0)) * pow_scalar(q0, m - m0));
    return w;
}

}  // namespace detail

template <class S>
S avg_power_rm(const MtpInputs<S>& in, const Rational& pi0, KernelId kernel = KernelId::noe,
               unsigned threads = 1) {
    using T = scalar_traits<S>;
    const std::vector<S> w = detail::rm_mixture_weights<S>(in.m, pi0);
    S acc = T::zero();
    for (std::size_t m0 = 0; m0 < in.m; ++m0) {  // m0 = m contributes 0
        if (w[m0] == T::zero()) continue;
        const JointVR<S> vr = joint_vr_fm(in, m0, kernel, threads);
        acc = S(acc + S(w[m0] * avg_power_fm(vr, m0)));
    }
    return acc;
}

template <class S>
S lambda_power_rm(const MtpInputs<S>& in, const Rational& pi0, const Rational& lambda,
                  KernelId kernel = KernelId::noe, unsigned threads = 1) {
    using T = scalar_traits<S>;
    const std::vector<S> w = detail::rm_mixture_weights<S>(in.m, pi0);
    S acc = T::zero();
    for (std::size_t m0 = 0; m0 < in.m; ++m0) {
        if (w[m0] == T::zero()) continue;
        const JointVR<S> vr = joint_vr_fm(in, m0, kernel, threads);
        acc = S(acc + S(w[m0] * lambda_power_fm(vr, m0, lambda)));
    }
    return acc;
}

}  // namespace ordcdf
