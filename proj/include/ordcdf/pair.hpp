#pragma once

#include <cfloat>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>

#include "ordcdf/scalar.hpp"

namespace ordcdf {

// Error-free transformations. s + e == a + b and p + e == a * b hold exactly
// in the absence of overflow (TwoSum) / overflow and underflow (TwoProduct).

struct EftResult {
    double value;
    double error;
};

// Knuth TwoSum, no branch on magnitudes.
inline EftResult two_sum(double a, double b) {
    double s = a + b;
    double bb = s - a;
    double e = (a - (s - bb)) + (b - bb);
    return {s, e};
}

// Requires |a| >= |b| (or a == 0).
inline EftResult fast_two_sum(double a, double b) {
    double s = a + b;
    double e = b - (s - a);
    return {s, e};
}

// FMA-based TwoProduct. The error term is inexact once a*b is subnormal.
inline EftResult two_prod(double a, double b) {
    double p = a * b;
    double e = std::fma(a, b, -p);
    return {p, e};
}

// Unevaluated sum hi + lo with |lo| <= ulp(hi)/2 after every operation.
// Exception flags travel with the value (sticky through all operations).
struct Pair {
    double hi = 0.0;
    double lo = 0.0;
    std::uint8_t flags = 0;

    static constexpr std::uint8_t kUnderflow = 1;
    static constexpr std::uint8_t kOverflow = 2;

    Pair() = default;
    Pair(double x) : hi(x) {}  // NOLINT: doubles are exact pair values
    Pair(double h, double l, std::uint8_t f = 0) : hi(h), lo(l), flags(f) {}

    bool underflow() const { return flags & kUnderflow; }
    bool overflow() const { return flags & kOverflow; }
};

namespace pair_detail {

inline bool subnormal(double x) { return x != 0.0 && std::fabs(x) < DBL_MIN; }

inline std::uint8_t flags_of(double hi, double err_term) {
    std::uint8_t f = 0;
    if (subnormal(hi) || subnormal(err_term)) f |= Pair::kUnderflow;
    if (std::isinf(hi) || std::isnan(hi)) f |= Pair::kOverflow;
    return f;
}

}  // namespace pair_detail

// CPairSum of Rump and Lange.
inline Pair pair_add(const Pair& x, const Pair& y) {
    auto [s, t] = two_sum(x.hi, y.hi);
    double v = x.lo + y.lo;
    double w = t + v;
    auto [hi, lo] = fast_two_sum(s, w);
    return {hi, lo, static_cast<std::uint8_t>(x.flags | y.flags | pair_detail::flags_of(hi, t))};
}

inline Pair pair_sub(const Pair& x, const Pair& y) {
    return pair_add(x, Pair(-y.hi, -y.lo, y.flags));
}

// CPairProd.
inline Pair pair_mul(const Pair& x, const Pair& y) {
    auto [p, q] = two_prod(x.hi, y.hi);
    double c = x.hi * y.lo;
    double d = x.lo * y.hi;
    double e = c + d;
    double f = q + e;
    auto [hi, lo] = fast_two_sum(p, f);
    std::uint8_t fl = static_cast<std::uint8_t>(x.flags | y.flags | pair_detail::flags_of(hi, q));
    // a product of nonzeros flushing to zero is an underflow that the
    // subnormal check cannot see
    if (p == 0.0 && x.hi != 0.0 && y.hi != 0.0) fl |= Pair::kUnderflow;
    return {hi, lo, fl};
}

// CPairDiv.
inline Pair pair_div(const Pair& x, const Pair& y) {
    double c = x.hi / y.hi;
    auto [p, q] = two_prod(c, y.hi);
    double s = ((x.hi - p) - q) + x.lo;
    double r = std::fma(-c, y.lo, s);
    double cc = r / y.hi;
    auto [hi, lo] = fast_two_sum(c, cc);
    std::uint8_t fl = static_cast<std::uint8_t>(x.flags | y.flags | pair_detail::flags_of(hi, q));
    if (c == 0.0 && x.hi != 0.0 && !std::isinf(y.hi)) fl |= Pair::kUnderflow;
    return {hi, lo, fl};
}

inline Pair operator+(const Pair& a, const Pair& b) { return pair_add(a, b); }
inline Pair operator-(const Pair& a, const Pair& b) { return pair_sub(a, b); }
inline Pair operator*(const Pair& a, const Pair& b) { return pair_mul(a, b); }
inline Pair operator/(const Pair& a, const Pair& b) { return pair_div(a, b); }

// Lexicographic on (hi, lo); for normalized pairs this matches the value
// order except for ties straddling a representable boundary, which is close
// enough for input validation (kernels accept equal thresholds anyway).
inline bool operator<(const Pair& a, const Pair& b) {
    return a.hi < b.hi || (a.hi == b.hi && a.lo < b.lo);
}
inline bool operator>(const Pair& a, const Pair& b) { return b < a; }
inline bool operator<=(const Pair& a, const Pair& b) { return !(b < a); }
inline bool operator>=(const Pair& a, const Pair& b) { return !(a < b); }
inline bool operator==(const Pair& a, const Pair& b) { return a.hi == b.hi && a.lo == b.lo; }
inline bool operator!=(const Pair& a, const Pair& b) { return !(a == b); }

// fl(hi + lo): exact or one of the two doubles adjacent to the represented
// value, hence a faithful rounding of it.
inline double faithful_round(const Pair& x) { return x.hi + x.lo; }

inline constexpr std::uint64_t k_limit = (1ull << 26) - 2;

// Static accounting for the Noe evaluation tree; valid for n1 + n2 >= 2.
inline std::uint64_t k_parameter(std::uint64_t n1, std::uint64_t n2) {
    if (n1 + n2 < 2) throw std::domain_error("k_parameter requires n1 + n2 >= 2");
    return n1 * n2 + 8 * (n1 + n2) - 7;
}

// Rounded result plus the evidence needed to audit the faithfulness claim.
struct FaithfulResult {
    double value = 0.0;
    bool underflow_flag = false;
    std::uint64_t k_used = 0;
    std::uint64_t k_limit = ordcdf::k_limit;

    bool certified() const { return !underflow_flag && k_used <= k_limit; }
};

inline FaithfulResult make_faithful(const Pair& x, std::uint64_t n1, std::uint64_t n2) {
    FaithfulResult r;
    r.value = faithful_round(x);
    r.underflow_flag = x.underflow() || x.overflow();
    r.k_used = (n1 + n2 >= 2) ? k_parameter(n1, n2) : 0;
    return r;
}

template <>
struct scalar_traits<Pair> {
    static constexpr bool exact = false;
    static Pair zero() { return Pair(); }
    static Pair one() { return Pair(1.0); }
    static Pair from_integer(std::uint64_t n) {
        double h = static_cast<double>(n);
        double l = static_cast<double>(static_cast<__int128>(n) - static_cast<__int128>(h));
        return {h, l};
    }
    static Pair from_string(std::string_view s) {
        return from_rational(parse_rational(s));
    }
    static Pair from_rational(const Rational& q) {
        double h = rational_to_double(q);
        double l = rational_to_double(q - Rational(h));
        return {h, l};
    }
    static double to_double(const Pair& x) { return faithful_round(x); }
    static const char* name() { return "pair"; }
};

// Exact pair value as a rational (hi + lo), for oracles and tests.
inline Rational pair_to_rational(const Pair& x) { return Rational(x.hi) + Rational(x.lo); }

}  // namespace ordcdf
