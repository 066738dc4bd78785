#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

namespace ordcdf {

// Exact rational scalar. mpq_class keeps canonical form (lowest terms,
// positive denominator) after every arithmetic operation.
using Rational = mpq_class;

// Exact value of a decimal literal ("0.05", "2", "1e-3") or a fraction
// ("3/40"). Throws std::invalid_argument on malformed input.
Rational parse_rational(std::string_view text);

// "p/q" (or "p" when q == 1).
std::string rational_to_string(const Rational& x);

// Nearest double (ties to even). mpq_get_d alone truncates toward zero.
double rational_to_double(const Rational& x);

// Directed roundings, used to check faithfulness against exact values.
double rational_to_double_rd(const Rational& x);
double rational_to_double_ru(const Rational& x);

// Shortest decimal string that round-trips to x.
std::string double_to_string(double x);

struct OpCounter {
    std::uint64_t adds = 0, subs = 0, muls = 0, divs = 0;
    std::uint64_t total() const { return adds + subs + muls + divs; }
};

namespace detail {
inline thread_local OpCounter* active_counter = nullptr;
inline void bump_add() { if (active_counter) ++active_counter->adds; }
inline void bump_sub() { if (active_counter) ++active_counter->subs; }
inline void bump_mul() { if (active_counter) ++active_counter->muls; }
inline void bump_div() { if (active_counter) ++active_counter->divs; }
}  // namespace detail

// Directs the four arithmetic operations of Counted<S> values on this thread
// into the given counter for the lifetime of the scope.
class CountingScope {
  public:
    explicit CountingScope(OpCounter& c) : prev_(detail::active_counter) {
        detail::active_counter = &c;
    }
    ~CountingScope() { detail::active_counter = prev_; }
    CountingScope(const CountingScope&) = delete;
    CountingScope& operator=(const CountingScope&) = delete;

  private:
    OpCounter* prev_;
};

// Scalar wrapper whose +,-,*,/ report to the active CountingScope.
// Construction, copies and integer conversions are free.
template <class S>
struct Counted {
    S v{};

    Counted() = default;
    Counted(S x) : v(std::move(x)) {}  // NOLINT: implicit by design

    friend Counted operator+(const Counted& a, const Counted& b) {
        detail::bump_add();
        return Counted(S(a.v + b.v));
    }
    friend Counted operator-(const Counted& a, const Counted& b) {
        detail::bump_sub();
        return Counted(S(a.v - b.v));
    }
    friend Counted operator*(const Counted& a, const Counted& b) {
        detail::bump_mul();
        return Counted(S(a.v * b.v));
    }
    friend Counted operator/(const Counted& a, const Counted& b) {
        detail::bump_div();
        return Counted(S(a.v / b.v));
    }
    friend bool operator==(const Counted& a, const Counted& b) { return a.v == b.v; }
    friend bool operator!=(const Counted& a, const Counted& b) { return a.v != b.v; }
    friend bool operator<(const Counted& a, const Counted& b) { return a.v < b.v; }
    friend bool operator<=(const Counted& a, const Counted& b) { return a.v <= b.v; }
    friend bool operator>(const Counted& a, const Counted& b) { return a.v > b.v; }
    friend bool operator>=(const Counted& a, const Counted& b) { return a.v >= b.v; }
};

template <class S>
struct scalar_traits;

template <>
struct scalar_traits<double> {
    static constexpr bool exact = false;
    static double zero() { return 0.0; }
    static double one() { return 1.0; }
    static double from_integer(std::uint64_t n) { return static_cast<double>(n); }
    static double from_string(std::string_view s) { return rational_to_double(parse_rational(s)); }
    static double from_rational(const Rational& q) { return rational_to_double(q); }
    static double to_double(double x) { return x; }
    static const char* name() { return "double"; }
};

template <>
struct scalar_traits<Rational> {
    static constexpr bool exact = true;
    static Rational zero() { return Rational(0); }
    static Rational one() { return Rational(1); }
    static Rational from_integer(std::uint64_t n) {
        mpz_class z;
        mpz_import(z.get_mpz_t(), 1, -1, sizeof(n), 0, 0, &n);
        return Rational(z);
    }
    static Rational from_string(std::string_view s) { return parse_rational(s); }
    static Rational from_rational(const Rational& q) { return q; }
    static double to_double(const Rational& x) { return rational_to_double(x); }
    static const char* name() { return "rational"; }
};

template <class S>
struct scalar_traits<Counted<S>> {
    using inner = scalar_traits<S>;
    static constexpr bool exact = inner::exact;
    static Counted<S> zero() { return Counted<S>(inner::zero()); }
    static Counted<S> one() { return Counted<S>(inner::one()); }
    static Counted<S> from_integer(std::uint64_t n) { return Counted<S>(inner::from_integer(n)); }
    static Counted<S> from_string(std::string_view s) { return Counted<S>(inner::from_string(s)); }
    static Counted<S> from_rational(const Rational& q) { return Counted<S>(inner::from_rational(q)); }
    static double to_double(const Counted<S>& x) { return inner::to_double(x.v); }
    static const char* name() { return inner::name(); }
};

// Runs f() with a fresh counter installed and returns (result, counts).
template <class F>
auto counted_eval(F&& f) {
    OpCounter c;
    CountingScope scope(c);
    auto value = f();
    return std::pair{std::move(value), c};
}

}  // namespace ordcdf
