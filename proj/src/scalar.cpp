#include "ordcdf/scalar.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace ordcdf {

namespace {

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

mpz_class pow10_z(unsigned long e) {
    mpz_class r;
    mpz_ui_pow_ui(r.get_mpz_t(), 10, e);
    return r;
}

[[noreturn]] void bad(std::string_view text) {
    throw std::invalid_argument("not a decimal or p/q fraction: '" + std::string(text) + "'");
}

}  // namespace

Rational parse_rational(std::string_view text) {
    std::string_view s = text;
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (s.empty()) bad(text);

    if (auto slash = s.find('/'); slash != std::string_view::npos) {
        std::string_view num = s.substr(0, slash), den = s.substr(slash + 1);
        bool neg = false;
        if (!num.empty() && (num.front() == '+' || num.front() == '-')) {
            neg = num.front() == '-';
            num.remove_prefix(1);
        }
        if (!all_digits(num) || !all_digits(den)) bad(text);
        mpz_class n(std::string(num), 10), d(std::string(den), 10);
        if (d == 0) bad(text);
        if (neg) n = -n;
        Rational q(n, d);
        q.canonicalize();
        return q;
    }

    bool neg = false;
    if (s.front() == '+' || s.front() == '-') {
        neg = s.front() == '-';
        s.remove_prefix(1);
    }
    std::string digits;
    std::size_t i = 0, frac_len = 0;
    bool saw_digit = false, saw_dot = false;
    for (; i < s.size(); ++i) {
        char c = s[i];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            digits.push_back(c);
            saw_digit = true;
            if (saw_dot) ++frac_len;
        } else if (c == '.' && !saw_dot) {
            saw_dot = true;
        } else {
            break;
        }
    }
    if (!saw_digit) bad(text);
    long exp10 = 0;
    if (i < s.size()) {
        if (s[i] != 'e' && s[i] != 'E') bad(text);
        std::string_view es = s.substr(i + 1);
        bool eneg = false;
        if (!es.empty() && (es.front() == '+' || es.front() == '-')) {
            eneg = es.front() == '-';
            es.remove_prefix(1);
        }
        if (!all_digits(es) || es.size() > 6) bad(text);
        for (char c : es) exp10 = exp10 * 10 + (c - '0');
        if (eneg) exp10 = -exp10;
    }

    mpz_class num(digits, 10);
    if (neg) num = -num;
    mpz_class den = pow10_z(frac_len);
    if (exp10 > 0)
        num *= pow10_z(static_cast<unsigned long>(exp10));
    else if (exp10 < 0)
        den *= pow10_z(static_cast<unsigned long>(-exp10));
    Rational q(num, den);
    q.canonicalize();
    return q;
}

std::string rational_to_string(const Rational& x) {
    if (x.get_den() == 1) return x.get_num().get_str();
    return x.get_num().get_str() + "/" + x.get_den().get_str();
}

double rational_to_double_rd(const Rational& x) {
    double t = mpq_get_d(x.get_mpq_t());  // truncation, i.e. toward zero
    if (x >= 0 || Rational(t) == x) return t;
    return std::nextafter(t, -HUGE_VAL);
}

double rational_to_double_ru(const Rational& x) {
    double t = mpq_get_d(x.get_mpq_t());
    if (x <= 0 || Rational(t) == x) return t;
    return std::nextafter(t, HUGE_VAL);
}

double rational_to_double(const Rational& x) {
    double lo = rational_to_double_rd(x);
    if (Rational(lo) == x) return lo;
    double hi = rational_to_double_ru(x);
    Rational dlo = x - Rational(lo), dhi = Rational(hi) - x;
    if (dlo < dhi) return lo;
    if (dhi < dlo) return hi;
    // exact tie: even mantissa wins
    std::int64_t bits;
    static_assert(sizeof(bits) == sizeof(lo));
    __builtin_memcpy(&bits, &lo, sizeof(bits));
    return (bits & 1) == 0 ? lo : hi;
}

std::string double_to_string(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

}  // namespace ordcdf
