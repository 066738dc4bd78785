#include "ordcdf/distributions.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace ordcdf {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

// Acklam's rational approximation, |relative error| < 1.15e-9; refined below.
double normal_quantile_approx(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double q = p - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / 2.5066282746310005024;  // sqrt(2*pi)
}

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile requires p in (0,1)");
    double x = normal_quantile_approx(p);
    for (int i = 0; i < 2; ++i) {
        double err = normal_cdf(x) - p;
        double d = normal_pdf(x);
        if (d <= 0.0) break;
        x -= err / d;
    }
    return x;
}

namespace {

double gamma_p_series(double a, double x) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 1000; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-17) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// upper tail Q(a, x) by modified Lentz continued fraction
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= 1000; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-17) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double regularized_gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double noncentral_chisq_cdf(double x, double nu, double mu) {
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    const double h = 0.5 * mu;
    if (h == 0.0) return regularized_gamma_p(0.5 * nu, 0.5 * x);
    // scan Poisson weights outward from the mode so large mu cannot underflow
    const long j0 = static_cast<long>(h);
    const double lw0 = j0 * std::log(h) - h - std::lgamma(j0 + 1.0);
    double sum = 0.0, weight_used = 0.0;
    double w = std::exp(lw0);
    for (long j = j0;; ++j) {
        double term = w * regularized_gamma_p(0.5 * nu + j, 0.5 * x);
        sum += term;
        weight_used += w;
        if ((1.0 - weight_used) < 1e-15 || (j > j0 + 10 && term < 1e-18)) break;
        w *= h / (j + 1.0);
    }
    w = std::exp(lw0);
    for (long j = j0 - 1; j >= 0; --j) {
        w *= (j + 1.0) / h;
        double term = w * regularized_gamma_p(0.5 * nu + j, 0.5 * x);
        sum += term;
        weight_used += w;
        if ((1.0 - weight_used) < 1e-15 || term < 1e-18) break;
    }
    return std::min(1.0, sum);
}

double chisq_quantile(double p, double nu) {
    if (p < 0.0 || p > 1.0) throw std::domain_error("chisq_quantile requires p in [0,1]");
    if (p == 0.0) return 0.0;
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    const double a = 0.5 * nu;
    // Wilson-Hilferty start
    double z = normal_quantile(p);
    double g = 2.0 / (9.0 * nu);
    double x = nu * std::pow(1.0 - g + z * std::sqrt(g), 3.0);
    if (!(x > 0.0)) x = 0.5 * nu;
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 200; ++i) {
        double err = regularized_gamma_p(a, 0.5 * x) - p;
        if (err > 0.0)
            hi = x;
        else
            lo = x;
        double pdf = 0.5 * std::exp((a - 1.0) * std::log(0.5 * x) - 0.5 * x - std::lgamma(a));
        double step = pdf > 0.0 ? err / pdf : 0.0;
        double nx = x - step;
        if (!(nx > lo && (std::isinf(hi) || nx < hi)))
            nx = std::isinf(hi) ? 2.0 * x : 0.5 * (lo + hi);
        if (std::fabs(nx - x) <= 1e-14 * std::max(1.0, x)) return nx;
        x = nx;
    }
    return x;
}

double ztest_alt_cdf(double t, double N) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double rootN = std::sqrt(N);
    const double q = normal_quantile(0.5 * t);
    double v = 1.0 + normal_cdf(q - rootN) - normal_cdf(-q - rootN);
    return std::min(1.0, std::max(0.0, v));
}

double ContinuousCdf::quantile(double p) const {
    double lo = support_lo(), hi = support_hi();
    if (p <= eval(lo)) return lo;
    if (p >= eval(hi)) return hi;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (eval(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double UniformCdf::eval(double t) const { return std::min(1.0, std::max(0.0, t)); }

Rational UniformCdf::eval_rational(const Rational& t) const {
    if (t < 0) return Rational(0);
    if (t > 1) return Rational(1);
    return t;
}

PowerCdf::PowerCdf(unsigned k) : k_(k) {
    if (k == 0) throw std::invalid_argument("power cdf needs k >= 1");
}

double PowerCdf::eval(double t) const {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return std::pow(t, static_cast<double>(k_));
}

std::string PowerCdf::name() const { return "power(k=" + std::to_string(k_) + ")"; }

Rational PowerCdf::eval_rational(const Rational& t) const {
    if (t < 0) return Rational(0);
    if (t > 1) return Rational(1);
    return pow_scalar(t, k_);
}

ZTestAlternative::ZTestAlternative(double N) : N_(N) {
    if (!(N >= 1.0)) throw std::invalid_argument("ztest cdf needs N >= 1");
}

std::string ZTestAlternative::name() const {
    std::ostringstream os;
    os << "ztest(N=" << N_ << ")";
    return os.str();
}

ChiSqAlternative::ChiSqAlternative(unsigned nu, double mu) : nu_(nu), mu_(mu) {
    if (nu == 0) throw std::invalid_argument("chisq cdf needs nu >= 1");
    if (!(mu >= 0.0)) throw std::invalid_argument("chisq cdf needs mu >= 0");
}

double ChiSqAlternative::eval(double t) const {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double lo = chisq_quantile(0.5 * t, nu_);
    const double hi = chisq_quantile(1.0 - 0.5 * t, nu_);
    double v = noncentral_chisq_cdf(lo, nu_, mu_) + 1.0 - noncentral_chisq_cdf(hi, nu_, mu_);
    return std::min(1.0, std::max(0.0, v));
}

std::string ChiSqAlternative::name() const {
    std::ostringstream os;
    os << "chisq(nu=" << nu_ << ",mu=" << mu_ << ")";
    return os.str();
}

SurvivalTransformedCdf::SurvivalTransformedCdf(std::shared_ptr<const ContinuousCdf> inner)
    : inner_(std::move(inner)) {
    if (!inner_) throw std::invalid_argument("survival transform needs an inner cdf");
}

double SurvivalTransformedCdf::eval(double t) const { return 1.0 - inner_->eval(1.0 - t); }

std::string SurvivalTransformedCdf::name() const { return "survival(" + inner_->name() + ")"; }

Rational SurvivalTransformedCdf::eval_rational(const Rational& t) const {
    return 1 - inner_->eval_rational(1 - t);
}

std::string NormalCdf::name() const {
    std::ostringstream os;
    os << "normal(mean=" << mean_ << ")";
    return os.str();
}

namespace {

// name(key=value,...); spaces allowed around tokens
struct CdfSpec {
    std::string name;
    std::vector<std::pair<std::string, std::string>> args;
};

std::string strip(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

CdfSpec parse_cdf_spec(const std::string& text) {
    const std::string s = strip(text);
    CdfSpec spec;
    const std::size_t open = s.find('(');
    if (open == std::string::npos) {
        spec.name = s;
        return spec;
    }
    if (s.empty() || s.back() != ')')
        throw std::invalid_argument("bad cdf spec '" + text + "': missing ')'");
    spec.name = strip(s.substr(0, open));
    std::string inner = s.substr(open + 1, s.size() - open - 2);
    std::size_t pos = 0;
    while (pos <= inner.size() && !inner.empty()) {
        std::size_t comma = inner.find(',', pos);
        std::string item = inner.substr(pos, comma == std::string::npos ? std::string::npos
                                                                        : comma - pos);
        std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("bad cdf spec '" + text + "': expected key=value");
        spec.args.emplace_back(strip(item.substr(0, eq)), strip(item.substr(eq + 1)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return spec;
}

double arg_number(const CdfSpec& spec, const std::string& key) {
    for (const auto& [k, v] : spec.args)
        if (k == key) {
            char* end = nullptr;
            double x = std::strtod(v.c_str(), &end);
            if (end == v.c_str() || *end != '\0')
                throw std::invalid_argument("bad numeric value '" + v + "' for " + key);
            return x;
        }
    throw std::invalid_argument("cdf spec missing parameter '" + key + "'");
}

}  // namespace

std::shared_ptr<const ContinuousCdf> parse_cdf(const std::string& text) {
    const CdfSpec spec = parse_cdf_spec(text);
    if (spec.name == "uniform") {
        if (!spec.args.empty()) throw std::invalid_argument("uniform takes no parameters");
        return std::make_shared<UniformCdf>();
    }
    if (spec.name == "power") {
        double k = arg_number(spec, "k");
        if (k < 1.0 || k != std::floor(k) || k > 1e9)
            throw std::invalid_argument("power needs integer k >= 1");
        return std::make_shared<PowerCdf>(static_cast<unsigned>(k));
    }
    if (spec.name == "ztest") return std::make_shared<ZTestAlternative>(arg_number(spec, "N"));
    if (spec.name == "chisq") {
        double nu = arg_number(spec, "nu");
        if (nu < 1.0 || nu != std::floor(nu) || nu > 1e9)
            throw std::invalid_argument("chisq needs integer nu >= 1");
        return std::make_shared<ChiSqAlternative>(static_cast<unsigned>(nu),
                                                  arg_number(spec, "mu"));
    }
    throw std::invalid_argument("unknown cdf '" + spec.name + "'");
}

TransformedBoundaries<double> reduce_to_uniform(const ContinuousCdf& G1,
                                                const ContinuousCdf& G2,
                                                const std::vector<double>& b, std::size_t n1,
                                                std::size_t n2) {
    if (b.size() != n1 + n2)
        throw std::invalid_argument("boundary vector must have length n1 + n2");
    TransformedBoundaries<double> tb;
    tb.n1 = n1;
    tb.n2 = n2;
    tb.u.reserve(b.size());
    tb.f.reserve(b.size());
    for (double x : b) {
        tb.u.push_back(G1.eval(x));
        tb.f.push_back(G2.eval(x));
    }
    validate_boundaries(tb);
    return tb;
}

TransformedBoundaries<Rational> reduce_to_uniform_rational(const ContinuousCdf& G1,
                                                           const ContinuousCdf& G2,
                                                           const std::vector<Rational>& b,
                                                           std::size_t n1, std::size_t n2) {
    if (b.size() != n1 + n2)
        throw std::invalid_argument("boundary vector must have length n1 + n2");
    TransformedBoundaries<Rational> tb;
    tb.n1 = n1;
    tb.n2 = n2;
    auto value = [](const ContinuousCdf& g, const Rational& x) {
        if (g.exact_rational()) return g.eval_rational(x);
        return Rational(g.eval(rational_to_double(x)));
    };
    for (const Rational& x : b) {
        tb.u.push_back(value(G1, x));
        tb.f.push_back(value(G2, x));
    }
    validate_boundaries(tb);
    return tb;
}

}  // namespace ordcdf
