#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ordcdf/recursions.hpp"
#include "ordcdf/scalar.hpp"

namespace ordcdf {

double normal_cdf(double x);
double normal_quantile(double p);  // p in (0,1)

// regularized lower incomplete gamma P(a, x)
double regularized_gamma_p(double a, double x);

// Poisson-mixture series, truncated when the remaining tail is < 1e-15.
double noncentral_chisq_cdf(double x, double nu, double mu);

// central chi-squared quantile; p=0 -> 0, p=1 -> +inf
double chisq_quantile(double p, double nu);

// cdf of a two-sided one sample z-test p-value under the alternative,
// F(t) = 1 + Phi(Phi^{-1}(t/2) - sqrt(N)) - Phi(Phi^{-1}(1 - t/2) - sqrt(N))
double ztest_alt_cdf(double t, double N);

class ContinuousCdf {
  public:
    virtual ~ContinuousCdf() = default;
    virtual double eval(double t) const = 0;
    virtual std::string name() const = 0;

    // exact rational evaluation, available only for algebraic cdfs
    virtual bool exact_rational() const { return false; }
    virtual Rational eval_rational(const Rational&) const {
        throw std::logic_error("cdf '" + name() + "' has no exact rational form");
    }

    // generic inverse by bisection over the support; p in [eval(lo), eval(hi)]
    virtual double quantile(double p) const;
    virtual double support_lo() const { return 0.0; }
    virtual double support_hi() const { return 1.0; }
};

class UniformCdf final : public ContinuousCdf {
  public:
    double eval(double t) const override;
    std::string name() const override { return "uniform"; }
    bool exact_rational() const override { return true; }
    Rational eval_rational(const Rational& t) const override;
    double quantile(double p) const override { return p; }
};

// F(t) = t^k on [0,1]
class PowerCdf final : public ContinuousCdf {
  public:
    explicit PowerCdf(unsigned k);
    double eval(double t) const override;
    std::string name() const override;
    bool exact_rational() const override { return true; }
    Rational eval_rational(const Rational& t) const override;
    unsigned k() const { return k_; }

  private:
    unsigned k_;
};

class ZTestAlternative final : public ContinuousCdf {
  public:
    explicit ZTestAlternative(double N);
    double eval(double t) const override { return ztest_alt_cdf(t, N_); }
    std::string name() const override;
    double N() const { return N_; }

  private:
    double N_;
};

class ChiSqAlternative final : public ContinuousCdf {
  public:
    ChiSqAlternative(unsigned nu, double mu);
    double eval(double t) const override;
    std::string name() const override;

  private:
    unsigned nu_;
    double mu_;
};

// eval(t) = 1 - inner(1 - t)
class SurvivalTransformedCdf final : public ContinuousCdf {
  public:
    explicit SurvivalTransformedCdf(std::shared_ptr<const ContinuousCdf> inner);
    double eval(double t) const override;
    std::string name() const override;
    bool exact_rational() const override { return inner_->exact_rational(); }
    Rational eval_rational(const Rational& t) const override;

  private:
    std::shared_ptr<const ContinuousCdf> inner_;
};

// N(mean, 1); support truncated to +-40 around the mean for inversion
class NormalCdf final : public ContinuousCdf {
  public:
    explicit NormalCdf(double mean) : mean_(mean) {}
    double eval(double t) const override { return normal_cdf(t - mean_); }
    std::string name() const override;
    double quantile(double p) const override { return mean_ + normal_quantile(p); }
    double support_lo() const override { return mean_ - 40.0; }
    double support_hi() const override { return mean_ + 40.0; }

  private:
    double mean_;
};

// grammar: uniform | power(k=2) | ztest(N=5) | chisq(nu=2,mu=1)
std::shared_ptr<const ContinuousCdf> parse_cdf(const std::string& text);

// u_i = G1(b_i), f_i = G2(b_i); G2 o G1^{-1} o G1 collapses so no quantile
// is needed. Throws if the transformed vectors break the boundary invariants.
TransformedBoundaries<double> reduce_to_uniform(const ContinuousCdf& G1,
                                                const ContinuousCdf& G2,
                                                const std::vector<double>& b, std::size_t n1,
                                                std::size_t n2);

// Rational thresholds; cdf values taken exactly where the cdf supports it,
// otherwise the double value is embedded exactly (one evaluation per
// threshold, shared by every consumer).
TransformedBoundaries<Rational> reduce_to_uniform_rational(const ContinuousCdf& G1,
                                                           const ContinuousCdf& G2,
                                                           const std::vector<Rational>& b,
                                                           std::size_t n1, std::size_t n2);

}  // namespace ordcdf
