#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ordcdf/mtp.hpp"

using namespace ordcdf;

namespace {

JointVR<Rational> fm_mixture(const MtpInputs<Rational>& in, const Rational& pi0) {
    const std::size_t m = in.m;
    std::vector<Rational> binom = binomial_row<Rational>(m);
    JointVR<Rational> mix(m);
    for (std::size_t m0 = 0; m0 <= m; ++m0) {
        Rational q0 = Rational(1) - pi0;
        Rational w = binom[m0] * pow_scalar(pi0, m0) * pow_scalar(q0, m - m0);
        JointVR<Rational> part = joint_vr_fm(in, m0);
        for (std::size_t i = 0; i < part.p.size(); ++i) {
            Rational c = mix.p[i] + w * part.p[i];
            mix.p[i] = c;
        }
    }
    return mix;
}

}  // namespace

TEST_CASE("bh_thresholds") {
    StepUpProcedure p = bh_thresholds(4, Rational(1, 20));
    REQUIRE(p.m() == 4);
    CHECK(p.t[0] == Rational(1, 80));
    CHECK(p.t[1] == Rational(1, 40));
    CHECK(p.t[2] == Rational(3, 80));
    CHECK(p.t[3] == Rational(1, 20));
    CHECK(bh_thresholds(1, Rational(1, 10)).t[0] == Rational(1, 10));
    CHECK_THROWS_AS(bh_thresholds(0, Rational(1, 20)), std::invalid_argument);
    CHECK_THROWS_AS(bh_thresholds(3, Rational(0)), std::invalid_argument);
    CHECK_THROWS_AS(bh_thresholds(3, Rational(1)), std::invalid_argument);
}

TEST_CASE("validate_procedure") {
    CHECK_THROWS_AS(validate_procedure(StepUpProcedure{}), std::invalid_argument);
    CHECK_THROWS_AS(validate_procedure(StepUpProcedure{{Rational(0)}}), std::invalid_argument);
    CHECK_THROWS_AS(validate_procedure(StepUpProcedure{{Rational(1)}}), std::invalid_argument);
    CHECK_THROWS_AS(validate_procedure(StepUpProcedure{{Rational(1, 4), Rational(1, 8)}}),
                    std::invalid_argument);
    validate_procedure(StepUpProcedure{{Rational(1, 8), Rational(1, 8), Rational(1, 4)}});
}

TEST_CASE("make_mtp_inputs applies the one-evaluation rule") {
    StepUpProcedure proc = bh_thresholds(3, Rational(1, 5));
    auto ztest = parse_cdf("ztest(N=5)");
    auto in = make_mtp_inputs<Rational>(proc, *ztest);
    for (std::size_t i = 0; i < 3; ++i) {
        double td = rational_to_double(proc.t[i]);
        CHECK(in.Ft[i] == Rational(ztest_alt_cdf(td, 5.0)));
    }
    auto power = parse_cdf("power(k=2)");
    auto inp = make_mtp_inputs<Rational>(proc, *power);
    CHECK(inp.Ft[2] == Rational(1, 25));

    // a decreasing "cdf" must be rejected
    struct Bad final : ContinuousCdf {
        double eval(double t) const override { return 1.0 - t; }
        std::string name() const override { return "bad"; }
    } bad;
    CHECK_THROWS_AS(make_mtp_inputs<double>(proc, bad), std::invalid_argument);
}

TEST_CASE("FM hand values at m = 1") {
    auto F = parse_cdf("power(k=2)");
    StepUpProcedure proc{{Rational(1, 20)}};
    auto in = make_mtp_inputs<Rational>(proc, *F);

    JointVR<Rational> null_only = joint_vr_fm(in, 1);
    CHECK(null_only(1, 1) == Rational(1, 20));
    CHECK(null_only(0, 0) == Rational(19, 20));
    CHECK(null_only(0, 1) == 0);

    JointVR<Rational> alt_only = joint_vr_fm(in, 0);
    CHECK(alt_only(0, 1) == Rational(1, 400));
    CHECK(alt_only(0, 0) == Rational(399, 400));
    CHECK(alt_only(1, 1) == 0);
}

TEST_CASE("FM hand table at m = 2, m0 = 1") {
    auto F = parse_cdf("power(k=2)");
    StepUpProcedure proc = bh_thresholds(2, Rational(1, 20));  // t = (1/40, 1/20)
    auto in = make_mtp_inputs<Rational>(proc, *F);
    JointVR<Rational> vr = joint_vr_fm(in, 1);

    CHECK(vr(1, 2) == Rational(1, 8000));
    CHECK(vr(1, 1) == Rational(399, 16000));
    CHECK(vr(0, 1) == Rational(19, 32000));
    CHECK(vr(0, 0) == Rational(31179, 32000));
    CHECK(vr(0, 2) == 0);
    CHECK(vr(2, 2) == 0);
    CHECK(vr.total() == 1);

    CHECK(fdr(vr) == Rational(1, 40));  // m0 alpha / m
    CHECK(avg_power_fm(vr, 1) == Rational(23, 32000));
    CHECK(lambda_power_fm(vr, 1, Rational(1)) == Rational(23, 32000));
    CHECK(lambda_power_fm(vr, 1, Rational(1, 2)) == Rational(23, 32000));

    auto atoms = fdp_distribution(vr);
    REQUIRE(atoms.size() == 3);
    CHECK(atoms[0].first == 0);
    CHECK(atoms[0].second == Rational(15599, 16000));
    CHECK(atoms[1].first == Rational(1, 2));
    CHECK(atoms[1].second == Rational(1, 8000));
    CHECK(atoms[2].first == 1);
    CHECK(atoms[2].second == Rational(399, 16000));
}

TEST_CASE("joint tables are kernel independent") {
    auto F = parse_cdf("power(k=3)");
    StepUpProcedure proc = bh_thresholds(5, Rational(1, 10));
    auto in = make_mtp_inputs<Rational>(proc, *F);
    for (std::size_t m0 = 0; m0 <= 5; ++m0) {
        JointVR<Rational> a = joint_vr_fm(in, m0, KernelId::bolshev);
        JointVR<Rational> b = joint_vr_fm(in, m0, KernelId::steck);
        JointVR<Rational> c = joint_vr_fm(in, m0, KernelId::noe);
        CHECK(a.p == b.p);
        CHECK(a.p == c.p);
    }
}

TEST_CASE("step-up BH attains the exact FDR identity") {
    auto F = parse_cdf("power(k=2)");
    const Rational alpha(1, 20);
    StepUpProcedure proc = bh_thresholds(7, alpha);
    auto in = make_mtp_inputs<Rational>(proc, *F);
    for (std::size_t m0 = 0; m0 <= 7; ++m0) {
        JointVR<Rational> vr = joint_vr_fm(in, m0);
        CHECK(vr.total() == 1);
        CHECK(fdr(vr) == Rational(static_cast<unsigned long>(m0)) * alpha / 7);
        // structural zeros: j > m0 or k - j > m - m0
        for (std::size_t k = 0; k <= 7; ++k)
            for (std::size_t j = 0; j <= 7; ++j)
                if (j > k || j > m0 || k - j > 7 - m0) CHECK(vr(j, k) == 0);
    }
}

TEST_CASE("RM equals the binomial mixture of FM") {
    auto F = parse_cdf("power(k=2)");
    StepUpProcedure proc = bh_thresholds(4, Rational(1, 10));
    auto in = make_mtp_inputs<Rational>(proc, *F);
    const Rational pi0(3, 10);

    JointVR<Rational> rm = joint_vr_rm(in, pi0);
    JointVR<Rational> mix = fm_mixture(in, pi0);
    CHECK(rm.p == mix.p);
    CHECK(rm.total() == 1);

    // degenerate mixtures collapse onto single FM tables
    CHECK(joint_vr_rm(in, Rational(0)).p == joint_vr_fm(in, 0).p);
    CHECK(joint_vr_rm(in, Rational(1)).p == joint_vr_fm(in, 4).p);

    // mixture identities for the derived quantities
    std::vector<Rational> binom = binomial_row<Rational>(4);
    Rational want_avg(0), want_lam(0);
    for (std::size_t m0 = 0; m0 < 4; ++m0) {
        Rational q0 = Rational(1) - pi0;
        Rational w = binom[m0] * pow_scalar(pi0, m0) * pow_scalar(q0, 4 - m0);
        JointVR<Rational> part = joint_vr_fm(in, m0);
        Rational a = w * avg_power_fm(part, m0);
        want_avg = want_avg + a;
        Rational l = w * lambda_power_fm(part, m0, Rational(1, 2));
        want_lam = want_lam + l;
    }
    CHECK(avg_power_rm(in, pi0) == want_avg);
    CHECK(lambda_power_rm(in, pi0, Rational(1, 2)) == want_lam);
}

TEST_CASE("RM hand values at m = 1") {
    auto F = parse_cdf("power(k=2)");
    StepUpProcedure proc{{Rational(1, 10)}};
    auto in = make_mtp_inputs<Rational>(proc, *F);
    JointVR<Rational> vr = joint_vr_rm(in, Rational(1, 4));
    CHECK(vr(0, 0) == Rational(387, 400));
    CHECK(vr(1, 1) == Rational(1, 40));    // pi0 * t_1
    CHECK(vr(0, 1) == Rational(3, 400));   // (1 - pi0) * F(t_1)
    CHECK(vr.total() == 1);
}

TEST_CASE("power quantities") {
    auto F = parse_cdf("power(k=2)");
    StepUpProcedure proc = bh_thresholds(3, Rational(1, 5));
    auto in = make_mtp_inputs<Rational>(proc, *F);

    // no false nulls: average power defaults to zero
    JointVR<Rational> all_null = joint_vr_fm(in, 3);
    CHECK(avg_power_fm(all_null, 3) == 0);
    CHECK(lambda_power_fm(all_null, 3, Rational(1, 2)) == 0);

    // m = 1, m0 = 0: power is F(t_1)
    StepUpProcedure single{{Rational(1, 5)}};
    auto sin1 = make_mtp_inputs<Rational>(single, *F);
    JointVR<Rational> one = joint_vr_fm(sin1, 0);
    CHECK(avg_power_fm(one, 0) == Rational(1, 25));

    // lambda sweep is nonincreasing and bounded by P(R - V >= 1)
    JointVR<Rational> vr = joint_vr_fm(in, 1);
    Rational prev(2);
    for (int num = 1; num <= 8; ++num) {
        Rational lam(num, 8);
        Rational p = lambda_power_fm(vr, 1, lam);
        CHECK(p <= prev);
        CHECK(p >= 0);
        prev = p;
    }
    CHECK_THROWS_AS(lambda_power_fm(vr, 1, Rational(0)), std::invalid_argument);
    CHECK_THROWS_AS(lambda_power_fm(vr, 1, Rational(3, 2)), std::invalid_argument);
    CHECK_THROWS_AS(joint_vr_fm(in, 4), std::invalid_argument);
    CHECK_THROWS_AS(joint_vr_rm(in, Rational(-1, 2)), std::invalid_argument);
}

TEST_CASE("fdp atoms merge equal ratios and sum to one") {
    auto F = parse_cdf("power(k=2)");
    StepUpProcedure proc = bh_thresholds(4, Rational(1, 5));
    auto in = make_mtp_inputs<Rational>(proc, *F);
    JointVR<Rational> vr = joint_vr_fm(in, 2);
    auto atoms = fdp_distribution(vr);
    Rational mass(0);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (i > 0) CHECK(atoms[i - 1].first < atoms[i].first);
        mass = mass + atoms[i].second;
    }
    CHECK(mass == 1);
    // the 1/2 atom collects (1,2) and (2,4)
    for (const auto& [ratio, p] : atoms)
        if (ratio == Rational(1, 2)) {
            Rational want = vr(1, 2) + vr(2, 4);
            CHECK(p == want);
        }
}

TEST_CASE("pair backend tracks the exact tables") {
    auto ztest = parse_cdf("ztest(N=5)");
    StepUpProcedure proc = bh_thresholds(6, Rational(1, 20));
    auto exact_in = make_mtp_inputs<Rational>(proc, *ztest);
    auto pair_in = make_mtp_inputs<Pair>(proc, *ztest);
    for (std::size_t m0 = 0; m0 <= 6; ++m0) {
        JointVR<Rational> ref = joint_vr_fm(exact_in, m0, KernelId::bolshev);
        JointVR<Pair> got = joint_vr_fm(pair_in, m0, KernelId::noe);
        CHECK(std::fabs(faithful_round(got.total()) - 1.0) < 1e-12);
        for (std::size_t i = 0; i < ref.p.size(); ++i)
            CHECK(std::fabs(faithful_round(got.p[i]) - rational_to_double(ref.p[i])) < 1e-12);
        double f_ref = rational_to_double(fdr(ref));
        CHECK(std::fabs(faithful_round(fdr(got)) - f_ref) < 1e-12);
    }
}

TEST_CASE("monte carlo spot check of the FM joint law") {
    auto F = parse_cdf("power(k=2)");
    StepUpProcedure proc = bh_thresholds(3, Rational(1, 5));
    auto in = make_mtp_inputs<Rational>(proc, *F);
    const std::size_t m0 = 2;
    JointVR<Rational> vr = joint_vr_fm(in, m0);

    std::vector<double> t;
    for (const Rational& x : proc.t) t.push_back(rational_to_double(x));

    std::mt19937_64 rng(20240612);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const long reps = 2000000;
    std::vector<long> count(16, 0);
    for (long rep = 0; rep < reps; ++rep) {
        double p[3] = {unif(rng), unif(rng), std::sqrt(unif(rng))};
        int order[3] = {0, 1, 2};
        std::sort(order, order + 3, [&](int a, int b) { return p[a] < p[b]; });
        int R = 0;
        for (int i = 2; i >= 0; --i)
            if (p[order[i]] <= t[i]) {
                R = i + 1;
                break;
            }
        int V = 0;
        for (int i = 0; i < R; ++i)
            if (order[i] < 2) ++V;
        ++count[V * 4 + R];
    }
    for (std::size_t j = 0; j <= 3; ++j)
        for (std::size_t k = 0; k <= 3; ++k) {
            double want = j <= 2 ? rational_to_double(vr(j, k)) : 0.0;
            double got = static_cast<double>(count[j * 4 + k]) / reps;
            double se = std::sqrt(std::max(want * (1.0 - want), 1e-12) / reps);
            CHECK(std::fabs(got - want) < 5.0 * se + 1e-9);
        }
}
