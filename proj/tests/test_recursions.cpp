#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ordcdf/recursions.hpp"

using namespace ordcdf;

namespace {

// Independent oracle for F(t) = t^kappa: sum over group-label patterns of the
// nested simplex integral, carried out symbolically over Q. The integrand per
// pattern is a polynomial, so every step stays exact.
using Poly = std::vector<Rational>;  // p[j] is the coefficient of x^j

Rational eval_poly(const Poly& p, const Rational& x) {
    Rational acc(0);
    for (std::size_t j = p.size(); j-- > 0;) {
        Rational t = acc * x;
        acc = t + p[j];
    }
    return acc;
}

// integral from y to b of p(x) dx, as a polynomial in y
Poly integrate_tail(const Poly& p, const Rational& b) {
    Poly anti(p.size() + 1, Rational(0));
    for (std::size_t j = 0; j < p.size(); ++j) {
        Rational c = p[j] / Rational(static_cast<unsigned long>(j + 1));
        anti[j + 1] = c;
    }
    Rational at_b = eval_poly(anti, b);
    Poly r(anti.size(), Rational(0));
    for (std::size_t j = 0; j < anti.size(); ++j) {
        Rational c = -anti[j];
        r[j] = c;
    }
    Rational c0 = r[0] + at_b;
    r[0] = c0;
    return r;
}

// multiply by the density kappa * x^(kappa - 1)
Poly apply_power_density(const Poly& p, unsigned kappa) {
    Poly q(p.size() + kappa - 1, Rational(0));
    for (std::size_t j = 0; j < p.size(); ++j) {
        Rational c = p[j] * kappa;
        q[j + kappa - 1] = c;
    }
    return q;
}

Rational factorial(std::size_t n) {
    mpz_class f;
    mpz_fac_ui(f.get_mpz_t(), n);
    return Rational(f);
}

// P(X_(k) <= b_k for all k) with i1 uniforms and i2 variables with cdf t^kappa
Rational psi_oracle(const std::vector<Rational>& b, std::size_t i1, std::size_t i2,
                    unsigned kappa) {
    const std::size_t m = i1 + i2;
    REQUIRE(b.size() >= m);
    if (m == 0) return Rational(1);
    Rational total(0);
    for (unsigned long mask = 0; mask < (1ul << m); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcountl(mask)) != i1) continue;
        Poly I{Rational(1)};
        for (std::size_t k = m; k-- > 0;) {
            Poly w = (mask >> k & 1) ? I : apply_power_density(I, kappa);
            I = integrate_tail(w, b[k]);
        }
        Rational term = eval_poly(I, Rational(0));
        total = total + term;
    }
    Rational scaled = total * factorial(i1) * factorial(i2);
    return scaled;
}

TransformedBoundaries<Rational> power_instance(const std::vector<Rational>& b, std::size_t n1,
                                               std::size_t n2, unsigned kappa) {
    TransformedBoundaries<Rational> tb;
    tb.n1 = n1;
    tb.n2 = n2;
    tb.u = b;
    for (const Rational& x : b) {
        Rational fx = pow_scalar(x, kappa);
        tb.f.push_back(fx);
    }
    return tb;
}

std::vector<Rational> random_thresholds(std::mt19937_64& rng, std::size_t n, long grid) {
    std::uniform_int_distribution<long> pick(0, grid);
    std::vector<Rational> b;
    for (std::size_t i = 0; i < n; ++i) {
        Rational r(pick(rng), grid);
        r.canonicalize();
        b.push_back(r);
    }
    std::sort(b.begin(), b.end());
    return b;
}

}  // namespace

TEST_CASE("one-group hand values") {
    CHECK(bolshev_one_group<Rational>({}) == 1);
    CHECK(bolshev_one_group<Rational>({Rational(1, 2)}) == Rational(1, 2));
    CHECK(bolshev_one_group<Rational>({Rational(1, 4), Rational(1, 2)}) == Rational(3, 16));
    // constant thresholds collapse to c^n
    CHECK(bolshev_one_group<Rational>({Rational(2, 3), Rational(2, 3), Rational(2, 3)}) ==
          Rational(8, 27));
    // oracle agreement
    std::vector<Rational> b{Rational(1, 8), Rational(1, 3), Rational(2, 5), Rational(3, 4)};
    CHECK(bolshev_one_group(b) == psi_oracle(b, 4, 0, 1));
}

TEST_CASE("two-group kernels match the symbolic oracle") {
    std::vector<Rational> b{Rational(1, 8), Rational(1, 4), Rational(2, 5), Rational(1, 2),
                            Rational(7, 10)};
    auto tb = power_instance(b, 3, 2, 2);
    for (KernelId kid : {KernelId::bolshev, KernelId::steck, KernelId::noe}) {
        auto psi = compute_psi(tb, kid);
        CHECK(psi(3, 2) == Rational(3323353, 262144000));
        for (std::size_t i1 = 0; i1 <= 3; ++i1)
            for (std::size_t i2 = 0; i2 <= 2; ++i2)
                CHECK(psi(i1, i2) == psi_oracle(b, i1, i2, 2));
    }
}

TEST_CASE("randomized oracle agreement across kappa") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 12; ++trial) {
        std::size_t n1 = trial % 4, n2 = 3 - trial % 4 + (trial % 2);
        unsigned kappa = 1 + trial % 3;
        auto b = random_thresholds(rng, n1 + n2, 64);
        auto tb = power_instance(b, n1, n2, kappa);
        auto psi = bolshev_two_group(tb);
        for (std::size_t i1 = 0; i1 <= n1; ++i1)
            for (std::size_t i2 = 0; i2 <= n2; ++i2)
                CHECK(psi(i1, i2) == psi_oracle(b, i1, i2, kappa));
    }
}

TEST_CASE("kernels agree exactly on random instances") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> size(0, 6);
    for (int trial = 0; trial < 25; ++trial) {
        std::size_t n1 = size(rng), n2 = size(rng);
        // a coarse grid forces repeated thresholds into the mix
        long grid = trial % 2 ? 8 : 1000;
        TransformedBoundaries<Rational> tb;
        tb.n1 = n1;
        tb.n2 = n2;
        tb.u = random_thresholds(rng, n1 + n2, grid);
        tb.f = random_thresholds(rng, n1 + n2, grid);
        auto a = bolshev_two_group(tb);
        auto s = steck_two_group(tb);
        auto n = noe_two_group(tb);
        for (std::size_t i1 = 0; i1 <= n1; ++i1)
            for (std::size_t i2 = 0; i2 <= n2; ++i2) {
                CHECK(a(i1, i2) == s(i1, i2));
                CHECK(a(i1, i2) == n(i1, i2));
            }
    }
}

TEST_CASE("degenerate inputs") {
    // first threshold zero kills every nonempty prefix
    TransformedBoundaries<Rational> tb;
    tb.n1 = 2;
    tb.n2 = 2;
    tb.u = {Rational(0), Rational(1, 4), Rational(1, 2), Rational(3, 4)};
    tb.f = {Rational(0), Rational(1, 16), Rational(1, 4), Rational(9, 16)};
    for (KernelId kid : {KernelId::bolshev, KernelId::steck, KernelId::noe}) {
        auto psi = compute_psi(tb, kid);
        CHECK(psi(0, 0) == 1);
        for (std::size_t i1 = 0; i1 <= 2; ++i1)
            for (std::size_t i2 = 0; i2 <= 2; ++i2)
                if (i1 + i2 > 0) CHECK(psi(i1, i2) == 0);
    }

    // all thresholds equal: closed form c^n1 * F(c)^n2
    TransformedBoundaries<Rational> cst;
    cst.n1 = 3;
    cst.n2 = 2;
    cst.u.assign(5, Rational(2, 5));
    cst.f.assign(5, Rational(4, 25));
    for (KernelId kid : {KernelId::bolshev, KernelId::steck, KernelId::noe}) {
        auto psi = compute_psi(cst, kid);
        CHECK(psi(3, 2) == pow_scalar(Rational(2, 5), 3) * pow_scalar(Rational(4, 25), 2));
    }

    // empty problem
    TransformedBoundaries<Rational> empty;
    CHECK(compute_psi(empty, KernelId::noe)(0, 0) == 1);
}

TEST_CASE("group swap symmetry when both cdfs coincide") {
    std::mt19937_64 rng(17);
    auto b = random_thresholds(rng, 7, 128);
    TransformedBoundaries<Rational> ab, ba;
    ab.u = ab.f = b;
    ba.u = ba.f = b;
    ab.n1 = 4;
    ab.n2 = 3;
    ba.n1 = 3;
    ba.n2 = 4;
    auto pa = steck_two_group(ab), pb = steck_two_group(ba);
    for (std::size_t i1 = 0; i1 <= 4; ++i1)
        for (std::size_t i2 = 0; i2 <= 3; ++i2) CHECK(pa(i1, i2) == pb(i2, i1));
}

TEST_CASE("one-group column of the table matches the one-group recursion") {
    std::mt19937_64 rng(23);
    auto b = random_thresholds(rng, 6, 512);
    auto tb = power_instance(b, 6, 0, 1);
    auto psi = noe_two_group(tb);
    for (std::size_t i1 = 0; i1 <= 6; ++i1) {
        std::vector<Rational> prefix(b.begin(), b.begin() + i1);
        CHECK(psi(i1, 0) == bolshev_one_group(prefix));
    }
}

TEST_CASE("psi_suffix") {
    CHECK(psi_suffix<Rational>({}, {}, 0, 0) == 1);
    std::vector<Rational> u{Rational(1, 4), Rational(1, 2)};
    std::vector<Rational> f{Rational(1, 16), Rational(1, 4)};
    TransformedBoundaries<Rational> tb{u, f, 1, 1};
    CHECK(psi_suffix(u, f, 1, 1) == compute_psi(tb, KernelId::noe)(1, 1));
    CHECK_THROWS_AS(psi_suffix<Rational>(u, f, 2, 1), std::invalid_argument);
}

TEST_CASE("input validation") {
    TransformedBoundaries<Rational> tb;
    tb.n1 = 1;
    tb.n2 = 1;
    tb.u = {Rational(1, 2), Rational(1, 4)};  // decreasing
    tb.f = {Rational(1, 4), Rational(1, 2)};
    CHECK_THROWS_AS(bolshev_two_group(tb), std::invalid_argument);
    tb.u = {Rational(1, 2)};  // wrong length
    CHECK_THROWS_AS(steck_two_group(tb), std::invalid_argument);
    tb.u = {Rational(1, 2), Rational(3, 2)};  // out of range
    CHECK_THROWS_AS(noe_two_group(tb), std::invalid_argument);
    CHECK_THROWS_AS(bolshev_one_group<Rational>({Rational(-1, 2)}), std::invalid_argument);
}

TEST_CASE("pair backend is noe only") {
    TransformedBoundaries<Pair> tb;
    tb.n1 = 1;
    tb.n2 = 0;
    tb.u = {Pair(0.5)};
    tb.f = {Pair(0.25)};
    CHECK_THROWS_AS(compute_psi(tb, KernelId::bolshev), std::invalid_argument);
    CHECK_THROWS_AS(compute_psi(tb, KernelId::steck), std::invalid_argument);
    CHECK(faithful_round(compute_psi(tb, KernelId::noe)(1, 0)) == 0.5);
    CHECK_THROWS_AS(count_operations(CountedKernel::bolshev2, tb), std::invalid_argument);
    CHECK(count_operations(CountedKernel::noe2, tb).total() > 0);
}

TEST_CASE("operation counts") {
    // one group: exactly 3n^2 + n - 1
    for (std::size_t n : {2u, 3u, 4u, 8u, 13u}) {
        TransformedBoundaries<double> tb;
        tb.n1 = n;
        tb.n2 = 0;
        for (std::size_t i = 1; i <= n; ++i) {
            tb.u.push_back(static_cast<double>(i) / (n + 1));
            tb.f.push_back(static_cast<double>(i) / (n + 1));
        }
        auto c = count_operations(CountedKernel::bolshev1, tb);
        CHECK(c.total() == 3 * n * n + n - 1);
    }

    // two group bolshev: measured polynomial
    auto expected2 = [](double a, double b) {
        double f = 1.5 * a * a * b * b + 4.5 * (a * a * b + a * b * b) +
                   3 * (a + a * a + b + b * b) + 7.5 * a * b + 2;
        return static_cast<std::uint64_t>(f) - 2;
    };
    const std::vector<std::pair<std::size_t, std::size_t>> shapes{{1, 1}, {2, 3}, {4, 2}, {5, 5}};
    for (auto [a, b] : shapes) {
        TransformedBoundaries<double> tb;
        tb.n1 = a;
        tb.n2 = b;
        for (std::size_t i = 1; i <= a + b; ++i) {
            tb.u.push_back(static_cast<double>(i) / (a + b + 1));
            tb.f.push_back(static_cast<double>(i) / (a + b + 1));
        }
        CHECK(count_operations(CountedKernel::bolshev2, tb).total() == expected2(a, b));
    }

    // counts do not depend on the backend
    TransformedBoundaries<Rational> rb;
    rb.n1 = 2;
    rb.n2 = 3;
    for (std::size_t i = 1; i <= 5; ++i) {
        Rational a(i, 6), b(i, 7);
        a.canonicalize();
        b.canonicalize();
        rb.u.push_back(a);
        rb.f.push_back(b);
    }
    CHECK(count_operations(CountedKernel::bolshev2, rb).total() == expected2(2, 3));

    // spot values for the pair
    CHECK(count_operations(CountedKernel::bolshev2,
                           TransformedBoundaries<double>{{0.3, 0.6}, {0.2, 0.5}, 1, 1})
              .total() == 30);
}

TEST_CASE("noe threading is deterministic") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    TransformedBoundaries<Pair> tb;
    tb.n1 = 9;
    tb.n2 = 8;
    std::vector<double> raw1, raw2;
    for (int i = 0; i < 17; ++i) raw1.push_back(unif(rng));
    for (int i = 0; i < 17; ++i) raw2.push_back(unif(rng));
    std::sort(raw1.begin(), raw1.end());
    std::sort(raw2.begin(), raw2.end());
    for (int i = 0; i < 17; ++i) {
        tb.u.emplace_back(raw1[i]);
        tb.f.emplace_back(raw2[i]);
    }
    auto t1 = noe_two_group(tb, 1);
    auto t2 = noe_two_group(tb, 2);
    auto t4 = noe_two_group(tb, 4);
    for (std::size_t i = 0; i < t1.cells.size(); ++i) {
        CHECK(t1.cells[i].hi == t2.cells[i].hi);
        CHECK(t1.cells[i].lo == t2.cells[i].lo);
        CHECK(t1.cells[i].hi == t4.cells[i].hi);
        CHECK(t1.cells[i].lo == t4.cells[i].lo);
    }
}

TEST_CASE("enclosure bounds bracket the unperturbed table") {
    std::mt19937_64 rng(41);
    auto b = random_thresholds(rng, 5, 256);
    auto tb = power_instance(b, 3, 2, 2);
    auto psi = bolshev_two_group(tb);
    auto tight = enclosure_bounds(psi, Rational(0));
    auto loose = enclosure_bounds(psi, Rational(1, 100));
    for (std::size_t i1 = 0; i1 <= 3; ++i1)
        for (std::size_t i2 = 0; i2 <= 2; ++i2) {
            CHECK(tight.lower(i1, i2) == psi(i1, i2));
            CHECK(tight.upper(i1, i2) == psi(i1, i2));
            CHECK(loose.lower(i1, i2) <= psi(i1, i2));
            CHECK(loose.upper(i1, i2) >= psi(i1, i2));
            if (i1 + i2 > 0 && psi(i1, i2) > 0) {
                CHECK(loose.lower(i1, i2) < psi(i1, i2));
                CHECK(loose.upper(i1, i2) > psi(i1, i2));
            }
        }
}

TEST_CASE("helpers") {
    CHECK(pow_scalar(Rational(2, 3), 0) == 1);
    CHECK(pow_scalar(Rational(2, 3), 1) == Rational(2, 3));
    CHECK(pow_scalar(Rational(2, 3), 5) == Rational(32, 243));
    CHECK(pow_scalar(2.0, 10) == 1024.0);
    auto row0 = binomial_row<Rational>(0);
    CHECK(row0 == std::vector<Rational>{Rational(1)});
    auto row5 = binomial_row<Rational>(5);
    std::vector<Rational> want{1, 5, 10, 10, 5, 1};
    CHECK(row5 == want);
    auto drow = binomial_row<double>(4);
    CHECK(drow[2] == 6.0);
}

TEST_CASE("tight thresholds break the subtractive kernels but not noe pairs") {
    std::ifstream in(std::string(ORDCDF_TEST_DATA_DIR) + "/steep_step_11.txt");
    REQUIRE(in.good());
    std::vector<Rational> b;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto l = line.find_first_not_of(" \t\r");
        if (l == std::string::npos) continue;
        auto r = line.find_last_not_of(" \t\r");
        b.push_back(parse_rational(line.substr(l, r - l + 1)));
    }
    REQUIRE(b.size() == 11);

    Rational exact = bolshev_one_group(b);
    CHECK(exact > 0);

    std::vector<double> bd;
    for (const Rational& x : b) bd.push_back(rational_to_double(x));
    double approx = bolshev_one_group(bd);
    // the true value is ~2^-97; double loses every significant bit
    double relerr = std::fabs(approx - rational_to_double(exact)) / rational_to_double(exact);
    CHECK((approx < 0 || relerr > 1e3));

    TransformedBoundaries<Pair> tb;
    tb.n1 = 11;
    tb.n2 = 0;
    for (const Rational& x : b) {
        tb.u.push_back(scalar_traits<Pair>::from_rational(x));
        tb.f.push_back(scalar_traits<Pair>::from_rational(x));
    }
    Pair cell = noe_two_group(tb)(11, 0);
    CHECK_FALSE(cell.underflow());
    double rounded = faithful_round(cell);
    CHECK((rounded == rational_to_double_rd(exact) || rounded == rational_to_double_ru(exact)));
}
