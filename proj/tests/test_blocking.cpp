#include "bel/blocking.hpp"

#include <boost/rational.hpp>
#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

using namespace bel;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using Rational = boost::rational<long long>;

TEST_CASE("Q' in both regimes", "[blocking][qprime]") {
    const auto lm = qprime(0.8, 0.6, 1);
    CHECK(lm.regime == Regime::long_memory);
    CHECK(lm.applicable);
    CHECK_THAT(lm.qprime, WithinAbs(0.2, 1e-15));
    const auto sm = qprime(1.5, 1.0, 0);
    CHECK(sm.regime == Regime::short_memory);
    CHECK(sm.qprime == 1.0);
    CHECK_THAT(qprime(1.2, 5.0, 2).qprime, WithinAbs(0.4, 1e-15));
    const auto rank_one = qprime(0.7, 0.4, 0);
    CHECK_FALSE(rank_one.applicable);
    CHECK_THROWS_AS(plan(1000000, rank_one), RateNotApplicableError);
}

TEST_CASE("Q' rejects invalid parameters", "[blocking][qprime]") {
    CHECK_THROWS_WITH(qprime(1.0, 1.0, 1), ContainsSubstring("boundary regime uncovered by either theorem"));
    CHECK_THROWS_AS(qprime(0.5, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(qprime(0.8, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(qprime(0.8, 0.6, -1), ConfigError);
    CHECK_THROWS_AS(qprime(0.8, 0.6, 1, Regime::short_memory), ConfigError);
    CHECK_NOTHROW(qprime(0.8, 0.6, 1, Regime::long_memory));
}

TEST_CASE("delta examples and monotonicity", "[blocking][delta]") {
    CHECK_THAT(delta(0.2), WithinAbs(1.0 / 21.0, 1e-16));
    CHECK_THAT(delta(1.0), WithinAbs(1.0 / 9.0, 1e-16));
    CHECK_THROWS_AS(delta(0.0), ConfigError);
    double prev = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double q = 0.05 * k;
        const double d = delta(q);
        CHECK(d > prev);
        CHECK(d < 1.0 / 6.0);
        prev = d;
    }
    CHECK(delta(1e9) < 1.0 / 6.0);
    CHECK_THAT(delta(1e9), WithinAbs(1.0 / 6.0, 1e-9));
}

TEST_CASE("delta vanishes continuously at the rank threshold", "[blocking][property]") {
    double prev = 1.0;
    for (double eps : {1e-1, 1e-2, 1e-3, 1e-4, 1e-6}) {
        const double beta = 0.75 + eps;  // p = 1: 2(2 beta - 1) = 1 at beta = 3/4
        const auto rp = qprime(beta, 2 * beta - 1, 1);
        REQUIRE(rp.applicable);
        const double d = delta(rp.qprime);
        CHECK(d < prev);
        CHECK(d <= 4.0 * eps / 3.0 + 1e-15);
        prev = d;
    }
    CHECK_FALSE(qprime(0.75, 0.5, 1).applicable);
}

TEST_CASE("exponent system holds exactly in rational arithmetic", "[blocking][exponents]") {
    const auto e1 = solve_exponents(Rational(1, 5));
    CHECK(e1.delta == Rational(1, 21));
    CHECK(e1.b == Rational(5, 7));
    CHECK(e1.a == Rational(6, 7));
    CHECK(Rational(1) - e1.a == 3 * e1.delta);
    CHECK(exponent_inequalities_hold(Rational(1, 5), e1));

    const auto e2 = solve_exponents(Rational(1));
    CHECK(e2.delta == Rational(1, 9));
    CHECK(e2.a == Rational(2, 3));
    CHECK(e2.b == Rational(1, 3));
    CHECK(exponent_inequalities_hold(Rational(1), e2));

    for (long long num = 1; num <= 40; ++num)
        for (long long den : {7LL, 10LL, 13LL}) {
            const Rational q(num, den);
            const auto e = solve_exponents(q);
            CHECK(exponent_inequalities_hold(q, e));
            CHECK(Rational(1) - e.a == 3 * e.delta);
            // Perturbing delta upward breaks the tight inequality.
            auto bumped = e;
            bumped.delta += Rational(1, 1000000);
            CHECK_FALSE(exponent_inequalities_hold(q, bumped));
        }
}

TEST_CASE("plans follow the ceiling convention", "[blocking][plan]") {
    const auto rp = qprime(0.8, 0.6, 1);
    const std::uint64_t n = 1000000;
    const auto p = plan(n, rp);
    CHECK_THAT(p.delta, WithinAbs(1.0 / 21.0, 1e-15));
    CHECK_THAT(p.a, WithinAbs(6.0 / 7.0, 1e-15));
    CHECK_THAT(p.b, WithinAbs(5.0 / 7.0, 1e-15));
    CHECK(p.big == static_cast<std::uint64_t>(std::ceil(std::pow(1e6, 6.0 / 7.0))));
    CHECK(p.gap == static_cast<std::uint64_t>(std::ceil(std::pow(1e6, 5.0 / 7.0))));
    CHECK(p.ell == static_cast<std::uint64_t>(std::ceil(0.5 * static_cast<double>(p.gap))));
    CHECK(p.blocks == n / (p.big + p.gap));
    CHECK(p.blocks * (p.big + p.gap) + p.remainder == n);

    // N^a an exact integer: 2^9 with a = 2/3 gives 64, not 65.
    const auto sp = plan(512, qprime(1.5, 1.0, 0));
    CHECK(sp.big == 64);
    CHECK(sp.gap == 8);
    CHECK(sp.ell == 4);
    CHECK(sp.blocks == 7);
    CHECK(sp.remainder == 8);

    const auto c = plan(std::uint64_t{1} << 14, qprime(0.85, 0.7, 1), 0.25);
    CHECK(c.ell == static_cast<std::uint64_t>(std::ceil(0.25 * static_cast<double>(c.gap))));
    CHECK_THROWS_AS(plan(1000, rp, 1.0), ConfigError);
}

TEST_CASE("every plan partitions N", "[blocking][property]") {
    const auto rp = qprime(0.9, 0.8, 1);
    for (std::uint64_t n = 200; n < 200000; n = n * 3 / 2 + 7) {
        const auto p = plan(n, rp);
        CHECK(p.blocks * (p.big + p.gap) + p.remainder == n);
        CHECK(p.remainder < p.big + p.gap);
        CHECK(p.gap < p.big);
    }
}

TEST_CASE("plans too small report the minimum N", "[blocking][plan]") {
    const auto rp = qprime(0.8, 0.6, 1);
    try {
        (void)plan(10, rp);
        FAIL("expected PlanTooSmallError");
    } catch (const PlanTooSmallError& e) {
        const auto m = e.minimum_n();
        CHECK(m > 10);
        CHECK_NOTHROW(plan(m, rp));
        CHECK_THROWS_AS(plan(m - 1, rp), PlanTooSmallError);
        CHECK_THAT(e.what(), ContainsSubstring(std::to_string(m)));
    }
}

TEST_CASE("block decomposition of a hand partition", "[blocking][decompose]") {
    const auto p = BlockingPlan::from_sizes(10, 3, 2);
    std::vector<double> v(10);
    std::iota(v.begin(), v.end(), 1.0);
    const auto d = block_decompose(v, p);
    REQUIRE(d.m_ranges.size() == 2);
    CHECK(d.m_ranges[0].begin == 0);
    CHECK(d.m_ranges[0].end == 3);
    CHECK(d.m_ranges[1].begin == 5);
    CHECK(d.m_ranges[1].end == 8);
    CHECK(d.b_ranges[0].begin == 3);
    CHECK(d.b_ranges[1].end == 10);
    CHECK(d.remainder_range.begin == d.remainder_range.end);
    CHECK(d.m_blocks == std::vector<double>{6.0, 21.0});
    CHECK(d.b_blocks == std::vector<double>{9.0, 19.0});
    CHECK(d.remainder == 0.0);
    CHECK_THROWS_AS(block_decompose(std::vector<double>(9, 0.0), p), ConfigError);
}

TEST_CASE("constant series fill each block with its length", "[blocking][decompose]") {
    const auto p = plan(5000, qprime(1.5, 1.0, 0));
    const auto d = block_decompose(std::vector<double>(5000, 1.0), p);
    for (double m : d.m_blocks) CHECK(m == static_cast<double>(p.big));
    for (double b : d.b_blocks) CHECK(b == static_cast<double>(p.gap));
    CHECK(d.remainder == static_cast<double>(p.remainder));
}

TEST_CASE("block decomposition is a partition", "[blocking][property]") {
    std::mt19937_64 eng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::uint64_t n = 20 + eng() % 500;
        const std::uint64_t big = 1 + eng() % 30, gap = eng() % 10;
        const auto p = BlockingPlan::from_sizes(n, big, gap);
        std::vector<double> v(n, 0.0);
        const auto d = block_decompose(v, p);
        std::vector<int> hits(n, 0);
        auto mark = [&](IndexRange r) {
            for (std::size_t i = r.begin; i < r.end; ++i) hits[i]++;
        };
        for (auto r : d.m_ranges) mark(r);
        for (auto r : d.b_ranges) mark(r);
        mark(d.remainder_range);
        for (int h : hits) CHECK(h == 1);
    }
}

TEST_CASE("fourth moments of i.i.d. sums", "[blocking][fourth]") {
    const auto normal = [](Engine& eng, std::size_t h) {
        std::normal_distribution<double> g;
        std::vector<double> t(h);
        for (double& x : t) x = g(eng);
        return t;
    };
    const auto diag = fourth_moment_diag(normal, {1, 4, 16, 64}, 20000, 8);
    for (const auto& pt : diag.points) CHECK(std::abs(pt.moment.value - 3.0) <= 4.0 * pt.moment.se);
    CHECK(diag.verdict == FourthMomentVerdict::bounded);

    const auto rademacher = [](Engine& eng, std::size_t h) {
        std::vector<double> t(h);
        for (double& x : t) x = (eng() & 1) ? 1.0 : -1.0;
        return t;
    };
    const auto r1 = fourth_moment_diag(rademacher, {1}, 500, 9);
    CHECK(r1.points[0].moment.value == 1.0);
    CHECK(r1.points[0].moment.se == 0.0);

    // Non-stationary growth is flagged.
    const auto growing = [](Engine& eng, std::size_t h) {
        std::normal_distribution<double> g;
        std::vector<double> t(h, g(eng));
        return t;
    };
    CHECK(fourth_moment_diag(growing, {1, 4, 16, 64}, 4000, 10).verdict == FourthMomentVerdict::increasing);
    CHECK_THROWS_AS(fourth_moment_diag(normal, {4, 2}, 10, 1), ConfigError);
}

TEST_CASE("truncated corrected sums have bounded fourth moments", "[blocking][fourth]") {
    const auto proc = Process(CoefficientModel::hyperbolic(0.85, 1.0, 1024), InnovationSpec(Gaussian{1.0}));
    const CorrectedSum sum(FilterSpec::lag_product(1), proc, 1, 64);
    const auto diag = fourth_moment_diag(sum, {64, 128, 256, 512, 1024}, 1000, 12345);
    CHECK(diag.points.size() == 5);
    CHECK(diag.verdict == FourthMomentVerdict::bounded);
}

TEST_CASE("separated m-blocks are uncorrelated", "[blocking][independence]") {
    const auto proc = Process(CoefficientModel::hyperbolic(0.85, 1.0, 1024), InnovationSpec(Gaussian{1.0}));
    const auto p = BlockingPlan::from_sizes(600, 200, 80, 64);
    const CorrectedSum sum(FilterSpec::lag_product(1), proc, 1, p.ell);
    const auto c = block_independence(sum, p, 2000, 12345);
    CHECK(p.gap > p.ell + 1);
    CHECK(c.pairs == 2000);
    CHECK(std::abs(c.correlation) <= 3.0 * c.se);

    // Untruncated long-memory blocks with no gap are visibly correlated.
    const auto adjacent = BlockingPlan::from_sizes(400, 200, 0);
    const CorrectedSum raw(FilterSpec::identity(), proc, 0);
    CHECK(block_independence(raw, adjacent, 2000, 12345).correlation > 0.3);
}
