#include "oracles.hpp"

#include "slowman/errors.hpp"
#include "slowman/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <thread>

using namespace slowman;

namespace {

constexpr double kPi = 3.14159265358979323846;

Vector v1(double x) { return Vector::Constant(1, x); }

struct ThreadsEnv {
    explicit ThreadsEnv(const char* value) { setenv("SLOWMAN_THREADS", value, 1); }
    ~ThreadsEnv() { unsetenv("SLOWMAN_THREADS"); }
};

}  // namespace

TEST_CASE("make_system registry") {
    const auto lin = make_system("linear", {{"a", 2.0}}, 0.01);
    CHECK(lin.name() == "linear");
    CHECK(lin.parameters().at("a") == 2.0);
    CHECK(lin.parameters().at("c") == 1.0);
    const auto mm = make_system("mm", {}, 0.01);
    CHECK(mm.parameters().at("lambda") == 0.5);
    const auto pair = make_system("pair", {{"extra_real", -2.0}}, 0.01);
    CHECK(pair.n_fast() == 3);
    CHECK(make_system("pair", {}, 0.01).n_fast() == 2);

    CHECK_THROWS_AS(make_system("vdp", {}, 0.01), ValidationError);
    CHECK_THROWS_AS(make_system("linear", {{"kappa", 1.0}}, 0.01), ValidationError);
    CHECK_THROWS_AS(make_system("linear", {{"a", std::nan("")}}, 0.01), ValidationError);
    CHECK_THROWS_AS(make_system("mm", {{"kappa", -1.0}}, 0.01), ValidationError);
    CHECK_THROWS_AS(make_system("pair", {{"theta", 0.3}}, 0.01), DomainError);

    const auto keys = system_parameter_keys("pair");
    CHECK(keys.size() == 4);
    CHECK(system_defaults("mm").size() == 2);
}

TEST_CASE("sweep_threads honours SLOWMAN_THREADS") {
    {
        ThreadsEnv env("3");
        CHECK(sweep_threads() == 3);
    }
    {
        ThreadsEnv env("zero");
        CHECK(sweep_threads() == static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    }
    {
        ThreadsEnv env("0");
        CHECK(sweep_threads() >= 1);
    }
}

TEST_CASE("SweepSpec validation") {
    SweepSpec s;
    CHECK_NOTHROW(s.validate());
    s.epsilons = {1e-2, 1e-3};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.epsilons = {1e-2, 1e-3, 1e-3};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = SweepSpec{};
    s.system_id = "nope";
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = SweepSpec{};
    s.H_over_eps = 0.0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("order of accuracy on linear_test") {
    SweepSpec s;
    s.params = {{"a", 1.0}, {"c", 1.0}};
    SUBCASE("m = 0 and m = 2 slopes") {
        const auto f0 = order_of_accuracy(s, 0);
        CHECK(f0.slope >= 0.8);
        CHECK(f0.slope <= 1.2);
        CHECK(f0.r_squared > 0.99);
        CHECK(f0.epsilons.size() == 4);
        const auto f2 = order_of_accuracy(s, 2);
        CHECK(f2.slope >= 2.7);
        CHECK(f2.slope <= 3.3);
    }
    SUBCASE("slopes increase by at least 0.5 per order") {
        double prev = -1.0;
        for (int m = 0; m <= 3; ++m) {
            const auto f = order_of_accuracy(s, m);
            CAPTURE(m);
            CHECK_FALSE(f.skipped);
            if (m > 0) CHECK(f.slope >= prev + 0.5);
            prev = f.slope;
        }
    }
    SUBCASE("drift-free system sits at the rounding floor") {
        s.params = {{"a", 0.0}, {"c", 1.0}};
        const auto f = order_of_accuracy(s, 1);
        CHECK(f.skipped);
        CHECK(std::isnan(f.slope));
    }
    SUBCASE("forward-difference sweep") {
        s.mode = DerivativeVariant::ForwardDifference;
        s.Hhat_over_eps = 0.5;
        const auto f = order_of_accuracy(s, 0);
        // Fhat_0 has an O(Hhat) = O(eps) offset from h as well
        CHECK(f.slope >= 0.8);
        CHECK(f.slope <= 1.2);
    }
    SUBCASE("too few converged points") {
        s.H_over_eps = 2.2;
        s.seed = v1(0.3);
        CHECK_THROWS_AS(order_of_accuracy(s, 0), FitError);
    }
}

TEST_CASE("empirical threshold") {
    SUBCASE("analytic m = 0, lambda = -1: about 2 eps") {
        const double eps = 0.01;
        const auto sys = linear_test(1.0, 1.0, eps);
        IterationConfig cfg;
        cfg.mode = DerivativeMode::analytic(eps);
        cfg.max_iters = 2000;
        const auto r = empirical_threshold(sys, cfg, v1(1.0), v1(1.5), 0.5 * eps, 3 * eps);
        CHECK(r.threshold / eps == doctest::Approx(2.0).epsilon(0.05));
        CHECK(r.upper - r.lower <= 1e-3 * r.threshold * 1.0001);
        CHECK(r.lower < r.upper);
        // deterministic
        const auto again = empirical_threshold(sys, cfg, v1(1.0), v1(1.5), 0.5 * eps, 3 * eps);
        CHECK(again.threshold == r.threshold);
        CHECK(again.evaluations == r.evaluations);
    }
    SUBCASE("analytic m = 1, theta = 0.7 pi: no stable H") {
        const double eps = 0.01;
        const auto sys = complex_pair_test(0.7 * kPi, -1.0, eps);
        IterationConfig cfg;
        cfg.m = 1;
        cfg.mode = DerivativeMode::analytic(eps);
        cfg.max_iters = 2000;
        CHECK_THROWS_AS(empirical_threshold(sys, cfg, v1(1.0), Vector::Constant(2, 1.3), 0.01 * eps, 3 * eps),
                        BracketError);
    }
    SUBCASE("differenced m = 0, eta = 1: stable up to 100 eps") {
        const double eps = 0.01;
        const auto sys = linear_test(1.0, 1.0, eps);
        IterationConfig cfg;
        cfg.mode = DerivativeMode::forward_difference(eps);
        cfg.max_iters = 2000;
        CHECK_THROWS_AS(empirical_threshold(sys, cfg, v1(1.0), v1(1.5), 0.5 * eps, 100 * eps), BracketError);
    }
    SUBCASE("bad range") {
        const auto sys = linear_test(1.0, 1.0, 0.01);
        IterationConfig cfg;
        CHECK_THROWS_AS(empirical_threshold(sys, cfg, v1(1.0), v1(1.5), 0.02, 0.01), ValidationError);
    }
}

TEST_CASE("classify_stable") {
    const auto sys = linear_test(1.0, 1.0, 0.01);
    IterationConfig cfg;
    cfg.mode = DerivativeMode::analytic(0.015);
    cfg.max_iters = 5;
    // slow contraction, not converged yet but shrinking
    CHECK(classify_stable(sys, nullptr, cfg, v1(1.0), v1(1.5)));
    cfg.mode = DerivativeMode::analytic(0.025);
    CHECK_FALSE(classify_stable(sys, nullptr, cfg, v1(1.0), v1(1.5)));
}

TEST_CASE("compare_regions") {
    RegionSpec spec;
    SUBCASE("m = 1, eta = 1: mismatch below 2%") {
        const auto r = compare_regions(spec, 1, 1.0, 24);
        CAPTURE(r.mismatched);
        CAPTURE(r.compared);
        CHECK(r.mismatch < 0.02);
        CHECK(r.compared + r.excluded == 24 * 24);
        CHECK(r.compared > 400);
    }
    SUBCASE("m = 0: no mismatch, everything stable") {
        const auto r = compare_regions(spec, 0, 1.0, 16);
        CHECK(r.mismatch == 0.0);
        for (const auto& c : r.cells)
            if (!c.excluded) CHECK(c.observed_stable);
    }
    SUBCASE("eta across 2^{1/2} flips the large-step region") {
        // near theta = pi, away from the lobes, the flip is clean
        spec.theta_min = 0.85 * kPi;
        spec.theta_max = 1.15 * kPi;
        spec.step_min = 4.0;
        spec.step_max = 6.0;
        auto stable_fraction = [&](double eta) {
            const auto r = compare_regions(spec, 1, eta, 12);
            int s = 0;
            for (const auto& c : r.cells) s += c.observed_stable;
            CHECK(r.mismatch < 0.02);
            return static_cast<double>(s) / r.cells.size();
        };
        CHECK(stable_fraction(1.35) > 0.9);
        CHECK(stable_fraction(1.5) < 0.1);
    }
    SUBCASE("mismatch does not grow as eps shrinks") {
        double prev = 1.0;
        for (double eps : {5e-2, 1e-2, 1e-3}) {
            spec.epsilon = eps;
            const auto r = compare_regions(spec, 1, 1.0, 16);
            CAPTURE(eps);
            CAPTURE(r.mismatch);
            CHECK(r.mismatch <= prev);
            prev = r.mismatch;
        }
    }
    SUBCASE("thread count does not change the result") {
        RegionComparison a, b;
        {
            ThreadsEnv env("1");
            a = compare_regions(spec, 1, 1.0, 8);
        }
        {
            ThreadsEnv env("4");
            b = compare_regions(spec, 1, 1.0, 8);
        }
        REQUIRE(a.cells.size() == b.cells.size());
        for (std::size_t i = 0; i < a.cells.size(); ++i) {
            CHECK(a.cells[i].observed_stable == b.cells[i].observed_stable);
            CHECK(a.cells[i].abs_mu == b.cells[i].abs_mu);
        }
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS(compare_regions(spec, 1, 1.0, 0), ValidationError);
        CHECK_THROWS_AS(compare_regions(spec, 1, 0.0, 8), ValidationError);
        spec.theta_min = 0.5 * kPi;
        CHECK_THROWS_AS(compare_regions(spec, 1, 1.0, 8), ValidationError);
    }
}
