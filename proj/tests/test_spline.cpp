#include <cmath>
#include <vector>

#include "doctest.h"
#include "tsgen/errors.hpp"
#include "tsgen/ode.hpp"
#include "tsgen/rng.hpp"
#include "tsgen/spline.hpp"
#include "tsgen/tensor.hpp"

using namespace tsgen;

TEST_SUITE("spline") {

TEST_CASE("two knots degenerate to a straight line") {
    auto path = CubicSplinePath::fit({0.0, 1.0}, {0.0, 1.0}, 1);
    auto mid = path.eval(0.5);
    CHECK(mid[0] == 0.5);  // clock channel
    CHECK(mid[1] == doctest::Approx(0.5).epsilon(1e-12));
    auto d = path.deriv(0.25);
    CHECK(d[0] == 1.0);
    CHECK(d[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant data stays constant with zero slope") {
    std::vector<double> times{0.0, 0.3, 0.7, 1.0};
    std::vector<double> vals{4.0, 4.0, 4.0, 4.0};
    auto path = CubicSplinePath::fit(times, vals, 1);
    for (double t : {0.0, 0.123, 0.5, 0.9, 1.0}) {
        CHECK(path.eval(t)[1] == doctest::Approx(4.0).epsilon(1e-14));
        CHECK(path.deriv(t)[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
        CHECK(path.deriv(t)[0] == 1.0);
    }
}

TEST_CASE("linear data has constant slope on value channels") {
    std::vector<double> times{0.0, 0.25, 0.6, 1.0};
    std::vector<double> vals;
    for (double t : times) vals.push_back(2.0 * t - 0.5);
    auto path = CubicSplinePath::fit(times, vals, 1);
    for (double t : {0.1, 0.4, 0.8}) {
        CHECK(path.deriv(t)[1] == doctest::Approx(2.0).epsilon(1e-10));
    }
}

TEST_CASE("hand-solved three-knot natural spline") {
    // Knots {0, 0.5, 1}, values {0, 1, 0}.  The natural-spline system reduces
    // to (1/3) M_1 = -4, so M_1 = -12 and the first interval is
    // S(u) = 3u - 4u^3:  S(0.5) = 1, S(0.25) = 0.6875, S'(0) = 3, S''(0) = 0.
    auto path = CubicSplinePath::fit({0.0, 0.5, 1.0}, {0.0, 1.0, 0.0}, 1);

    CHECK(std::abs(path.eval(0.5)[1] - 1.0) <= 1e-10);
    CHECK(std::abs(path.eval(0.25)[1] - 0.6875) <= 1e-12);
    CHECK(std::abs(path.deriv(0.0)[1] - 3.0) <= 1e-12);

    // Second derivative at t=0 via exact linear extrapolation: S'' of a cubic
    // is linear in u, and the central difference of the (quadratic) analytic
    // derivative is exact up to roundoff.
    auto second = [&](double u) {
        const double h = 1e-4;
        return (path.deriv(u + h)[1] - path.deriv(u - h)[1]) / (2.0 * h);
    };
    double s2_at_0 = 2.0 * second(0.01) - second(0.02);
    CHECK(std::abs(s2_at_0) <= 1e-9);

    // symmetry of the fixture: S(1 - t) = S(t)
    CHECK(path.eval(0.75)[1] == doctest::Approx(0.6875).epsilon(1e-12));
}

TEST_CASE("knot exactness on random irregular multi-channel data") {
    Rng rng(314);
    std::vector<double> times{0.0};
    for (int i = 0; i < 6; ++i) times.push_back(times.back() + rng.uniform(0.05, 0.4));
    const std::size_t dim = 3;
    std::vector<double> vals;
    for (std::size_t i = 0; i < times.size() * dim; ++i) vals.push_back(rng.uniform(-2.0, 2.0));

    auto path = CubicSplinePath::fit(times, vals, dim);
    for (std::size_t i = 0; i < times.size(); ++i) {
        auto v = path.eval(times[i]);
        CHECK(v[0] == times[i]);
        for (std::size_t c = 0; c < dim; ++c) {
            CHECK(std::abs(v[1 + c] - vals[i * dim + c]) <= 1e-10);
        }
    }
}

TEST_CASE("C2 continuity at interior knots") {
    Rng rng(99);
    std::vector<double> times{0.0, 0.2, 0.45, 0.8, 1.0};
    std::vector<double> vals = rng.normal_vec(times.size());
    auto path = CubicSplinePath::fit(times, vals, 1);

    const double h = 1e-6;
    for (std::size_t i = 1; i + 1 < times.size(); ++i) {
        double t = times[i];
        // value and first-derivative continuity
        CHECK(std::abs(path.eval(t - h)[1] - path.eval(t + h)[1]) <= 1e-4);
        CHECK(std::abs(path.deriv(t - h)[1] - path.deriv(t + h)[1]) <= 1e-4);
        // second-derivative continuity via one-sided differences of deriv
        double left = (path.deriv(t)[1] - path.deriv(t - h)[1]) / h;
        double right = (path.deriv(t + h)[1] - path.deriv(t)[1]) / h;
        CHECK(std::abs(left - right) <= 1e-3);
    }
}

TEST_CASE("analytic derivative matches central differences of eval") {
    Rng rng(2718);
    std::vector<double> times{0.0, 0.15, 0.33, 0.52, 0.74, 1.0};
    std::vector<double> vals;
    for (std::size_t i = 0; i < times.size() * 2; ++i) vals.push_back(rng.uniform(-1.5, 1.5));
    auto path = CubicSplinePath::fit(times, vals, 2);

    const double h = 1e-5;
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        double t = rng.uniform(h, 1.0 - h);
        auto d = path.deriv(t);
        auto lo = path.eval(t - h);
        auto hi = path.eval(t + h);
        for (std::size_t c = 0; c < 3; ++c) {
            worst = std::max(worst, std::abs(d[c] - (hi[c] - lo[c]) / (2.0 * h)));
        }
    }
    CHECK(worst <= 1e-7);
}

TEST_CASE("integral of deriv recovers eval differences (fundamental theorem)") {
    Rng rng(777);
    std::vector<double> times{0.0, 0.2, 0.5, 0.65, 1.0};
    std::vector<double> vals = rng.normal_vec(times.size() * 2);
    auto path = CubicSplinePath::fit(times, vals, 2);

    const double a = 0.05, b = 0.93;
    auto field = [&](double t, const Tensor& y) {
        auto d = path.deriv(t);
        return add(Tensor::from({1, 3}, d), scale(y, 0.0));
    };
    Tensor y0 = Tensor::from({1, 3}, path.eval(a));
    SolverConfig cfg;
    cfg.method = OdeMethod::rk4;
    cfg.step_size = 0.005;
    Tensor yb = integrate(field, y0, a, b, cfg).y1;
    auto expect = path.eval(b);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::abs(yb.vec()[c] - expect[c]) <= 1e-6);
    }
}

TEST_CASE("refitting on resampled knots reproduces the sampled values") {
    Rng rng(5);
    std::vector<double> times{0.0, 0.3, 0.55, 0.8, 1.0};
    std::vector<double> vals = rng.normal_vec(times.size());
    auto original = CubicSplinePath::fit(times, vals, 1);

    std::vector<double> new_times;
    for (int i = 0; i <= 8; ++i) new_times.push_back(i / 8.0);
    std::vector<double> sampled;
    for (double t : new_times) sampled.push_back(original.eval(t)[1]);

    auto refit = CubicSplinePath::fit(new_times, sampled, 1);
    for (std::size_t i = 0; i < new_times.size(); ++i) {
        CHECK(std::abs(refit.eval(new_times[i])[1] - sampled[i]) <= 1e-9);
    }
}

TEST_CASE("fit and eval validation") {
    CHECK_THROWS_AS(CubicSplinePath::fit({0.0}, {1.0}, 1), value_error);
    CHECK_THROWS_AS(CubicSplinePath::fit({0.0, 0.0}, {1.0, 2.0}, 1), value_error);
    CHECK_THROWS_AS(CubicSplinePath::fit({0.0, 1.0, 0.5}, {1.0, 2.0, 3.0}, 1), value_error);
    CHECK_THROWS_AS(CubicSplinePath::fit({0.0, 1.0}, {1.0, 2.0, 3.0}, 1), shape_error);
    CHECK_THROWS_AS(CubicSplinePath::fit({0.0, 1.0}, {1.0, 2.0}, 0), value_error);

    auto path = CubicSplinePath::fit({0.0, 1.0}, {0.0, 1.0}, 1);
    CHECK_THROWS_AS(path.eval(-0.01), value_error);
    CHECK_THROWS_AS(path.eval(1.01), value_error);
    CHECK(path.eval(1.0)[1] == doctest::Approx(1.0));  // right endpoint included
}

}  // TEST_SUITE
