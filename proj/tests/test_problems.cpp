#include "bml/loss.hpp"
#include "bml/problems.hpp"
#include "bml/sim.hpp"
#include "bml/sweep.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace bml;

TEST_CASE("Brownian moments") {
  CHECK(brownian_moment(3, 1, 1.0) == 3.0);
  CHECK(brownian_moment(3, 2, 1.0) == 15.0);
  CHECK(brownian_moment(3, 3, 2.0) == 105.0 * 8.0);
  CHECK(brownian_moment(3, 4, 0.5) == doctest::Approx(945.0 / 16.0));
  CHECK(brownian_moment(1, 2, 1.0) == 3.0);
}

TEST_CASE("scheme-1 closed form") {
  CHECK(toy_bml_closed_form_scheme1(1.0 / 3.0, 2.0 / 3.0, 3, 1.0) == doctest::Approx(0.0));
  CHECK(toy_bml_closed_form_scheme1(4.0 / 3.0, 2.0 / 3.0, 3, 1.0) == doctest::Approx(5.0));
  CHECK(toy_bml_closed_form_scheme1(1.0 / 3.0, 5.0 / 3.0, 3, 1.0) == doctest::Approx(1.0));
  // T^3 scaling
  CHECK(toy_bml_closed_form_scheme1(1.0, 0.0, 2, 2.0) ==
        doctest::Approx(8.0 / 3.0 * (4.0 * 2.0 * 0.25 + 2.0 * 1.0)));
}

TEST_CASE("scheme-2 closed form") {
  const double t1 = toy_scheme2_theta1_star(3, 1.0), t2 = toy_scheme2_theta2_star(3, 1.0);
  CHECK(t1 == doctest::Approx(5.0 / (4.0 * 3.0 * 9.0)));
  CHECK(t2 == doctest::Approx(5.0 / (2.0 * 3.0 * 7.0)));
  const double exact_min = 5.0 / 9.0 - 76.5625 / 189.0 + 4.0 / 9.0 - 6.25 / 21.0;
  CHECK(toy_bml_closed_form_scheme2(t1, t2, 3, 1.0) == doctest::Approx(exact_min).epsilon(1e-12));
  CHECK(std::abs(exact_min - 0.2973) < 0.0005);

  // grid search over a fine lattice lands on the analytic minimizer
  double best = 1e300, b1 = 0.0, b2 = 0.0;
  for (int i = 0; i <= 400; ++i)
    for (int j = 0; j <= 400; ++j) {
      const double a = 0.1 * i / 400.0, b = 0.25 * j / 400.0;
      const double v = toy_bml_closed_form_scheme2(a, b, 3, 1.0);
      if (v < best) best = v, b1 = a, b2 = b;
    }
  CHECK(std::abs(b1 - t1) <= 0.1 / 400.0);
  CHECK(std::abs(b2 - t2) <= 0.25 / 400.0);
}

TEST_CASE("scheme-2 closed form against simulation") {
  const FbsdeProblem p = toy_bsde({});
  const LinearTrial trial = make_scheme2_trial(3, 0.0, 0.0);
  const BatchSpec spec{make_grid(1.0, 200), 20000, SeedSpec{31, 0}};
  const auto pts = sweep(p, trial, {Eigen::Vector2d(0.02, 0.1), Eigen::Vector2d(0.08, 0.0)}, spec, EstimatorKind::full_grid);
  for (const auto& pt : pts) {
    const double cf = toy_bml_closed_form_scheme2(pt.theta[0], pt.theta[1], 3, 1.0);
    CHECK(std::abs(pt.loss.value - cf) < 3.0 * pt.loss.std_error + 0.03 * cf);
  }
}

TEST_CASE("sweep") {
  const FbsdeProblem p = toy_bsde({});
  const LinearTrial trial = make_scheme1_trial(3, 0.0, 0.0);
  const BatchSpec spec{make_grid(1.0, 20), 500, SeedSpec{3, 0}, 128};

  const auto grid = theta_grid({0.1, 0.2}, {0.5, 0.6, 0.7});
  REQUIRE(grid.size() == 6);
  CHECK(grid[1] == Eigen::Vector2d(0.1, 0.6));
  CHECK(grid[3] == Eigen::Vector2d(0.2, 0.5));

  const auto pts = sweep(p, trial, grid, spec, EstimatorKind::full_grid);
  for (const auto& pt : pts) {
    LinearTrial t = trial;
    t.set_theta(pt.theta);
    const LossEstimate direct = estimate_loss(p, t, spec, EstimatorKind::full_grid);
    CHECK(pt.loss.value == doctest::Approx(direct.value).epsilon(1e-12));
  }
  CHECK(sweep(p, trial, theta_grid({0.3}, {0.6}), spec, EstimatorKind::particle).size() == 1);

  const auto bad = sweep(p, trial, {Eigen::Vector2d(std::nan(""), 0.0), Eigen::Vector2d(0.1, 0.1)}, spec,
                         EstimatorKind::full_grid);
  CHECK(bad[0].status != "ok");
  CHECK(bad[1].status == "ok");
  CHECK(std::isfinite(bad[1].loss.value));
}

TEST_CASE("coupled solution has zero continuous-time residual") {
  // With theta = (A, sigma0 A^2) the residual is pure discretization error.
  const CoupledFbsdeSpec spec;
  const FbsdeProblem p = coupled_fbsde(spec);
  const LinearTrial exact = coupled_reference_trial(spec, spec.A, coupled_theta2_sigma0_a2(spec));
  auto loss = [&](int H) {
    PathBatch b = sample_brownian(make_grid(1.0, H), 4000, 3, SeedSpec{17, 0});
    simulate_forward(p, exact, b);
    compute_residuals(p, b);
    return bml_fullgrid(b).value;
  };
  const double coarse = loss(50), fine = loss(200);
  CHECK(fine < coarse);
  CHECK(fine < 1e-3);
}

TEST_CASE("Hopf-Cole oracle") {
  SUBCASE("constant terminal value is returned exactly") {
    const OracleValue v = hopf_cole_y0({.n = 10, .lambda = 0.7}, 1000, SeedSpec{1, 0}, 2.5);
    CHECK(v.value == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(v.std_error == 0.0);
  }
  SUBCASE("one dimension against quadrature") {
    // E exp(-g(sqrt(2) W_1)) = E 2 / (1 + X^2) with X ~ N(0, 2)
    double integral = 0.0;
    const double h = 1e-3;
    for (double x = -40.0; x <= 40.0; x += h)
      integral += 2.0 / (1.0 + x * x) * std::exp(-x * x / 4.0) / std::sqrt(4.0 * std::numbers::pi) * h;
    const double exact = -std::log(integral);
    const OracleValue v = hopf_cole_y0({.n = 1}, 400000, SeedSpec{5, 0});
    CHECK(std::abs(v.value - exact) < 4.0 * v.std_error);
    CHECK(v.std_error < 2e-3);
  }
  SUBCASE("lambda scaling in one dimension") {
    // lambda = 2: -(1/2) log E ((1 + X^2) / 2)^-2
    double integral = 0.0;
    const double h = 1e-3;
    for (double x = -40.0; x <= 40.0; x += h) {
      const double q = 2.0 / (1.0 + x * x);
      integral += q * q * std::exp(-x * x / 4.0) / std::sqrt(4.0 * std::numbers::pi) * h;
    }
    const OracleValue v = hopf_cole_y0({.n = 1, .lambda = 2.0}, 400000, SeedSpec{6, 0});
    CHECK(std::abs(v.value + 0.5 * std::log(integral)) < 4.0 * v.std_error);
  }
}

TEST_CASE("deep-BSDE scheme") {
  SUBCASE("zero driver and control keep y at y0") {
    const FbsdeProblem p = hjb({.n = 3});
    PathBatch b = sample_brownian(make_grid(1.0, 12), 6, 3, SeedSpec{2, 0});
    deep_bsde_scheme_simulate(p, Eigen::VectorXd::Constant(1, 0.8), [](int, const Eigen::MatrixXd& x) {
      return Eigen::MatrixXd::Zero(x.rows(), 3);
    }, b);
    compute_residuals(p, b);
    CHECK((b.y.array() - 0.8).abs().maxCoeff() == 0.0);
    for (Index j = 0; j < 6; ++j) {
      const double g = std::log((1.0 + b.X.row(b.row(12, j)).squaredNorm()) / 2.0);
      for (int i = 0; i <= 12; ++i) CHECK(b.R(b.row(i, j), 0) == doctest::Approx(0.8 - g).epsilon(1e-13));
    }
  }
  SUBCASE("exact controls on the toy BSDE") {
    const FbsdeProblem p = toy_bsde({});
    PathBatch b = sample_brownian(make_grid(1.0, 500), 2000, 3, SeedSpec{3, 0});
    deep_bsde_scheme_simulate(p, Eigen::VectorXd::Zero(1), [](int, const Eigen::MatrixXd& x) {
      return Eigen::MatrixXd(x * (2.0 / 3.0));
    }, b);
    // E (y_T - g)^2 = 2 T dt / d
    CHECK(deep_bsde_loss(b, p).value < 3.0 * 2.0 * b.grid.dt / 3.0);
  }
}
