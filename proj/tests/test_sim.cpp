#include "bml/core.hpp"
#include "bml/problems.hpp"
#include "bml/sim.hpp"
#include "bml/trial.hpp"

#include <doctest.h>

#include <cmath>

using namespace bml;

namespace {

// b = 0, sigma = 0, f = 0, g = sum x.
FbsdeProblem frozen(int d) {
  FbsdeProblem p;
  p.name = "frozen";
  p.dim_x = d;
  p.dim_y = 1;
  p.dim_w = d;
  p.x0 = Eigen::VectorXd::LinSpaced(d, 0.5, 1.5);
  p.drift = [d](const Var& t, const Var&, const Var&, const Var&) { return Var::zeros(t.rows(), d); };
  p.diffusion = [d](const Var& t, const Var&, const Var&, const Var&) { return Var::zeros(t.rows(), d * d); };
  p.driver = [](const Var& t, const Var&, const Var&, const Var&) { return Var::zeros(t.rows(), 1); };
  p.terminal = [](const Var& x) { return ad::sum_cols(x); };
  return p;
}

double at(const Eigen::MatrixXd& a, const PathBatch& b, int node, Index path, Index col = 0) {
  return a(b.row(node, path), col);
}

}  // namespace

TEST_CASE("make_grid") {
  const TimeGrid g = make_grid(1.0, 4);
  REQUIRE(g.nodes.size() == 5);
  for (int i = 0; i <= 4; ++i) CHECK(g.t(i) == doctest::Approx(0.25 * i).epsilon(1e-15));
  CHECK(g.t(4) == 1.0);

  const TimeGrid g1000 = make_grid(1.0, 1000);
  CHECK(g1000.nodes.size() == 1001);
  CHECK(g1000.dt == doctest::Approx(0.001).epsilon(1e-14));
  CHECK(make_grid(1.0, 20).dt == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(make_grid(3.0, 7).t(7) == 3.0);

  CHECK_THROWS_AS(make_grid(1.0, 0), ConfigError);
  CHECK_THROWS_AS(make_grid(0.0, 10), ConfigError);
  CHECK_THROWS_AS(make_grid(-1.0, 10), ConfigError);
}

TEST_CASE("validate_problem names the offending coefficient") {
  CHECK_NOTHROW(validate_problem(toy_bsde({})));
  CHECK_NOTHROW(validate_problem(coupled_fbsde({})));
  CHECK_NOTHROW(validate_problem(hjb({.n = 5})));

  SUBCASE("driver of the wrong dimension") {
    FbsdeProblem p = toy_bsde({});
    p.driver = [](const Var& t, const Var&, const Var&, const Var&) { return Var::zeros(t.rows(), 2); };
    try {
      validate_problem(p);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(e.coefficient().find("(f)") != std::string::npos);
    }
  }
  SUBCASE("diffusion with an extra column") {
    FbsdeProblem p = toy_bsde({});
    p.diffusion_times = nullptr;
    p.diffusion = [](const Var& t, const Var&, const Var&, const Var&) { return Var::zeros(t.rows(), 3 * 4); };
    try {
      validate_problem(p);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(e.coefficient().find("sigma") != std::string::npos);
    }
  }
  SUBCASE("terminal missing") {
    FbsdeProblem p = toy_bsde({});
    p.terminal = nullptr;
    CHECK_THROWS_AS(validate_problem(p), ShapeError);
  }
}

TEST_CASE("sample_brownian") {
  const TimeGrid g = make_grid(1.0, 10);
  const SeedSpec seed{42, 7};

  SUBCASE("deterministic and chunk independent") {
    const PathBatch a = sample_brownian(g, 50, 3, seed);
    const PathBatch b = sample_brownian(g, 50, 3, seed);
    CHECK(a.dW == b.dW);
    CHECK(a.W == b.W);
    const PathBatch tail = sample_brownian(g, 20, 3, seed, 30);
    for (int i = 0; i < 10; ++i)
      for (Index j = 0; j < 20; ++j) CHECK(tail.dW.row(tail.row(i, j)) == a.dW.row(a.row(i, 30 + j)));
    const PathBatch other = sample_brownian(g, 50, 3, SeedSpec{42, 8});
    CHECK(other.dW != a.dW);
  }

  SUBCASE("W is the prefix sum of dW") {
    const PathBatch b = sample_brownian(g, 5, 2, seed);
    REQUIRE(b.dW.rows() == 10 * 5);
    REQUIRE(b.W.rows() == 11 * 5);
    for (Index j = 0; j < 5; ++j) {
      Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(2);
      CHECK(b.W.row(b.row(0, j)).isZero(0.0));
      for (int i = 0; i < 10; ++i) {
        w += b.dW.row(b.row(i, j));
        CHECK((b.W.row(b.row(i + 1, j)) - w).norm() < 1e-14);
      }
    }
  }

  SUBCASE("moments at M = 1e5") {
    const TimeGrid g1 = make_grid(1.0, 4);
    const Index M = 100000;
    const PathBatch b = sample_brownian(g1, M, 3, SeedSpec{1, 0});
    const double tol = 4.0 * std::sqrt(g1.dt / static_cast<double>(M));
    for (int i = 0; i < 4; ++i)
      for (int c = 0; c < 3; ++c) CHECK(std::abs(b.at(b.dW, i).col(c).mean()) < tol);
    const double ew2 = b.at(b.W, 4).rowwise().squaredNorm().mean();
    CHECK(std::abs(ew2 - 3.0) < 0.03);
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(sample_brownian(g, 0, 3, seed), ConfigError);
    CHECK_THROWS_AS(sample_brownian(g, 10, 0, seed), ConfigError);
    CHECK_THROWS_AS(sample_brownian(g, 1000, 3, seed, 0, 1000), ResourceError);
  }
}

TEST_CASE("simulate_forward") {
  SUBCASE("frozen dynamics keep X at x0") {
    const FbsdeProblem p = frozen(2);
    const LinearTrial trial = make_scheme1_trial(2, 0.7, -0.4);
    PathBatch b = sample_brownian(make_grid(1.0, 8), 4, 2, SeedSpec{3, 0});
    simulate_forward(p, trial, b);
    for (Index r = 0; r < b.X.rows(); ++r) CHECK((b.X.row(r).transpose() - p.x0).norm() == 0.0);
  }

  SUBCASE("toy BSDE gives X = x0 + W and the trial values") {
    const FbsdeProblem p = toy_bsde({});
    const LinearTrial trial = make_scheme1_trial(3, 0.5, 0.25);
    PathBatch b = sample_brownian(make_grid(1.0, 16), 6, 3, SeedSpec{9, 1});
    simulate_forward(p, trial, b);
    CHECK((b.X - b.W).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE(b.y.rows() == 17 * 6);
    for (Index r = 0; r < b.X.rows(); ++r) {
      CHECK(b.y(r, 0) == doctest::Approx(0.5 * b.X.row(r).squaredNorm()).epsilon(1e-13));
      CHECK((b.z.row(r) - 0.25 * b.X.row(r)).norm() < 1e-14);
    }
  }

  SUBCASE("coupled Euler step by hand") {
    const CoupledFbsdeSpec spec;
    const FbsdeProblem p = coupled_fbsde(spec);
    const LinearTrial trial = coupled_reference_trial(spec, 0.8, 0.2);
    PathBatch b = sample_brownian(make_grid(1.0, 5), 3, 3, SeedSpec{5, 0});
    simulate_forward(p, trial, b);
    for (Index j = 0; j < 3; ++j) {
      Eigen::RowVectorXd x = p.x0.transpose();
      for (int i = 0; i < 5; ++i) {
        const double t = b.grid.t(i);
        const double y = 0.8 * std::exp(-spec.r * (spec.T - t)) * x.array().sin().sum();
        CHECK(at(b.y, b, i, j) == doctest::Approx(y).epsilon(1e-12));
        x += spec.sigma0 * y * b.dW.row(b.row(i, j));
        CHECK((b.X.row(b.row(i + 1, j)) - x).norm() < 1e-12);
      }
    }
  }

  SUBCASE("HJB variance") {
    const FbsdeProblem p = hjb({.n = 4});
    const MlpTrial trial = init_mlp({.dim_x = 4, .dim_y = 1, .dim_w = 4}, SeedSpec{2, 0});
    PathBatch b = sample_brownian(make_grid(1.0, 4), 100000, 4, SeedSpec{8, 0});
    simulate_forward(p, trial, b);
    const auto xt = b.at(b.X, 4);
    for (int c = 0; c < 4; ++c) {
      const Eigen::ArrayXd col = xt.col(c).array();
      const double var = (col - col.mean()).square().mean();
      CHECK(std::abs(var - 2.0) < 0.04);
    }
  }

  SUBCASE("non-finite trial output is a blowup naming the node") {
    const FbsdeProblem p = coupled_fbsde({});
    const LinearTrial trial = coupled_reference_trial({}, std::nan(""), 0.0);
    PathBatch b = sample_brownian(make_grid(1.0, 5), 3, 3, SeedSpec{5, 0});
    try {
      simulate_forward(p, trial, b);
      FAIL("expected blowup");
    } catch (const BlowupError& e) {
      CHECK(e.step() == 0);
    }
  }
}

TEST_CASE("compute_residuals matches the defining double sum") {
  // Coupled problem: the driver reads x and y, z enters through z dW.
  const CoupledFbsdeSpec spec;
  const FbsdeProblem p = coupled_fbsde(spec);
  const LinearTrial trial = coupled_reference_trial(spec, 0.9, 0.35);
  const int H = 7;
  const Index M = 4;
  PathBatch b = sample_brownian(make_grid(1.0, H), M, 3, SeedSpec{11, 2});
  simulate_forward(p, trial, b);
  compute_residuals(p, b);
  REQUIRE(b.R.rows() == (H + 1) * M);

  for (Index j = 0; j < M; ++j) {
    const Eigen::RowVectorXd xT = b.X.row(b.row(H, j));
    const double g = spec.A * xT.array().sin().sum();
    for (int i = 0; i <= H; ++i) {
      double acc = g;
      for (int k = i; k < H; ++k) {
        const double t = b.grid.t(k);
        const Eigen::RowVectorXd x = b.X.row(b.row(k, j));
        const double y = b.y(b.row(k, j), 0);
        const double s = spec.A * x.array().sin().sum();
        const double f = -spec.r * y + std::exp(3.0 * spec.r * (t - spec.T)) * s * s * s * spec.sigma0 * spec.sigma0 / 2.0;
        acc += f * b.grid.dt - b.z.row(b.row(k, j)).dot(b.dW.row(b.row(k, j)));
      }
      CHECK(b.R(b.row(i, j), 0) == doctest::Approx(b.y(b.row(i, j), 0) - acc).epsilon(1e-11));
    }
  }
}

TEST_CASE("residual collapses to -g when y, z and f vanish") {
  const FbsdeProblem p = frozen(2);
  const LinearTrial trial = make_scheme1_trial(2, 0.0, 0.0);
  PathBatch b = sample_brownian(make_grid(1.0, 6), 5, 2, SeedSpec{1, 1});
  simulate_forward(p, trial, b);
  compute_residuals(p, b);
  const double g = p.x0.sum();
  CHECK((b.R.array() + g).abs().maxCoeff() < 1e-14);
}

TEST_CASE("exact toy solution has a discretization-level residual") {
  const ToyBsdeSpec spec;
  const FbsdeProblem p = toy_bsde(spec);
  const LinearTrial trial = toy_true_trial(spec);
  PathBatch b = sample_brownian(make_grid(1.0, 1000), 200, 3, SeedSpec{4, 0});
  simulate_forward(p, trial, b);
  compute_residuals(p, b);
  double worst = 0.0;
  for (int i = 0; i <= 1000; ++i) worst = std::max(worst, b.at(b.R, i).squaredNorm() / 200.0);
  // R_i = -(1/d) sum_k (|dW_k|^2 - d dt), so E R_i^2 = 2 (T - t_i) dt / d
  CHECK(worst < 5.0 * b.grid.dt);
}
