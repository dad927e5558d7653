#include "bml/problems.hpp"

#include "bml/gradient.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace bml {

using namespace ad;

namespace {

Var zeros_like_rows(const Var& x, Index cols) { return Var::zeros(x.rows(), cols); }

// Row-major identity, one row per sample.
Var identity_rows(Index rows, int n) {
  Array id = Array::Zero(1, static_cast<Index>(n) * n);
  for (int i = 0; i < n; ++i) id(0, i * n + i) = 1.0;
  return Var(id.replicate(rows, 1));
}

Var sum_sin(const Var& x) { return sum_cols(ad::sin(x)); }

}  // namespace

FbsdeProblem toy_bsde(const ToyBsdeSpec& s) {
  if (s.d < 1) throw ConfigError("toy-bsde: d must be positive");
  FbsdeProblem p;
  p.name = "toy-bsde";
  p.dim_x = p.dim_w = s.d;
  p.dim_y = 1;
  p.x0 = Eigen::VectorXd::Zero(s.d);
  p.horizon = s.T;
  const int d = s.d;
  p.drift = [d](const Var&, const Var& x, const Var&, const Var&) { return zeros_like_rows(x, d); };
  p.diffusion = [d](const Var&, const Var& x, const Var&, const Var&) { return identity_rows(x.rows(), d); };
  p.diffusion_times = [](const Var&, const Var&, const Var&, const Var&, const Var& dw) { return dw; };
  p.driver = [](const Var&, const Var& x, const Var&, const Var&) { return Var::filled(x.rows(), 1, -1.0); };
  p.terminal = [d](const Var& x) { return square_norm(x) * (1.0 / d); };
  const Eigen::RowVectorXd x0 = p.x0.transpose();
  p.forward_from_brownian = [x0](const Eigen::MatrixXd& w) -> Eigen::MatrixXd { return w.rowwise() + x0; };
  p.forward_decoupled = true;
  p.driver_depends_on_solution = false;
  return p;
}

FbsdeProblem coupled_fbsde(const CoupledFbsdeSpec& s) {
  if (s.d < 1) throw ConfigError("coupled-fbsde: d must be positive");
  FbsdeProblem p;
  p.name = "coupled-fbsde";
  p.dim_x = p.dim_w = s.d;
  p.dim_y = 1;
  p.x0 = Eigen::VectorXd::Constant(s.d, s.x0);
  p.horizon = s.T;
  const int d = s.d;
  p.drift = [d](const Var&, const Var& x, const Var&, const Var&) { return zeros_like_rows(x, d); };
  p.diffusion = [s](const Var&, const Var& x, const Var& y, const Var&) {
    return (y * s.sigma0) * identity_rows(x.rows(), s.d);
  };
  p.diffusion_times = [s](const Var&, const Var&, const Var& y, const Var&, const Var& dw) {
    return (y * s.sigma0) * dw;
  };
  p.driver = [s](const Var& t, const Var& x, const Var& y, const Var&) {
    const Var decay = ad::exp((t - s.T) * (3.0 * s.r));
    return y * (-s.r) + decay * pow(sum_sin(x) * s.A, 3) * (0.5 * s.sigma0 * s.sigma0);
  };
  p.terminal = [s](const Var& x) { return sum_sin(x) * s.A; };
  return p;
}

FbsdeProblem hjb(const HjbSpec& s) {
  if (s.n < 1) throw ConfigError("hjb: n must be positive");
  FbsdeProblem p;
  p.name = "hjb";
  p.dim_x = p.dim_w = s.n;
  p.dim_y = 1;
  p.x0 = Eigen::VectorXd::Constant(s.n, s.x0);
  p.horizon = s.T;
  const int n = s.n;
  const double root2 = std::sqrt(2.0);
  p.drift = [n](const Var&, const Var& x, const Var&, const Var&) { return zeros_like_rows(x, n); };
  p.diffusion = [n, root2](const Var&, const Var& x, const Var&, const Var&) {
    return identity_rows(x.rows(), n) * root2;
  };
  p.diffusion_times = [root2](const Var&, const Var&, const Var&, const Var&, const Var& dw) { return dw * root2; };
  p.driver = [s](const Var&, const Var&, const Var&, const Var& z) { return square_norm(z) * (-0.5 * s.lambda); };
  p.terminal = [](const Var& x) { return ad::log((square_norm(x) + 1.0) * 0.5); };
  const Eigen::RowVectorXd x0 = p.x0.transpose();
  p.forward_from_brownian = [x0, root2](const Eigen::MatrixXd& w) -> Eigen::MatrixXd {
    return (w * root2).rowwise() + x0;
  };
  p.forward_decoupled = true;
  return p;
}

double brownian_moment(int d, int k, double t) {
  double m = 1.0;
  for (int i = 0; i < k; ++i) m *= (d + 2.0 * i) * t;
  return m;
}

double toy_bml_closed_form_scheme1(double theta1, double theta2, int d, double T) {
  const double c = T * T * T / 3.0;
  return c * (d + 2.0) * d * (theta1 - 1.0 / d) * (theta1 - 1.0 / d) + c * d * (theta2 - 2.0 / d) * (theta2 - 2.0 / d);
}

double toy_bml_closed_form_scheme2(double theta1, double theta2, int d, double T) {
  const double T3 = T * T * T, T4 = T3 * T, T5 = T4 * T;
  const double ly = theta1 * theta1 * d * (d + 2.0) * (d + 4.0) * (d + 6.0) * T5 / 5.0 -
                    2.0 * theta1 * (d + 2.0) * (d + 4.0) * T4 / 4.0 + (d + 2.0) * T3 / (3.0 * d);
  const double lz = theta2 * theta2 * d * (d + 2.0) * (d + 4.0) * T5 / 5.0 - 2.0 * theta2 * 2.0 * (d + 2.0) * T4 / 4.0 +
                    4.0 * T3 / (3.0 * d);
  return ly + lz;
}

double toy_scheme2_theta1_star(int d, double T) { return 5.0 / (4.0 * d * (d + 6.0) * T); }
double toy_scheme2_theta2_star(int d, double T) { return 5.0 / (2.0 * d * (d + 4.0) * T); }

LinearTrial toy_true_trial(const ToyBsdeSpec& spec) {
  return make_scheme1_trial(spec.d, 1.0 / spec.d, 2.0 / spec.d);
}

LinearTrial coupled_reference_trial(const CoupledFbsdeSpec& s, double theta1, double theta2) {
  auto fy = [s](const Var& t, const Var& x) { return ad::exp((t - s.T) * s.r) * sum_sin(x); };
  auto fz = [s](const Var& t, const Var& x) {
    return (ad::exp((t - s.T) * (2.0 * s.r)) * sum_sin(x)) * ad::cos(x);
  };
  return LinearTrial("coupled-reference", s.d, 1, s.d, fy, fz, theta1, theta2);
}

OracleValue hopf_cole_y0(const HjbSpec& s, Index samples, const SeedSpec& seed, std::optional<double> constant_g) {
  if (samples < 1) throw ConfigError("hopf_cole_y0: need at least one sample");
  if (!(s.lambda > 0.0)) throw ConfigError("hopf_cole_y0: lambda must be positive");
  constexpr Index kChunk = 4096;
  const Index n_chunks = (samples + kChunk - 1) / kChunk;

  // a = -lambda g; per chunk: max a, sum e^{a - max}, sum e^{2(a - max)}
  struct Part {
    double top = -std::numeric_limits<double>::infinity();
    double s1 = 0.0, s2 = 0.0;
  };
  std::vector<Part> parts(static_cast<std::size_t>(n_chunks));
  const double sd = std::sqrt(2.0 * s.T);
  parallel_for(n_chunks, [&](Index c) {
    const Index first = c * kChunk;
    const Index count = std::min(kChunk, samples - first);
    Eigen::ArrayXd a(count);
    boost::random::normal_distribution<double> normal(0.0, sd);
    for (Index k = 0; k < count; ++k) {
      if (constant_g) {
        a[k] = -s.lambda * *constant_g;
        continue;
      }
      auto engine = stream_engine(seed, static_cast<std::uint64_t>(first + k));
      double sq = 0.0;
      for (int j = 0; j < s.n; ++j) {
        const double x = s.x0 + normal(engine);
        sq += x * x;
      }
      a[k] = -s.lambda * std::log((1.0 + sq) * 0.5);
    }
    Part& p = parts[static_cast<std::size_t>(c)];
    p.top = a.maxCoeff();
    const Eigen::ArrayXd e = (a - p.top).exp();
    p.s1 = e.sum();
    p.s2 = e.square().sum();
  });

  double top = -std::numeric_limits<double>::infinity();
  for (const auto& p : parts) top = std::max(top, p.top);
  double s1 = 0.0, s2 = 0.0;
  for (const auto& p : parts) {
    const double w = std::exp(p.top - top);
    s1 += p.s1 * w;
    s2 += p.s2 * w * w;
  }
  const auto m = static_cast<double>(samples);
  const double mean = s1 / m;
  OracleValue out;
  out.samples = samples;
  out.value = -(top + std::log(mean)) / s.lambda;
  if (samples > 1) {
    const double var = std::max(0.0, (s2 / m - mean * mean) * m / (m - 1.0));
    out.std_error = std::sqrt(var / m) / (mean * s.lambda);
  }
  return out;
}

void deep_bsde_scheme_simulate(const FbsdeProblem& p, const Eigen::VectorXd& y0, const NodeControl& controls,
                               PathBatch& batch) {
  const int H = batch.intervals();
  const Index M = batch.samples;
  const double dt = batch.grid.dt;
  if (y0.size() != p.dim_y) throw ConfigError("deep-BSDE scheme: y0 must have dim_y entries");
  if (batch.dW.rows() != H * M || batch.dW.cols() != p.dim_w)
    throw ConfigError("deep-BSDE scheme: Brownian increments missing or of the wrong dimension");

  const Index rows = (H + 1) * M;
  batch.X.resize(rows, p.dim_x);
  batch.y.resize(rows, p.dim_y);
  batch.z.resize(rows, p.dim_y * p.dim_w);
  batch.R.resize(0, 0);
  batch.X.topRows(M) = p.x0.transpose().replicate(M, 1);
  batch.y.topRows(M) = y0.transpose().replicate(M, 1);

  for (int i = 0; i <= H; ++i) {
    const Var x(batch.at(batch.X, i).array());
    Eigen::MatrixXd zi = controls(std::min(i, H - 1), x.value().matrix());
    if (zi.rows() != M || zi.cols() != p.dim_y * p.dim_w)
      throw ShapeError("control", "expected " + std::to_string(M) + "x" + std::to_string(p.dim_y * p.dim_w));
    batch.z.middleRows(i * M, M) = zi;
    if (i == H) break;
    const Var t = Var::filled(M, 1, batch.grid.t(i));
    const Var y(batch.at(batch.y, i).array());
    const Var z(zi.array());
    const Var dw(batch.at(batch.dW, i).array());
    const Var z_dw = p.dim_y == 1 ? dot(z, dw) : batched_matvec(z, dw, p.dim_y, p.dim_w);
    const Var y_next = y - p.driver(t, x, y, z) * dt + z_dw;
    const Var x_next = x + p.drift(t, x, y, z) * dt + apply_diffusion(p, t, x, y, z, dw);
    if (!y_next.value().allFinite() || !x_next.value().allFinite())
      throw BlowupError(i + 1, "simulation blowup in deep-BSDE scheme");
    batch.y.middleRows((i + 1) * M, M) = y_next.value().matrix();
    batch.X.middleRows((i + 1) * M, M) = x_next.value().matrix();
  }
}

}  // namespace bml
