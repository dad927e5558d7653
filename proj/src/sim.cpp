#include "bml/sim.hpp"

#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace bml {

PathBatch sample_brownian(const TimeGrid& grid, Index samples, int dim_w, const SeedSpec& seed, Index first_path,
                          Index max_increments) {
  if (samples < 1) throw ConfigError("sample_brownian: need at least one path");
  if (dim_w < 1) throw ConfigError("sample_brownian: Brownian dimension must be positive");
  const Index H = grid.intervals;
  if (samples > max_increments / (H * dim_w))
    throw ResourceError("sample_brownian: " + std::to_string(samples) + " x " + std::to_string(H) + " x " +
                        std::to_string(dim_w) + " increments exceed the cap of " + std::to_string(max_increments));

  PathBatch b;
  b.grid = grid;
  b.samples = samples;
  b.first_path = first_path;
  b.dim_w = dim_w;
  b.dW.resize(H * samples, dim_w);

  const Index rows = H * samples;
  double* out = b.dW.data();
  boost::random::normal_distribution<double> normal(0.0, std::sqrt(grid.dt));
  for (Index j = 0; j < samples; ++j) {
    auto engine = stream_engine(seed, static_cast<std::uint64_t>(first_path + j));
    for (Index i = 0; i < H; ++i)
      for (int c = 0; c < dim_w; ++c) out[c * rows + i * samples + j] = normal(engine);
  }

  b.W.resize((H + 1) * samples, dim_w);
  b.W.topRows(samples).setZero();
  for (Index i = 0; i < H; ++i)
    b.W.middleRows((i + 1) * samples, samples) = b.W.middleRows(i * samples, samples) + b.dW.middleRows(i * samples, samples);
  return b;
}

int first_nonfinite_node(const Eigen::ArrayXXd& stacked, Index samples) {
  if (stacked.allFinite()) return -1;
  const Index nodes = stacked.rows() / samples;
  for (Index i = 0; i < nodes; ++i)
    if (!stacked.middleRows(i * samples, samples).allFinite()) return static_cast<int>(i);
  return static_cast<int>(nodes);
}

namespace {

void check_dims(const FbsdeProblem& p, const TrialSolution& trial) {
  if (trial.dim_x() != p.dim_x || trial.dim_y() != p.dim_y || trial.dim_w() != p.dim_w)
    throw ConfigError("trial dimensions (" + std::to_string(trial.dim_x()) + ", " + std::to_string(trial.dim_y()) +
                      ", " + std::to_string(trial.dim_w()) + ") do not match problem " + p.name);
}

void check_finite(const Var& v, Index samples, const char* what) {
  const int node = first_nonfinite_node(v.value(), samples);
  if (node >= 0) throw BlowupError(node, std::string("simulation blowup in ") + what);
}

ad::Array stacked_times(const TimeGrid& grid, Index samples) {
  ad::Array t(static_cast<Index>(grid.intervals + 1) * samples, 1);
  for (int i = 0; i <= grid.intervals; ++i) t.middleRows(i * samples, samples).setConstant(grid.t(i));
  return t;
}

ad::Array initial_state(const FbsdeProblem& p, Index samples) {
  return p.x0.transpose().array().replicate(samples, 1);
}

}  // namespace

PathVars simulate_paths(const FbsdeProblem& p, const TrialSolution& trial, std::span<const Var> params,
                        const PathBatch& batch) {
  check_dims(p, trial);
  if (batch.dW.rows() != batch.intervals() * batch.samples || batch.dW.cols() != p.dim_w)
    throw ConfigError("simulate: Brownian increments missing or of the wrong dimension");
  const int H = batch.intervals();
  const Index M = batch.samples;
  const double dt = batch.grid.dt;

  PathVars out;
  out.t = Var(stacked_times(batch.grid, M));

  if (p.forward_decoupled) {
    ad::Array X;
    if (p.forward_from_brownian) {
      X = p.forward_from_brownian(batch.W).array();
    } else {
      X.resize((H + 1) * M, p.dim_x);
      X.topRows(M) = initial_state(p, M);
      const Var y0 = Var::zeros(M, p.dim_y);
      const Var z0 = Var::zeros(M, p.dim_y * p.dim_w);
      for (int i = 0; i < H; ++i) {
        const Var t = Var::filled(M, 1, batch.grid.t(i));
        const Var x(X.middleRows(i * M, M));
        const Var dw(batch.at(batch.dW, i).array());
        X.middleRows((i + 1) * M, M) =
            x.value() + p.drift(t, x, y0, z0).value() * dt + apply_diffusion(p, t, x, y0, z0, dw).value();
      }
    }
    out.X = Var(std::move(X));
    check_finite(out.X, M, "forward process X");
    const TrialOutput yz = trial.evaluate(out.t, out.X, params);
    out.y = yz.y;
    out.z = yz.z;
  } else {
    std::vector<Var> xs, ys, zs;
    xs.reserve(H + 1);
    ys.reserve(H + 1);
    zs.reserve(H + 1);
    xs.emplace_back(initial_state(p, M));
    for (int i = 0; i <= H; ++i) {
      const Var t = Var::filled(M, 1, batch.grid.t(i));
      const TrialOutput yz = trial.evaluate(t, xs.back(), params);
      if (!yz.y.value().allFinite() || !yz.z.value().allFinite())
        throw BlowupError(i, "simulation blowup in trial solution");
      ys.push_back(yz.y);
      zs.push_back(yz.z);
      if (i == H) break;
      const Var& x = xs.back();
      const Var dw(batch.at(batch.dW, i).array());
      Var next = x + p.drift(t, x, yz.y, yz.z) * dt + apply_diffusion(p, t, x, yz.y, yz.z, dw);
      if (!next.value().allFinite()) throw BlowupError(i + 1, "simulation blowup in forward process X");
      xs.push_back(std::move(next));
    }
    out.X = ad::concat_rows(xs);
    out.y = ad::concat_rows(ys);
    out.z = ad::concat_rows(zs);
  }
  check_finite(out.y, M, "trial solution y");
  check_finite(out.z, M, "trial solution z");
  return out;
}

Var residual_paths(const FbsdeProblem& p, const PathBatch& batch, const PathVars& paths) {
  using namespace ad;
  const int H = batch.intervals();
  const Index M = batch.samples;
  const Index head = H * M;
  const Var t = slice_rows(paths.t, 0, head);
  const Var x = slice_rows(paths.X, 0, head);
  const Var y = slice_rows(paths.y, 0, head);
  const Var z = slice_rows(paths.z, 0, head);
  const Var dw(batch.dW.array());

  const Var f = p.driver(t, x, y, z);
  const Var z_dw = p.dim_y == 1 ? dot(z, dw) : batched_matvec(z, dw, p.dim_y, p.dim_w);
  const Var increments = f * batch.grid.dt - z_dw;
  const Var parts[] = {increments, Var::zeros(M, p.dim_y)};
  const Var tail = reverse_cumsum_blocks(concat_rows(parts), M);
  const Var terminal = p.terminal(slice_rows(paths.X, head, M));
  Var R = paths.y - (tile_rows(terminal, H + 1) + tail);
  check_finite(R, M, "residual R");
  return R;
}

void simulate_forward(const FbsdeProblem& p, const TrialSolution& trial, PathBatch& batch) {
  const auto params = trial.constant_params();
  const PathVars paths = simulate_paths(p, trial, params, batch);
  batch.X = paths.X.value().matrix();
  batch.y = paths.y.value().matrix();
  batch.z = paths.z.value().matrix();
  batch.R.resize(0, 0);
}

void compute_residuals(const FbsdeProblem& p, PathBatch& batch) {
  const Index rows = (batch.intervals() + 1) * batch.samples;
  if (batch.X.rows() != rows || batch.y.rows() != rows || batch.z.rows() != rows)
    throw ConfigError("compute_residuals: X, y, z must be simulated first");
  PathVars paths{Var(stacked_times(batch.grid, batch.samples)), Var(batch.X.array()), Var(batch.y.array()),
                 Var(batch.z.array())};
  batch.R = residual_paths(p, batch, paths).value().matrix();
}

}  // namespace bml
