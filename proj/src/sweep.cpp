#include "bml/sweep.hpp"

#include "bml/sim.hpp"

#include <algorithm>

namespace bml {

std::vector<Eigen::VectorXd> theta_grid(const std::vector<double>& theta1, const std::vector<double>& theta2) {
  std::vector<Eigen::VectorXd> out;
  for (double a : theta1)
    for (double b : theta2) out.push_back(Eigen::Vector2d(a, b));
  return out;
}

std::vector<SweepPoint> sweep(const FbsdeProblem& p, const TrialSolution& trial, const std::vector<Eigen::VectorXd>& thetas,
                              const BatchSpec& spec, EstimatorKind estimator) {
  if (spec.samples < 1) throw ConfigError("sweep needs at least one path");
  const Index chunk = resolve_chunk_paths(spec);
  const Index n_chunks = (spec.samples + chunk - 1) / chunk;
  const std::size_t n = thetas.size();
  const int H = spec.grid.intervals;

  struct ChunkOut {
    std::vector<Eigen::ArrayXd> contributions;
    std::vector<std::string> failure;
  };
  std::vector<ChunkOut> chunks(static_cast<std::size_t>(n_chunks));
  parallel_for(n_chunks, [&](Index c) {
    const Index first = c * chunk;
    const Index count = std::min(chunk, spec.samples - first);
    const PathBatch batch = sample_brownian(spec.grid, count, p.dim_w, spec.seed, first);
    std::vector<Index> rows;
    if (estimator == EstimatorKind::particle)
      rows = particle_rows(derive(spec.seed, kParticleIndexTag), first, count, H);
    auto local = trial.clone();
    ChunkOut& out = chunks[static_cast<std::size_t>(c)];
    out.contributions.resize(n);
    out.failure.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      try {
        local->set_theta(thetas[k]);
        const auto params = local->constant_params();
        const PathVars paths = simulate_paths(p, *local, params, batch);
        Var v;
        switch (estimator) {
          case EstimatorKind::particle: v = particle_contributions(residual_paths(p, batch, paths), rows); break;
          case EstimatorKind::full_grid: v = fullgrid_contributions(residual_paths(p, batch, paths), count, H); break;
          case EstimatorKind::terminal: v = terminal_contributions(p, paths, count, H); break;
          case EstimatorKind::martingale: v = martingale_contributions(p, batch, paths); break;
        }
        out.contributions[k] = v.value().col(0);
      } catch (const BlowupError& e) {
        out.failure[k] = e.what();
      }
    }
  });

  std::vector<SweepPoint> points(n);
  for (std::size_t k = 0; k < n; ++k) {
    points[k].theta = thetas[k];
    LossAccumulator acc;
    for (const auto& c : chunks) {
      if (!c.failure[k].empty()) {
        points[k].status = "blowup: " + c.failure[k];
        break;
      }
      acc.add(c.contributions[k]);
    }
    points[k].loss = acc.finish(estimator);
    if (points[k].status != "ok") points[k].loss.value = points[k].loss.std_error = std::nan("");
  }
  return points;
}

}  // namespace bml
