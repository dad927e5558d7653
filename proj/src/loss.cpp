#include "bml/loss.hpp"

#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>

namespace bml {

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::particle: return "particle";
    case EstimatorKind::full_grid: return "full-grid";
    case EstimatorKind::terminal: return "terminal";
    case EstimatorKind::martingale: return "martingale";
  }
  return "unknown";
}

EstimatorKind parse_estimator(const std::string& name) {
  if (name == "particle") return EstimatorKind::particle;
  if (name == "full-grid") return EstimatorKind::full_grid;
  if (name == "terminal") return EstimatorKind::terminal;
  if (name == "martingale") return EstimatorKind::martingale;
  throw ConfigError("unknown estimator '" + name + "' (expected particle, full-grid, terminal or martingale)");
}

void LossAccumulator::add(const Eigen::ArrayXd& c) {
  if (c.size() == 0) return;
  const auto nb = static_cast<double>(c.size());
  const double mean_b = c.mean();
  const double m2_b = (c - mean_b).square().sum();
  if (n_ == 0) {
    n_ = c.size();
    mean_ = mean_b;
    m2_ = m2_b;
    return;
  }
  const auto na = static_cast<double>(n_);
  const double delta = mean_b - mean_;
  const double n = na + nb;
  mean_ += delta * nb / n;
  m2_ += m2_b + delta * delta * na * nb / n;
  n_ += c.size();
}

LossEstimate LossAccumulator::finish(EstimatorKind kind) const {
  LossEstimate e;
  e.kind = kind;
  e.samples_used = n_;
  e.value = mean_;
  if (n_ > 1) e.std_error = std::sqrt(m2_ / static_cast<double>(n_ - 1)) / std::sqrt(static_cast<double>(n_));
  return e;
}

std::vector<Index> particle_rows(const SeedSpec& seed, Index first_path, Index samples, int intervals) {
  std::vector<Index> rows(static_cast<std::size_t>(samples));
  boost::random::uniform_int_distribution<int> pick(0, intervals - 1);
  for (Index j = 0; j < samples; ++j) {
    auto engine = stream_engine(seed, static_cast<std::uint64_t>(first_path + j));
    rows[static_cast<std::size_t>(j)] = static_cast<Index>(pick(engine)) * samples + j;
  }
  return rows;
}

Var particle_contributions(const Var& residuals, std::span<const Index> rows) {
  return ad::square_norm(ad::gather_rows(residuals, rows));
}

Var fullgrid_contributions(const Var& residuals, Index samples, int intervals) {
  const Var head = ad::slice_rows(residuals, 0, intervals * samples);
  return ad::sum_blocks(ad::square_norm(head), samples) * (1.0 / intervals);
}

Var terminal_contributions(const FbsdeProblem& p, const PathVars& paths, Index samples, int intervals) {
  const Index last = intervals * samples;
  const Var gap = ad::slice_rows(paths.y, last, samples) - p.terminal(ad::slice_rows(paths.X, last, samples));
  return ad::square_norm(gap);
}

Var martingale_contributions(const FbsdeProblem& p, const PathBatch& batch, const PathVars& paths) {
  using namespace ad;
  if (p.driver_depends_on_solution)
    throw ConfigError("martingale loss needs a driver independent of (y, z); problem " + p.name + " is not simple");
  const int H = batch.intervals();
  const Index M = batch.samples;
  const Index head = H * M;
  const Var t = slice_rows(paths.t, 0, head);
  const Var x = slice_rows(paths.X, 0, head);
  const Var rate = p.driver(t, x, Var::zeros(head, p.dim_y), Var::zeros(head, p.dim_y * p.dim_w));
  const Var parts[] = {rate * batch.grid.dt, Var::zeros(M, p.dim_y)};
  const Var running = reverse_cumsum_blocks(concat_rows(parts), M);
  const Var xi = tile_rows(p.terminal(slice_rows(paths.X, head, M)), H + 1);
  const Var gap = slice_rows(xi + running - paths.y, 0, head);
  return sum_blocks(square_norm(gap), M) * (0.5 * batch.grid.dt);
}

namespace {

void require_residuals(const PathBatch& batch) {
  if (batch.R.rows() != (batch.intervals() + 1) * batch.samples)
    throw ConfigError("loss estimator: residuals have not been computed");
}

LossEstimate summarize(const Var& contributions, EstimatorKind kind) {
  LossAccumulator acc;
  acc.add(contributions.value().col(0));
  return acc.finish(kind);
}

PathVars constant_paths(const PathBatch& batch) {
  ad::Array t(static_cast<Index>(batch.intervals() + 1) * batch.samples, 1);
  for (int i = 0; i <= batch.intervals(); ++i)
    t.middleRows(i * batch.samples, batch.samples).setConstant(batch.grid.t(i));
  return {Var(std::move(t)), Var(batch.X.array()), Var(batch.y.array()), Var(batch.z.array())};
}

}  // namespace

LossEstimate bml_particle(const PathBatch& batch, const SeedSpec& seed) {
  require_residuals(batch);
  const auto rows = particle_rows(seed, batch.first_path, batch.samples, batch.intervals());
  return summarize(particle_contributions(Var(batch.R.array()), rows), EstimatorKind::particle);
}

LossEstimate bml_fullgrid(const PathBatch& batch) {
  require_residuals(batch);
  return summarize(fullgrid_contributions(Var(batch.R.array()), batch.samples, batch.intervals()),
                   EstimatorKind::full_grid);
}

LossEstimate deep_bsde_loss(const PathBatch& batch, const FbsdeProblem& p) {
  if (batch.X.rows() != (batch.intervals() + 1) * batch.samples)
    throw ConfigError("deep_bsde_loss: paths have not been simulated");
  return summarize(terminal_contributions(p, constant_paths(batch), batch.samples, batch.intervals()),
                   EstimatorKind::terminal);
}

LossEstimate martingale_loss(const PathBatch& batch, const FbsdeProblem& p) {
  if (batch.X.rows() != (batch.intervals() + 1) * batch.samples)
    throw ConfigError("martingale_loss: paths have not been simulated");
  if (!p.driver_depends_on_solution && batch.z.size() > 0 && !batch.z.isZero(0.0))
    throw ConfigError("martingale loss is defined for trials with z == 0");
  return summarize(martingale_contributions(p, batch, constant_paths(batch)), EstimatorKind::martingale);
}

}  // namespace bml
