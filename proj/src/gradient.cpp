#include "bml/gradient.hpp"

#include "bml/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace bml {

int worker_count() {
  if (const char* env = std::getenv("BML_FBSDE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

namespace {
// Nested parallel_for calls run inline on the calling worker.
thread_local bool inside_worker = false;
}  // namespace

void parallel_for(Index n, const std::function<void(Index)>& body) {
  const int workers = inside_worker ? 1 : static_cast<int>(std::min<Index>(worker_count(), n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto run = [&](Index i) {
    try {
      body(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        inside_worker = true;
        for (Index i = next++; i < n; i = next++) run(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Index resolve_chunk_paths(const BatchSpec& spec) {
  if (spec.chunk_paths > 0) return std::min(spec.chunk_paths, spec.samples);
  constexpr Index kTargetRows = Index{1} << 15;
  return std::clamp<Index>(kTargetRows / (spec.grid.intervals + 1), 1, spec.samples);
}

namespace {

struct ChunkResult {
  Eigen::ArrayXd contributions;
  Eigen::VectorXd gradient;
};

ChunkResult run_chunk(const FbsdeProblem& p, const TrialSolution& trial, const BatchSpec& spec,
                      EstimatorKind estimator, Index first, Index count, bool with_gradient) {
  const PathBatch batch = sample_brownian(spec.grid, count, p.dim_w, spec.seed, first);
  ad::Tape tape;
  const std::vector<Var> params = with_gradient ? trial.track_params(tape) : trial.constant_params();
  const PathVars paths = simulate_paths(p, trial, params, batch);
  const int H = spec.grid.intervals;

  Var contributions;
  switch (estimator) {
    case EstimatorKind::particle: {
      const auto rows = particle_rows(derive(spec.seed, kParticleIndexTag), first, count, H);
      contributions = particle_contributions(residual_paths(p, batch, paths), rows);
      break;
    }
    case EstimatorKind::full_grid:
      contributions = fullgrid_contributions(residual_paths(p, batch, paths), count, H);
      break;
    case EstimatorKind::terminal:
      contributions = terminal_contributions(p, paths, count, H);
      break;
    case EstimatorKind::martingale:
      contributions = martingale_contributions(p, batch, paths);
      break;
  }

  ChunkResult out;
  out.contributions = contributions.value().col(0);
  if (with_gradient) {
    const Var total = ad::sum(contributions);
    if (total.tracked()) {
      tape.backward(total);
      out.gradient = trial.flatten_gradient(tape, params);
    } else {
      out.gradient = Eigen::VectorXd::Zero(trial.num_params());
    }
  }
  return out;
}

LossAndGradient evaluate(const FbsdeProblem& p, const TrialSolution& trial, const BatchSpec& spec,
                         EstimatorKind estimator, bool with_gradient) {
  if (spec.samples < 1) throw ConfigError("batch needs at least one path");
  const Index chunk = resolve_chunk_paths(spec);
  const Index n_chunks = (spec.samples + chunk - 1) / chunk;
  std::vector<ChunkResult> results(static_cast<std::size_t>(n_chunks));
  parallel_for(n_chunks, [&](Index c) {
    const Index first = c * chunk;
    const Index count = std::min(chunk, spec.samples - first);
    results[static_cast<std::size_t>(c)] = run_chunk(p, trial, spec, estimator, first, count, with_gradient);
  });

  LossAndGradient out;
  LossAccumulator acc;
  if (with_gradient) out.gradient = Eigen::VectorXd::Zero(trial.num_params());
  for (const auto& r : results) {
    acc.add(r.contributions);
    if (with_gradient) out.gradient += r.gradient;
  }
  out.loss = acc.finish(estimator);
  if (with_gradient) {
    out.gradient /= static_cast<double>(spec.samples);
    for (Index k = 0; k < out.gradient.size(); ++k)
      if (!std::isfinite(out.gradient[k])) throw GradientError(k);
  }
  return out;
}

}  // namespace

LossAndGradient loss_and_grad(const FbsdeProblem& p, const TrialSolution& trial, const BatchSpec& spec,
                              EstimatorKind estimator) {
  if (!trial.theta().allFinite()) throw ConfigError("loss_and_grad: trial parameters are not finite");
  return evaluate(p, trial, spec, estimator, true);
}

LossEstimate estimate_loss(const FbsdeProblem& p, const TrialSolution& trial, const BatchSpec& spec,
                           EstimatorKind estimator) {
  return evaluate(p, trial, spec, estimator, false).loss;
}

}  // namespace bml
