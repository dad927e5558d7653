#pragma once

#include "bml/core.hpp"
#include "bml/rng.hpp"
#include "bml/sim.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace bml {

enum class EstimatorKind { particle, full_grid, terminal, martingale };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string& name);

// value is the mean of per-path contributions; std_error their sample
// standard deviation over sqrt(samples_used). Particle and full-grid values
// estimate (1/T) BML.
struct LossEstimate {
  double value = 0.0;
  double std_error = 0.0;
  Index samples_used = 0;
  EstimatorKind kind = EstimatorKind::particle;

  double ci_low() const { return value - 3.0 * std_error; }
  double ci_high() const { return value + 3.0 * std_error; }
};

// Merges per-path contributions chunk by chunk (Chan et al. pairwise update),
// so chunked and unchunked runs agree up to rounding and are reproducible
// for a fixed chunk size.
class LossAccumulator {
 public:
  void add(const Eigen::ArrayXd& contributions);
  LossEstimate finish(EstimatorKind kind) const;

 private:
  Index n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Row index i_j * M + j of the node sampled for each path, with i_j uniform
// on {0, ..., H-1} drawn from stream_engine(seed, first_path + j).
std::vector<Index> particle_rows(const SeedSpec& seed, Index first_path, Index samples, int intervals);

// Per-path contributions (M x 1) on the tape.
Var particle_contributions(const Var& residuals, std::span<const Index> rows);
Var fullgrid_contributions(const Var& residuals, Index samples, int intervals);
Var terminal_contributions(const FbsdeProblem& p, const PathVars& paths, Index samples, int intervals);
// (1/2) int_0^T |xi + int_t^T r ds - J_t|^2 dt per path, evaluated directly
// from its definition with xi = g(X_T) and r = f(t, X).
Var martingale_contributions(const FbsdeProblem& p, const PathBatch& batch, const PathVars& paths);

LossEstimate bml_particle(const PathBatch& batch, const SeedSpec& seed);
LossEstimate bml_fullgrid(const PathBatch& batch);
LossEstimate deep_bsde_loss(const PathBatch& batch, const FbsdeProblem& p);
// Requires a driver independent of (y, z) and z == 0 on the batch.
LossEstimate martingale_loss(const PathBatch& batch, const FbsdeProblem& p);

}  // namespace bml
