#pragma once

#include "bml/core.hpp"
#include "bml/rng.hpp"
#include "bml/trial.hpp"

#include <Eigen/Dense>

#include <span>

namespace bml {

// M paths on a uniform grid. Arrays are stacked time-major: row i*M + j holds
// node i of path j. dW has H*M rows, the others (H+1)*M.
struct PathBatch {
  TimeGrid grid;
  Index samples = 0;
  Index first_path = 0;  // global index of path 0, for chunked batches
  int dim_w = 1;

  Eigen::MatrixXd dW;
  Eigen::MatrixXd W;
  Eigen::MatrixXd X;
  Eigen::MatrixXd y;
  Eigen::MatrixXd z;
  Eigen::MatrixXd R;

  int intervals() const { return grid.intervals; }
  Index row(int node, Index path) const { return node * samples + path; }
  // All paths at one node.
  auto at(const Eigen::MatrixXd& a, int node) const { return a.middleRows(node * samples, samples); }
};

// Upper bound on M*H*d Brownian increments held at once.
inline constexpr Index kDefaultMaxIncrements = Index{1} << 26;

// Paths first_path .. first_path+M-1 of the stream defined by seed. Path j
// draws its increments from stream_engine(seed, j) alone.
PathBatch sample_brownian(const TimeGrid& grid, Index samples, int dim_w, const SeedSpec& seed,
                          Index first_path = 0, Index max_increments = kDefaultMaxIncrements);

// Stacked trial-driven paths as tape variables, rows as in PathBatch.
struct PathVars {
  Var t;
  Var X;
  Var y;
  Var z;
};

// Euler-Maruyama for X with y, z evaluated from the trial at every node
// (including t_H). Gradients flow through X when b or sigma read (y, z).
PathVars simulate_paths(const FbsdeProblem& p, const TrialSolution& trial, std::span<const Var> params,
                        const PathBatch& batch);

// R_{t_i} = y_i - (g(X_T) + sum_{k>=i} f_k dt - sum_{k>=i} z_k dW_k) for
// every node 0..H, via one backward cumulative pass.
Var residual_paths(const FbsdeProblem& p, const PathBatch& batch, const PathVars& paths);

// Populates batch.X, batch.y, batch.z.
void simulate_forward(const FbsdeProblem& p, const TrialSolution& trial, PathBatch& batch);

// Populates batch.R from batch.X, batch.y, batch.z.
void compute_residuals(const FbsdeProblem& p, PathBatch& batch);

// First grid node whose rows contain a non-finite value, or -1.
int first_nonfinite_node(const Eigen::ArrayXXd& stacked, Index samples);

}  // namespace bml
