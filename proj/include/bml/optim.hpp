#pragma once

#include "bml/core.hpp"
#include "bml/gradient.hpp"
#include "bml/loss.hpp"
#include "bml/rng.hpp"
#include "bml/trial.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bml {

struct AdamState {
  long step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  Eigen::VectorXd lr;  // per parameter
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter learning rates from group ids; a single rate applies to
// every group, otherwise group_lr needs one entry per group.
Eigen::VectorXd expand_learning_rates(const std::vector<int>& groups, const std::vector<double>& group_lr);

AdamState make_adam(const Eigen::VectorXd& lr);

// Bias-corrected Adam update. Returns the new theta and advances state.
Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

Eigen::VectorXd sgd_step(const Eigen::VectorXd& lr, const Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

struct TrainConfig {
  int steps = 2000;
  Index samples = 1000;         // paths per gradient step
  int intervals = 1000;         // H; the horizon comes from the problem
  std::vector<double> learning_rates{1e-3};
  std::string optimizer = "adam";  // adam | sgd
  EstimatorKind estimator = EstimatorKind::particle;
  SeedSpec seed;
  int eval_every = 10;
  int repeats = 1;
  int first_run = 0;            // runs first_run .. first_run+repeats-1
  Index eval_samples = 1000;    // held-out paths for norm errors
  int eval_intervals = 0;       // 0: same as intervals
  double beta = 0.0;            // weight of the beta-norm error
  Index chunk_paths = 0;
};

// Reference information for error metrics. truth simulates the exact
// solution; closed_form maps theta to the exact BML; y0_star is the exact Y_0.
struct TrainOracle {
  const TrialSolution* truth = nullptr;
  std::function<double(const Eigen::VectorXd& theta)> closed_form;
  std::optional<double> y0_star;
};

struct MetricRow {
  int run = 0;
  int step = 0;
  double loss = 0.0;  // (1/T) BML estimate on this step's batch
  double loss_stderr = 0.0;
  double bml = 0.0;   // T * loss
  Eigen::VectorXd theta;  // empty for large trials
  std::optional<double> err_standard_sq, err_sup_sq, err_beta_sq, err_mu_sq;
  double y0_pred = 0.0;
  std::optional<double> closed_form;
  double wall_time = 0.0;
  std::string status = "ok";
};

struct RunResult {
  int run = 0;
  bool failed = false;
  std::string failure;
  Eigen::VectorXd final_theta;
  std::optional<MetricRow> final_row;
};

struct MetricLog {
  std::vector<MetricRow> rows;
  std::vector<RunResult> runs;

  int failures() const;
};

// theta snapshots are logged for trials with at most this many parameters.
inline constexpr Index kThetaLogLimit = 16;

// Seeds used by train for run r and step s.
SeedSpec run_seed(const SeedSpec& master, int run);
SeedSpec step_seed(const SeedSpec& run, int step);
SeedSpec eval_seed(const SeedSpec& master);

// Runs cfg.repeats independent optimizations of a copy of trial (each copy
// reinitialized from its run seed). Every run logs steps 0, k, 2k, ... and
// the final step. A blowup ends that run with a failure row.
MetricLog train(const FbsdeProblem& p, const TrialSolution& trial, const TrainConfig& cfg,
                const TrainOracle& oracle = {});

void validate(const TrainConfig& cfg, const TrialSolution& trial);

}  // namespace bml
