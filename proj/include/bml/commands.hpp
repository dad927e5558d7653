#pragma once

#include "bml/config.hpp"
#include "bml/core.hpp"
#include "bml/optim.hpp"
#include "bml/problems.hpp"
#include "bml/trial.hpp"

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

namespace bml {

// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNumerical = 2, kExitCheckFailed = 3 };

// A problem, a trial family and whatever reference information is known.
struct Experiment {
  std::string problem_name;
  FbsdeProblem problem;
  std::unique_ptr<TrialSolution> trial;
  std::unique_ptr<TrialSolution> truth;                        // exact solution, when known
  std::function<double(const Eigen::VectorXd&)> closed_form;   // exact BML, when known
  std::optional<Eigen::Vector2d> theta_star;                   // minimizer of a two-parameter trial
  std::optional<double> y0_star;                                // exact Y_0, when known in closed form
  ToyBsdeSpec toy;
  CoupledFbsdeSpec coupled;
  HjbSpec hjb_spec;
};

Experiment build_experiment(const Config& cfg);
TrainConfig train_config(const Config& cfg);
SeedSpec master_seed(const Config& cfg);

// Each command writes its files into output.dir along with config.json and
// returns an exit code. Progress goes to `log`.
int cmd_sweep(const Config& cfg, std::ostream& log);
int cmd_train(const Config& cfg, std::ostream& log);
int cmd_oracle_y0(const Config& cfg, std::ostream& log);
int cmd_checks(const Config& cfg, std::ostream& log);
int cmd_error_paths(const Config& cfg, std::ostream& log);

// 17 significant digits; empty for a missing value.
std::string format_number(double v);
std::string format_number(const std::optional<double>& v);

}  // namespace bml
