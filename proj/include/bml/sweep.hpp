#pragma once

#include "bml/core.hpp"
#include "bml/gradient.hpp"
#include "bml/loss.hpp"
#include "bml/trial.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace bml {

struct SweepPoint {
  Eigen::VectorXd theta;
  LossEstimate loss;     // (1/T) BML estimate
  std::string status = "ok";
};

// Estimates the loss at every theta on one shared set of paths (common random
// numbers), generating each chunk of paths once. A blowup at one theta marks
// that point and leaves the others untouched.
std::vector<SweepPoint> sweep(const FbsdeProblem& p, const TrialSolution& trial, const std::vector<Eigen::VectorXd>& thetas,
                              const BatchSpec& spec, EstimatorKind estimator);

// Cartesian grid of (theta1, theta2) pairs, theta1 varying slowest.
std::vector<Eigen::VectorXd> theta_grid(const std::vector<double>& theta1, const std::vector<double>& theta2);

}  // namespace bml
