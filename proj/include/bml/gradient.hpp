#pragma once

#include "bml/core.hpp"
#include "bml/loss.hpp"
#include "bml/rng.hpp"
#include "bml/trial.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>

namespace bml {

class GradientError : public std::runtime_error {
 public:
  explicit GradientError(Index index)
      : std::runtime_error("non-finite gradient at parameter " + std::to_string(index)), index_(index) {}
  Index index() const { return index_; }

 private:
  Index index_;
};

// M paths of a fresh Brownian batch. Paths are processed in chunks of
// chunk_paths (0 picks a cache-friendly default); results do not depend on
// the chunk size beyond summation order.
struct BatchSpec {
  TimeGrid grid;
  Index samples = 1;
  SeedSpec seed;
  Index chunk_paths = 0;
};

// Tag separating the particle time-index stream from the Brownian stream.
inline constexpr std::uint64_t kParticleIndexTag = 0x7061727469636c65ULL;

struct LossAndGradient {
  LossEstimate loss;
  Eigen::VectorXd gradient;  // d(loss.value)/d(theta)
};

// Exact gradient of the discretized estimator, differentiating through the
// trial and (for coupled problems) through the Euler recursion for X.
LossAndGradient loss_and_grad(const FbsdeProblem& p, const TrialSolution& trial, const BatchSpec& spec,
                              EstimatorKind estimator);

LossEstimate estimate_loss(const FbsdeProblem& p, const TrialSolution& trial, const BatchSpec& spec,
                           EstimatorKind estimator);

// Worker cap from BML_FBSDE_THREADS, else hardware concurrency.
int worker_count();

// Runs body(i) for i in [0, n) on up to worker_count() threads. Exceptions
// are rethrown in index order after all workers stop.
void parallel_for(Index n, const std::function<void(Index)>& body);

Index resolve_chunk_paths(const BatchSpec& spec);

}  // namespace bml
