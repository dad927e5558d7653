#pragma once

#include "bml/core.hpp"
#include "bml/sim.hpp"

#include <Eigen/Dense>

namespace bml {

// Sampled (Y, Z) on a grid, stacked time-major like PathBatch.
struct ProcessPair {
  TimeGrid grid;
  Index samples = 0;
  Eigen::MatrixXd Y;  // ((H+1) M) x m
  Eigen::MatrixXd Z;  // ((H+1) M) x (m d)
};

ProcessPair make_pair(const TimeGrid& grid, Index samples, Eigen::MatrixXd Y, Eigen::MatrixXd Z);

// (trial - truth) from two batches simulated on the same Brownian increments.
ProcessPair difference(const PathBatch& trial, const PathBatch& truth);

// All norms use left-endpoint quadrature on the grid and never read Z at t_H.
// The pathwise sup is taken over grid nodes only.
double norm_standard(const ProcessPair& pp);
double norm_sup(const ProcessPair& pp);
double norm_beta(const ProcessPair& pp, double beta);
double norm_mu(const ProcessPair& pp);
// The mu-norm from its double-integral definition, without exchanging the
// order of integration. Differs from norm_mu^2 by exactly dt * E sum |Z|^2 dt.
double norm_mu_fubini(const ProcessPair& pp);
double norm_mu_beta(const ProcessPair& pp, double beta);

// Per-path terms of norm_mu^2, for standard errors.
Eigen::ArrayXd norm_mu_sq_per_path(const ProcessPair& pp);

}  // namespace bml
