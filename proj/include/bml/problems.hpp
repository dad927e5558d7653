#pragma once

#include "bml/core.hpp"
#include "bml/rng.hpp"
#include "bml/sim.hpp"
#include "bml/trial.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>

namespace bml {

// dY = dt + (2/d) W dW with Y_T = |W_T|^2 / d; solution Y = |W|^2 / d, Z = 2W/d.
struct ToyBsdeSpec {
  int d = 3;
  double T = 1.0;
};

FbsdeProblem toy_bsde(const ToyBsdeSpec& spec);

// dX = sigma0 Y dW, f = -r y + (sigma0^2 / 2) e^{-3r(T-t)} (A sum sin x)^3,
// g = A sum sin x. Solution Y = e^{-r(T-t)} A sum sin X.
struct CoupledFbsdeSpec {
  int d = 3;
  double T = 1.0;
  double A = 1.0;
  double sigma0 = 0.3;
  double r = 0.1;
  double x0 = 1.5707963267948966;  // every component
};

FbsdeProblem coupled_fbsde(const CoupledFbsdeSpec& spec);

// dX = sqrt(2) dW, f = -(lambda/2)|z|^2, g = ln((1 + |x|^2) / 2).
struct HjbSpec {
  int n = 100;
  double T = 1.0;
  double lambda = 1.0;
  double x0 = 0.0;  // every component
};

FbsdeProblem hjb(const HjbSpec& spec);

// E|W_t|^{2k} = d (d+2) ... (d+2k-2) t^k.
double brownian_moment(int d, int k, double t);

// Exact BML of the scheme-1 trial (theta1 |W|^2, theta2 W) on the toy BSDE.
double toy_bml_closed_form_scheme1(double theta1, double theta2, int d, double T);

// Exact BML of the scheme-2 trial (theta1 |W|^4, theta2 |W|^2 W) on the toy BSDE.
double toy_bml_closed_form_scheme2(double theta1, double theta2, int d, double T);
double toy_scheme2_theta1_star(int d, double T);
double toy_scheme2_theta2_star(int d, double T);

// The exact solution as a trial: scheme 1 at (1/d, 2/d).
LinearTrial toy_true_trial(const ToyBsdeSpec& spec);

// y = theta1 e^{-r(T-t)} sum sin x, z_j = theta2 e^{-2r(T-t)} (sum sin x) cos x_j.
LinearTrial coupled_reference_trial(const CoupledFbsdeSpec& spec, double theta1, double theta2);

// Candidate theta2 values for the coupled reference trial.
inline double coupled_theta2_sigma0_a2(const CoupledFbsdeSpec& s) { return s.sigma0 * s.A * s.A; }
inline double coupled_theta2_sigma02_a(const CoupledFbsdeSpec& s) { return s.sigma0 * s.sigma0 * s.A; }

struct OracleValue {
  double value = 0.0;
  double std_error = 0.0;
  Index samples = 0;
};

// -(1/lambda) log E exp(-lambda g(x0 + sqrt(2) W_T)), with max-shifted
// log-mean-exp and a delta-method standard error. constant_g replaces g by a
// constant.
OracleValue hopf_cole_y0(const HjbSpec& spec, Index samples, const SeedSpec& seed,
                         std::optional<double> constant_g = std::nullopt);

// Per-node control for the deep-BSDE scheme: (node, X at node as M x n) -> M x (m d).
using NodeControl = std::function<Eigen::MatrixXd(int node, const Eigen::MatrixXd& x)>;

// y_{i+1} = y_i - f_i dt + z_i dW_i from y_0 = y0, X by Euler. Populates X, y, z
// (z at t_H repeats the control at node H-1, which no increment reads).
void deep_bsde_scheme_simulate(const FbsdeProblem& p, const Eigen::VectorXd& y0, const NodeControl& controls,
                               PathBatch& batch);

}  // namespace bml
