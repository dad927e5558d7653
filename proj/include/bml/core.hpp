#pragma once

#include "bml/tape.hpp"

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>

namespace bml {

using ad::Var;
using Eigen::Index;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A coefficient returned an array of the wrong shape.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(std::string coefficient, const std::string& what)
      : std::runtime_error(coefficient + ": " + what), coefficient_(std::move(coefficient)) {}
  const std::string& coefficient() const { return coefficient_; }

 private:
  std::string coefficient_;
};

// Non-finite values during simulation. `step` is the first offending grid node.
class BlowupError : public std::runtime_error {
 public:
  BlowupError(int step, const std::string& what)
      : std::runtime_error(what + " (first non-finite value at node " + std::to_string(step) + ")"),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimeGrid {
  double horizon = 1.0;
  int intervals = 1;
  double dt = 1.0;
  Eigen::VectorXd nodes;

  double t(int i) const { return nodes[i]; }
};

// Uniform grid t_i = i T / H, with nodes[H] == T exactly.
TimeGrid make_grid(double horizon, int intervals);

// Coefficients of
//   X_t = x0 + int b dt + int sigma dW,
//   Y_t = g(X_T) + int_t^T f ds - int_t^T Z dW.
//
// Callbacks are batched: every argument has one row per sample. t is B x 1,
// x is B x n, y is B x m and z is B x (m d) holding each m x d matrix in
// row-major order. drift returns B x n, diffusion B x (n d) (row-major n x d),
// driver B x m and terminal B x m.
struct FbsdeProblem {
  using Coefficient = std::function<Var(const Var& t, const Var& x, const Var& y, const Var& z)>;

  std::string name;
  int dim_x = 1;
  int dim_y = 1;
  int dim_w = 1;
  Eigen::VectorXd x0;
  double horizon = 1.0;

  Coefficient drift;
  Coefficient diffusion;
  Coefficient driver;
  std::function<Var(const Var& x)> terminal;

  // Optional sigma * dW without materializing sigma (B x n).
  std::function<Var(const Var& t, const Var& x, const Var& y, const Var& z, const Var& dw)> diffusion_times;

  // Optional exact forward map from stacked Brownian values to X, for
  // problems with zero drift and constant diffusion.
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd& w)> forward_from_brownian;

  // b and sigma ignore (y, z), so X does not depend on the trial solution.
  bool forward_decoupled = false;
  // f reads y or z. Simple BSDEs (driver a function of (t, x) only) clear it.
  bool driver_depends_on_solution = true;
};

// sigma(t, x, y, z) * dw, using diffusion_times when available.
Var apply_diffusion(const FbsdeProblem& p, const Var& t, const Var& x, const Var& y, const Var& z,
                    const Var& dw);

// Evaluates every coefficient once at (0, x0, 0, 0) and checks output shapes.
// Throws ShapeError naming the first offending coefficient.
void validate_problem(const FbsdeProblem& p);

// keep large path buffers in the heap between steps (glibc only)
void tune_allocator();

}  // namespace bml
