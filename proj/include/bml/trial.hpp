#pragma once

#include "bml/core.hpp"
#include "bml/rng.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bml {

struct TrialOutput {
  Var y;  // B x m
  Var z;  // B x (m d), row-major m x d per row
};

// A parameterized Markovian trial solution (y(t, x; theta), z(t, x; theta)).
//
// Parameters live in blocks (matrices); theta is the concatenation of all
// blocks in column-major order. Each block belongs to a parameter group so
// optimizers can use per-group learning rates.
class TrialSolution {
 public:
  TrialSolution(int dim_x, int dim_y, int dim_w) : dim_x_(dim_x), dim_y_(dim_y), dim_w_(dim_w) {}
  virtual ~TrialSolution() = default;

  // t is B x 1 and x is B x n; params has one Var per block.
  virtual TrialOutput evaluate(const Var& t, const Var& x, std::span<const Var> params) const = 0;
  virtual std::unique_ptr<TrialSolution> clone() const = 0;
  virtual std::string kind() const = 0;
  // Fresh random parameters for a new run; fixed-form trials keep theta.
  virtual void reinitialize(const SeedSpec&) {}

  int dim_x() const { return dim_x_; }
  int dim_y() const { return dim_y_; }
  int dim_w() const { return dim_w_; }

  Index num_params() const;
  int num_groups() const;
  // Group id of every entry of theta.
  std::vector<int> param_groups() const;
  Eigen::VectorXd theta() const;
  void set_theta(const Eigen::VectorXd& theta);

  std::vector<Var> constant_params() const;
  std::vector<Var> track_params(ad::Tape& tape) const;
  // Flattens per-block gradients in theta order.
  Eigen::VectorXd flatten_gradient(const ad::Tape& tape, std::span<const Var> tracked) const;

  TrialOutput evaluate(const Var& t, const Var& x) const;
  Eigen::MatrixXd eval_y(double t, const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd eval_z(double t, const Eigen::MatrixXd& x) const;

 protected:
  int add_block(Index rows, Index cols, int group);
  std::vector<ad::Array> blocks_;
  std::vector<int> block_group_;

 private:
  int dim_x_, dim_y_, dim_w_;
};

// y = theta1 * feature_y(t, x), z = theta2 * feature_z(t, x), with theta1
// and theta2 in separate parameter groups.
class LinearTrial : public TrialSolution {
 public:
  using Feature = std::function<Var(const Var& t, const Var& x)>;

  LinearTrial(std::string kind, int dim_x, int dim_y, int dim_w, Feature feature_y, Feature feature_z,
              double theta1, double theta2);

  TrialOutput evaluate(const Var& t, const Var& x, std::span<const Var> params) const override;
  std::unique_ptr<TrialSolution> clone() const override { return std::make_unique<LinearTrial>(*this); }
  std::string kind() const override { return kind_; }

 private:
  std::string kind_;
  Feature feature_y_, feature_z_;
};

// y = theta1 |x|^2, z = theta2 x.
LinearTrial make_scheme1_trial(int d, double theta1, double theta2);
// y = theta1 |x|^4, z = theta2 |x|^2 x.
LinearTrial make_scheme2_trial(int d, double theta1, double theta2);

struct MlpDims {
  int dim_x = 1;
  int dim_y = 1;
  int dim_w = 1;
  int embed = 4;         // time-embedding width
  int time_hidden = 4;
  int value_hidden = 32;
  int control_hidden = 32;
};

// y(t, x) = phi_y(phi_t(t), x) and z(t, x) = phi_z(phi_t(t), x), each phi a
// one-hidden-layer ReLU network with a linear output layer.
class MlpTrial : public TrialSolution {
 public:
  explicit MlpTrial(const MlpDims& dims);

  TrialOutput evaluate(const Var& t, const Var& x, std::span<const Var> params) const override;
  std::unique_ptr<TrialSolution> clone() const override { return std::make_unique<MlpTrial>(*this); }
  std::string kind() const override { return "mlp"; }
  void reinitialize(const SeedSpec& seed) override;

  const MlpDims& dims() const { return dims_; }

 private:
  MlpDims dims_;
};

// Weights uniform in +-sqrt(6 / fan_in), biases zero.
MlpTrial init_mlp(const MlpDims& dims, const SeedSpec& seed);

// Pointwise mean of fixed trial solutions; has no parameters of its own.
class AveragedTrial : public TrialSolution {
 public:
  explicit AveragedTrial(std::vector<std::shared_ptr<const TrialSolution>> members);

  TrialOutput evaluate(const Var& t, const Var& x, std::span<const Var> params) const override;
  std::unique_ptr<TrialSolution> clone() const override { return std::make_unique<AveragedTrial>(*this); }
  std::string kind() const override { return "average"; }
  std::size_t size() const { return members_.size(); }

 private:
  std::vector<std::shared_ptr<const TrialSolution>> members_;
};

}  // namespace bml
