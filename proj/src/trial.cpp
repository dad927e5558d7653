#include "bml/trial.hpp"

#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <cmath>

namespace bml {

Index TrialSolution::num_params() const {
  Index n = 0;
  for (const auto& b : blocks_) n += b.size();
  return n;
}

int TrialSolution::num_groups() const {
  int g = 0;
  for (int b : block_group_) g = std::max(g, b + 1);
  return g;
}

std::vector<int> TrialSolution::param_groups() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(num_params()));
  for (std::size_t b = 0; b < blocks_.size(); ++b) out.insert(out.end(), blocks_[b].size(), block_group_[b]);
  return out;
}

Eigen::VectorXd TrialSolution::theta() const {
  Eigen::VectorXd out(num_params());
  Index at = 0;
  for (const auto& b : blocks_) {
    out.segment(at, b.size()) = b.reshaped();
    at += b.size();
  }
  return out;
}

void TrialSolution::set_theta(const Eigen::VectorXd& theta) {
  if (theta.size() != num_params())
    throw std::invalid_argument("set_theta: expected " + std::to_string(num_params()) + " parameters, got " +
                                std::to_string(theta.size()));
  Index at = 0;
  for (auto& b : blocks_) {
    b.reshaped() = theta.segment(at, b.size()).array();
    at += b.size();
  }
}

std::vector<Var> TrialSolution::constant_params() const {
  std::vector<Var> out;
  out.reserve(blocks_.size());
  for (const auto& b : blocks_) out.emplace_back(b);
  return out;
}

std::vector<Var> TrialSolution::track_params(ad::Tape& tape) const {
  std::vector<Var> out;
  out.reserve(blocks_.size());
  for (const auto& b : blocks_) out.push_back(tape.variable(b));
  return out;
}

Eigen::VectorXd TrialSolution::flatten_gradient(const ad::Tape& tape, std::span<const Var> tracked) const {
  Eigen::VectorXd out(num_params());
  Index at = 0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const ad::Array g = tape.gradient(tracked[b]);
    out.segment(at, g.size()) = g.reshaped();
    at += g.size();
  }
  return out;
}

TrialOutput TrialSolution::evaluate(const Var& t, const Var& x) const {
  const auto params = constant_params();
  return evaluate(t, x, params);
}

Eigen::MatrixXd TrialSolution::eval_y(double t, const Eigen::MatrixXd& x) const {
  return evaluate(Var::filled(x.rows(), 1, t), Var(x.array())).y.value().matrix();
}

Eigen::MatrixXd TrialSolution::eval_z(double t, const Eigen::MatrixXd& x) const {
  return evaluate(Var::filled(x.rows(), 1, t), Var(x.array())).z.value().matrix();
}

int TrialSolution::add_block(Index rows, Index cols, int group) {
  blocks_.push_back(ad::Array::Zero(rows, cols));
  block_group_.push_back(group);
  return static_cast<int>(blocks_.size()) - 1;
}

LinearTrial::LinearTrial(std::string kind, int dim_x, int dim_y, int dim_w, Feature feature_y, Feature feature_z,
                         double theta1, double theta2)
    : TrialSolution(dim_x, dim_y, dim_w),
      kind_(std::move(kind)),
      feature_y_(std::move(feature_y)),
      feature_z_(std::move(feature_z)) {
  add_block(1, 1, 0);
  add_block(1, 1, 1);
  blocks_[0](0, 0) = theta1;
  blocks_[1](0, 0) = theta2;
}

TrialOutput LinearTrial::evaluate(const Var& t, const Var& x, std::span<const Var> params) const {
  return {params[0] * feature_y_(t, x), params[1] * feature_z_(t, x)};
}

LinearTrial make_scheme1_trial(int d, double theta1, double theta2) {
  return LinearTrial(
      "linear-scheme1", d, 1, d, [](const Var&, const Var& x) { return ad::square_norm(x); },
      [](const Var&, const Var& x) { return x; }, theta1, theta2);
}

LinearTrial make_scheme2_trial(int d, double theta1, double theta2) {
  return LinearTrial(
      "linear-scheme2", d, 1, d, [](const Var&, const Var& x) { return ad::square(ad::square_norm(x)); },
      [](const Var&, const Var& x) { return ad::square_norm(x) * x; }, theta1, theta2);
}

namespace {
enum MlpBlock : int {
  kTimeW1, kTimeB1, kTimeW2, kTimeB2,
  kValueW1, kValueB1, kValueW2, kValueB2,
  kControlW1, kControlB1, kControlW2, kControlB2,
};
}  // namespace

MlpTrial::MlpTrial(const MlpDims& dims) : TrialSolution(dims.dim_x, dims.dim_y, dims.dim_w), dims_(dims) {
  const int in = dims.embed + dims.dim_x;
  add_block(1, dims.time_hidden, 0);
  add_block(1, dims.time_hidden, 0);
  add_block(dims.time_hidden, dims.embed, 0);
  add_block(1, dims.embed, 0);
  add_block(in, dims.value_hidden, 0);
  add_block(1, dims.value_hidden, 0);
  add_block(dims.value_hidden, dims.dim_y, 0);
  add_block(1, dims.dim_y, 0);
  add_block(in, dims.control_hidden, 0);
  add_block(1, dims.control_hidden, 0);
  add_block(dims.control_hidden, dims.dim_y * dims.dim_w, 0);
  add_block(1, dims.dim_y * dims.dim_w, 0);
}

TrialOutput MlpTrial::evaluate(const Var& t, const Var& x, std::span<const Var> p) const {
  using namespace ad;
  const Var embed = matmul(relu(matmul(t, p[kTimeW1]) + p[kTimeB1]), p[kTimeW2]) + p[kTimeB2];
  // [embed, x] * W1 computed as embed * W1_top + x * W1_bottom
  auto head = [&](int w1, int b1, int w2, int b2) {
    const Var top = slice_rows(p[w1], 0, dims_.embed);
    const Var bottom = slice_rows(p[w1], dims_.embed, dims_.dim_x);
    const Var hidden = relu(matmul(embed, top) + matmul(x, bottom) + p[b1]);
    return matmul(hidden, p[w2]) + p[b2];
  };
  return {head(kValueW1, kValueB1, kValueW2, kValueB2), head(kControlW1, kControlB1, kControlW2, kControlB2)};
}

void MlpTrial::reinitialize(const SeedSpec& seed) {
  // torch.nn.Linear default: weights and biases uniform in +-1/sqrt(fan_in)
  auto engine = stream_engine(seed, 0);
  const std::pair<int, int> layers[] = {{kTimeW1, kTimeB1}, {kTimeW2, kTimeB2}, {kValueW1, kValueB1},
                                        {kValueW2, kValueB2}, {kControlW1, kControlB1}, {kControlW2, kControlB2}};
  for (const auto& [w, b] : layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(blocks_[w].rows()));
    boost::random::uniform_real_distribution<double> u(-bound, bound);
    // fill row by row so the layout of theta does not affect the draw order
    for (int blk : {w, b})
      for (Index i = 0; i < blocks_[blk].rows(); ++i)
        for (Index j = 0; j < blocks_[blk].cols(); ++j) blocks_[blk](i, j) = u(engine);
  }
}

MlpTrial init_mlp(const MlpDims& dims, const SeedSpec& seed) {
  MlpTrial trial(dims);
  trial.reinitialize(seed);
  return trial;
}

namespace {
const TrialSolution& first_member(const std::vector<std::shared_ptr<const TrialSolution>>& m) {
  if (m.empty() || !m.front()) throw ConfigError("averaged trial needs at least one member");
  return *m.front();
}
}  // namespace

AveragedTrial::AveragedTrial(std::vector<std::shared_ptr<const TrialSolution>> members)
    : TrialSolution(first_member(members).dim_x(), first_member(members).dim_y(), first_member(members).dim_w()),
      members_(std::move(members)) {
  for (const auto& m : members_)
    if (!m || m->dim_x() != dim_x() || m->dim_y() != dim_y() || m->dim_w() != dim_w())
      throw ConfigError("averaged trial members differ in dimensions");
}

TrialOutput AveragedTrial::evaluate(const Var& t, const Var& x, std::span<const Var>) const {
  TrialOutput sum = members_.front()->evaluate(t, x);
  for (std::size_t k = 1; k < members_.size(); ++k) {
    const TrialOutput o = members_[k]->evaluate(t, x);
    sum.y = sum.y + o.y;
    sum.z = sum.z + o.z;
  }
  const double w = 1.0 / static_cast<double>(members_.size());
  return {sum.y * w, sum.z * w};
}

}  // namespace bml
