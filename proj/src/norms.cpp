#include "bml/norms.hpp"

#include <cmath>

namespace bml {

namespace {

// |Y|^2 and |Z|^2 per (node, path), as (H+1) x M matrices.
struct Squares {
  Eigen::ArrayXXd y;
  Eigen::ArrayXXd z;
};

Squares squares(const ProcessPair& pp) {
  const Index M = pp.samples;
  const Index nodes = pp.grid.intervals + 1;
  if (M < 1 || pp.Y.rows() != nodes * M || pp.Z.rows() != nodes * M)
    throw ConfigError("process pair: arrays do not match grid and sample count");
  Squares s;
  s.y = pp.Y.rowwise().squaredNorm().reshaped(M, nodes).transpose().array();
  s.z = pp.Z.rowwise().squaredNorm().reshaped(M, nodes).transpose().array();
  return s;
}

}  // namespace

ProcessPair make_pair(const TimeGrid& grid, Index samples, Eigen::MatrixXd Y, Eigen::MatrixXd Z) {
  ProcessPair pp{grid, samples, std::move(Y), std::move(Z)};
  squares(pp);  // shape check
  return pp;
}

ProcessPair difference(const PathBatch& trial, const PathBatch& truth) {
  if (trial.samples != truth.samples || trial.intervals() != truth.intervals())
    throw ConfigError("difference: batches have different shapes");
  return make_pair(trial.grid, trial.samples, trial.y - truth.y, trial.z - truth.z);
}

double norm_standard(const ProcessPair& pp) {
  const Squares s = squares(pp);
  const int H = pp.grid.intervals;
  const double sup_y = s.y.colwise().maxCoeff().mean();
  const double int_z = s.z.topRows(H).colwise().sum().mean() * pp.grid.dt;
  return std::sqrt(sup_y + int_z);
}

double norm_sup(const ProcessPair& pp) {
  const Squares s = squares(pp);
  const int H = pp.grid.intervals;
  const Eigen::ArrayXd ey = s.y.rowwise().mean();
  const Eigen::ArrayXd ez = s.z.rowwise().mean() * pp.grid.dt;
  double tail = 0.0;
  double best = ey[H];
  for (int i = H - 1; i >= 0; --i) {
    tail += ez[i];
    best = std::max(best, ey[i] + tail);
  }
  return std::sqrt(best);
}

double norm_beta(const ProcessPair& pp, double beta) {
  const Squares s = squares(pp);
  const int H = pp.grid.intervals;
  const Eigen::ArrayXd w = (2.0 * beta * pp.grid.nodes.head(H).array()).exp();
  const Eigen::ArrayXd e = (s.y.topRows(H) + s.z.topRows(H)).rowwise().mean();
  return std::sqrt((w * e).sum() * pp.grid.dt);
}

double norm_mu(const ProcessPair& pp) { return norm_mu_beta(pp, 0.0); }

double norm_mu_fubini(const ProcessPair& pp) {
  const Squares s = squares(pp);
  const int H = pp.grid.intervals;
  const double dt = pp.grid.dt;
  const Eigen::ArrayXd ey = s.y.rowwise().mean();
  const Eigen::ArrayXd ez = s.z.rowwise().mean();
  double total = 0.0;
  for (int i = 0; i < H; ++i) {
    double inner = 0.0;
    for (int k = i; k < H; ++k) inner += ez[k] * dt;
    total += (ey[i] + inner) * dt;
  }
  return std::sqrt(total);
}

double norm_mu_beta(const ProcessPair& pp, double beta) {
  const Squares s = squares(pp);
  const int H = pp.grid.intervals;
  const Eigen::ArrayXd t = pp.grid.nodes.head(H).array();
  const Eigen::ArrayXd w = (2.0 * beta * t).exp();
  const Eigen::ArrayXd e = s.y.topRows(H).rowwise().mean() + t * s.z.topRows(H).rowwise().mean();
  return std::sqrt((w * e).sum() * pp.grid.dt);
}

Eigen::ArrayXd norm_mu_sq_per_path(const ProcessPair& pp) {
  const Squares s = squares(pp);
  const int H = pp.grid.intervals;
  const Eigen::ArrayXd t = pp.grid.nodes.head(H).array();
  const Eigen::ArrayXXd terms = s.y.topRows(H) + s.z.topRows(H).colwise() * t;
  return terms.colwise().sum().transpose() * pp.grid.dt;
}

}  // namespace bml
