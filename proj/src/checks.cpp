#include "bml/checks.hpp"

#include "bml/gradient.hpp"
#include "bml/loss.hpp"
#include "bml/problems.hpp"
#include "bml/sim.hpp"
#include "bml/trial.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

namespace bml {

namespace {

struct Draw {
  Xoshiro256 engine;
  explicit Draw(const SeedSpec& seed) : engine(stream_engine(seed, 0)) {}
  int integer(int lo, int hi) { return boost::random::uniform_int_distribution<int>(lo, hi)(engine); }
  double uniform(double lo, double hi) { return boost::random::uniform_real_distribution<double>(lo, hi)(engine); }
  double normal() { return boost::random::normal_distribution<double>()(engine); }
};

// Tracks the worst value of a quantity that must stay <= tolerance.
struct Worst {
  double value = -std::numeric_limits<double>::infinity();
  std::string where;
  void see(double v, const std::string& w) {
    if (v > value || !std::isfinite(v)) {
      value = v;
      where = w;
    }
  }
  CheckResult result(const std::string& suite, const std::string& name, double tol) const {
    CheckResult r{suite, name, std::isfinite(value) && value <= tol, value, tol, where};
    return r;
  }
};

std::string label(const std::string& what, int k) { return what + " #" + std::to_string(k); }

ProcessPair scaled(const ProcessPair& p, double a) { return {p.grid, p.samples, p.Y * a, p.Z * a}; }

ProcessPair sum_pair(const ProcessPair& a, const ProcessPair& b) { return {a.grid, a.samples, a.Y + b.Y, a.Z + b.Z}; }

Eigen::MatrixXd piecewise(const TimeGrid& grid, Index samples, int cols, Draw& draw) {
  const int nodes = grid.intervals + 1;
  const int pieces = draw.integer(1, std::min(nodes, 6));
  std::vector<int> cuts{0};
  for (int k = 1; k < pieces; ++k) cuts.push_back(draw.integer(1, nodes - 1));
  std::sort(cuts.begin(), cuts.end());
  const double scale = draw.uniform(0.1, 3.0);
  Eigen::MatrixXd out(nodes * samples, cols);
  for (std::size_t k = 0; k < cuts.size(); ++k) {
    const int from = cuts[k];
    const int to = k + 1 < cuts.size() ? cuts[k + 1] : nodes;
    for (Index j = 0; j < samples; ++j)
      for (int c = 0; c < cols; ++c) {
        const double level = scale * draw.normal();
        for (int i = from; i < to; ++i) out(i * samples + j, c) = level;
      }
  }
  return out;
}

}  // namespace

ProcessPair random_pair(const TimeGrid& grid, Index samples, int dim_y, int dim_w, const SeedSpec& seed) {
  Draw draw(seed);
  Eigen::MatrixXd Y = piecewise(grid, samples, dim_y, draw);
  Eigen::MatrixXd Z = piecewise(grid, samples, dim_y * dim_w, draw);
  return make_pair(grid, samples, std::move(Y), std::move(Z));
}

std::vector<CheckResult> norm_suite(const SeedSpec& seed, int pairs, const NormSet& n) {
  const std::string suite = "norms";
  Draw draw(derive(seed, 1));
  Worst ordering, homogeneity, triangle, equivalence, fubini, mu_beta0;
  constexpr double kOrderSlack = 1e-9;

  for (int k = 0; k < pairs; ++k) {
    const double T = 1.0;
    const TimeGrid grid = make_grid(T, draw.integer(1, 64));
    const Index M = draw.integer(1, 64);
    const int m = draw.integer(1, 2);
    const int d = draw.integer(1, 3);
    const ProcessPair A = random_pair(grid, M, m, d, derive(seed, 1000 + 2 * k));
    const ProcessPair B = random_pair(grid, M, m, d, derive(seed, 1001 + 2 * k));
    const std::string at = label("pair", k);

    // ordering chain, each link as lhs - rhs
    const double mu = n.mu(A), fub = n.mu_fubini(A), sup = n.sup(A), std_ = n.standard(A);
    ordering.see(mu - n.beta(A, 0.5), at + ": mu <= beta(1/2)");
    ordering.see(n.beta(A, 0.0) - std::sqrt(T + 1.0) * sup, at + ": beta(0) <= sqrt(T+1) sup");
    ordering.see(sup - std_, at + ": sup <= standard");
    ordering.see(mu - fub, at + ": mu <= mu (double integral)");
    ordering.see(fub - std::sqrt(T) * sup, at + ": mu (double integral) <= sqrt(T) sup");

    using Norm = std::function<double(const ProcessPair&)>;
    const std::vector<std::pair<std::string, Norm>> all = {
        {"standard", n.standard},
        {"sup", n.sup},
        {"beta(1/2)", [&](const ProcessPair& p) { return n.beta(p, 0.5); }},
        {"beta(-1)", [&](const ProcessPair& p) { return n.beta(p, -1.0); }},
        {"mu", n.mu},
        {"mu (double integral)", n.mu_fubini},
        {"mu_beta(0.7)", [&](const ProcessPair& p) { return n.mu_beta(p, 0.7); }},
    };
    for (const auto& [name, norm] : all) {
      const double base = norm(A);
      for (double a : {-2.0, 0.5, 3.0})
        homogeneity.see(std::abs(norm(scaled(A, a)) - std::abs(a) * base) / std::max(1.0, std::abs(a) * base),
                        at + ": " + name);
      triangle.see(norm(sum_pair(A, B)) - norm(A) - norm(B), at + ": " + name);
    }

    const double beta = draw.uniform(-2.0, 2.0);
    const double b0 = n.beta(A, 0.0), bb = n.beta(A, beta), e = std::exp(std::abs(beta) * T);
    equivalence.see(std::max(b0 / e - bb, bb - e * b0), at);

    // fubini^2 - mu^2 = dt * E sum_{k<H} |Z_k|^2 dt, from the raw samples
    const int H = grid.intervals;
    const double z_energy = A.Z.topRows(H * M).squaredNorm() / static_cast<double>(M) * grid.dt;
    const double gap = fub * fub - mu * mu;
    fubini.see(std::abs(gap - grid.dt * z_energy) / std::max(1.0, fub * fub), at);

    mu_beta0.see(std::abs(n.mu_beta(A, 0.0) - mu), at);
  }
  return {
      ordering.result(suite, "ordering chain", kOrderSlack),
      homogeneity.result(suite, "homogeneity", 1e-12),
      triangle.result(suite, "triangle inequality", 1e-12),
      equivalence.result(suite, "beta-norm equivalence", 1e-12),
      fubini.result(suite, "Fubini identity", 1e-12),
      mu_beta0.result(suite, "mu_beta(0) = mu", 1e-12),
  };
}

std::vector<CheckResult> picard_suite(const SeedSpec& seed, int thetas, Index samples, int intervals) {
  const ToyBsdeSpec spec{3, 1.0};
  const FbsdeProblem p = toy_bsde(spec);
  const LinearTrial truth = toy_true_trial(spec);
  Draw draw(derive(seed, 2));
  const TimeGrid grid = make_grid(spec.T, intervals);
  PathBatch base = sample_brownian(grid, samples, spec.d, derive(seed, 3));
  simulate_forward(p, truth, base);

  Worst worst;
  for (int k = 0; k < thetas; ++k) {
    const double t1 = 1.0 / spec.d + draw.uniform(-1.0, 1.0);
    const double t2 = 2.0 / spec.d + draw.uniform(-1.0, 1.0);
    PathBatch b = base;
    simulate_forward(p, make_scheme1_trial(spec.d, t1, t2), b);
    compute_residuals(p, b);
    const LossEstimate bml = bml_fullgrid(b);
    const Eigen::ArrayXd mu = norm_mu_sq_per_path(difference(b, base));
    const double mu_mean = mu.mean();
    const double mu_se = std::sqrt((mu - mu_mean).square().sum() / std::max<Index>(1, samples - 1) / samples);
    const double lhs = spec.T * bml.value, se = spec.T * bml.std_error;
    const double allowed = 3.0 * std::hypot(se, mu_se) + 0.03 * mu_mean;
    std::ostringstream os;
    os << "theta=(" << t1 << ", " << t2 << "): T*BML=" << lhs << " mu^2=" << mu_mean;
    worst.see(std::abs(lhs - mu_mean) / allowed, os.str());
  }
  return {worst.result("picard", "T*BML vs squared mu-norm error (ratio to allowance)", 1.0)};
}

namespace {

struct GradientCase {
  std::string name;
  FbsdeProblem problem;
  std::unique_ptr<TrialSolution> trial;
};

std::vector<GradientCase> gradient_cases(const SeedSpec& seed) {
  Draw draw(derive(seed, 4));
  std::vector<GradientCase> cases;
  const ToyBsdeSpec toy{3, 1.0};
  const CoupledFbsdeSpec coupled{};
  const HjbSpec h{4, 1.0, 1.0, 0.0};
  // Zero biases put every t = 0 pre-activation exactly on the relu kink, so
  // the parameters are moved off the initial point first.
  auto mlp = [&](const FbsdeProblem& p, std::uint64_t tag) {
    auto t = std::make_unique<MlpTrial>(init_mlp(MlpDims{p.dim_x, p.dim_y, p.dim_w}, derive(seed, tag)));
    Eigen::VectorXd th = t->theta();
    for (Index k = 0; k < th.size(); ++k) th[k] += 0.1 * draw.normal();
    t->set_theta(th);
    return t;
  };
  cases.push_back({"toy/scheme1", toy_bsde(toy),
                   std::make_unique<LinearTrial>(make_scheme1_trial(3, draw.uniform(-1, 1), draw.uniform(-1, 1)))});
  cases.push_back({"toy/scheme2", toy_bsde(toy),
                   std::make_unique<LinearTrial>(make_scheme2_trial(3, draw.uniform(-1, 1), draw.uniform(-1, 1)))});
  cases.push_back({"toy/mlp", toy_bsde(toy), mlp(toy_bsde(toy), 40)});
  cases.push_back({"coupled/reference", coupled_fbsde(coupled),
                   std::make_unique<LinearTrial>(coupled_reference_trial(coupled, 1.0 + draw.uniform(-0.5, 0.5),
                                                                         0.3 + draw.uniform(-0.3, 0.3)))});
  cases.push_back({"coupled/mlp", coupled_fbsde(coupled), mlp(coupled_fbsde(coupled), 41)});
  cases.push_back({"hjb/scheme1", hjb(h),
                   std::make_unique<LinearTrial>(make_scheme1_trial(4, draw.uniform(-1, 1), draw.uniform(-1, 1)))});
  cases.push_back({"hjb/mlp", hjb(h), mlp(hjb(h), 42)});
  return cases;
}

}  // namespace

std::vector<CheckResult> gradient_suite(const SeedSpec& seed, int intervals, Index samples, int coords, double h,
                                        double tolerance) {
  std::vector<CheckResult> out;
  Draw draw(derive(seed, 5));
  for (auto& c : gradient_cases(seed)) {
    for (EstimatorKind kind : {EstimatorKind::full_grid, EstimatorKind::particle}) {
      const BatchSpec spec{make_grid(c.problem.horizon, intervals), samples, derive(seed, 6), 0};
      const LossAndGradient lg = loss_and_grad(c.problem, *c.trial, spec, kind);
      const Eigen::VectorXd theta = c.trial->theta();
      std::vector<Index> idx(static_cast<std::size_t>(theta.size()));
      std::iota(idx.begin(), idx.end(), Index{0});
      if (theta.size() > coords) {
        std::shuffle(idx.begin(), idx.end(), draw.engine);
        idx.resize(static_cast<std::size_t>(coords));
      }
      auto probe = c.trial->clone();
      Worst worst;
      const double floor = 1e-6 * std::max(1.0, std::abs(lg.loss.value));
      for (Index k : idx) {
        Eigen::VectorXd tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        probe->set_theta(tp);
        const double vp = estimate_loss(c.problem, *probe, spec, kind).value;
        probe->set_theta(tm);
        const double vm = estimate_loss(c.problem, *probe, spec, kind).value;
        const double fd = (vp - vm) / (2.0 * h);
        const double ad = lg.gradient[k];
        const double rel = std::abs(fd - ad) / std::max({std::abs(ad), std::abs(fd), floor});
        std::ostringstream os;
        os << "theta[" << k << "] tape=" << ad << " fd=" << fd;
        worst.see(rel, os.str());
      }
      out.push_back(worst.result("gradient", c.name + " " + to_string(kind) + " max relative error", tolerance));
    }
  }

  // theta1 of the coupled trial moves X through sigma0 * y
  const CoupledFbsdeSpec cs{};
  const FbsdeProblem p = coupled_fbsde(cs);
  PathBatch bp = sample_brownian(make_grid(cs.T, intervals), samples, cs.d, derive(seed, 7));
  PathBatch bm = bp;
  simulate_forward(p, coupled_reference_trial(cs, 1.0 + h, 0.3), bp);
  simulate_forward(p, coupled_reference_trial(cs, 1.0 - h, 0.3), bm);
  const double dxt = (bp.X.bottomRows(samples) - bm.X.bottomRows(samples)).cwiseAbs().mean() / (2.0 * h);
  CheckResult dep{"gradient", "coupled X_T depends on theta1 (mean |dX_T/dtheta1|)", dxt > 1e-6, dxt, 1e-6,
                  "finite difference of the forward Euler paths"};
  out.push_back(dep);
  return out;
}

std::vector<CheckResult> deep_bsde_suite(const SeedSpec& seed, int configs) {
  Draw draw(derive(seed, 8));
  Worst constant, normalized, literal;
  int literal_count = 0;
  for (int c = 0; c < configs; ++c) {
    const double T = c % 2 == 0 ? 1.0 : draw.uniform(0.25, 2.0);
    const int dim = draw.integer(1, 3);
    FbsdeProblem p;
    switch (c % 3) {
      case 0: p = toy_bsde({dim, T}); break;
      case 1: {
        CoupledFbsdeSpec s;
        s.d = dim;
        s.T = T;
        p = coupled_fbsde(s);
        break;
      }
      default: p = hjb({dim + 1, T, draw.uniform(0.5, 2.0), draw.uniform(-1.0, 1.0)}); break;
    }
    const int H = draw.integer(1, 50);
    const Index M = draw.integer(1, 32);
    const int zc = p.dim_y * p.dim_w;
    std::vector<Eigen::MatrixXd> A(static_cast<std::size_t>(H));
    std::vector<Eigen::RowVectorXd> b(static_cast<std::size_t>(H));
    for (int i = 0; i < H; ++i) {
      A[static_cast<std::size_t>(i)] = Eigen::MatrixXd::NullaryExpr(p.dim_x, zc, [&] { return 0.3 * draw.normal(); });
      b[static_cast<std::size_t>(i)] = Eigen::RowVectorXd::NullaryExpr(zc, [&] { return 0.3 * draw.normal(); });
    }
    const NodeControl controls = [&](int i, const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
      return (x * A[static_cast<std::size_t>(i)]).rowwise() + b[static_cast<std::size_t>(i)];
    };
    PathBatch batch = sample_brownian(make_grid(T, H), M, p.dim_w, derive(seed, 100 + c));
    deep_bsde_scheme_simulate(p, Eigen::VectorXd::Constant(1, draw.normal()), controls, batch);
    compute_residuals(p, batch);

    double spread = 0.0;
    for (int i = 0; i <= H; ++i)
      spread = std::max(spread, (batch.at(batch.R, i) - batch.at(batch.R, 0)).cwiseAbs().maxCoeff());
    const std::string at = label(p.name + " config", c);
    constant.see(spread, at);
    const double terminal = deep_bsde_loss(batch, p).value;
    const double full = bml_fullgrid(batch).value;
    normalized.see(std::abs(terminal - full), at);
    if (T == 1.0) {
      ++literal_count;
      literal.see(std::abs(terminal - T * full), at);
    }
  }
  return {
      constant.result("deep-bsde", "max_i |R_i - R_0| per path", 1e-10),
      normalized.result("deep-bsde", "|terminal loss - full-grid (1/T) BML|", 1e-10),
      literal.result("deep-bsde", "|terminal loss - T * full-grid| on " + std::to_string(literal_count) + " T=1 configs",
                     1e-10),
  };
}

namespace {

// A simple BSDE with a state-dependent running reward: f = cos(x_1) + t, g = sum sin x.
FbsdeProblem simple_reward_problem(int d, double T) {
  FbsdeProblem p = toy_bsde({d, T});
  p.name = "simple-reward";
  p.driver = [](const Var& t, const Var& x, const Var&, const Var&) {
    return ad::cos(ad::slice_cols(x, 0, 1)) + t;
  };
  p.terminal = [](const Var& x) { return ad::sum_cols(ad::sin(x)); };
  return p;
}

}  // namespace

std::vector<CheckResult> martingale_suite(const SeedSpec& seed, int instances) {
  Draw draw(derive(seed, 9));
  Worst worst;
  for (int k = 0; k < instances; ++k) {
    const int d = draw.integer(1, 3);
    const double T = draw.uniform(0.25, 2.0);
    const FbsdeProblem p = k % 2 == 0 ? toy_bsde({d, T}) : simple_reward_problem(d, T);
    PathBatch b = sample_brownian(make_grid(T, draw.integer(1, 100)), draw.integer(1, 64), d, derive(seed, 200 + k));
    simulate_forward(p, make_scheme1_trial(d, draw.uniform(-2.0, 2.0), 0.0), b);
    compute_residuals(p, b);
    const double ml = martingale_loss(b, p).value;
    const double full = bml_fullgrid(b).value;
    worst.see(std::abs(ml - 0.5 * T * full) / std::max(1.0, ml), label(p.name, k));
  }
  return {worst.result("martingale", "|ML - (T/2) full-grid| (relative)", 1e-12)};
}

std::vector<CheckResult> moment_suite(const SeedSpec& seed, Index samples) {
  const int d = 3;
  const TimeGrid grid = make_grid(1.0, 4);
  const PathBatch b = sample_brownian(grid, samples, d, derive(seed, 10));
  Worst worst;
  for (int node : {2, 4}) {
    const Eigen::ArrayXd r2 = b.at(b.W, node).rowwise().squaredNorm().array();
    for (int k = 1; k <= 4; ++k) {
      const Eigen::ArrayXd v = r2.pow(k);
      const double mean = v.mean();
      const double se = std::sqrt((v - mean).square().sum() / (samples - 1) / samples);
      const double exact = brownian_moment(d, k, grid.t(node));
      std::ostringstream os;
      os << "t=" << grid.t(node) << " k=" << k << ": " << mean << " vs " << exact;
      worst.see(std::abs(mean - exact) / se, os.str());
    }
  }
  return {worst.result("moments", "E|W_t|^{2k} deviation in standard errors", 5.0)};
}

std::vector<CheckResult> run_all_checks(const SeedSpec& seed) {
  std::vector<CheckResult> out;
  auto add = [&](std::vector<CheckResult> r) { out.insert(out.end(), r.begin(), r.end()); };
  add(norm_suite(seed));
  add(picard_suite(seed));
  add(gradient_suite(seed));
  add(deep_bsde_suite(seed));
  add(martingale_suite(seed));
  add(moment_suite(seed));
  return out;
}

}  // namespace bml
