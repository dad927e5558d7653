#include "bml/optim.hpp"

#include "bml/norms.hpp"
#include "bml/sim.hpp"

#include <chrono>
#include <cmath>

namespace bml {

namespace {

constexpr std::uint64_t kRunTag = 0x72756e73ULL;
constexpr std::uint64_t kEvalTag = 0x6576616cULL;
constexpr std::uint64_t kInitTag = 0x696e6974ULL;

}  // namespace

Eigen::VectorXd expand_learning_rates(const std::vector<int>& groups, const std::vector<double>& group_lr) {
  if (group_lr.empty()) throw ConfigError("no learning rate given");
  int n_groups = 0;
  for (int g : groups) n_groups = std::max(n_groups, g + 1);
  if (group_lr.size() != 1 && static_cast<int>(group_lr.size()) != n_groups)
    throw ConfigError("expected 1 or " + std::to_string(n_groups) + " learning rates, got " +
                      std::to_string(group_lr.size()));
  for (double lr : group_lr)
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rates must be positive");
  Eigen::VectorXd out(static_cast<Index>(groups.size()));
  for (std::size_t k = 0; k < groups.size(); ++k)
    out[static_cast<Index>(k)] = group_lr.size() == 1 ? group_lr[0] : group_lr[static_cast<std::size_t>(groups[k])];
  return out;
}

AdamState make_adam(const Eigen::VectorXd& lr) {
  AdamState s;
  s.lr = lr;
  s.m = Eigen::VectorXd::Zero(lr.size());
  s.v = Eigen::VectorXd::Zero(lr.size());
  return s;
}

namespace {

void check_step_args(const Eigen::VectorXd& lr, const Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  if (theta.size() != grad.size() || lr.size() != theta.size())
    throw std::invalid_argument("optimizer step: theta, gradient and learning rates differ in length");
  for (Index k = 0; k < grad.size(); ++k)
    if (!std::isfinite(grad[k])) throw GradientError(k);
}

}  // namespace

Eigen::VectorXd adam_step(AdamState& s, const Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  check_step_args(s.lr, theta, grad);
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  const Eigen::ArrayXd m_hat = s.m.array() / c1;
  const Eigen::ArrayXd v_hat = s.v.array() / c2;
  return (theta.array() - s.lr.array() * m_hat / (v_hat.sqrt() + s.epsilon)).matrix();
}

Eigen::VectorXd sgd_step(const Eigen::VectorXd& lr, const Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  check_step_args(lr, theta, grad);
  return (theta.array() - lr.array() * grad.array()).matrix();
}

int MetricLog::failures() const {
  int n = 0;
  for (const auto& r : runs) n += r.failed ? 1 : 0;
  return n;
}

SeedSpec run_seed(const SeedSpec& master, int run) {
  return derive(derive(master, kRunTag), static_cast<std::uint64_t>(run));
}

SeedSpec step_seed(const SeedSpec& run, int step) { return derive(run, static_cast<std::uint64_t>(step)); }

SeedSpec eval_seed(const SeedSpec& master) { return derive(master, kEvalTag); }

void validate(const TrainConfig& cfg, const TrialSolution& trial) {
  if (cfg.steps < 0) throw ConfigError("optim.steps must be nonnegative");
  if (cfg.samples < 1) throw ConfigError("optim.samples must be positive");
  if (cfg.intervals < 1) throw ConfigError("optim.intervals must be positive");
  if (cfg.eval_every < 1) throw ConfigError("optim.eval_every must be positive");
  if (cfg.repeats < 1) throw ConfigError("optim.repeats must be positive");
  if (cfg.first_run < 0) throw ConfigError("first run index must be nonnegative");
  if (cfg.eval_samples < 0 || cfg.eval_intervals < 0) throw ConfigError("evaluation sizes must be nonnegative");
  if (cfg.optimizer != "adam" && cfg.optimizer != "sgd")
    throw ConfigError("unknown optimizer '" + cfg.optimizer + "' (expected adam or sgd)");
  expand_learning_rates(trial.param_groups(), cfg.learning_rates);
}

namespace {

struct Evaluator {
  const FbsdeProblem& p;
  const TrainConfig& cfg;
  const TrainOracle& oracle;
  PathBatch truth;
  bool enabled = false;

  Evaluator(const FbsdeProblem& prob, const TrainConfig& c, const TrainOracle& o) : p(prob), cfg(c), oracle(o) {
    if (!oracle.truth || cfg.eval_samples == 0) return;
    const TimeGrid grid = make_grid(p.horizon, cfg.eval_intervals > 0 ? cfg.eval_intervals : cfg.intervals);
    truth = sample_brownian(grid, cfg.eval_samples, p.dim_w, eval_seed(cfg.seed));
    simulate_forward(p, *oracle.truth, truth);
    enabled = true;
  }

  void fill(const TrialSolution& trial, MetricRow& row) const {
    if (oracle.closed_form) row.closed_form = oracle.closed_form(trial.theta());
    if (!enabled) return;
    PathBatch b = truth;
    simulate_forward(p, trial, b);
    const ProcessPair diff = difference(b, truth);
    const auto sq = [](double v) { return v * v; };
    row.err_standard_sq = sq(norm_standard(diff));
    row.err_sup_sq = sq(norm_sup(diff));
    row.err_beta_sq = sq(norm_beta(diff, cfg.beta));
    row.err_mu_sq = sq(norm_mu(diff));
  }
};

RunResult train_one(const FbsdeProblem& p, const TrialSolution& prototype, const TrainConfig& cfg,
                    const Evaluator& eval, int run, std::vector<MetricRow>& rows) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const SeedSpec rs = run_seed(cfg.seed, run);
  auto trial = prototype.clone();
  trial->reinitialize(derive(rs, kInitTag));

  const Eigen::VectorXd lr = expand_learning_rates(trial->param_groups(), cfg.learning_rates);
  AdamState adam = make_adam(lr);
  BatchSpec spec{make_grid(p.horizon, cfg.intervals), cfg.samples, {}, cfg.chunk_paths};
  const Eigen::MatrixXd x0 = p.x0.transpose();

  RunResult result;
  result.run = run;
  MetricRow row;
  row.run = run;
  for (int step = 0; step <= cfg.steps; ++step) {
    row = MetricRow{};
    row.run = run;
    row.step = step;
    try {
      spec.seed = step_seed(rs, step);
      const bool log = step % cfg.eval_every == 0 || step == cfg.steps;
      LossAndGradient lg;
      if (step < cfg.steps)
        lg = loss_and_grad(p, *trial, spec, cfg.estimator);
      else
        lg.loss = estimate_loss(p, *trial, spec, cfg.estimator);
      if (log) {
        row.loss = lg.loss.value;
        row.loss_stderr = lg.loss.std_error;
        row.bml = lg.loss.value * p.horizon;
        if (trial->num_params() <= kThetaLogLimit) row.theta = trial->theta();
        row.y0_pred = trial->eval_y(0.0, x0)(0, 0);
        eval.fill(*trial, row);
        row.wall_time = std::chrono::duration<double>(clock::now() - start).count();
        rows.push_back(row);
      }
      if (step < cfg.steps) {
        const Eigen::VectorXd next = cfg.optimizer == "adam" ? adam_step(adam, trial->theta(), lg.gradient)
                                                             : sgd_step(lr, trial->theta(), lg.gradient);
        trial->set_theta(next);
      }
    } catch (const BlowupError& e) {
      result.failed = true;
      result.failure = e.what();
    } catch (const GradientError& e) {
      result.failed = true;
      result.failure = e.what();
    }
    if (result.failed) {
      row.status = "failed: " + result.failure;
      row.loss = row.loss_stderr = row.bml = std::nan("");
      row.wall_time = std::chrono::duration<double>(clock::now() - start).count();
      rows.push_back(row);
      break;
    }
  }
  result.final_theta = trial->theta();
  if (!result.failed) result.final_row = rows.back();
  return result;
}

}  // namespace

MetricLog train(const FbsdeProblem& p, const TrialSolution& trial, const TrainConfig& cfg,
                const TrainOracle& oracle) {
  validate_problem(p);
  validate(cfg, trial);
  const Evaluator eval(p, cfg, oracle);

  std::vector<std::vector<MetricRow>> rows(static_cast<std::size_t>(cfg.repeats));
  std::vector<RunResult> results(static_cast<std::size_t>(cfg.repeats));
  parallel_for(cfg.repeats, [&](Index r) {
    const auto k = static_cast<std::size_t>(r);
    results[k] = train_one(p, trial, cfg, eval, cfg.first_run + static_cast<int>(r), rows[k]);
  });

  MetricLog log;
  for (auto& r : rows) log.rows.insert(log.rows.end(), r.begin(), r.end());
  log.runs = std::move(results);
  return log;
}

}  // namespace bml
