#include "bml/commands.hpp"

#include "bml/checks.hpp"
#include "bml/gradient.hpp"
#include "bml/sim.hpp"
#include "bml/sweep.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace bml {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSweepTag = 0x7377656570ULL;
constexpr std::uint64_t kOracleTag = 0x6f7261636c65ULL;
constexpr std::uint64_t kTrialTag = 0x747269616cULL;
constexpr std::uint64_t kErrorPathTag = 0x6572726f72ULL;

double x0_or(const Config& cfg, double fallback) {
  const std::string& s = cfg.str("problem.x0");
  return s == "auto" ? fallback : parse_double(s, "problem.x0");
}

int positive_int(const Config& cfg, const std::string& key) {
  const long long v = cfg.integer(key);
  if (v < 1 || v > std::numeric_limits<int>::max()) throw ConfigError(key + " must be a positive integer");
  return static_cast<int>(v);
}

Index positive_index(const Config& cfg, const std::string& key) {
  const long long v = cfg.integer(key);
  if (v < 1) throw ConfigError(key + " must be positive");
  return static_cast<Index>(v);
}

std::vector<double> theta_axis(const Config& cfg, const std::string& key, const std::optional<double>& star,
                               bool wide) {
  if (cfg.str(key) != "auto") return cfg.list(key);
  if (!star) throw ConfigError(key + " = auto needs a trial with a known minimizer; give explicit values");
  if (!wide) return {*star};
  return parse_range(format_number(*star - 1.0) + ":" + format_number(*star + 1.0) + ":21");
}

struct Output {
  fs::path dir;
  std::string hash;
  std::uint64_t seed;
  std::string command;
};

Output prepare_output(const Config& cfg, const std::string& command) {
  Output out{cfg.str("output.dir"), cfg.hash(), cfg.u64("run.seed"), command};
  std::error_code ec;
  fs::create_directories(out.dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out.dir.string() + "': " + ec.message());
  json j;
  j["command"] = command;
  j["config_hash"] = out.hash;
  j["master_seed"] = out.seed;
  j["config"] = cfg.values();
  std::ofstream(out.dir / "config.json") << j.dump(2) << "\n";
  return out;
}

std::ofstream open_csv(const Output& out, const std::string& name, const std::vector<std::string>& header) {
  std::ofstream f(out.dir / name);
  if (!f) throw ConfigError("cannot write " + (out.dir / name).string());
  f << "# config_hash=" << out.hash << " master_seed=" << out.seed << " command=" << out.command << "\n";
  for (std::size_t k = 0; k < header.size(); ++k) f << (k ? "," : "") << header[k];
  f << "\n";
  return f;
}

void write_row(std::ofstream& f, const std::vector<std::string>& cells) {
  for (std::size_t k = 0; k < cells.size(); ++k) f << (k ? "," : "") << cells[k];
  f << "\n";
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json number_or_null(const std::optional<double>& v) { return v ? number_or_null(*v) : json(nullptr); }

void write_json(const Output& out, const std::string& name, json j) {
  j["config_hash"] = out.hash;
  j["master_seed"] = out.seed;
  std::ofstream f(out.dir / name);
  if (!f) throw ConfigError("cannot write " + (out.dir / name).string());
  f << j.dump(2) << "\n";
}

// mean and standard error over finite values
struct Stat {
  double mean = std::nan("");
  double se = std::nan("");
  int n = 0;
};

Stat stat(const std::vector<double>& v) {
  Stat s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.n = static_cast<int>(v.size());
  if (s.n == 0) return s;
  s.mean = sum / s.n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.se = s.n > 1 ? std::sqrt(ss / (s.n - 1) / s.n) : 0.0;
  return s;
}

json stat_json(const std::vector<double>& v) {
  const Stat s = stat(v);
  return {{"mean", number_or_null(s.mean)}, {"std_error", number_or_null(s.se)},
          {"ci_low", number_or_null(s.mean - 3.0 * s.se)}, {"ci_high", number_or_null(s.mean + 3.0 * s.se)},
          {"runs", s.n}};
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

SeedSpec master_seed(const Config& cfg) { return SeedSpec{cfg.u64("run.seed"), 0}; }

Experiment build_experiment(const Config& cfg) {
  Experiment e;
  e.problem_name = cfg.str("problem.name");
  const int d = positive_int(cfg, "problem.d");
  const double T = cfg.num("problem.T");
  if (!(T > 0.0)) throw ConfigError("problem.T must be positive");
  const std::string kind = cfg.str("trial.kind");
  const double t1 = cfg.num("trial.theta1"), t2 = cfg.num("trial.theta2");

  if (e.problem_name == "toy-bsde") {
    if (x0_or(cfg, 0.0) != 0.0) throw ConfigError("toy-bsde starts at x0 = 0");
    e.toy = {d, T};
    e.problem = toy_bsde(e.toy);
    e.truth = std::make_unique<LinearTrial>(toy_true_trial(e.toy));
    e.y0_star = 0.0;
  } else if (e.problem_name == "coupled-fbsde") {
    e.coupled = {d, T, cfg.num("problem.A"), cfg.num("problem.sigma0"), cfg.num("problem.r"),
                 x0_or(cfg, CoupledFbsdeSpec{}.x0)};
    e.problem = coupled_fbsde(e.coupled);
    const std::string& o2 = cfg.str("oracle.theta2");
    const double theta2 = o2 == "auto" ? coupled_theta2_sigma0_a2(e.coupled) : parse_double(o2, "oracle.theta2");
    e.truth = std::make_unique<LinearTrial>(coupled_reference_trial(e.coupled, e.coupled.A, theta2));
    e.y0_star = std::exp(-e.coupled.r * T) * e.coupled.A * d * std::sin(e.coupled.x0);
  } else if (e.problem_name == "hjb") {
    e.hjb_spec = {d, T, cfg.num("problem.lambda"), x0_or(cfg, 0.0)};
    e.problem = hjb(e.hjb_spec);
  } else {
    throw ConfigError("unknown problem.name '" + e.problem_name + "' (expected toy-bsde, coupled-fbsde or hjb)");
  }

  const FbsdeProblem& p = e.problem;
  if (kind == "linear-scheme1" || kind == "linear-scheme2") {
    if (p.dim_x != p.dim_w) throw ConfigError(kind + " needs dim_x == dim_w");
    const bool one = kind == "linear-scheme1";
    e.trial = std::make_unique<LinearTrial>(one ? make_scheme1_trial(d, t1, t2) : make_scheme2_trial(d, t1, t2));
    if (e.problem_name == "toy-bsde") {
      if (one) {
        e.closed_form = [d, T](const Eigen::VectorXd& th) { return toy_bml_closed_form_scheme1(th[0], th[1], d, T); };
        e.theta_star = Eigen::Vector2d(1.0 / d, 2.0 / d);
      } else {
        e.closed_form = [d, T](const Eigen::VectorXd& th) { return toy_bml_closed_form_scheme2(th[0], th[1], d, T); };
        e.theta_star = Eigen::Vector2d(toy_scheme2_theta1_star(d, T), toy_scheme2_theta2_star(d, T));
      }
    }
  } else if (kind == "coupled-reference") {
    if (e.problem_name != "coupled-fbsde") throw ConfigError("trial.kind coupled-reference needs problem coupled-fbsde");
    e.trial = std::make_unique<LinearTrial>(coupled_reference_trial(e.coupled, t1, t2));
    const std::string& o2 = cfg.str("oracle.theta2");
    e.theta_star = Eigen::Vector2d(
        e.coupled.A, o2 == "auto" ? coupled_theta2_sigma0_a2(e.coupled) : parse_double(o2, "oracle.theta2"));
  } else if (kind == "mlp") {
    MlpDims dims{p.dim_x, p.dim_y, p.dim_w, positive_int(cfg, "trial.embed"), positive_int(cfg, "trial.time_hidden"),
                 positive_int(cfg, "trial.value_hidden"), positive_int(cfg, "trial.control_hidden")};
    e.trial = std::make_unique<MlpTrial>(init_mlp(dims, derive(master_seed(cfg), kTrialTag)));
  } else {
    throw ConfigError("unknown trial.kind '" + kind + "' (expected linear-scheme1, linear-scheme2, coupled-reference or mlp)");
  }
  validate_problem(e.problem);
  return e;
}

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  t.steps = static_cast<int>(cfg.integer("optim.steps"));
  t.samples = positive_index(cfg, "optim.samples");
  t.intervals = positive_int(cfg, "optim.intervals");
  t.learning_rates = cfg.list("optim.lr");
  t.optimizer = cfg.str("optim.optimizer");
  t.estimator = parse_estimator(cfg.str("optim.estimator"));
  t.seed = master_seed(cfg);
  t.eval_every = positive_int(cfg, "optim.eval_every");
  t.repeats = positive_int(cfg, "optim.repeats");
  t.eval_samples = static_cast<Index>(cfg.integer("optim.eval_samples"));
  t.eval_intervals = static_cast<int>(cfg.integer("optim.eval_intervals"));
  t.beta = cfg.num("optim.beta");
  t.chunk_paths = static_cast<Index>(cfg.integer("optim.chunk_paths"));
  return t;
}

int cmd_sweep(const Config& cfg, std::ostream& log) {
  const Experiment e = build_experiment(cfg);
  if (e.trial->num_params() != 2) throw ConfigError("sweep needs a two-parameter (linear) trial");
  const std::optional<double> s1 = e.theta_star ? std::optional<double>((*e.theta_star)[0]) : std::nullopt;
  const std::optional<double> s2 = e.theta_star ? std::optional<double>((*e.theta_star)[1]) : std::nullopt;
  const auto theta1 = theta_axis(cfg, "sweep.theta1", s1, true);
  const auto theta2 = theta_axis(cfg, "sweep.theta2", s2, false);
  const int H = positive_int(cfg, "sweep.intervals");
  const BatchSpec spec{make_grid(e.problem.horizon, H), positive_index(cfg, "sweep.samples"),
                       derive(master_seed(cfg), kSweepTag), static_cast<Index>(cfg.integer("optim.chunk_paths"))};
  const EstimatorKind kind = parse_estimator(cfg.str("sweep.estimator"));
  const Output out = prepare_output(cfg, "sweep");

  const auto points = sweep(e.problem, *e.trial, theta_grid(theta1, theta2), spec, kind);
  const double T = e.problem.horizon;
  auto f = open_csv(out, "sweep.csv",
                    {"theta1", "theta2", "bml_empirical", "bml_stderr", "bml_closed_form", "samples", "H", "seed",
                     "estimator", "status"});
  const SweepPoint* best = nullptr;
  for (const auto& pt : points) {
    std::optional<double> cf;
    if (e.closed_form) cf = e.closed_form(pt.theta);
    write_row(f, {format_number(pt.theta[0]), format_number(pt.theta[1]), format_number(T * pt.loss.value),
                  format_number(T * pt.loss.std_error), format_number(cf), std::to_string(spec.samples),
                  std::to_string(H), std::to_string(out.seed), to_string(kind), quoted(pt.status)});
    if (pt.status == "ok" && (!best || pt.loss.value < best->loss.value)) best = &pt;
  }
  log << "sweep: " << points.size() << " points written to " << (out.dir / "sweep.csv").string() << "\n";
  if (best)
    log << "empirical minimizer theta = (" << best->theta[0] << ", " << best->theta[1]
        << "), BML = " << T * best->loss.value << " +- " << 3.0 * T * best->loss.std_error << "\n";
  return kExitOk;
}

int cmd_train(const Config& cfg, std::ostream& log) {
  const Experiment e = build_experiment(cfg);
  const TrainConfig tc = train_config(cfg);
  validate(tc, *e.trial);
  const Output out = prepare_output(cfg, "train");

  std::optional<double> y0_star = e.y0_star;
  std::optional<double> y0_star_se;
  if (e.problem_name == "hjb" && cfg.integer("oracle.samples") > 0) {
    const OracleValue o = hopf_cole_y0(e.hjb_spec, positive_index(cfg, "oracle.samples"),
                                       derive(master_seed(cfg), kOracleTag));
    y0_star = o.value;
    y0_star_se = o.std_error;
    log << "Hopf-Cole Y0 = " << o.value << " +- " << 3.0 * o.std_error << " (" << o.samples << " samples)\n";
  }

  TrainOracle oracle;
  oracle.truth = e.truth.get();
  oracle.closed_form = e.closed_form;
  oracle.y0_star = y0_star;
  const auto start = std::chrono::steady_clock::now();
  const MetricLog mlog = train(e.problem, *e.trial, tc, oracle);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const bool wall = cfg.flag("output.wall_time");
  const Index n_theta = e.trial->num_params() <= kThetaLogLimit ? e.trial->num_params() : 0;
  const bool errs = e.truth && tc.eval_samples > 0;
  std::vector<std::string> header{"run", "step", "loss", "loss_stderr", "bml"};
  for (Index k = 0; k < n_theta; ++k) header.push_back("theta" + std::to_string(k + 1));
  if (errs) header.insert(header.end(), {"err_standard_sq", "err_sup_sq", "err_beta_sq", "err_mu_sq"});
  header.push_back("y0_pred");
  if (e.closed_form) header.push_back("bml_closed_form");
  if (wall) header.push_back("wall_time");
  header.push_back("status");

  auto f = open_csv(out, "train.csv", header);
  for (const auto& r : mlog.rows) {
    std::vector<std::string> cells{std::to_string(r.run), std::to_string(r.step), format_number(r.loss),
                                   format_number(r.loss_stderr), format_number(r.bml)};
    for (Index k = 0; k < n_theta; ++k) cells.push_back(k < r.theta.size() ? format_number(r.theta[k]) : "");
    if (errs)
      for (const auto& v : {r.err_standard_sq, r.err_sup_sq, r.err_beta_sq, r.err_mu_sq}) cells.push_back(format_number(v));
    cells.push_back(format_number(r.y0_pred));
    if (e.closed_form) cells.push_back(format_number(r.closed_form));
    if (wall) cells.push_back(format_number(r.wall_time));
    cells.push_back(quoted(r.status));
    write_row(f, cells);
  }

  json runs = json::array();
  std::vector<double> bml, loss, y0, rel, cf;
  std::vector<std::vector<double>> theta(static_cast<std::size_t>(n_theta));
  std::map<std::string, std::vector<double>> err;
  for (const auto& run : mlog.runs) {
    json j{{"run", run.run}, {"status", run.failed ? "failed: " + run.failure : "ok"}};
    j["theta"] = std::vector<double>(run.final_theta.data(), run.final_theta.data() + run.final_theta.size());
    if (run.final_row) {
      const MetricRow& r = *run.final_row;
      j["final_loss"] = number_or_null(r.loss);
      j["final_loss_stderr"] = number_or_null(r.loss_stderr);
      j["final_bml"] = number_or_null(r.bml);
      j["y0_pred"] = number_or_null(r.y0_pred);
      bml.push_back(r.bml);
      loss.push_back(r.loss);
      y0.push_back(r.y0_pred);
      if (y0_star && *y0_star != 0.0) {
        rel.push_back(std::abs(r.y0_pred - *y0_star) / std::abs(*y0_star));
        j["rel_error"] = rel.back();
      }
      if (r.closed_form) {
        cf.push_back(*r.closed_form);
        j["bml_closed_form"] = *r.closed_form;
      }
      for (Index k = 0; k < n_theta; ++k) theta[static_cast<std::size_t>(k)].push_back(r.theta[k]);
      const std::pair<const char*, std::optional<double>> named[] = {
          {"err_standard_sq", r.err_standard_sq}, {"err_sup_sq", r.err_sup_sq},
          {"err_beta_sq", r.err_beta_sq}, {"err_mu_sq", r.err_mu_sq}};
      for (const auto& [name, v] : named)
        if (v) {
          j[name] = *v;
          err[name].push_back(*v);
        }
    }
    runs.push_back(j);
  }

  json s;
  s["problem"] = e.problem_name;
  s["trial"] = e.trial->kind();
  s["estimator"] = to_string(tc.estimator);
  s["loss_convention"] = "loss = (1/T) BML estimate, bml = T * loss";
  s["steps"] = tc.steps;
  s["runs"] = runs;
  s["failed_runs"] = mlog.failures();
  s["summary"]["final_bml"] = stat_json(bml);
  s["summary"]["final_loss"] = stat_json(loss);
  s["summary"]["y0_pred"] = stat_json(y0);
  for (Index k = 0; k < n_theta; ++k)
    s["summary"]["theta" + std::to_string(k + 1)] = stat_json(theta[static_cast<std::size_t>(k)]);
  for (const auto& [name, v] : err) s["summary"][name] = stat_json(v);
  if (!cf.empty()) s["summary"]["bml_closed_form"] = stat_json(cf);
  // table-style headline fields
  s["final_bml"] = number_or_null(stat(bml).mean);
  s["y0_pred"] = number_or_null(stat(y0).mean);
  s["y0_star"] = number_or_null(y0_star);
  s["y0_star_stderr"] = number_or_null(y0_star_se);
  s["rel_error"] = number_or_null(rel.empty() ? std::nan("") : stat(rel).mean);
  s["rel_error_of_mean"] = number_or_null(y0_star && *y0_star != 0.0 && !y0.empty()
                                              ? std::abs(stat(y0).mean - *y0_star) / std::abs(*y0_star)
                                              : std::nan(""));
  write_json(out, "summary.json", s);

  log << "train: " << mlog.runs.size() << " runs (" << mlog.failures() << " failed) in " << std::fixed
      << std::setprecision(1) << seconds << " s; mean final BML " << std::setprecision(6) << stat(bml).mean << "\n";
  return mlog.failures() == static_cast<int>(mlog.runs.size()) ? kExitNumerical : kExitOk;
}

int cmd_oracle_y0(const Config& cfg, std::ostream& log) {
  if (cfg.str("problem.name") != "hjb") throw ConfigError("oracle-y0 needs problem.name = hjb");
  const Experiment e = build_experiment(cfg);
  const std::string& cg = cfg.str("oracle.constant_g");
  std::optional<double> constant;
  if (cg != "none") constant = parse_double(cg, "oracle.constant_g");
  const Index samples = positive_index(cfg, "oracle.samples");
  const Output out = prepare_output(cfg, "oracle-y0");
  const OracleValue o = hopf_cole_y0(e.hjb_spec, samples, derive(master_seed(cfg), kOracleTag), constant);
  json j{{"value", o.value}, {"std_error", o.std_error}, {"samples", o.samples}, {"n", e.hjb_spec.n},
         {"lambda", e.hjb_spec.lambda}, {"T", e.hjb_spec.T}, {"x0", e.hjb_spec.x0},
         {"constant_g", number_or_null(constant)}};
  write_json(out, "oracle_y0.json", j);
  log << "Y0 = " << format_number(o.value) << " +- " << format_number(3.0 * o.std_error) << " (3 SE, " << samples
      << " samples)\n";
  return kExitOk;
}

int cmd_checks(const Config& cfg, std::ostream& log) {
  const auto results = run_all_checks(master_seed(cfg));
  int failed = 0;
  for (const auto& r : results) {
    failed += r.passed ? 0 : 1;
    log << (r.passed ? "PASS " : "FAIL ") << r.suite << ": " << r.name << "  worst=" << format_number(r.metric)
        << " tol=" << format_number(r.tolerance);
    if (!r.detail.empty()) log << "  [" << r.detail << "]";
    log << "\n";
  }
  log << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed ? kExitCheckFailed : kExitOk;
}

int cmd_error_paths(const Config& cfg, std::ostream& log) {
  const Experiment e = build_experiment(cfg);
  if (e.problem_name != "coupled-fbsde" || !e.truth) throw ConfigError("error-paths needs problem.name = coupled-fbsde");

  std::vector<Eigen::VectorXd> thetas;
  const std::string& from = cfg.str("error_paths.from");
  if (!from.empty()) {
    std::ifstream in(from);
    if (!in) throw ConfigError("cannot read '" + from + "'");
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("runs")) throw ConfigError("'" + from + "' is not a train summary");
    for (const auto& r : j["runs"]) {
      if (r.value("status", "") != "ok") continue;
      const auto v = r["theta"].get<std::vector<double>>();
      thetas.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size())));
    }
  } else {
    TrainConfig tc = train_config(cfg);
    tc.repeats = positive_int(cfg, "error_paths.runs");
    const MetricLog mlog = train(e.problem, *e.trial, tc, {});
    for (const auto& r : mlog.runs)
      if (!r.failed) thetas.push_back(r.final_theta);
    log << "trained " << mlog.runs.size() << " runs, " << mlog.failures() << " failed\n";
  }
  if (thetas.empty()) throw BlowupError(0, "no usable trained runs for error paths");

  std::vector<std::shared_ptr<const TrialSolution>> members;
  for (const auto& th : thetas) {
    std::shared_ptr<TrialSolution> m = e.trial->clone();
    m->set_theta(th);
    members.push_back(std::move(m));
  }
  const AveragedTrial avg(members);
  const int H = positive_int(cfg, "error_paths.intervals");
  const Index M = positive_index(cfg, "error_paths.samples");
  const Output out = prepare_output(cfg, "error-paths");

  PathBatch truth = sample_brownian(make_grid(e.problem.horizon, H), M, e.problem.dim_w,
                                    derive(master_seed(cfg), kErrorPathTag));
  PathBatch trial = truth;
  simulate_forward(e.problem, *e.truth, truth);
  simulate_forward(e.problem, avg, trial);

  auto f = open_csv(out, "error_paths.csv", {"t", "mse_y", "mse_z", "runs_averaged"});
  for (int i = 0; i <= H; ++i) {
    const double mse_y = (trial.at(trial.y, i) - truth.at(truth.y, i)).rowwise().squaredNorm().mean();
    const double mse_z = (trial.at(trial.z, i) - truth.at(truth.z, i)).rowwise().squaredNorm().mean();
    write_row(f, {format_number(truth.grid.t(i)), format_number(mse_y), format_number(mse_z),
                  std::to_string(members.size())});
  }
  log << "error paths for the average of " << members.size() << " runs written to "
      << (out.dir / "error_paths.csv").string() << "\n";
  return kExitOk;
}

}  // namespace bml
