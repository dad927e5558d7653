// bml-fbsde: sweep | train | oracle-y0 | checks | error-paths

#include "bml/commands.hpp"
#include "bml/gradient.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  bml::tune_allocator();
  CLI::App app{"Monte-Carlo FBSDE solver minimizing the backward measurability loss"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> repeats;
  std::vector<std::string> sets;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "config file (key = value)");
    sub->add_option("--seed", seed, "master seed (overrides run.seed)");
    sub->add_option("--out", out, "output directory (overrides output.dir)");
    sub->add_option("--repeats", repeats, "independent runs (overrides optim.repeats)");
    sub->add_option("--set", sets, "extra key=value override, repeatable");
  };
  CLI::App* sweep = app.add_subcommand("sweep", "empirical BML over a theta grid");
  CLI::App* train = app.add_subcommand("train", "optimize a trial solution and log metrics");
  CLI::App* oracle = app.add_subcommand("oracle-y0", "Hopf-Cole reference value for the HJB problem");
  CLI::App* checks = app.add_subcommand("checks", "property suites at small scale");
  CLI::App* error_paths = app.add_subcommand("error-paths", "mean squared error paths of averaged trained runs");
  for (auto* s : {sweep, train, oracle, checks, error_paths}) add_common(s);

  CLI11_PARSE(app, argc, argv);

  try {
    bml::Config cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw bml::ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.set("run.seed", std::to_string(*seed));
    if (out) cfg.set("output.dir", *out);
    if (repeats) cfg.set("optim.repeats", std::to_string(*repeats));

    if (*sweep) return bml::cmd_sweep(cfg, std::cerr);
    if (*train) return bml::cmd_train(cfg, std::cerr);
    if (*oracle) return bml::cmd_oracle_y0(cfg, std::cerr);
    if (*checks) return bml::cmd_checks(cfg, std::cout);
    if (*error_paths) return bml::cmd_error_paths(cfg, std::cerr);
  } catch (const bml::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return bml::kExitConfig;
  } catch (const bml::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return bml::kExitConfig;
  } catch (const bml::BlowupError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return bml::kExitNumerical;
  } catch (const bml::GradientError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return bml::kExitNumerical;
  } catch (const bml::ResourceError& e) {
    std::cerr << "resource limit: " << e.what() << "\n";
    return bml::kExitConfig;
  }
  return bml::kExitOk;
}
