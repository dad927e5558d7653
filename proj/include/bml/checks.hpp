#pragma once

#include "bml/core.hpp"
#include "bml/norms.hpp"
#include "bml/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace bml {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  double metric = 0.0;     // worst observed value of the checked quantity
  double tolerance = 0.0;
  std::string detail;
};

// The norms under test; replaceable so a broken norm can be fed to the suite.
struct NormSet {
  std::function<double(const ProcessPair&)> standard = norm_standard;
  std::function<double(const ProcessPair&)> sup = norm_sup;
  std::function<double(const ProcessPair&, double)> beta = norm_beta;
  std::function<double(const ProcessPair&)> mu = norm_mu;
  std::function<double(const ProcessPair&)> mu_fubini = norm_mu_fubini;
  std::function<double(const ProcessPair&, double)> mu_beta = norm_mu_beta;
};

// Random piecewise-constant (in time) pair with Gaussian levels per path.
ProcessPair random_pair(const TimeGrid& grid, Index samples, int dim_y, int dim_w, const SeedSpec& seed);

std::vector<CheckResult> norm_suite(const SeedSpec& seed, int pairs = 100, const NormSet& norms = {});

// T * full-grid BML against the squared mu-norm distance to the exact
// solution on the toy BSDE, at random scheme-1 parameters.
std::vector<CheckResult> picard_suite(const SeedSpec& seed, int thetas = 4, Index samples = 20000, int intervals = 100);

// Central finite differences with common random numbers against the tape.
std::vector<CheckResult> gradient_suite(const SeedSpec& seed, int intervals = 10, Index samples = 8, int coords = 20,
                                        double h = 1e-5, double tolerance = 1e-4);

std::vector<CheckResult> deep_bsde_suite(const SeedSpec& seed, int configs = 100);

std::vector<CheckResult> martingale_suite(const SeedSpec& seed, int instances = 20);

std::vector<CheckResult> moment_suite(const SeedSpec& seed, Index samples = 20000);

std::vector<CheckResult> run_all_checks(const SeedSpec& seed);

}  // namespace bml
