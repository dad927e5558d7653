#include "bml/config.hpp"

#include "bml/core.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace bml {

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d = {
      {"run.seed", "1"},
      {"problem.name", "toy-bsde"},
      {"problem.d", "3"},
      {"problem.T", "1"},
      {"problem.A", "1"},
      {"problem.sigma0", "0.3"},
      {"problem.r", "0.1"},
      {"problem.lambda", "1"},
      {"problem.x0", "auto"},
      {"trial.kind", "linear-scheme1"},
      {"trial.theta1", "0"},
      {"trial.theta2", "0"},
      {"trial.embed", "4"},
      {"trial.time_hidden", "4"},
      {"trial.value_hidden", "32"},
      {"trial.control_hidden", "32"},
      {"optim.optimizer", "adam"},
      {"optim.estimator", "particle"},
      {"optim.samples", "1000"},
      {"optim.intervals", "1000"},
      {"optim.steps", "2000"},
      {"optim.lr", "1e-3"},
      {"optim.repeats", "1"},
      {"optim.eval_every", "10"},
      {"optim.eval_samples", "1000"},
      {"optim.eval_intervals", "0"},
      {"optim.beta", "0"},
      {"optim.chunk_paths", "0"},
      {"sweep.theta1", "auto"},
      {"sweep.theta2", "auto"},
      {"sweep.estimator", "full-grid"},
      {"sweep.samples", "100000"},
      {"sweep.intervals", "1000"},
      {"oracle.samples", "10000000"},
      {"oracle.theta2", "auto"},
      {"oracle.constant_g", "none"},
      {"error_paths.runs", "4"},
      {"error_paths.samples", "1000"},
      {"error_paths.intervals", "1000"},
      {"error_paths.from", ""},
      {"output.dir", "out"},
      {"output.wall_time", "false"},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(what + ": '" + text + "' is not a number");
  return v;
}

long long parse_integer(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec == std::errc() && ptr == t.data() + t.size() && !t.empty()) return v;
  // allow 1e5 style integers
  const double d = parse_double(t, what);
  if (d != static_cast<double>(static_cast<long long>(d))) throw ConfigError(what + ": '" + text + "' is not an integer");
  return static_cast<long long>(d);
}

std::vector<double> parse_range(const std::string& text) {
  const std::string t = trim(text);
  std::vector<double> out;
  if (t.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(t);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("range '" + text + "' must be lo:hi:n");
    const double lo = parse_double(parts[0], "range");
    const double hi = parse_double(parts[1], "range");
    const long long n = parse_integer(parts[2], "range");
    if (n < 1) throw ConfigError("range '" + text + "' needs at least one point");
    for (long long k = 0; k < n; ++k) out.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / (n - 1));
    return out;
  }
  std::stringstream ss(t);
  for (std::string p; std::getline(ss, p, ',');) out.push_back(parse_double(p, "list"));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

Config::Config() : values_(defaults()) {}

void Config::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

void Config::load_text(const std::string& text, const std::string& source) {
  std::stringstream in(text);
  std::string section;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      set(key, t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void Config::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  load_text(ss.str(), path);
}

const std::string& Config::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double Config::num(const std::string& key) const { return parse_double(str(key), key); }

long long Config::integer(const std::string& key) const { return parse_integer(str(key), key); }

std::uint64_t Config::u64(const std::string& key) const {
  const std::string& t = str(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": '" + t + "' is not an unsigned integer");
  return v;
}

bool Config::flag(const std::string& key) const {
  const std::string& t = str(key);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": '" + t + "' is not a boolean");
}

std::vector<double> Config::list(const std::string& key) const {
  try {
    return parse_range(str(key));
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string Config::hash() const {
  std::string text;
  for (const auto& [k, v] : values_)
    if (k.rfind("output.", 0) != 0) text += k + " = " + v + "\n";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace bml
