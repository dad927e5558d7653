#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bml {

// Flat key = value settings with sectioned keys (problem.d, optim.lr, ...).
// Every known key has a default; files and overrides may only set known
// keys. Lines starting with '#' are comments; a "[section]" line prefixes the
// keys that follow it.
class Config {
 public:
  Config();

  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& source = "<text>");
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& str(const std::string& key) const;
  double num(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> list(const std::string& key) const;

  // Sorted "key = value" lines; identical settings give identical text.
  std::string canonical() const;
  // FNV-1a of the canonical lines outside output.*, as 16 hex digits.
  std::string hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// "lo:hi:n" gives n evenly spaced points (n = 1 gives lo); a plain number
// gives one point; a comma list gives those values.
std::vector<double> parse_range(const std::string& text);

double parse_double(const std::string& text, const std::string& what);
long long parse_integer(const std::string& text, const std::string& what);

}  // namespace bml
