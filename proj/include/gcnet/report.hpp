#pragma once

// Machine-readable run reports: one "key = value" line per entry, in
// insertion order, no timestamps. Numbers use 17 significant digits.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gcnet {

enum class Comparison { at_most, at_least };

struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  Comparison comparison = Comparison::at_most;
  bool pass = false;
};

class RunReport {
 public:
  RunReport(std::string command, uint64_t seed);

  void echo(std::string key, std::string value);
  // Throws NumericError for non-finite values.
  void result(std::string name, double value);
  void note(std::string name, std::string text);
  // pass is computed here from value and threshold.
  const Check& check(std::string name, double value, double threshold,
                     Comparison comparison = Comparison::at_most);

  const std::string& command() const { return command_; }
  const std::vector<Check>& checks() const { return checks_; }
  const std::vector<std::pair<std::string, double>>& results() const { return results_; }
  double result_value(const std::string& name) const;
  bool pass() const;

  std::string serialize() const;

 private:
  std::string command_;
  uint64_t seed_;
  std::vector<std::pair<std::string, std::string>> spec_;
  std::vector<std::pair<std::string, double>> results_;
  std::vector<std::pair<std::string, std::string>> notes_;
  std::vector<Check> checks_;
};

std::string format_number(double value);

}  // namespace gcnet
