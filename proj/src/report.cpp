#include "gcnet/report.hpp"

#include <cmath>
#include <cstdio>

#include "gcnet/error.hpp"

namespace gcnet {

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

RunReport::RunReport(std::string command, uint64_t seed)
    : command_(std::move(command)), seed_(seed) {}

void RunReport::echo(std::string key, std::string value) {
  spec_.emplace_back(std::move(key), std::move(value));
}

void RunReport::result(std::string name, double value) {
  if (!std::isfinite(value)) throw NumericError("report: non-finite result '" + name + "'");
  results_.emplace_back(std::move(name), value);
}

void RunReport::note(std::string name, std::string text) {
  notes_.emplace_back(std::move(name), std::move(text));
}

const Check& RunReport::check(std::string name, double value, double threshold,
                              Comparison comparison) {
  if (!std::isfinite(value)) throw NumericError("report: non-finite check value '" + name + "'");
  Check c{std::move(name), value, threshold, comparison, false};
  c.pass = comparison == Comparison::at_most ? value <= threshold : value >= threshold;
  checks_.push_back(std::move(c));
  return checks_.back();
}

double RunReport::result_value(const std::string& name) const {
  for (const auto& [key, value] : results_) {
    if (key == name) return value;
  }
  throw std::out_of_range("report: no result named " + name);
}

bool RunReport::pass() const {
  for (const Check& c : checks_) {
    if (!c.pass) return false;
  }
  return true;
}

std::string RunReport::serialize() const {
  std::string out;
  auto line = [&](const std::string& key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  line("command", command_);
  line("seed", std::to_string(seed_));
  for (const auto& [k, v] : spec_) line("spec." + k, v);
  for (const auto& [k, v] : results_) line("result." + k, format_number(v));
  for (const auto& [k, v] : notes_) line("note." + k, v);
  for (const Check& c : checks_) {
    line("check." + c.name + ".value", format_number(c.value));
    line("check." + c.name + (c.comparison == Comparison::at_most ? ".max" : ".min"),
         format_number(c.threshold));
    line("check." + c.name + ".pass", c.pass ? "true" : "false");
  }
  line("pass", pass() ? "true" : "false");
  return out;
}

}  // namespace gcnet
