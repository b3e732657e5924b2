#include "gcnet/attention_stats.hpp"

#include <algorithm>
#include <cmath>

#include "gcnet/forward.hpp"

namespace gcnet {

std::string to_string(Metric metric) { return metric == Metric::cosine ? "cosine" : "jsd"; }

std::string to_string(Family family) {
  switch (family) {
    case Family::input: return "input";
    case Family::output: return "output";
    case Family::att: return "att";
  }
  return "?";
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("cosine_distance: length mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (size_t k = 0; k < u.size(); ++k) {
    dot += u[k] * v[k];
    uu += u[k] * u[k];
    vv += v[k] * v[k];
  }
  if (uu == 0.0 || vv == 0.0) throw InvariantError("cosine_distance: zero vector");
  // sqrt(uu * vv) rather than sqrt(uu) * sqrt(vv): for u == v this is
  // exactly uu, so identical vectors give exactly 0.
  const double cos = std::clamp(dot / std::sqrt(uu * vv), -1.0, 1.0);
  return (1.0 - cos) / 2.0;
}

namespace {

void require_probability(std::span<const double> p, const char* which) {
  double total = 0.0;
  for (double e : p) {
    if (!(e >= 0.0)) throw InvariantError(std::string("jsd: negative entry in ") + which);
    total += e;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw InvariantError(std::string("jsd: ") + which + " does not sum to 1");
  }
}

double xlog_ratio(double a, double mix) { return a > 0.0 ? a * std::log(2.0 * a / mix) : 0.0; }

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("jsd: length mismatch");
  require_probability(p, "p");
  require_probability(q, "q");
  double acc = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    const double mix = p[k] + q[k];
    acc += xlog_ratio(p[k], mix) + xlog_ratio(q[k], mix);
  }
  return std::max(0.0, 0.5 * acc);
}

double avg_pairwise_distance(const std::vector<std::vector<double>>& vectors, Metric metric) {
  if (vectors.empty()) throw DimensionError("avg_pairwise_distance: no vectors");
  const size_t n = vectors.size();
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) {
      throw DimensionError("avg_pairwise_distance: vectors differ in length");
    }
  }
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      total += metric == Metric::cosine ? cosine_distance(vectors[i], vectors[j])
                                        : jsd(vectors[i], vectors[j]);
    }
  }
  return total / (static_cast<double>(n) * static_cast<double>(n));
}

std::vector<DistanceReport> analyze_block(const FeatureMap<double>& x, const BlockSpec& spec,
                                          const BlockParams<double>& params) {
  const BlockOutput<double> out = block_forward(x, spec, params);
  const int64_t np = x.positions();
  const std::string tag = spec.tag();

  // Under add fusion z_i - x_i is the broadcast term itself; taking it
  // directly avoids the rounding of (x_i + d) - x_i.
  const bool add_fusion = spec.kind != BlockKind::nl && pipeline_for(spec).fusion == Fusion::add;
  std::vector<std::vector<double>> inputs, outputs;
  for (int64_t i = 0; i < np; ++i) {
    inputs.push_back(x.column(i));
    if (add_fusion) {
      outputs.push_back(*out.fused);
      continue;
    }
    std::vector<double> added = out.z.column(i);
    const std::vector<double> xi = x.column(i);
    for (size_t k = 0; k < added.size(); ++k) added[k] -= xi[k];
    outputs.push_back(std::move(added));
  }

  std::vector<DistanceReport> reports;
  auto emit = [&](Metric m, Family f, std::optional<double> value, std::string note = {}) {
    reports.push_back(DistanceReport{m, f, value, np, tag, std::move(note)});
  };
  // A zero vector leaves cosine undefined; that family is reported without a value.
  auto emit_cosine = [&](Family f, const std::vector<std::vector<double>>& vs, std::string note) {
    try {
      emit(Metric::cosine, f, avg_pairwise_distance(vs, Metric::cosine), std::move(note));
    } catch (const InvariantError&) {
      emit(Metric::cosine, f, std::nullopt, "undefined: zero vector present");
    }
  };
  emit_cosine(Family::input, inputs, {});
  emit_cosine(Family::output, outputs, {});

  if (!out.attention) return reports;
  const AttentionMap<double>& att = *out.attention;
  std::vector<std::vector<double>> rows;
  std::string note;
  if (att.kind == AttentionKind::pairwise) {
    for (int64_t i = 0; i < att.rows; ++i) {
      const auto r = att.row(i);
      rows.emplace_back(r.begin(), r.end());
    }
  } else {
    // One map shared by every query position.
    const auto r = att.row(0);
    rows.assign(static_cast<size_t>(np), std::vector<double>(r.begin(), r.end()));
    note = "global attention shared by all positions";
  }
  emit_cosine(Family::att, rows, note);
  if (att.normalized) {
    emit(Metric::jsd, Family::att, avg_pairwise_distance(rows, Metric::jsd), note);
  } else {
    emit(Metric::jsd, Family::att, std::nullopt, "attention rows are not probability vectors");
  }
  return reports;
}

}  // namespace gcnet
