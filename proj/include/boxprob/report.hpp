#pragma once

// Batch evaluation of samples with one or more methods, agreement metrics
// between methods, and JSON / CSV rendering of the resulting run report.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "boxprob/box.hpp"
#include "boxprob/io.hpp"
#include "boxprob/mc_oracle.hpp"
#include "boxprob/model.hpp"
#include "boxprob/parallel.hpp"
#include "boxprob/robustness.hpp"

namespace boxprob {

enum class MethodKind { full, pruned, mc };

struct Method {
  MethodKind kind = MethodKind::full;
  double prune_level = 0.99;
  std::uint64_t mc_samples = 1'000'000;

  /// "full", "pruned:0.99", "mc:1000000".
  std::string name() const {
    switch (kind) {
      case MethodKind::full: return "full";
      case MethodKind::pruned: return "pruned:" + nlohmann::json(prune_level).dump();
      case MethodKind::mc: return "mc:" + std::to_string(mc_samples);
    }
    return "?";
  }
};

/// Parses "full", "pruned[:level]" or "mc[:n]"; missing parameters take the
/// given defaults.
inline Method parse_method(std::string_view text, double default_level = 0.99,
                           std::uint64_t default_mc = 1'000'000) {
  const auto colon = text.find(':');
  const auto head = text.substr(0, colon);
  const std::optional<std::string_view> arg =
      colon == std::string_view::npos ? std::nullopt : std::optional(text.substr(colon + 1));
  Method m;
  m.prune_level = default_level;
  m.mc_samples = default_mc;
  if (head == "full" && !arg) {
    m.kind = MethodKind::full;
  } else if (head == "pruned") {
    m.kind = MethodKind::pruned;
    if (arg) {
      const auto v = detail::parse_double(*arg);
      if (!v) throw InvalidArgument("method \"" + std::string(text) + "\": bad prune level");
      m.prune_level = *v;
    }
    prune_error_bound(m.prune_level);
  } else if (head == "mc") {
    m.kind = MethodKind::mc;
    if (arg) {
      std::uint64_t n = 0;
      const auto [end, ec] = std::from_chars(arg->data(), arg->data() + arg->size(), n);
      if (ec != std::errc() || end != arg->data() + arg->size() || n == 0) {
        throw InvalidArgument("method \"" + std::string(text) + "\": bad sample count");
      }
      m.mc_samples = n;
    }
  } else {
    throw InvalidArgument("unknown method \"" + std::string(text) + "\" (expected full, pruned:<level> or mc:<n>)");
  }
  return m;
}

struct RunOptions {
  std::uint64_t seed = 0;
  IntegratorConfig integrator;
  std::uint64_t max_boxes = 10'000'000;
  std::size_t threads = 1;
  bool verbose = false;
  /// Use the product formula when the uncertainty is independent.
  bool fast_path = true;
  bool timings = false;
};

struct MethodResult {
  std::string method;
  std::optional<std::string> error;
  ClassLabel label = 0;
  double robustness = 0.0;
  std::uint64_t boxes_enumerated = 0;
  std::uint64_t boxes_matching = 0;
  double integration_err = 0.0;
  double prune_error_bound = 0.0;
  std::uint64_t unconverged_boxes = 0;
  bool exact = false;
  /// Monte-Carlo only.
  std::optional<double> std_error;
  std::vector<BoxMass> box_masses;
  double wall_time_ms = 0.0;
};

struct SampleResult {
  std::size_t sample_id = 0;
  std::size_t line = 0;
  std::vector<MethodResult> results;
};

struct Agreement {
  std::string a;
  std::string b;
  std::size_t n = 0;
  double r_squared = 0.0;
  double max_abs_diff = 0.0;
};

struct PruningCheck {
  std::string method;
  double bound = 0.0;
  std::vector<std::size_t> violations;
};

struct RunReport {
  std::vector<std::string> methods;
  std::vector<SampleResult> samples;
  std::vector<Agreement> agreement;
  std::vector<PruningCheck> pruning_checks;
  std::size_t failures = 0;
};

/// 1 - sum (y - x)^2 / sum (y - mean y)^2: agreement of y with x along the
/// identity line. A constant y gives 1 when y == x everywhere, else 0.
inline double r_squared(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("r_squared: vectors differ in length");
  if (x.empty()) return 1.0;
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ss_res += (y[i] - x[i]) * (y[i] - x[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

inline double max_abs_diff(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("max_abs_diff: vectors differ in length");
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

/// One method on one sample; errors are captured in the result.
inline MethodResult run_method(const Model& model, const ThresholdSets& ts, const std::vector<double>& sample,
                               const UncertaintySpec& spec, const Method& method, std::size_t sample_id,
                               const RunOptions& opt, std::size_t threads) {
  MethodResult r;
  r.method = method.name();
  const auto started = std::chrono::steady_clock::now();
  try {
    if (sample.size() != model.n_features) {
      throw DimensionError("sample has " + std::to_string(sample.size()) + " coordinates, model expects " +
                           std::to_string(model.n_features));
    }
    Query q{sample, resolve_uncertainty(spec, sample), std::nullopt, opt.integrator, {}};
    q.integrator.seed = opt.seed;
    q.engine.threads = threads;
    q.engine.max_boxes = opt.max_boxes;
    q.engine.verbose = opt.verbose;
    if (method.kind == MethodKind::mc) {
      const McEstimate est = mc_robustness(model, q, method.mc_samples, mix64(opt.seed ^ mix64(sample_id)));
      r.label = classify(model, sample);
      r.robustness = est.robustness_hat;
      r.std_error = est.std_error;
    } else {
      if (method.kind == MethodKind::pruned) q.prune_level = method.prune_level;
      const RobustnessReport rep = opt.fast_path && is_independent(q.uncertainty)
                                       ? compute_robustness_independent(model, ts, q)
                                       : compute_robustness(model, ts, q);
      r.label = rep.label;
      r.robustness = rep.robustness;
      r.boxes_enumerated = rep.boxes_enumerated;
      r.boxes_matching = rep.boxes_matching;
      r.integration_err = rep.integration_err;
      r.prune_error_bound = rep.prune_error_bound;
      r.unconverged_boxes = rep.unconverged_boxes;
      r.exact = rep.exact;
      r.box_masses = rep.box_masses;
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return r;
}

/// Evaluates every sample with every method. Samples run concurrently when
/// there are at least as many samples as threads; otherwise each sample's
/// boxes are spread over the threads. Either way the numbers are identical.
inline RunReport run_batch(const Model& model, const std::vector<SampleRow>& rows,
                           const std::vector<UncertaintySpec>& uncertainty, const std::vector<Method>& methods,
                           const RunOptions& opt) {
  if (uncertainty.size() != 1 && uncertainty.size() != rows.size()) {
    throw DimensionError("uncertainty document has " + std::to_string(uncertainty.size()) + " entries for " +
                         std::to_string(rows.size()) + " samples (expected 1 or one per sample)");
  }
  const ThresholdSets ts = build_threshold_sets(model);
  RunReport report;
  for (const auto& m : methods) report.methods.push_back(m.name());
  report.samples.resize(rows.size());
  const std::size_t threads = std::max<std::size_t>(1, opt.threads);
  const bool per_sample = rows.size() >= threads;
  parallel_for(rows.size(), per_sample ? threads : 1, [&](std::size_t i) {
    SampleResult& s = report.samples[i];
    s.sample_id = i;
    s.line = rows[i].line;
    const UncertaintySpec& spec = uncertainty.size() == 1 ? uncertainty[0] : uncertainty[i];
    for (const auto& m : methods) {
      if (rows[i].error) {
        MethodResult r;
        r.method = m.name();
        r.error = *rows[i].error;
        s.results.push_back(std::move(r));
      } else {
        s.results.push_back(run_method(model, ts, rows[i].values, spec, m, i, opt, per_sample ? 1 : threads));
      }
    }
  });

  for (const auto& s : report.samples) {
    for (const auto& r : s.results) report.failures += r.error ? 1 : 0;
  }
  // Agreement over samples where both methods succeeded.
  for (std::size_t a = 0; a < methods.size(); ++a) {
    for (std::size_t b = a + 1; b < methods.size(); ++b) {
      std::vector<double> x;
      std::vector<double> y;
      for (const auto& s : report.samples) {
        if (s.results[a].error || s.results[b].error) continue;
        x.push_back(s.results[a].robustness);
        y.push_back(s.results[b].robustness);
      }
      report.agreement.push_back({report.methods[a], report.methods[b], x.size(), r_squared(x, y), max_abs_diff(x, y)});
    }
  }
  // full - pruned must lie in [0, 1 - level].
  const auto full = std::find_if(methods.begin(), methods.end(), [](const Method& m) { return m.kind == MethodKind::full; });
  if (full != methods.end()) {
    const auto fi = static_cast<std::size_t>(full - methods.begin());
    for (std::size_t p = 0; p < methods.size(); ++p) {
      if (methods[p].kind != MethodKind::pruned) continue;
      PruningCheck check{report.methods[p], 1.0 - methods[p].prune_level, {}};
      for (const auto& s : report.samples) {
        if (s.results[fi].error || s.results[p].error) continue;
        const double d = s.results[fi].robustness - s.results[p].robustness;
        if (d < 0.0 || d > check.bound) check.violations.push_back(s.sample_id);
      }
      report.pruning_checks.push_back(std::move(check));
    }
  }
  return report;
}

namespace detail {

inline nlohmann::ordered_json result_to_json(const MethodResult& r, bool timings) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  if (r.error) {
    j["error"] = *r.error;
    return j;
  }
  j["label"] = r.label;
  j["robustness"] = r.robustness;
  j["misclassification_probability"] = 1.0 - r.robustness;
  if (r.std_error) {
    j["std_error"] = *r.std_error;
  } else {
    j["boxes_enumerated"] = r.boxes_enumerated;
    j["boxes_matching"] = r.boxes_matching;
    j["integration_err"] = r.integration_err;
    j["prune_error_bound"] = r.prune_error_bound;
    j["unconverged_boxes"] = r.unconverged_boxes;
    j["exact"] = r.exact;
  }
  if (timings) j["wall_time_ms"] = r.wall_time_ms;
  if (!r.box_masses.empty()) {
    auto& boxes = j["boxes"] = nlohmann::ordered_json::array();
    for (const auto& b : r.box_masses) {
      boxes.push_back({{"index", b.index.k}, {"mass", b.mass}, {"err", b.err}, {"matching", b.matching}});
    }
  }
  return j;
}

inline std::string csv_number(double v) {
  nlohmann::json j = v;
  return j.dump();
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const RunReport& report, bool timings = false) {
  nlohmann::ordered_json j;
  j["methods"] = report.methods;
  auto& samples = j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : report.samples) {
    nlohmann::ordered_json row;
    row["sample_id"] = s.sample_id;
    row["line"] = s.line;
    auto& results = row["results"] = nlohmann::ordered_json::array();
    for (const auto& r : s.results) results.push_back(detail::result_to_json(r, timings));
    samples.push_back(std::move(row));
  }
  if (report.methods.size() > 1) {
    auto& agreement = j["agreement"] = nlohmann::ordered_json::array();
    for (const auto& a : report.agreement) {
      agreement.push_back(
          {{"a", a.a}, {"b", a.b}, {"n", a.n}, {"r_squared", a.r_squared}, {"max_abs_diff", a.max_abs_diff}});
    }
    auto& checks = j["pruning_checks"] = nlohmann::ordered_json::array();
    for (const auto& c : report.pruning_checks) {
      checks.push_back({{"method", c.method}, {"bound", c.bound}, {"violations", c.violations}});
    }
  }
  j["failures"] = report.failures;
  return j;
}

/// One line per (sample, method); agreement is not part of the CSV form.
inline std::string report_to_csv(const RunReport& report, bool timings = false) {
  std::ostringstream out;
  out << "sample_id,method,label,robustness,misclassification_probability,boxes_enumerated,boxes_matching,"
         "integration_err,std_error,exact";
  if (timings) out << ",wall_time_ms";
  out << ",error\n";
  for (const auto& s : report.samples) {
    for (const auto& r : s.results) {
      out << s.sample_id << ',' << r.method << ',';
      if (r.error) {
        out << ",,,,,,,";
        if (timings) out << ',';
        std::string msg = *r.error;
        std::replace(msg.begin(), msg.end(), '"', '\'');
        out << '"' << msg << "\"\n";
        continue;
      }
      out << r.label << ',' << detail::csv_number(r.robustness) << ',' << detail::csv_number(1.0 - r.robustness)
          << ',' << r.boxes_enumerated << ',' << r.boxes_matching << ',' << detail::csv_number(r.integration_err)
          << ',' << (r.std_error ? detail::csv_number(*r.std_error) : std::string()) << ','
          << (r.exact ? "true" : "false");
      if (timings) out << ',' << detail::csv_number(r.wall_time_ms);
      out << ",\n";
    }
  }
  return out.str();
}

}  // namespace boxprob
