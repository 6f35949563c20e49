#pragma once

// Probabilistic robustness of a single prediction: the probability mass,
// under the sample's uncertainty distribution, of every box of the
// partition that the model assigns the sample's own label.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "boxprob/box.hpp"
#include "boxprob/detail/fixed_sum.hpp"
#include "boxprob/error.hpp"
#include "boxprob/model.hpp"
#include "boxprob/mvn.hpp"
#include "boxprob/norta.hpp"
#include "boxprob/parallel.hpp"

namespace boxprob {

/// Distribution of the perturbed input (not of the noise alone).
using Uncertainty = std::variant<Gaussian, NortaModel>;

inline std::size_t dims_of(const Uncertainty& u) {
  return std::visit([](const auto& d) { return d.dims(); }, u);
}

struct EngineConfig {
  std::size_t threads = 1;
  /// Largest box stream that may be evaluated.
  std::uint64_t max_boxes = 10'000'000;
  /// Keep the mass of every evaluated box in the report.
  bool verbose = false;
  /// Also integrate boxes whose label differs (reported as nonmatching_mass).
  bool integrate_all = false;
};

struct Query {
  std::vector<double> sample;
  Uncertainty uncertainty;
  /// Confidence level of the pruning ellipsoid; nullopt = all boxes.
  std::optional<double> prune_level;
  IntegratorConfig integrator;
  EngineConfig engine;
};

struct BoxMass {
  BoxIndex index;
  double mass = 0.0;
  double err = 0.0;
  bool matching = false;
};

struct RobustnessReport {
  ClassLabel label = 0;
  /// clamp(raw_sum, 0, 1), or exactly 0 / 1 when the opposite side of the
  /// partition provably carries no probability (see `exact`).
  double robustness = 0.0;
  double misclassification_probability = 1.0;
  double raw_sum = 0.0;
  /// Size of the full partition (product of |tau_i| + 1).
  BoxCount boxes_total;
  std::uint64_t boxes_enumerated = 0;
  std::uint64_t boxes_matching = 0;
  double integration_err = 0.0;
  double prune_error_bound = 0.0;
  std::uint64_t unconverged_boxes = 0;
  /// Set when robustness is exact by support: every box of the other label
  /// (or every matching box) has an empty interval under the uncertainty.
  bool exact = false;
  std::optional<double> nonmatching_mass;
  std::vector<BoxMass> box_masses;
  double wall_time_ms = 0.0;
};

/// Upper bound on the robustness lost by pruning at `level`.
inline double prune_error_bound(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidArgument("prune level must lie in (0, 1), got " + std::to_string(level));
  }
  return 1.0 - level;
}

namespace detail {

inline constexpr std::uint64_t kChunkBoxes = 2048;

// Box boundaries mapped into the space where integration happens: feature
// space for a Gaussian, normal-score space for a NORTA model.
inline std::vector<std::vector<double>> integration_boundaries(const ThresholdSets& ts, const Uncertainty& u) {
  if (const auto* norta = std::get_if<NortaModel>(&u)) {
    std::vector<std::vector<double>> z(ts.n_features());
    for (std::size_t i = 0; i < ts.n_features(); ++i) {
      z[i].reserve(ts.expanded[i].size());
      for (double t : ts.expanded[i]) z[i].push_back(norta->marginals()[i].to_normal_score(t));
    }
    return z;
  }
  return ts.expanded;
}

inline const Gaussian& integration_gaussian(const Uncertainty& u) {
  if (const auto* norta = std::get_if<NortaModel>(&u)) return norta->transformed_gaussian();
  return std::get<Gaussian>(u);
}

struct ChunkResult {
  FixedSum matching;
  FixedSum nonmatching;
  FixedSum err;
  std::uint64_t n_matching = 0;
  std::uint64_t matching_with_support = 0;
  std::uint64_t nonmatching_with_support = 0;
  std::uint64_t unconverged = 0;
  std::vector<BoxMass> masses;
};

// MassFn(const BoxIndex&, span lower, span upper) -> ProbEstimate, with
// bounds in integration space and every interval non-degenerate.
template <typename MassFn>
RobustnessReport run_engine(const Model& model, const ThresholdSets& ts, const Query& q,
                            const std::vector<std::vector<double>>& bounds, MassFn&& mass_of) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = model.n_features;
  if (q.sample.size() != n) {
    throw DimensionError("sample has " + std::to_string(q.sample.size()) + " coordinates, model expects " +
                         std::to_string(n));
  }
  if (dims_of(q.uncertainty) != n) {
    throw DimensionError("uncertainty has " + std::to_string(dims_of(q.uncertainty)) +
                         " dimensions, model expects " + std::to_string(n));
  }
  if (ts.n_features() != n) throw DimensionError("threshold sets do not match the model");

  RobustnessReport report;
  report.label = classify(model, q.sample);
  report.boxes_total = count_boxes(ts);

  std::vector<IndexRange> ranges;
  if (q.prune_level) {
    report.prune_error_bound = prune_error_bound(*q.prune_level);
    const Box region = confidence_bounding_box(integration_gaussian(q.uncertainty), *q.prune_level);
    ranges.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto r = overlapping_range(bounds[i], region.lower[i], region.upper[i]);
      if (!r) {
        ranges.clear();
        break;
      }
      ranges[i] = *r;
    }
  } else {
    ranges = full_ranges(ts);
  }

  const BoxStream stream(ts, std::move(ranges));
  const BoxCount count = stream.size();
  if (count.overflow || count.value > q.engine.max_boxes) {
    throw BoxBudgetExceeded("box stream of " + count.to_string() + " boxes exceeds the evaluation budget of " +
                            std::to_string(q.engine.max_boxes) + " (full partition: " +
                            report.boxes_total.to_string() + " boxes = product of (|tau_i| + 1))");
  }
  report.boxes_enumerated = count.value;

  const std::uint64_t n_chunks = (count.value + kChunkBoxes - 1) / kChunkBoxes;
  std::vector<ChunkResult> chunks(n_chunks);
  parallel_for(n_chunks, q.engine.threads, [&](std::size_t c) {
    ChunkResult& out = chunks[c];
    std::vector<double> point(n);
    std::vector<double> lo(n);
    std::vector<double> hi(n);
    const std::uint64_t begin = c * kChunkBoxes;
    const std::uint64_t end = std::min(begin + kChunkBoxes, count.value);
    auto it = stream.at(begin);
    for (std::uint64_t pos = begin; pos < end; ++pos, ++it) {
      const BoxEntry& entry = *it;
      fill_representative_point(entry.box, q.sample, point);
      const bool matching = classify_unchecked(model, point) == report.label;
      bool support = true;
      for (std::size_t i = 0; i < n; ++i) {
        lo[i] = bounds[i][entry.index.k[i]];
        hi[i] = bounds[i][entry.index.k[i] + 1];
        support = support && lo[i] < hi[i];
      }
      if (matching) ++out.n_matching;
      (matching ? out.matching_with_support : out.nonmatching_with_support) += support ? 1 : 0;
      if (!(matching || q.engine.integrate_all)) continue;
      ProbEstimate est;
      if (support) est = mass_of(entry.index, std::span<const double>(lo), std::span<const double>(hi));
      (matching ? out.matching : out.nonmatching).add(est.value);
      out.err.add(est.err_estimate);
      if (!est.converged) ++out.unconverged;
      if (q.engine.verbose) out.masses.push_back({entry.index, est.value, est.err_estimate, matching});
    }
  });

  FixedSum matching;
  FixedSum nonmatching;
  FixedSum err;
  std::uint64_t matching_support = 0;
  std::uint64_t nonmatching_support = 0;
  for (ChunkResult& c : chunks) {
    matching.add(c.matching);
    nonmatching.add(c.nonmatching);
    err.add(c.err);
    report.boxes_matching += c.n_matching;
    matching_support += c.matching_with_support;
    nonmatching_support += c.nonmatching_with_support;
    report.unconverged_boxes += c.unconverged;
    if (q.engine.verbose) {
      report.box_masses.insert(report.box_masses.end(), std::make_move_iterator(c.masses.begin()),
                               std::make_move_iterator(c.masses.end()));
    }
  }
  report.raw_sum = matching.value();
  report.integration_err = err.value();
  if (q.engine.integrate_all) report.nonmatching_mass = nonmatching.value();
  report.robustness = std::clamp(report.raw_sum, 0.0, 1.0);
  if (!q.prune_level && matching_support == 0) {
    report.robustness = 0.0;
    report.exact = true;
  } else if (!q.prune_level && nonmatching_support == 0) {
    report.robustness = 1.0;
    report.exact = true;
  }
  report.misclassification_probability = 1.0 - report.robustness;
  report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace detail

/// Robustness via Gaussian rectangle probabilities (transformed to
/// normal-score space for NORTA uncertainty). Each box is integrated with a
/// seed derived from (integrator seed, box index), so results do not depend
/// on enumeration order or thread count.
inline RobustnessReport compute_robustness(const Model& model, const ThresholdSets& ts, const Query& q) {
  const auto bounds = detail::integration_boundaries(ts, q.uncertainty);
  const Gaussian& g = detail::integration_gaussian(q.uncertainty);
  return detail::run_engine(model, ts, q, bounds,
                            [&](const BoxIndex& index, std::span<const double> lo, std::span<const double> hi) {
                              IntegratorConfig cfg = q.integrator;
                              cfg.seed = box_key(q.integrator.seed, index);
                              return mvn_rectangle_probability(g, lo, hi, cfg);
                            });
}

inline RobustnessReport compute_robustness(const Model& model, const Query& q) {
  return compute_robustness(model, build_threshold_sets(model), q);
}

/// Robustness for independent features: each box mass is the product of
/// per-dimension interval probabilities, with no quadrature.
inline RobustnessReport compute_robustness_independent(const Model& model, const ThresholdSets& ts, const Query& q) {
  const std::size_t n = model.n_features;
  if (dims_of(q.uncertainty) != n || ts.n_features() != n) {
    throw DimensionError("uncertainty has " + std::to_string(dims_of(q.uncertainty)) +
                         " dimensions, model expects " + std::to_string(n));
  }
  // interval_mass[i][k]: probability of interval k in dimension i.
  std::vector<std::vector<double>> interval_mass(n);
  if (const auto* g = std::get_if<Gaussian>(&q.uncertainty)) {
    if (!g->is_diagonal()) throw InvalidArgument("compute_robustness_independent: covariance is not diagonal");
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double m = g->mean()(ii);
      const double sd = std::sqrt(g->cov()(ii, ii));
      const auto& e = ts.expanded[i];
      for (std::size_t k = 0; k + 1 < e.size(); ++k) {
        interval_mass[i].push_back(normal_interval((e[k] - m) / sd, (e[k + 1] - m) / sd));
      }
    }
  } else {
    const auto& norta = std::get<NortaModel>(q.uncertainty);
    if (!norta.independent()) {
      throw InvalidArgument("compute_robustness_independent: spearman matrix is not the identity");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& m = norta.marginals()[i];
      const auto& e = ts.expanded[i];
      for (std::size_t k = 0; k + 1 < e.size(); ++k) {
        const double p_lo = m.cdf(e[k]);
        interval_mass[i].push_back(p_lo > 0.5 ? m.ccdf(e[k]) - m.ccdf(e[k + 1]) : m.cdf(e[k + 1]) - p_lo);
      }
    }
  }
  const auto bounds = detail::integration_boundaries(ts, q.uncertainty);
  return detail::run_engine(model, ts, q, bounds,
                            [&](const BoxIndex& index, std::span<const double>, std::span<const double>) {
                              double mass = 1.0;
                              for (std::size_t i = 0; i < n; ++i) mass *= interval_mass[i][index.k[i]];
                              return ProbEstimate{mass, 0.0, 0, true};
                            });
}

inline RobustnessReport compute_robustness_independent(const Model& model, const Query& q) {
  return compute_robustness_independent(model, build_threshold_sets(model), q);
}

}  // namespace boxprob
