#pragma once

// Partition of feature space into axis-aligned boxes induced by the split
// thresholds of a model. Boxes are never materialized: they are addressed
// by a per-dimension interval index and streamed lazily.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "boxprob/error.hpp"
#include "boxprob/model.hpp"

namespace boxprob {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Hyperrectangle with interval (lower_i, upper_i] in every dimension.
/// Bounds may be infinite.
struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t dims() const { return lower.size(); }

  bool contains(std::span<const double> point) const {
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!(point[i] > lower[i] && point[i] <= upper[i])) return false;
    }
    return true;
  }

  bool valid() const {
    if (lower.size() != upper.size()) return false;
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!(lower[i] < upper[i])) return false;
    }
    return true;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Interval index k_i per dimension: box i-th interval is
/// (expanded[i][k_i], expanded[i][k_i + 1]].
struct BoxIndex {
  std::vector<std::uint32_t> k;

  friend bool operator==(const BoxIndex&, const BoxIndex&) = default;
  friend auto operator<=>(const BoxIndex&, const BoxIndex&) = default;
};

/// Stable 64-bit key of a box index (splitmix64 fold). Used to derive
/// per-box integration seeds independent of enumeration order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t box_key(std::uint64_t base_seed, const BoxIndex& index) {
  std::uint64_t h = mix64(base_seed ^ 0x6a09e667f3bcc908ULL);
  for (std::uint32_t k : index.k) h = mix64(h ^ k);
  return h;
}

struct ThresholdSets {
  /// Sorted, strictly increasing, deduplicated split values per feature.
  std::vector<std::vector<double>> tau;
  /// tau with the feature bound (or -inf / +inf) prepended and appended.
  std::vector<std::vector<double>> expanded;

  std::size_t n_features() const { return tau.size(); }
  std::size_t intervals(std::size_t feature) const { return tau[feature].size() + 1; }

  void fill_box(const BoxIndex& index, Box& box) const {
    box.lower.resize(n_features());
    box.upper.resize(n_features());
    for (std::size_t i = 0; i < n_features(); ++i) {
      box.lower[i] = expanded[i][index.k[i]];
      box.upper[i] = expanded[i][index.k[i] + 1];
    }
  }

  Box box_at(const BoxIndex& index) const {
    Box box;
    fill_box(index, box);
    return box;
  }

  /// Index of the box containing `point` under the (lower, upper]
  /// convention, or nullopt when the point lies outside the bounded domain.
  std::optional<BoxIndex> locate(std::span<const double> point) const {
    BoxIndex index;
    index.k.resize(n_features());
    for (std::size_t i = 0; i < n_features(); ++i) {
      const auto& e = expanded[i];
      if (!(point[i] > e.front() && point[i] <= e.back())) {
        // The lowest interval of a bounded feature is closed at its minimum.
        if (!(point[i] == e.front() && std::isfinite(e.front()))) return std::nullopt;
      }
      const auto it = std::lower_bound(tau[i].begin(), tau[i].end(), point[i]);
      index.k[i] = static_cast<std::uint32_t>(it - tau[i].begin());
    }
    return index;
  }
};

/// Builds threshold sets from raw per-feature split values (any order,
/// duplicates allowed) and optional per-feature bounds.
inline ThresholdSets make_threshold_sets(std::vector<std::vector<double>> raw,
                                         std::span<const std::optional<FeatureBound>> bounds = {}) {
  ThresholdSets ts;
  ts.tau = std::move(raw);
  ts.expanded.resize(ts.tau.size());
  for (std::size_t i = 0; i < ts.tau.size(); ++i) {
    auto& t = ts.tau[i];
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    double lo = -kInf;
    double hi = kInf;
    if (!bounds.empty() && bounds[i]) {
      lo = bounds[i]->lo;
      hi = bounds[i]->hi;
      if (!t.empty() && !(t.front() > lo && t.back() < hi)) {
        throw BoundsError("feature " + std::to_string(i) + ": split threshold outside declared bounds [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
      }
    }
    auto& e = ts.expanded[i];
    e.reserve(t.size() + 2);
    e.push_back(lo);
    e.insert(e.end(), t.begin(), t.end());
    e.push_back(hi);
  }
  return ts;
}

inline ThresholdSets build_threshold_sets(const Model& model) {
  std::vector<std::vector<double>> raw(model.n_features);
  for_each_split_rule(model, [&](SplitRule r) { raw[r.feature].push_back(r.threshold); });
  return make_threshold_sets(std::move(raw), model.feature_bounds);
}

/// A box count; `overflow` is set when the product exceeds 2^64 - 1.
struct BoxCount {
  std::uint64_t value = 0;
  bool overflow = false;

  std::string to_string() const {
    return overflow ? std::string("exceeds representable range") : std::to_string(value);
  }
};

/// Inclusive range [first, last] of interval indices in one dimension.
struct IndexRange {
  std::uint32_t first = 0;
  std::uint32_t last = 0;

  std::uint64_t size() const { return std::uint64_t{last} - first + 1; }
};

namespace detail {

inline BoxCount product_count(std::span<const IndexRange> ranges) {
  BoxCount count{1, false};
  for (const IndexRange& r : ranges) {
    if (__builtin_mul_overflow(count.value, r.size(), &count.value)) {
      return {std::numeric_limits<std::uint64_t>::max(), true};
    }
  }
  return count;
}

}  // namespace detail

/// Total number of boxes: product over features of (|tau_i| + 1).
inline BoxCount count_boxes(const ThresholdSets& ts) {
  BoxCount count{1, false};
  for (const auto& t : ts.tau) {
    if (__builtin_mul_overflow(count.value, std::uint64_t{t.size() + 1}, &count.value)) {
      return {std::numeric_limits<std::uint64_t>::max(), true};
    }
  }
  return count;
}

/// Intervals of a non-decreasing boundary list whose closure meets [lo, hi].
/// Returns nullopt if none does.
inline std::optional<IndexRange> overlapping_range(std::span<const double> boundaries, double lo,
                                                   double hi) {
  const std::size_t m = boundaries.size() - 1;
  const auto upper_edges = boundaries.subspan(1);
  const std::size_t first = static_cast<std::size_t>(
      std::lower_bound(upper_edges.begin(), upper_edges.end(), lo) - upper_edges.begin());
  const auto lower_edges = boundaries.first(m);
  const std::size_t past = static_cast<std::size_t>(
      std::upper_bound(lower_edges.begin(), lower_edges.end(), hi) - lower_edges.begin());
  if (past == 0 || first >= past) return std::nullopt;
  return IndexRange{static_cast<std::uint32_t>(first), static_cast<std::uint32_t>(past - 1)};
}

inline std::vector<IndexRange> full_ranges(const ThresholdSets& ts) {
  std::vector<IndexRange> ranges(ts.n_features());
  for (std::size_t i = 0; i < ts.n_features(); ++i) {
    ranges[i] = {0, static_cast<std::uint32_t>(ts.tau[i].size())};
  }
  return ranges;
}

/// Per-dimension index ranges of the boxes whose closure meets the closure
/// of `region`; empty vector when no box does.
inline std::vector<IndexRange> overlapping_ranges(const ThresholdSets& ts, const Box& region) {
  if (region.dims() != ts.n_features()) {
    throw DimensionError("region has " + std::to_string(region.dims()) + " dimensions, expected " +
                         std::to_string(ts.n_features()));
  }
  std::vector<IndexRange> ranges(ts.n_features());
  for (std::size_t i = 0; i < ts.n_features(); ++i) {
    auto r = overlapping_range(ts.expanded[i], region.lower[i], region.upper[i]);
    if (!r) return {};
    ranges[i] = *r;
  }
  return ranges;
}

struct BoxEntry {
  BoxIndex index;
  Box box;
};

/// Lazy lexicographic stream over the Cartesian product of index ranges.
/// Memory use is O(N) regardless of the number of boxes.
class BoxStream {
 public:
  BoxStream(const ThresholdSets& ts, std::vector<IndexRange> ranges)
      : ts_(&ts), ranges_(std::move(ranges)) {
    if (!ranges_.empty() && ranges_.size() != ts.n_features()) {
      throw DimensionError("BoxStream: one index range per feature required");
    }
    empty_ = ranges_.empty();
  }
  /// The stream refers to `ts`, which must outlive it.
  BoxStream(ThresholdSets&&, std::vector<IndexRange>) = delete;

  BoxCount size() const { return empty_ ? BoxCount{0, false} : detail::product_count(ranges_); }

  const std::vector<IndexRange>& ranges() const { return ranges_; }

  /// Box index at lexicographic position `pos` of this stream.
  BoxIndex index_at(std::uint64_t pos) const {
    BoxIndex index;
    index.k.resize(ranges_.size());
    for (std::size_t d = ranges_.size(); d-- > 0;) {
      const std::uint64_t n = ranges_[d].size();
      index.k[d] = ranges_[d].first + static_cast<std::uint32_t>(pos % n);
      pos /= n;
    }
    return index;
  }

  class iterator {
   public:
    using value_type = BoxEntry;
    using difference_type = std::ptrdiff_t;

    /// Exhausted iterator.
    iterator() = default;
    iterator(const BoxStream* stream, BoxIndex start) : stream_(stream), done_(false) {
      entry_.index = std::move(start);
      stream_->ts_->fill_box(entry_.index, entry_.box);
    }

    const BoxEntry& operator*() const { return entry_; }
    const BoxEntry* operator->() const { return &entry_; }

    iterator& operator++() {
      const auto& ranges = stream_->ranges_;
      const auto& e = stream_->ts_->expanded;
      for (std::size_t d = ranges.size(); d-- > 0;) {
        auto& k = entry_.index.k[d];
        if (k < ranges[d].last) {
          ++k;
          entry_.box.lower[d] = e[d][k];
          entry_.box.upper[d] = e[d][k + 1];
          return *this;
        }
        k = ranges[d].first;
        entry_.box.lower[d] = e[d][k];
        entry_.box.upper[d] = e[d][k + 1];
      }
      done_ = true;
      return *this;
    }

    void operator++(int) { ++*this; }

    bool operator==(std::default_sentinel_t) const { return done_; }

   private:
    const BoxStream* stream_ = nullptr;
    BoxEntry entry_;
    bool done_ = true;
  };

  iterator begin() const { return empty_ ? iterator() : iterator(this, index_at(0)); }

  /// Iterator positioned at lexicographic position `pos` (< size()).
  iterator at(std::uint64_t pos) const { return iterator(this, index_at(pos)); }

  std::default_sentinel_t end() const { return {}; }

 private:
  const ThresholdSets* ts_;
  std::vector<IndexRange> ranges_;
  bool empty_ = false;
};

/// Lazily enumerates boxes in lexicographic index order. With a region,
/// yields exactly the boxes whose closure meets the region's closure.
inline BoxStream enumerate_boxes(const ThresholdSets& ts, const std::optional<Box>& region = {}) {
  return BoxStream(ts, region ? overlapping_ranges(ts, *region) : full_ranges(ts));
}
BoxStream enumerate_boxes(ThresholdSets&&, const std::optional<Box>& = {}) = delete;

/// Writes the representative point of `box` into `out`; see
/// representative_point.
inline void fill_representative_point(const Box& box, std::span<const double> fallback, std::span<double> out) {
  for (std::size_t i = 0; i < box.dims(); ++i) {
    const double lo = box.lower[i];
    const double hi = box.upper[i];
    const bool lo_finite = std::isfinite(lo);
    const bool hi_finite = std::isfinite(hi);
    if (lo_finite && hi_finite) {
      out[i] = lo + 0.5 * (hi - lo);
    } else if (hi_finite) {
      out[i] = hi - std::max(1.0, std::abs(hi) * 0x1p-10);
    } else if (lo_finite) {
      out[i] = lo + std::max(1.0, std::abs(lo) * 0x1p-10);
    } else {
      out[i] = fallback[i];
    }
  }
}

/// Interior point of `box` used to read off its label. Finite sides give
/// the midpoint; a half-infinite side is offset from its finite bound by
/// max(1, |bound| * 2^-10); a fully infinite side takes the fallback.
inline std::vector<double> representative_point(const Box& box, std::span<const double> fallback) {
  std::vector<double> point(box.dims());
  fill_representative_point(box, fallback, point);
  return point;
}

}  // namespace boxprob
