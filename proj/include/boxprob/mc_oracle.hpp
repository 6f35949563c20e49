#pragma once

// Direct sampling estimate of robustness: the fraction of perturbed inputs
// whose predicted label equals the prediction of the unperturbed sample.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "boxprob/box.hpp"
#include "boxprob/model.hpp"
#include "boxprob/norta.hpp"
#include "boxprob/parallel.hpp"
#include "boxprob/robustness.hpp"

namespace boxprob {

struct McEstimate {
  double robustness_hat = 0.0;
  /// sqrt(p(1-p)/n), floored at 1/n when p is 0 or 1.
  double std_error = 0.0;
  std::uint64_t n_samples = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline constexpr std::uint64_t kMcShard = std::uint64_t{1} << 16;

}  // namespace detail

/// Draws `n` perturbed inputs in fixed-size shards, each with its own
/// counter-derived generator, so the estimate does not depend on the
/// number of worker threads (q.engine.threads).
inline McEstimate mc_robustness(const Model& model, const Query& q, std::uint64_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("mc_robustness: need at least one sample");
  const std::size_t dims = model.n_features;
  if (q.sample.size() != dims || dims_of(q.uncertainty) != dims) {
    throw DimensionError("mc_robustness: sample/uncertainty dimension does not match the model (" +
                         std::to_string(dims) + ")");
  }
  const ClassLabel label = classify(model, q.sample);
  const std::uint64_t n_shards = (n + detail::kMcShard - 1) / detail::kMcShard;
  std::vector<std::uint64_t> agree(n_shards, 0);

  parallel_for(n_shards, q.engine.threads, [&](std::size_t s) {
    std::mt19937_64 rng(mix64(seed ^ mix64(0xa0761d6478bd642fULL + s)));
    const std::uint64_t begin = s * detail::kMcShard;
    const std::uint64_t count = std::min(detail::kMcShard, n - begin);
    std::vector<double> x(dims);
    std::uint64_t hits = 0;
    if (const auto* g = std::get_if<Gaussian>(&q.uncertainty)) {
      const auto& l = g->cholesky();
      Eigen::VectorXd e(static_cast<Eigen::Index>(dims));
      Eigen::VectorXd z(static_cast<Eigen::Index>(dims));
      std::normal_distribution<double> normal;
      for (std::uint64_t i = 0; i < count; ++i) {
        for (auto& v : e) v = normal(rng);
        z.noalias() = l.triangularView<Eigen::Lower>() * e;
        for (std::size_t d = 0; d < dims; ++d) {
          x[d] = g->mean()(static_cast<Eigen::Index>(d)) + z(static_cast<Eigen::Index>(d));
        }
        hits += classify_unchecked(model, x) == label ? 1 : 0;
      }
    } else {
      NortaSampler sampler(std::get<NortaModel>(q.uncertainty));
      for (std::uint64_t i = 0; i < count; ++i) {
        sampler.draw(rng, x);
        hits += classify_unchecked(model, x) == label ? 1 : 0;
      }
    }
    agree[s] = hits;
  });

  std::uint64_t total = 0;
  for (std::uint64_t h : agree) total += h;
  McEstimate est;
  est.n_samples = n;
  est.seed = seed;
  est.robustness_hat = static_cast<double>(total) / static_cast<double>(n);
  const double p = est.robustness_hat;
  est.std_error = (total == 0 || total == n) ? 1.0 / static_cast<double>(n)
                                              : std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  return est;
}

}  // namespace boxprob
