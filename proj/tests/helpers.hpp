#pragma once

// Small model and distribution builders shared by the tests.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "boxprob/boxprob.hpp"

namespace testing_helpers {

using boxprob::DecisionTree;
using boxprob::Model;

inline Model single_leaf(std::size_t n_features, boxprob::ClassLabel label, std::size_t n_classes = 3) {
  Model m;
  m.ensemble = DecisionTree{{boxprob::LabelLeaf{label}}, 0};
  m.n_features = n_features;
  m.n_classes = n_classes;
  return m;
}

/// x[feature] <= threshold -> left_label, else right_label.
inline DecisionTree stump_tree(boxprob::FeatureIndex feature, double threshold, boxprob::ClassLabel left,
                               boxprob::ClassLabel right) {
  return DecisionTree{{boxprob::SplitNode{feature, threshold, 1, 2}, boxprob::LabelLeaf{left},
                       boxprob::LabelLeaf{right}},
                      0};
}

inline Model stump(std::size_t n_features, boxprob::FeatureIndex feature, double threshold,
                   boxprob::ClassLabel left = 0, boxprob::ClassLabel right = 1) {
  Model m;
  m.ensemble = stump_tree(feature, threshold, left, right);
  m.n_features = n_features;
  m.n_classes = 2;
  return m;
}

/// Random complete tree of the given depth; thresholds drawn from a grid
/// in [-2, 2] so that repeated rules occur.
template <typename Rng>
DecisionTree random_tree(Rng& rng, std::size_t n_features, std::size_t n_classes, std::size_t depth) {
  DecisionTree t;
  std::uniform_int_distribution<std::size_t> feature(0, n_features - 1);
  std::uniform_int_distribution<int> grid(-8, 8);
  std::uniform_int_distribution<std::size_t> label(0, n_classes - 1);
  auto build = [&](auto&& self, std::size_t d) -> boxprob::NodeRef {
    const auto index = static_cast<boxprob::NodeRef>(t.nodes.size());
    if (d == 0) {
      t.nodes.emplace_back(boxprob::LabelLeaf{static_cast<boxprob::ClassLabel>(label(rng))});
      return index;
    }
    t.nodes.emplace_back(boxprob::SplitNode{});
    const auto f = static_cast<boxprob::FeatureIndex>(feature(rng));
    const double thr = 0.25 * grid(rng);
    const auto l = self(self, d - 1);
    const auto r = self(self, d - 1);
    t.nodes[index] = boxprob::SplitNode{f, thr, l, r};
    return index;
  };
  t.root = build(build, depth);
  return t;
}

template <typename Rng>
Model random_model(Rng& rng, std::size_t n_features, std::size_t n_classes, std::size_t depth,
                   std::size_t n_trees = 1) {
  Model m;
  m.n_features = n_features;
  m.n_classes = n_classes;
  if (n_trees == 1) {
    m.ensemble = random_tree(rng, n_features, n_classes, depth);
  } else {
    boxprob::Forest f;
    for (std::size_t i = 0; i < n_trees; ++i) f.trees.push_back(random_tree(rng, n_features, n_classes, depth));
    m.ensemble = std::move(f);
  }
  boxprob::validate_model(m);
  return m;
}

/// Random covariance with eigenvalues spread over [0.5, 2] * scale.
template <typename Rng>
Eigen::MatrixXd random_cov(Rng& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (auto i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ();
  std::uniform_real_distribution<double> eig(0.5, 2.0);
  Eigen::VectorXd d(static_cast<Eigen::Index>(n));
  for (auto& v : d) v = eig(rng) * scale;
  Eigen::MatrixXd c = q * d.asDiagonal() * q.transpose();
  return 0.5 * (c + c.transpose());
}

template <typename Rng>
boxprob::Gaussian random_gaussian(Rng& rng, std::size_t n, double scale = 1.0) {
  std::uniform_real_distribution<double> mean(-1.0, 1.0);
  Eigen::VectorXd mu(static_cast<Eigen::Index>(n));
  for (auto& v : mu) v = mean(rng);
  return boxprob::Gaussian(mu, random_cov(rng, n, scale));
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline boxprob::Query query(const std::vector<double>& sample, boxprob::Uncertainty u,
                            std::optional<double> prune = std::nullopt) {
  return boxprob::Query{sample, std::move(u), prune, {}, {}};
}

inline std::string fixture(const std::string& name) { return std::string(BOXPROB_FIXTURES) + "/" + name; }

}  // namespace testing_helpers

namespace testing_helpers {

/// Two stumps whose per-tree robustness averages far from the forest's:
/// tree A votes 1 above 0, tree B votes 1 up to 1; ties go to class 0, so
/// the forest predicts 1 only on (0, 1].
inline Model nondecomposable_forest() {
  Model m;
  m.n_features = 1;
  m.n_classes = 2;
  m.ensemble = boxprob::Forest{{stump_tree(0, 0.0, 0, 1), stump_tree(0, 1.0, 1, 0)}};
  boxprob::validate_model(m);
  return m;
}

inline Model tree_as_model(const Model& forest, std::size_t t) {
  Model m;
  m.n_features = forest.n_features;
  m.n_classes = forest.n_classes;
  m.ensemble = forest.trees()[t];
  return m;
}

}  // namespace testing_helpers
