#pragma once

// Tree-based classifiers with explicit axis-aligned split rules: a single
// decision tree, a majority-vote forest, or a boosted ensemble of
// score-leaf trees. Models are parsed from / serialized to the JSON model
// document and are immutable afterwards.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "boxprob/error.hpp"

namespace boxprob {

using ClassLabel = std::uint32_t;
using FeatureIndex = std::uint32_t;
using NodeRef = std::uint32_t;

/// Decision rule `x[feature] <= threshold`: true goes left.
struct SplitNode {
  FeatureIndex feature = 0;
  double threshold = 0.0;
  NodeRef left = 0;
  NodeRef right = 0;
};

struct LabelLeaf {
  ClassLabel label = 0;
};

struct ScoreLeaf {
  double score = 0.0;
};

using Node = std::variant<SplitNode, LabelLeaf, ScoreLeaf>;

struct DecisionTree {
  std::vector<Node> nodes;
  NodeRef root = 0;

  /// Leaf reached by `point`. The tree must have been validated.
  const Node& leaf_for(std::span<const double> point) const {
    const Node* node = &nodes[root];
    while (const auto* split = std::get_if<SplitNode>(node)) {
      node = &nodes[point[split->feature] <= split->threshold ? split->left : split->right];
    }
    return *node;
  }

  std::size_t depth() const { return depth_from(root); }

 private:
  std::size_t depth_from(NodeRef ref) const {
    if (const auto* split = std::get_if<SplitNode>(&nodes[ref])) {
      return 1 + std::max(depth_from(split->left), depth_from(split->right));
    }
    return 0;
  }
};

/// Majority vote over per-tree labels; ties go to the lowest class index.
struct Forest {
  std::vector<DecisionTree> trees;
};

enum class Objective { binary_logistic, multi_softmax };

/// Sum of leaf scores plus base_score. Binary: class 1 iff margin > 0.
/// Multiclass: argmax of per-class margins (tree_class[t] owns tree t).
struct BoostedEnsemble {
  std::vector<DecisionTree> trees;
  double base_score = 0.0;
  Objective objective = Objective::binary_logistic;
  std::vector<ClassLabel> tree_class;
};

struct FeatureBound {
  double lo = 0.0;
  double hi = 0.0;
};

struct Model {
  std::variant<DecisionTree, Forest, BoostedEnsemble> ensemble;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  /// Either empty (no bounds) or one entry per feature.
  std::vector<std::optional<FeatureBound>> feature_bounds;

  std::span<const DecisionTree> trees() const {
    return std::visit(
        [](const auto& e) -> std::span<const DecisionTree> {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, DecisionTree>) {
            return {&e, 1};
          } else {
            return e.trees;
          }
        },
        ensemble);
  }

  std::optional<FeatureBound> bound(std::size_t feature) const {
    return feature_bounds.empty() ? std::nullopt : feature_bounds[feature];
  }
};

struct SplitRule {
  FeatureIndex feature;
  double threshold;

  friend bool operator==(const SplitRule&, const SplitRule&) = default;
};

/// Calls `fn(SplitRule)` once for every split node of every tree,
/// duplicates included, in tree order then node-array order.
template <typename Fn>
void for_each_split_rule(const Model& model, Fn&& fn) {
  for (const DecisionTree& tree : model.trees()) {
    for (const Node& node : tree.nodes) {
      if (const auto* split = std::get_if<SplitNode>(&node)) {
        fn(SplitRule{split->feature, split->threshold});
      }
    }
  }
}

inline std::vector<SplitRule> split_rules(const Model& model) {
  std::vector<SplitRule> rules;
  for_each_split_rule(model, [&](SplitRule r) { rules.push_back(r); });
  return rules;
}

namespace detail {

// Per-class tallies without heap traffic for the common small-class case.
class ClassTally {
 public:
  explicit ClassTally(std::size_t n_classes) : n_(n_classes) {
    if (n_ > kInline) heap_.assign(n_, 0.0);
  }

  double& operator[](std::size_t c) { return n_ > kInline ? heap_[c] : inline_[c]; }

  ClassLabel argmax() const {
    const double* v = n_ > kInline ? heap_.data() : inline_.data();
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_; ++c) {
      if (v[c] > v[best]) best = c;
    }
    return static_cast<ClassLabel>(best);
  }

 private:
  static constexpr std::size_t kInline = 32;
  std::size_t n_;
  std::array<double, kInline> inline_{};
  std::vector<double> heap_;
};

}  // namespace detail

/// Classification without the dimension check; used on hot paths where
/// the caller guarantees `point.size() == model.n_features`.
inline ClassLabel classify_unchecked(const Model& model, std::span<const double> point) {
  return std::visit(
      [&](const auto& e) -> ClassLabel {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, DecisionTree>) {
          return std::get<LabelLeaf>(e.leaf_for(point)).label;
        } else if constexpr (std::is_same_v<T, Forest>) {
          detail::ClassTally votes(model.n_classes);
          for (const DecisionTree& tree : e.trees) {
            votes[std::get<LabelLeaf>(tree.leaf_for(point)).label] += 1.0;
          }
          return votes.argmax();
        } else {
          if (e.objective == Objective::binary_logistic) {
            double margin = e.base_score;
            for (const DecisionTree& tree : e.trees) {
              margin += std::get<ScoreLeaf>(tree.leaf_for(point)).score;
            }
            return margin > 0.0 ? 1 : 0;
          }
          detail::ClassTally margin(model.n_classes);
          for (std::size_t c = 0; c < model.n_classes; ++c) margin[c] = e.base_score;
          for (std::size_t t = 0; t < e.trees.size(); ++t) {
            margin[e.tree_class[t]] += std::get<ScoreLeaf>(e.trees[t].leaf_for(point)).score;
          }
          return margin.argmax();
        }
      },
      model.ensemble);
}

inline ClassLabel classify(const Model& model, std::span<const double> point) {
  if (point.size() != model.n_features) {
    throw DimensionError("classify: point has " + std::to_string(point.size()) +
                         " coordinates, model expects " + std::to_string(model.n_features));
  }
  for (double v : point) {
    if (!std::isfinite(v)) throw InvalidArgument("classify: point has a non-finite coordinate");
  }
  return classify_unchecked(model, point);
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

enum class LeafKind { label, score };

inline void validate_tree(const DecisionTree& tree, std::size_t n_features, std::size_t n_classes,
                          LeafKind leaves, const std::string& path) {
  if (tree.nodes.empty()) throw ParseError(path + ".nodes: tree has no nodes");
  if (tree.root >= tree.nodes.size()) {
    throw ParseError(path + ".root: dangling node reference " + std::to_string(tree.root));
  }
  std::vector<bool> seen(tree.nodes.size(), false);
  std::vector<NodeRef> stack{tree.root};
  while (!stack.empty()) {
    const NodeRef ref = stack.back();
    stack.pop_back();
    const std::string node_path = path + ".nodes[" + std::to_string(ref) + "]";
    if (seen[ref]) throw ParseError(node_path + ": dangling/cyclic node (reached twice)");
    seen[ref] = true;
    const Node& node = tree.nodes[ref];
    if (const auto* split = std::get_if<SplitNode>(&node)) {
      if (split->feature >= n_features) {
        throw ParseError(node_path + ".feature: index " + std::to_string(split->feature) +
                         " out of range (n_features = " + std::to_string(n_features) + ")");
      }
      if (!std::isfinite(split->threshold)) {
        throw ParseError(node_path + ".threshold: not a finite number");
      }
      for (NodeRef child : {split->left, split->right}) {
        if (child >= tree.nodes.size()) {
          throw ParseError(node_path + ": dangling/cyclic node reference " + std::to_string(child));
        }
        stack.push_back(child);
      }
    } else if (const auto* leaf = std::get_if<LabelLeaf>(&node)) {
      if (leaves != LeafKind::label) throw ParseError(node_path + ": expected a leaf_score leaf");
      if (leaf->label >= n_classes) {
        throw ParseError(node_path + ".leaf_label: class index " + std::to_string(leaf->label) +
                         " out of range (n_classes = " + std::to_string(n_classes) + ")");
      }
    } else {
      if (leaves != LeafKind::score) throw ParseError(node_path + ": expected a leaf_label leaf");
      if (!std::isfinite(std::get<ScoreLeaf>(node).score)) {
        throw ParseError(node_path + ".leaf_score: not a finite number");
      }
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) {
      throw ParseError(path + ".nodes[" + std::to_string(i) + "]: node unreachable from root");
    }
  }
}

}  // namespace detail

/// Checks every model invariant; throws ParseError naming the offending path.
inline void validate_model(const Model& model) {
  if (model.n_features == 0) throw ParseError("n_features: must be >= 1");
  if (model.n_classes == 0) throw ParseError("n_classes: must be >= 1");
  if (!model.feature_bounds.empty()) {
    if (model.feature_bounds.size() != model.n_features) {
      throw ParseError("feature_bounds: expected " + std::to_string(model.n_features) + " entries");
    }
    for (std::size_t i = 0; i < model.feature_bounds.size(); ++i) {
      const auto& b = model.feature_bounds[i];
      if (b && !(b->lo < b->hi)) {
        throw ParseError("feature_bounds[" + std::to_string(i) + "]: requires min < max");
      }
    }
  }
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, DecisionTree>) {
          detail::validate_tree(e, model.n_features, model.n_classes, detail::LeafKind::label,
                                "trees[0]");
        } else if constexpr (std::is_same_v<T, Forest>) {
          if (e.trees.empty()) throw ParseError("trees: forest has no trees");
          for (std::size_t t = 0; t < e.trees.size(); ++t) {
            detail::validate_tree(e.trees[t], model.n_features, model.n_classes,
                                  detail::LeafKind::label, "trees[" + std::to_string(t) + "]");
          }
        } else {
          if (e.trees.empty()) throw ParseError("trees: boosted ensemble has no trees");
          if (!std::isfinite(e.base_score)) throw ParseError("base_score: not a finite number");
          for (std::size_t t = 0; t < e.trees.size(); ++t) {
            detail::validate_tree(e.trees[t], model.n_features, model.n_classes,
                                  detail::LeafKind::score, "trees[" + std::to_string(t) + "]");
          }
          if (e.objective == Objective::binary_logistic) {
            if (model.n_classes != 2) throw ParseError("n_classes: binary_logistic requires 2");
          } else {
            if (e.tree_class.size() != e.trees.size()) {
              throw ParseError("tree_class: expected one entry per tree");
            }
            std::vector<bool> owned(model.n_classes, false);
            for (std::size_t t = 0; t < e.tree_class.size(); ++t) {
              if (e.tree_class[t] >= model.n_classes) {
                throw ParseError("tree_class[" + std::to_string(t) + "]: class index out of range");
              }
              owned[e.tree_class[t]] = true;
            }
            for (std::size_t c = 0; c < owned.size(); ++c) {
              if (!owned[c]) {
                throw ParseError("tree_class: class " + std::to_string(c) + " owns no tree");
              }
            }
          }
        }
      },
      model.ensemble);
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

using nlohmann::json;

inline const json& member(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + "." + key + ": missing field");
  return *it;
}

inline std::uint32_t as_index(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
      v.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
    throw ParseError(path + ": expected a non-negative integer");
  }
  return static_cast<std::uint32_t>(v.get<std::int64_t>());
}

inline double as_real(const json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError(path + ": expected a number");
  return v.get<double>();
}

inline DecisionTree parse_tree(const json& doc, const std::string& path) {
  DecisionTree tree;
  const json& nodes = member(doc, "nodes", path);
  if (!nodes.is_array()) throw ParseError(path + ".nodes: expected an array");
  tree.root = as_index(member(doc, "root", path), path + ".root");
  tree.nodes.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string np = path + ".nodes[" + std::to_string(i) + "]";
    const json& n = nodes[i];
    if (!n.is_object()) throw ParseError(np + ": expected an object");
    if (n.contains("leaf_label")) {
      tree.nodes.emplace_back(LabelLeaf{as_index(n["leaf_label"], np + ".leaf_label")});
    } else if (n.contains("leaf_score")) {
      tree.nodes.emplace_back(ScoreLeaf{as_real(n["leaf_score"], np + ".leaf_score")});
    } else {
      tree.nodes.emplace_back(SplitNode{as_index(member(n, "feature", np), np + ".feature"),
                                        as_real(member(n, "threshold", np), np + ".threshold"),
                                        as_index(member(n, "left", np), np + ".left"),
                                        as_index(member(n, "right", np), np + ".right")});
    }
  }
  return tree;
}

inline json tree_to_json(const DecisionTree& tree) {
  json nodes = json::array();
  for (const Node& node : tree.nodes) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, SplitNode>) {
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right}});
          } else if constexpr (std::is_same_v<T, LabelLeaf>) {
            nodes.push_back({{"leaf_label", n.label}});
          } else {
            nodes.push_back({{"leaf_score", n.score}});
          }
        },
        node);
  }
  return {{"nodes", std::move(nodes)}, {"root", tree.root}};
}

}  // namespace detail

inline Model model_from_json(const nlohmann::json& doc) {
  using detail::as_index;
  using detail::member;
  Model model;
  const std::string type = [&] {
    const auto& t = member(doc, "type", "$");
    if (!t.is_string()) throw ParseError("$.type: expected a string");
    return t.get<std::string>();
  }();
  model.n_features = as_index(member(doc, "n_features", "$"), "$.n_features");
  model.n_classes = as_index(member(doc, "n_classes", "$"), "$.n_classes");

  if (auto it = doc.find("feature_bounds"); it != doc.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError("$.feature_bounds: expected an array or null");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto& b = (*it)[i];
      const std::string bp = "$.feature_bounds[" + std::to_string(i) + "]";
      if (b.is_null()) {
        model.feature_bounds.emplace_back();
      } else if (b.is_array() && b.size() == 2) {
        model.feature_bounds.emplace_back(
            FeatureBound{detail::as_real(b[0], bp + "[0]"), detail::as_real(b[1], bp + "[1]")});
      } else {
        throw ParseError(bp + ": expected [min, max] or null");
      }
    }
  }

  const auto& trees_doc = member(doc, "trees", "$");
  if (!trees_doc.is_array()) throw ParseError("$.trees: expected an array");
  std::vector<DecisionTree> trees;
  for (std::size_t t = 0; t < trees_doc.size(); ++t) {
    trees.push_back(detail::parse_tree(trees_doc[t], "$.trees[" + std::to_string(t) + "]"));
  }

  if (type == "decision_tree") {
    if (trees.size() != 1) throw ParseError("$.trees: decision_tree requires exactly one tree");
    model.ensemble = std::move(trees.front());
  } else if (type == "random_forest") {
    model.ensemble = Forest{std::move(trees)};
  } else if (type == "boosted_ensemble") {
    BoostedEnsemble boosted;
    boosted.trees = std::move(trees);
    boosted.base_score = detail::as_real(member(doc, "base_score", "$"), "$.base_score");
    const auto& obj = member(doc, "objective", "$");
    if (obj == "binary_logistic") {
      boosted.objective = Objective::binary_logistic;
    } else if (obj == "multi_softmax") {
      boosted.objective = Objective::multi_softmax;
      const auto& tc = member(doc, "tree_class", "$");
      if (!tc.is_array()) throw ParseError("$.tree_class: expected an array");
      for (std::size_t t = 0; t < tc.size(); ++t) {
        boosted.tree_class.push_back(as_index(tc[t], "$.tree_class[" + std::to_string(t) + "]"));
      }
    } else {
      throw ParseError("$.objective: expected \"binary_logistic\" or \"multi_softmax\"");
    }
    model.ensemble = std::move(boosted);
  } else {
    throw ParseError("$.type: unknown model type \"" + type + "\"");
  }

  try {
    validate_model(model);
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    throw ParseError(msg.rfind("$", 0) == 0 ? msg : "$." + msg);
  }
  return model;
}

inline Model parse_model(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model document is not valid JSON: ") + e.what());
  }
  return model_from_json(doc);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open model file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_model(std::string_view(buf.str()));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline nlohmann::json model_to_json(const Model& model) {
  nlohmann::json doc;
  nlohmann::json trees = nlohmann::json::array();
  for (const DecisionTree& tree : model.trees()) trees.push_back(detail::tree_to_json(tree));
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, DecisionTree>) {
          doc["type"] = "decision_tree";
        } else if constexpr (std::is_same_v<T, Forest>) {
          doc["type"] = "random_forest";
        } else {
          doc["type"] = "boosted_ensemble";
          doc["base_score"] = e.base_score;
          doc["objective"] =
              e.objective == Objective::binary_logistic ? "binary_logistic" : "multi_softmax";
          if (e.objective == Objective::multi_softmax) doc["tree_class"] = e.tree_class;
        }
      },
      model.ensemble);
  doc["n_features"] = model.n_features;
  doc["n_classes"] = model.n_classes;
  if (model.feature_bounds.empty()) {
    doc["feature_bounds"] = nullptr;
  } else {
    nlohmann::json bounds = nlohmann::json::array();
    for (const auto& b : model.feature_bounds) {
      bounds.push_back(b ? nlohmann::json::array({b->lo, b->hi}) : nlohmann::json(nullptr));
    }
    doc["feature_bounds"] = std::move(bounds);
  }
  doc["trees"] = std::move(trees);
  return doc;
}

/// Thresholds are written in shortest round-trip form, so parse_model
/// recovers them bit for bit.
inline std::string serialize_model(const Model& model) { return model_to_json(model).dump(); }

}  // namespace boxprob
