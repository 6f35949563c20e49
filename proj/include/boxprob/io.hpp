#pragma once

// File formats around the engine: uncertainty documents and sample CSVs.
//
// Uncertainty document (one object, or an array with one object per sample):
//   {"kind": "mvn", "cov": [[...]], "mean": [...], "additive": true}
//   {"kind": "norta", "marginals": [{"family": ..., ...}], "spearman": [[...]],
//    "additive": false}
// With "additive" the distribution describes the noise and is centred on
// the sample: an mvn "mean" becomes an offset (default zeros), norta
// marginals are translated by the sample. "additive" defaults to true for
// mvn and false for norta.
//
// Marginal parameters by family:
//   normal      mean, sd
//   lognormal   mu, sigma, loc (default 0)
//   exponential rate, loc (default 0)
//   chi_square  k, loc (default 0), scale (default 1)
//   uniform     low, high

#include <charconv>
#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "boxprob/error.hpp"
#include "boxprob/model.hpp"
#include "boxprob/mvn.hpp"
#include "boxprob/norta.hpp"
#include "boxprob/robustness.hpp"

namespace boxprob {

struct MvnSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  bool additive = true;
};

struct NortaSpec {
  std::vector<MarginalDistribution> marginals;
  Eigen::MatrixXd spearman;
  bool additive = false;
};

/// Parsed uncertainty document entry; resolved against a sample with
/// `resolve_uncertainty`.
using UncertaintySpec = std::variant<MvnSpec, NortaSpec>;

inline std::size_t dims_of(const UncertaintySpec& u) {
  if (const auto* m = std::get_if<MvnSpec>(&u)) return static_cast<std::size_t>(m->cov.rows());
  return std::get<NortaSpec>(u).marginals.size();
}

namespace detail {

using nlohmann::json;

inline double optional_real(const json& obj, const char* key, double fallback, const std::string& path) {
  auto it = obj.find(key);
  return it == obj.end() ? fallback : as_real(*it, path + "." + key);
}

inline Eigen::VectorXd parse_vector(const json& v, const std::string& path) {
  if (!v.is_array()) throw ParseError(path + ": expected an array");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = as_real(v[i], path + "[" + std::to_string(i) + "]");
  }
  return out;
}

inline Eigen::MatrixXd parse_matrix(const json& v, const std::string& path) {
  if (!v.is_array()) throw ParseError(path + ": expected an array of rows");
  const auto n = static_cast<Eigen::Index>(v.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const json& row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) {
      throw ParseError(row_path + ": expected a row of " + std::to_string(n) + " numbers");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      out(i, j) = as_real(row[static_cast<std::size_t>(j)], row_path + "[" + std::to_string(j) + "]");
    }
  }
  return out;
}

inline bool optional_bool(const json& obj, const char* key, bool fallback, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) throw ParseError(path + "." + key + ": expected true or false");
  return it->get<bool>();
}

inline MarginalDistribution parse_marginal(const json& m, const std::string& path) {
  const json& family = member(m, "family", path);
  if (!family.is_string()) throw ParseError(path + ".family: expected a string");
  const auto name = family.get<std::string>();
  auto real = [&](const char* key) { return as_real(member(m, key, path), path + "." + key); };
  try {
    if (name == "normal") return MarginalDistribution::normal(real("mean"), real("sd"));
    if (name == "lognormal") {
      return MarginalDistribution::lognormal(real("mu"), real("sigma"), optional_real(m, "loc", 0.0, path));
    }
    if (name == "exponential") {
      return MarginalDistribution::exponential(real("rate"), optional_real(m, "loc", 0.0, path));
    }
    if (name == "chi_square") {
      return MarginalDistribution::chi_square(real("k"), optional_real(m, "loc", 0.0, path),
                                              optional_real(m, "scale", 1.0, path));
    }
    if (name == "uniform") return MarginalDistribution::uniform(real("low"), real("high"));
  } catch (const InvalidArgument& e) {
    throw ParseError(path + ": " + e.what());
  }
  throw ParseError(path + ".family: unknown family \"" + name + "\"");
}

inline UncertaintySpec parse_uncertainty_entry(const json& doc, const std::string& path) {
  const json& kind = member(doc, "kind", path);
  if (kind == "mvn") {
    MvnSpec spec;
    spec.cov = parse_matrix(member(doc, "cov", path), path + ".cov");
    if (spec.cov.rows() == 0) throw ParseError(path + ".cov: empty matrix");
    auto mean = doc.find("mean");
    spec.mean = mean == doc.end() ? Eigen::VectorXd::Zero(spec.cov.rows()) : parse_vector(*mean, path + ".mean");
    if (spec.mean.size() != spec.cov.rows()) {
      throw ParseError(path + ".mean: has " + std::to_string(spec.mean.size()) + " entries, cov is " +
                       std::to_string(spec.cov.rows()) + "x" + std::to_string(spec.cov.rows()));
    }
    spec.additive = optional_bool(doc, "additive", true, path);
    return spec;
  }
  if (kind == "norta") {
    NortaSpec spec;
    const json& marginals = member(doc, "marginals", path);
    if (!marginals.is_array() || marginals.empty()) throw ParseError(path + ".marginals: expected a non-empty array");
    for (std::size_t i = 0; i < marginals.size(); ++i) {
      spec.marginals.push_back(parse_marginal(marginals[i], path + ".marginals[" + std::to_string(i) + "]"));
    }
    const auto n = static_cast<Eigen::Index>(spec.marginals.size());
    auto spearman = doc.find("spearman");
    spec.spearman =
        spearman == doc.end() ? Eigen::MatrixXd::Identity(n, n) : parse_matrix(*spearman, path + ".spearman");
    if (spec.spearman.rows() != n) {
      throw ParseError(path + ".spearman: must be " + std::to_string(n) + "x" + std::to_string(n));
    }
    spec.additive = optional_bool(doc, "additive", false, path);
    return spec;
  }
  throw ParseError(path + ".kind: expected \"mvn\" or \"norta\"");
}

}  // namespace detail

/// Entries of an uncertainty document: one shared entry, or one per sample.
inline std::vector<UncertaintySpec> uncertainty_from_json(const nlohmann::json& doc) {
  std::vector<UncertaintySpec> out;
  if (doc.is_array()) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      out.push_back(detail::parse_uncertainty_entry(doc[i], "$[" + std::to_string(i) + "]"));
    }
  } else {
    out.push_back(detail::parse_uncertainty_entry(doc, "$"));
  }
  return out;
}

inline std::vector<UncertaintySpec> parse_uncertainty(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("uncertainty document is not valid JSON: ") + e.what());
  }
  return uncertainty_from_json(doc);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

inline std::vector<UncertaintySpec> load_uncertainty(const std::string& path) {
  try {
    return parse_uncertainty(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/// The distribution of the perturbed input for `sample`.
inline Uncertainty resolve_uncertainty(const UncertaintySpec& spec, std::span<const double> sample) {
  if (dims_of(spec) != sample.size()) {
    throw DimensionError("uncertainty has " + std::to_string(dims_of(spec)) + " dimensions, sample has " +
                         std::to_string(sample.size()));
  }
  if (const auto* m = std::get_if<MvnSpec>(&spec)) {
    Eigen::VectorXd mean = m->mean;
    if (m->additive) mean += Eigen::Map<const Eigen::VectorXd>(sample.data(), static_cast<Eigen::Index>(sample.size()));
    return Gaussian(std::move(mean), m->cov);
  }
  const auto& n = std::get<NortaSpec>(spec);
  NortaModel model(n.marginals, n.spearman);
  return n.additive ? model.shifted(sample) : model;
}

/// True when box masses factor into per-dimension probabilities.
inline bool is_independent(const Uncertainty& u) {
  if (const auto* g = std::get_if<Gaussian>(&u)) return g->is_diagonal();
  return std::get<NortaModel>(u).independent();
}

struct SampleRow {
  /// 1-based line in the source file.
  std::size_t line = 0;
  std::vector<double> values;
  /// Set when the row could not be parsed; `values` is then empty.
  std::optional<std::string> error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Comma-separated samples, one per line. A first line that is not numeric
/// is taken as a header; blank lines are skipped. Malformed rows are
/// returned with `error` set so callers can report them per sample.
inline std::vector<SampleRow> parse_samples_csv(std::string_view text) {
  std::vector<SampleRow> rows;
  std::size_t line_no = 0;
  bool first_content = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = detail::trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    SampleRow row;
    row.line = line_no;
    std::size_t column = 0;
    for (std::string_view rest = line;; ++column) {
      const auto comma = rest.find(',');
      const auto field = rest.substr(0, comma);
      const auto value = detail::parse_double(field);
      if (!value) {
        row.values.clear();
        row.error = "line " + std::to_string(line_no) + ", column " + std::to_string(column + 1) +
                    ": not a number: \"" + std::string(detail::trim(field)) + "\"";
        break;
      }
      row.values.push_back(*value);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    const bool header = first_content && row.error;
    first_content = false;
    if (!header) rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<SampleRow> load_samples_csv(const std::string& path) {
  auto rows = parse_samples_csv(read_file(path));
  for (auto& row : rows) {
    if (row.error) row.error = path + ": " + *row.error;
  }
  return rows;
}

}  // namespace boxprob
