#pragma once

// Correlated non-normal uncertainty through a Gaussian copula ("normal to
// anything"). Box boundaries are mapped into standard-normal space with
// z = Phi^-1(F_i(x)); the copula correlation is the Pearson equivalent of
// the given Spearman matrix.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/exponential.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/uniform.hpp>

#include "boxprob/box.hpp"
#include "boxprob/error.hpp"
#include "boxprob/mvn.hpp"
#include "boxprob/normal.hpp"

namespace boxprob {

enum class MarginalFamily { normal, lognormal, exponential, chi_square, uniform };

inline const char* to_string(MarginalFamily f) {
  switch (f) {
    case MarginalFamily::normal: return "normal";
    case MarginalFamily::lognormal: return "lognormal";
    case MarginalFamily::exponential: return "exponential";
    case MarginalFamily::chi_square: return "chi_square";
    case MarginalFamily::uniform: return "uniform";
  }
  return "?";
}

/// Continuous marginal of one perturbed feature, in feature units.
///
/// Parameters per family (loc shifts the support, scale stretches it):
///   normal       mean, sd
///   lognormal    mu, sigma (of log(x - loc)), loc
///   exponential  rate, loc
///   chi_square   k, loc, scale
///   uniform      low, high
class MarginalDistribution {
 public:
  static MarginalDistribution normal(double mean, double sd) {
    require(sd > 0.0, "normal: sd must be > 0");
    return {MarginalFamily::normal, mean, sd, 0.0, 1.0};
  }
  static MarginalDistribution lognormal(double mu, double sigma, double loc = 0.0) {
    require(sigma > 0.0, "lognormal: sigma must be > 0");
    return {MarginalFamily::lognormal, mu, sigma, loc, 1.0};
  }
  static MarginalDistribution exponential(double rate, double loc = 0.0) {
    require(rate > 0.0, "exponential: rate must be > 0");
    return {MarginalFamily::exponential, rate, 0.0, loc, 1.0};
  }
  static MarginalDistribution chi_square(double k, double loc = 0.0, double scale = 1.0) {
    require(k > 0.0, "chi_square: k must be > 0");
    require(scale > 0.0, "chi_square: scale must be > 0");
    return {MarginalFamily::chi_square, k, 0.0, loc, scale};
  }
  static MarginalDistribution uniform(double low, double high) {
    require(low < high, "uniform: requires low < high");
    return {MarginalFamily::uniform, low, high, 0.0, 1.0};
  }

  MarginalFamily family() const { return family_; }
  double p1() const { return p1_; }
  double p2() const { return p2_; }
  double loc() const { return loc_; }
  double scale() const { return scale_; }

  /// Same distribution translated by `delta`.
  MarginalDistribution shifted(double delta) const {
    MarginalDistribution m = *this;
    switch (family_) {
      case MarginalFamily::normal: m.p1_ += delta; break;
      case MarginalFamily::uniform:
        m.p1_ += delta;
        m.p2_ += delta;
        break;
      default: m.loc_ += delta; break;
    }
    return m;
  }

  double support_lower() const {
    switch (family_) {
      case MarginalFamily::normal: return -kInf;
      case MarginalFamily::uniform: return p1_;
      default: return loc_;
    }
  }

  double support_upper() const { return family_ == MarginalFamily::uniform ? p2_ : kInf; }

  double cdf(double x) const {
    if (x <= support_lower()) return 0.0;
    if (x >= support_upper()) return 1.0;
    return visit([&](const auto& d) { return boost::math::cdf(d, standardize(x)); });
  }

  /// 1 - cdf(x), accurate in the upper tail.
  double ccdf(double x) const {
    if (x <= support_lower()) return 1.0;
    if (x >= support_upper()) return 0.0;
    return visit([&](const auto& d) { return boost::math::cdf(boost::math::complement(d, standardize(x))); });
  }

  /// Inverse CDF; p = 0 / 1 map to the support ends.
  double quantile(double p) const {
    if (p <= 0.0) return support_lower();
    if (p >= 1.0) return support_upper();
    if (p > 0.5) return quantile_upper(1.0 - p);
    return unstandardize(visit([&](const auto& d) { return boost::math::quantile(d, p); }));
  }

  /// x with ccdf(x) = q.
  double quantile_upper(double q) const {
    if (q <= 0.0) return support_upper();
    if (q >= 1.0) return support_lower();
    return unstandardize(visit([&](const auto& d) { return boost::math::quantile(boost::math::complement(d, q)); }));
  }

  /// Phi^-1(F(x)), computed through the tail that keeps precision.
  double to_normal_score(double x) const {
    const double p = cdf(x);
    if (p <= 0.0) return -kInf;
    if (p >= 1.0) return kInf;
    if (p > 0.5) return normal_quantile_upper(ccdf(x));
    return normal_quantile(p);
  }

  /// F^-1(Phi(z)).
  double from_normal_score(double z) const {
    if (z > 0.0) return quantile_upper(univariate_normal_cdf(-z));
    return quantile(univariate_normal_cdf(z));
  }

 private:
  MarginalDistribution(MarginalFamily f, double p1, double p2, double loc, double scale)
      : family_(f), p1_(p1), p2_(p2), loc_(loc), scale_(scale) {
    require(std::isfinite(p1) && std::isfinite(p2) && std::isfinite(loc) && std::isfinite(scale),
            std::string(to_string(f)) + ": parameters must be finite");
  }

  static void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("marginal " + what);
  }

  double standardize(double x) const { return (x - loc_) / scale_; }
  double unstandardize(double u) const { return loc_ + scale_ * u; }

  template <typename Fn>
  double visit(Fn&& fn) const {
    switch (family_) {
      case MarginalFamily::normal: return fn(boost::math::normal_distribution<double>(p1_, p2_));
      case MarginalFamily::lognormal: return fn(boost::math::lognormal_distribution<double>(p1_, p2_));
      case MarginalFamily::exponential: return fn(boost::math::exponential_distribution<double>(p1_));
      case MarginalFamily::chi_square: return fn(boost::math::chi_squared_distribution<double>(p1_));
      case MarginalFamily::uniform: return fn(boost::math::uniform_distribution<double>(p1_, p2_));
    }
    return 0.0;
  }

  MarginalFamily family_;
  double p1_;
  double p2_;
  double loc_;
  double scale_;
};

inline double marginal_cdf(const MarginalDistribution& m, double x) { return m.cdf(x); }
inline double marginal_quantile(const MarginalDistribution& m, double p) { return m.quantile(p); }

/// Pearson correlation of the Gaussian copula with Spearman rank
/// correlation `rho`: 2 sin(rho pi / 6). Exact at rho = -1, 0, 1.
inline double spearman_to_pearson(double rho) {
  if (rho == 1.0 || rho == -1.0) return rho;
  return 2.0 * std::sin(rho * std::numbers::pi / 6.0);
}

class NortaModel {
 public:
  NortaModel(std::vector<MarginalDistribution> marginals, Eigen::MatrixXd spearman)
      : marginals_(std::move(marginals)), spearman_(std::move(spearman)), gaussian_(build(marginals_, spearman_)) {}

  std::size_t dims() const { return marginals_.size(); }
  const std::vector<MarginalDistribution>& marginals() const { return marginals_; }
  const Eigen::MatrixXd& spearman() const { return spearman_; }
  /// Zero-mean unit-diagonal Gaussian in normal-score space.
  const Gaussian& transformed_gaussian() const { return gaussian_; }

  bool independent() const { return spearman_.isIdentity(0.0); }

  /// Every marginal translated by the matching entry of `delta`.
  NortaModel shifted(std::span<const double> delta) const {
    if (delta.size() != dims()) throw DimensionError("NortaModel::shifted: dimension mismatch");
    std::vector<MarginalDistribution> m;
    m.reserve(dims());
    for (std::size_t i = 0; i < dims(); ++i) m.push_back(marginals_[i].shifted(delta[i]));
    return NortaModel(std::move(m), spearman_);
  }

 private:
  static Gaussian build(const std::vector<MarginalDistribution>& marginals, const Eigen::MatrixXd& spearman) {
    const auto n = static_cast<Eigen::Index>(marginals.size());
    if (n == 0) throw InvalidArgument("NortaModel: no marginals");
    if (spearman.rows() != n || spearman.cols() != n) {
      throw DimensionError("NortaModel: spearman matrix must be " + std::to_string(n) + "x" + std::to_string(n));
    }
    Eigen::MatrixXd r(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (spearman(i, i) != 1.0) throw InvalidArgument("NortaModel: spearman diagonal must be 1");
      r(i, i) = 1.0;
      for (Eigen::Index j = 0; j < i; ++j) {
        const double rho = spearman(i, j);
        if (rho != spearman(j, i)) throw InvalidArgument("NortaModel: spearman matrix must be symmetric");
        if (!(rho >= -1.0 && rho <= 1.0)) throw InvalidArgument("NortaModel: spearman entries must lie in [-1, 1]");
        r(i, j) = r(j, i) = spearman_to_pearson(rho);
      }
    }
    return Gaussian(Eigen::VectorXd::Zero(n), std::move(r));
  }

  std::vector<MarginalDistribution> marginals_;
  Eigen::MatrixXd spearman_;
  Gaussian gaussian_;
};

/// Zero mean, unit diagonal, off-diagonals spearman_to_pearson(rho_k).
/// Construction of the NortaModel already rejected non-PD conversions.
inline Gaussian build_transformed_gaussian(const NortaModel& n) { return n.transformed_gaussian(); }

/// Box bounds mapped into standard-normal space; bounds at or beyond the
/// support ends become -inf / +inf.
inline std::pair<std::vector<double>, std::vector<double>> transform_box_bounds(const NortaModel& n, const Box& box) {
  if (box.dims() != n.dims()) throw DimensionError("transform_box_bounds: dimension mismatch");
  std::vector<double> lo(n.dims());
  std::vector<double> hi(n.dims());
  for (std::size_t i = 0; i < n.dims(); ++i) {
    lo[i] = n.marginals()[i].to_normal_score(box.lower[i]);
    hi[i] = n.marginals()[i].to_normal_score(box.upper[i]);
  }
  return {std::move(lo), std::move(hi)};
}

/// Forward NORTA draws: z ~ N(0, R) through the Cholesky factor, then
/// x_i = F_i^-1(Phi(z_i)).
class NortaSampler {
 public:
  explicit NortaSampler(const NortaModel& model) : model_(&model), z_(model.dims()), e_(model.dims()) {}

  template <typename Rng>
  void draw(Rng& rng, std::span<double> out) {
    std::normal_distribution<double> normal;
    for (auto& v : e_) v = normal(rng);
    const auto& l = model_->transformed_gaussian().cholesky();
    z_.noalias() = l.triangularView<Eigen::Lower>() * e_;
    for (std::size_t i = 0; i < model_->dims(); ++i) {
      out[i] = model_->marginals()[i].from_normal_score(z_(static_cast<Eigen::Index>(i)));
    }
  }

 private:
  const NortaModel* model_;
  Eigen::VectorXd z_;
  Eigen::VectorXd e_;
};

/// `count` draws, one row per sample; deterministic given `seed`.
inline std::vector<std::vector<double>> sample_norta(const NortaModel& n, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NortaSampler sampler(n);
  std::vector<std::vector<double>> out(count, std::vector<double>(n.dims()));
  for (auto& row : out) sampler.draw(rng, row);
  return out;
}

}  // namespace boxprob
