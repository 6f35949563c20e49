#pragma once

// Rectangle probabilities of the multivariate normal distribution via the
// sequential conditioning transform to the unit cube (with variable
// prioritization) integrated by a randomly shifted lattice rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "boxprob/box.hpp"
#include "boxprob/error.hpp"
#include "boxprob/lattice.hpp"
#include "boxprob/normal.hpp"

namespace boxprob {

/// N(mean, cov) with a symmetric positive definite covariance.
class Gaussian {
 public:
  Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    const auto n = mean_.size();
    if (n == 0) throw InvalidArgument("Gaussian: zero dimensions");
    if (cov_.rows() != n || cov_.cols() != n) {
      throw DimensionError("Gaussian: covariance is " + std::to_string(cov_.rows()) + "x" +
                           std::to_string(cov_.cols()) + ", mean has " + std::to_string(n) +
                           " entries");
    }
    if (!mean_.allFinite() || !cov_.allFinite()) throw InvalidArgument("Gaussian: non-finite entry");
    const double scale = cov_.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        if (std::abs(cov_(i, j) - cov_(j, i)) > 1e-12 * scale) {
          throw InvalidArgument("Gaussian: covariance is not symmetric");
        }
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success || (llt.matrixL().toDenseMatrix().diagonal().array() <= 0).any()) {
      const double lambda_min = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov_).eigenvalues().minCoeff();
      throw NotPositiveDefinite(
          "covariance matrix is not positive definite (smallest eigenvalue " + std::to_string(lambda_min) + ")",
          lambda_min);
    }
    chol_ = llt.matrixL();
    diagonal_ = cov_.isDiagonal(0.0);
  }

  std::size_t dims() const { return static_cast<std::size_t>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  /// Lower Cholesky factor L with L L^T = cov.
  const Eigen::MatrixXd& cholesky() const { return chol_; }
  bool is_diagonal() const { return diagonal_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  bool diagonal_ = false;
};

struct IntegratorConfig {
  double abs_tol = 1e-6;
  std::size_t n_shifts = 12;
  /// Upper limit on lattice points per shift.
  std::uint64_t max_points = std::uint64_t{1} << 22;
  /// Lattice points per shift in the first round; doubled per refinement.
  std::uint64_t initial_points = std::uint64_t{1} << 5;
  std::uint64_t seed = 0;
};

struct ProbEstimate {
  double value = 0.0;
  /// Three standard errors over the random shifts; 0 for closed forms.
  double err_estimate = 0.0;
  /// Integrand evaluations over all shifts; 0 for closed forms.
  std::uint64_t points_used = 0;
  /// False when abs_tol was not reached within max_points.
  bool converged = true;
};

namespace detail {

struct Standardized {
  double lo;
  double hi;
};

// Genz integrand state after variable prioritization.
struct GenzProblem {
  std::size_t n = 0;
  std::vector<double> a;
  std::vector<double> b;
  Eigen::MatrixXd chol;  // lower triangular, in prioritized order
  double first_prob = 0.0;
};

// Prioritized Cholesky: at each step pick the remaining variable with the
// smallest conditional interval probability given the truncated means of
// the variables already placed. Returns false when the rectangle has zero
// probability.
inline bool prepare_genz(GenzProblem& p, Eigen::MatrixXd sigma) {
  const std::size_t n = p.n;
  p.chol = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  auto& c = p.chol;
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = i;
    double best_prob = std::numeric_limits<double>::infinity();
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      double var = sigma(j, j);
      for (std::size_t k = 0; k < i; ++k) {
        s += c(j, k) * y[k];
        var -= c(j, k) * c(j, k);
      }
      if (!(var > 0.0)) throw NotPositiveDefinite("covariance matrix is not positive definite (Cholesky failure)");
      const double sd = std::sqrt(var);
      const double prob = normal_interval((p.a[j] - s) / sd, (p.b[j] - s) / sd);
      if (prob < best_prob) {
        best_prob = prob;
        best = j;
      }
    }
    if (best != i) {
      std::swap(p.a[i], p.a[best]);
      std::swap(p.b[i], p.b[best]);
      sigma.row(static_cast<Eigen::Index>(i)).swap(sigma.row(static_cast<Eigen::Index>(best)));
      sigma.col(static_cast<Eigen::Index>(i)).swap(sigma.col(static_cast<Eigen::Index>(best)));
      c.row(static_cast<Eigen::Index>(i)).swap(c.row(static_cast<Eigen::Index>(best)));
    }
    double diag = sigma(i, i);
    for (std::size_t k = 0; k < i; ++k) diag -= c(i, k) * c(i, k);
    if (!(diag > 0.0)) throw NotPositiveDefinite("covariance matrix is not positive definite (Cholesky failure)");
    c(i, i) = std::sqrt(diag);
    for (std::size_t j = i + 1; j < n; ++j) {
      double v = sigma(j, i);
      for (std::size_t k = 0; k < i; ++k) v -= c(j, k) * c(i, k);
      c(j, i) = v / c(i, i);
    }
    double s = 0.0;
    for (std::size_t k = 0; k < i; ++k) s += c(i, k) * y[k];
    const double alpha = (p.a[i] - s) / c(i, i);
    const double beta = (p.b[i] - s) / c(i, i);
    const double prob = normal_interval(alpha, beta);
    if (!(prob > 0.0)) return false;
    y[i] = (normal_pdf(alpha) - normal_pdf(beta)) / prob;
    if (i == 0) p.first_prob = prob;
  }
  return true;
}

inline double genz_integrand(const GenzProblem& p, const double* w, double* y) {
  const auto& c = p.chol;
  double f = p.first_prob;
  double alpha = p.a[0] / c(0, 0);
  double beta = p.b[0] / c(0, 0);
  for (std::size_t i = 1; i < p.n; ++i) {
    y[i - 1] = truncated_normal_inverse(alpha, beta, std::clamp(w[i - 1], 0x1p-53, 1.0 - 0x1p-53));
    double s = 0.0;
    for (std::size_t k = 0; k < i; ++k) s += c(i, k) * y[k];
    alpha = (p.a[i] - s) / c(i, i);
    beta = (p.b[i] - s) / c(i, i);
    f *= normal_interval(alpha, beta);
    if (!(f > 0.0)) return 0.0;  // underflow in a far tail
  }
  return f;
}

}  // namespace detail

/// P(lower < X <= upper) for X ~ g. Bounds may be infinite.
///
/// Dimensions with interval (-inf, inf) are marginalized out first. Zero
/// remaining dimensions give exactly 1, one gives the closed form, and a
/// diagonal remaining covariance gives the product of univariate interval
/// probabilities (the transformed integrand is then constant). Boxes whose
/// smallest marginal probability is below 1e-16 give 0 with that bound as
/// the error. Otherwise the prioritized sequential transform is integrated
/// over the unit cube with cfg.n_shifts random shifts of a lattice rule,
/// doubling the lattice until 3 standard errors fall under cfg.abs_tol or
/// cfg.max_points is hit.
inline ProbEstimate mvn_rectangle_probability(const Gaussian& g, std::span<const double> lower,
                                              std::span<const double> upper,
                                              const IntegratorConfig& cfg = {}) {
  const std::size_t dims = g.dims();
  if (lower.size() != dims || upper.size() != dims) {
    throw DimensionError("mvn_rectangle_probability: bounds have " + std::to_string(lower.size()) + "/" +
                         std::to_string(upper.size()) + " entries, Gaussian has " + std::to_string(dims));
  }
  thread_local std::vector<std::size_t> kept;
  kept.clear();
  for (std::size_t i = 0; i < dims; ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i]) {
      throw InvalidArgument("mvn_rectangle_probability: invalid interval in dimension " + std::to_string(i));
    }
    if (lower[i] == upper[i]) return {0.0, 0.0, 0, true};
    if (std::isinf(lower[i]) && std::isinf(upper[i])) continue;
    kept.push_back(i);
  }
  const auto& mu = g.mean();
  const auto& cov = g.cov();
  const std::size_t n = kept.size();
  if (n == 0) return {1.0, 0.0, 0, true};

  bool diagonal = g.is_diagonal();
  if (!diagonal) {
    diagonal = true;
    for (std::size_t r = 0; r < n && diagonal; ++r) {
      for (std::size_t s = 0; s < r; ++s) {
        if (cov(static_cast<Eigen::Index>(kept[r]), static_cast<Eigen::Index>(kept[s])) != 0.0) {
          diagonal = false;
          break;
        }
      }
    }
  }
  if (diagonal) {
    double prob = 1.0;
    for (std::size_t i : kept) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double sd = std::sqrt(cov(ii, ii));
      prob *= normal_interval((lower[i] - mu(ii)) / sd, (upper[i] - mu(ii)) / sd);
    }
    return {prob, 0.0, 0, true};
  }

  // P(box) <= min_i P(a_i < X_i <= b_i); below kNegligible the Genz
  // transform would underflow, so report 0 with that bound as the error.
  constexpr double kNegligible = 1e-16;
  double marginal_bound = 1.0;
  for (std::size_t i : kept) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double sd = std::sqrt(cov(ii, ii));
    marginal_bound = std::min(marginal_bound, normal_interval((lower[i] - mu(ii)) / sd, (upper[i] - mu(ii)) / sd));
  }
  if (marginal_bound < kNegligible) return {0.0, marginal_bound, 0, true};

  detail::GenzProblem problem;
  problem.n = n;
  problem.a.resize(n);
  problem.b.resize(n);
  Eigen::MatrixXd sigma(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto kr = static_cast<Eigen::Index>(kept[r]);
    problem.a[r] = lower[kept[r]] - mu(kr);
    problem.b[r] = upper[kept[r]] - mu(kr);
    for (std::size_t s = 0; s < n; ++s) {
      sigma(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = cov(kr, static_cast<Eigen::Index>(kept[s]));
    }
  }
  if (!detail::prepare_genz(problem, std::move(sigma))) return {0.0, 0.0, 0, true};

  const std::size_t qmc_dims = n - 1;
  const std::size_t shifts = std::max<std::size_t>(cfg.n_shifts, 2);
  ShiftedLattice lattice(qmc_dims, shifts, cfg.seed);
  std::vector<double> sums(shifts, 0.0);
  std::vector<double> w(qmc_dims);
  std::vector<double> y(qmc_dims);
  const std::uint64_t cap = std::min<std::uint64_t>(std::max<std::uint64_t>(cfg.max_points, 1), std::uint64_t{1} << 32);
  std::uint64_t done = 0;
  std::uint64_t size = std::min(std::max<std::uint64_t>(cfg.initial_points, 1), cap);
  ProbEstimate est;
  for (;;) {
    for (std::size_t s = 0; s < shifts; ++s) {
      double acc = 0.0;
      for (std::uint64_t k = done; k < size; ++k) {
        lattice.point(static_cast<std::uint32_t>(k), s, w.data());
        acc += detail::genz_integrand(problem, w.data(), y.data());
      }
      sums[s] += acc;
    }
    done = size;
    double mean = 0.0;
    for (double v : sums) mean += v / static_cast<double>(done);
    mean /= static_cast<double>(shifts);
    double var = 0.0;
    for (double v : sums) {
      const double d = v / static_cast<double>(done) - mean;
      var += d * d;
    }
    var /= static_cast<double>(shifts - 1);
    est.value = std::clamp(mean, 0.0, 1.0);
    est.err_estimate = 3.0 * std::sqrt(var / static_cast<double>(shifts));
    est.points_used = done * shifts;
    if (est.err_estimate <= cfg.abs_tol) {
      est.converged = true;
      break;
    }
    if (done >= cap) {
      est.converged = false;
      break;
    }
    size = std::min(done * 2, cap);
  }
  return est;
}

/// Chi-square quantile with `dof` degrees of freedom.
inline double chi_square_quantile(std::size_t dof, double level) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(static_cast<double>(dof)), level);
}

/// Axis-aligned bounding box of {x : (x - mu)^T cov^-1 (x - mu) <= q} with
/// q the chi-square(N) quantile at `level`; half-width sqrt(q cov_ii).
inline Box confidence_bounding_box(const Gaussian& g, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidArgument("confidence level must lie in (0, 1), got " + std::to_string(level));
  }
  const double q = chi_square_quantile(g.dims(), level);
  Box box;
  box.lower.resize(g.dims());
  box.upper.resize(g.dims());
  for (std::size_t i = 0; i < g.dims(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double half = std::sqrt(q * g.cov()(ii, ii));
    box.lower[i] = g.mean()(ii) - half;
    box.upper[i] = g.mean()(ii) + half;
  }
  return box;
}

}  // namespace boxprob
