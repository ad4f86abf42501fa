#pragma once

// Second-order Gaussian model-X knockoffs (equicorrelated construction),
// importance scores and the knockoff+ threshold / selection rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "smrmr/common.hpp"
#include "smrmr/solver.hpp"

namespace smrmr {

struct KnockoffMatrix {
  DataMatrix xk;
  Vector s_vec;
  Vector mu_hat;
  Matrix sigma_hat;
  /// Shrinkage intensity toward the diagonal applied to the sample covariance.
  double shrinkage = 0.0;
};

struct KnockoffReport {
  Vector w;
  double threshold = std::numeric_limits<double>::infinity();
  IndexSet selected;
  double fdp_hat = 0.0;
  double alpha_used = 0.0;
};

inline constexpr double kMinCorrEigen = 1e-6;

namespace detail {

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "eigen-decomposition failed");
  return es.eigenvalues()[0];
}

}  // namespace detail

/// Sample mean and covariance (n-1 denominator), shrunk toward the diagonal
/// just enough that the correlation matrix has smallest eigenvalue >= 1e-6.
/// Returns the shrinkage intensity used.
inline double estimate_moments(const DataMatrix& x, Vector& mu, Matrix& sigma) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw Error(ErrorCode::InvalidInput, "knockoffs: need at least two rows");
  if (!x.allFinite()) throw Error(ErrorCode::InvalidInput, "knockoffs: non-finite input");
  mu = x.colwise().mean().transpose();
  const DataMatrix centred = x.rowwise() - mu.transpose();
  sigma = (centred.transpose() * centred) / static_cast<double>(n - 1);
  const Vector sd = sigma.diagonal().cwiseSqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd[j] > 0.0))
      throw Error(ErrorCode::DegenerateFeature, "knockoffs: feature " + std::to_string(j) + " has zero variance",
                  static_cast<std::size_t>(j));
  const Vector inv_sd = sd.cwiseInverse();
  Matrix corr = inv_sd.asDiagonal() * sigma * inv_sd.asDiagonal();
  corr.diagonal().setOnes();
  const double lmin = detail::min_eigenvalue(corr);
  double gamma = 0.0;
  if (lmin < kMinCorrEigen) {
    // lambda_min((1-g) R + g I) = (1-g) lambda_min + g
    gamma = std::min(1.0, (kMinCorrEigen - lmin) / (1.0 - lmin));
    corr = (1.0 - gamma) * corr;
    corr.diagonal().array() += gamma;
    sigma = sd.asDiagonal() * corr * sd.asDiagonal();
  }
  return gamma;
}

/// Draw X~ given X: conditional mean X - (X - mu) Sigma^-1 D_s, conditional
/// covariance 2 D_s - D_s Sigma^-1 D_s with s_j = min(2 lambda_min(R), 1) sigma_jj.
inline KnockoffMatrix sample_knockoffs(const DataMatrix& x, std::uint64_t seed) {
  KnockoffMatrix km;
  km.shrinkage = estimate_moments(x, km.mu_hat, km.sigma_hat);
  const Eigen::Index n = x.rows(), p = x.cols();

  const Vector sd = km.sigma_hat.diagonal().cwiseSqrt();
  const Vector inv_sd = sd.cwiseInverse();
  const Matrix corr = inv_sd.asDiagonal() * km.sigma_hat * inv_sd.asDiagonal();
  const double s_corr = std::min(2.0 * detail::min_eigenvalue(corr), 1.0);
  if (!(s_corr > 0.0)) throw Error(ErrorCode::NumericalFailure, "knockoffs: covariance is singular after shrinkage");
  km.s_vec = s_corr * km.sigma_hat.diagonal();

  const Eigen::LDLT<Matrix> ldlt(km.sigma_hat);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw Error(ErrorCode::NumericalFailure, "knockoffs: covariance factorisation failed");
  const Matrix sinv_ds = ldlt.solve(Matrix(km.s_vec.asDiagonal()));  // Sigma^-1 D_s
  if (!sinv_ds.allFinite()) throw Error(ErrorCode::NumericalFailure, "knockoffs: covariance solve failed");

  Matrix cond_cov = -(km.s_vec.asDiagonal() * sinv_ds);
  cond_cov.diagonal() += 2.0 * km.s_vec;
  cond_cov = 0.5 * (cond_cov + cond_cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(cond_cov);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "knockoffs: eigen-decomposition failed");
  const Matrix root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  const DataMatrix centred = x.rowwise() - km.mu_hat.transpose();
  km.xk = x - centred * sinv_ds;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  DataMatrix noise(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) noise(i, j) = z(rng);
  km.xk += noise * root.transpose();
  return km;
}

struct MomentDiagnostics {
  /// Largest |empirical - target| over the entries of the 2p x 2p joint covariance.
  double max_abs_cov_error = 0.0;
  /// Same, restricted to the cross block cov(X, X~) against Sigma - D_s.
  double max_abs_cross_error = 0.0;
  /// Largest |mean(X~_j) - mean(X_j)|.
  double max_abs_mean_error = 0.0;
  Matrix target;
  Matrix empirical;
};

/// Compares the empirical joint covariance of (X, X~) with
/// [[Sigma, Sigma - D_s], [Sigma - D_s, Sigma]] built from the fitted moments.
inline MomentDiagnostics moment_diagnostics(const DataMatrix& x, const KnockoffMatrix& km) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (km.xk.rows() != n || km.xk.cols() != p) throw Error(ErrorCode::InvalidInput, "diagnostics: shape mismatch");
  DataMatrix joint(n, 2 * p);
  joint << x, km.xk;
  const Vector mean = joint.colwise().mean().transpose();
  const DataMatrix c = joint.rowwise() - mean.transpose();
  MomentDiagnostics d;
  d.empirical = (c.transpose() * c) / static_cast<double>(n - 1);
  Matrix cross = km.sigma_hat;
  cross.diagonal() -= km.s_vec;
  d.target.resize(2 * p, 2 * p);
  d.target << km.sigma_hat, cross, cross, km.sigma_hat;
  d.max_abs_cov_error = (d.empirical - d.target).cwiseAbs().maxCoeff();
  d.max_abs_cross_error = (d.empirical.block(0, p, p, p) - cross).cwiseAbs().maxCoeff();
  d.max_abs_mean_error = (mean.tail(p) - mean.head(p)).cwiseAbs().maxCoeff();
  return d;
}

/// w_k = theta_k - theta_{p+k} for a joint fit of dimension 2p.
inline Vector importance_scores(const Vector& theta_joint) {
  if (theta_joint.size() % 2 != 0) throw Error(ErrorCode::InvalidInput, "importance_scores: odd dimension");
  const Eigen::Index p = theta_joint.size() / 2;
  return theta_joint.head(p) - theta_joint.tail(p);
}

inline Vector importance_scores(const Coefficients& joint) { return importance_scores(joint.theta); }

/// Knockoff+ threshold: smallest t among the distinct non-zero |w_k| with
/// (1 + #{w <= -t}) / max(1, #{w >= t}) <= alpha; +inf if none qualifies.
inline double knockoff_threshold(const Vector& w, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidInput, "knockoff_threshold: alpha must lie in (0, 1]");
  std::vector<double> sorted(w.data(), w.data() + w.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cand;
  for (double v : sorted)
    if (v != 0.0) cand.push_back(std::abs(v));
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  for (double t : cand) {
    const auto neg = std::upper_bound(sorted.begin(), sorted.end(), -t) - sorted.begin();
    const auto pos = sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t);
    if (static_cast<double>(1 + neg) / static_cast<double>(std::max<std::ptrdiff_t>(1, pos)) <= alpha) return t;
  }
  return std::numeric_limits<double>::infinity();
}

namespace detail {

inline KnockoffReport report_at(const Vector& w, double alpha) {
  KnockoffReport r;
  r.w = w;
  r.alpha_used = alpha;
  r.threshold = knockoff_threshold(w, alpha);
  if (std::isfinite(r.threshold)) {
    std::size_t neg = 0;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      if (w[k] >= r.threshold) r.selected.push_back(static_cast<std::size_t>(k));
      if (w[k] <= -r.threshold) ++neg;
    }
    r.fdp_hat = static_cast<double>(neg) / static_cast<double>(std::max<std::size_t>(1, r.selected.size()));
  }
  return r;
}

}  // namespace detail

inline constexpr double kAlphaStep = 0.05;

/// Knockoff+ selection at level alpha. With escalate, alpha is raised in steps
/// of 0.05 while the selection is empty; if it is still empty at alpha = 1 the
/// single feature with the largest score is returned (threshold reported as +inf).
inline KnockoffReport select(const Vector& w, double alpha, bool escalate) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidInput, "select: alpha must lie in (0, 1)");
  KnockoffReport r = detail::report_at(w, alpha);
  if (!escalate || !r.selected.empty() || w.size() == 0) return r;
  for (int step = 1;; ++step) {
    // alpha0 + k * step, rounded so that repeated steps land on the decimal grid
    const double a = std::min(1.0, std::round((alpha + step * kAlphaStep) * 1e12) / 1e12);
    r = detail::report_at(w, a);
    if (!r.selected.empty()) return r;
    if (a >= 1.0) break;
  }
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < w.size(); ++k)
    if (w[k] > w[best]) best = k;
  r.selected = {static_cast<std::size_t>(best)};
  r.threshold = std::numeric_limits<double>::infinity();
  r.fdp_hat = 0.0;
  r.alpha_used = 1.0;
  return r;
}

}  // namespace smrmr
