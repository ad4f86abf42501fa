#pragma once

// Relevance/redundancy system assembly and the non-negative penalised
// quadratic solver (cyclic coordinate descent + local linear approximation).

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smrmr/assoc_measures.hpp"
#include "smrmr/common.hpp"
#include "smrmr/penalties.hpp"

namespace smrmr {

/// Quadratic-program data: loss(theta) = constant - theta'J + theta'K theta / 2.
struct AssocSystem {
  Vector relevance;
  Matrix redundancy;
  MeasureSpec measure;
  /// D_v(Y,Y)/2 = 1/2 for the single-block loss; 0 for the joint knockoff loss.
  double constant = 0.5;

  Eigen::Index dim() const { return relevance.size(); }
};

struct SolverConfig {
  enum class LlaWeight { Derivative, Value };

  int max_cd_iters = 10000;
  double cd_tol = 1e-7;
  int lla_m = 2;
  double lla_eps = 1e-6;
  LlaWeight lla_weight = LlaWeight::Derivative;
  /// Optional Tikhonov term added to diag(K). Off by default: the normalised
  /// measures give a unit diagonal and non-negative entries, so
  /// theta'K theta >= |theta|^2 on the feasible set already.
  double ridge = 0.0;
  /// After coordinate descent, re-solve exactly on the active set and keep the
  /// result when it is feasible, satisfies the inactive KKT conditions and does
  /// not raise the objective.
  bool polish = true;

  void validate() const {
    if (max_cd_iters < 1 || !(cd_tol > 0.0) || lla_m < 1 || !(lla_eps > 0.0) || !(ridge >= 0.0))
      throw Error(ErrorCode::InvalidInput, "solver config: iteration counts and tolerances must be positive");
  }
};

struct Coefficients {
  Vector theta;
  IndexSet support;
  /// Final objective of the problem solved (loss + penalty, ridge included).
  double objective = 0.0;
  bool converged = true;
  int iterations = 0;
  /// Objective after every CD sweep (weighted-L1 solve) or every LLA round (solve_smrmr).
  std::vector<double> trace;
};

inline constexpr double kSupportTol = 1e-10;

inline IndexSet support_of(const Vector& theta, double tol = kSupportTol) {
  IndexSet s;
  for (Eigen::Index k = 0; k < theta.size(); ++k)
    if (theta[k] > tol) s.push_back(static_cast<std::size_t>(k));
  return s;
}

namespace detail {

inline std::vector<FeatureSketch> sketch_columns(const DataMatrix& x, const MeasureSpec& spec,
                                                 std::size_t index_offset = 0) {
  std::vector<FeatureSketch> out;
  out.reserve(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    try {
      out.push_back(make_sketch(x.col(k), spec));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateFeature) throw;
      const std::size_t idx = index_offset + static_cast<std::size_t>(k);
      throw Error(ErrorCode::DegenerateFeature, "feature " + std::to_string(idx) + " is constant: " + e.what(), idx);
    }
  }
  return out;
}

inline FeatureSketch sketch_response(const Sample& y, const MeasureSpec& spec) {
  try {
    return make_sketch(y, spec);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateFeature) throw;
    throw Error(ErrorCode::DegenerateFeature, std::string("response is constant: ") + e.what());
  }
}

/// Relevance and redundancy of one block of features, offsets into a larger system.
inline void fill_block(std::span<const FeatureSketch> feats, const FeatureSketch& response, Eigen::Index offset,
                       AssocSystem& sys) {
  const auto p = static_cast<Eigen::Index>(feats.size());
  for (Eigen::Index k = 0; k < p; ++k) {
    sys.relevance[offset + k] = dependence(feats[static_cast<std::size_t>(k)], response);
    for (Eigen::Index l = k; l < p; ++l) {
      const double d = dependence(feats[static_cast<std::size_t>(k)], feats[static_cast<std::size_t>(l)]);
      sys.redundancy(offset + k, offset + l) = d;
      sys.redundancy(offset + l, offset + k) = d;
    }
  }
}

}  // namespace detail

inline AssocSystem build_system(std::span<const FeatureSketch> features, const FeatureSketch& response,
                                const MeasureSpec& measure) {
  AssocSystem sys;
  const auto p = static_cast<Eigen::Index>(features.size());
  sys.measure = measure;
  sys.relevance = Vector::Zero(p);
  sys.redundancy = Matrix::Zero(p, p);
  sys.constant = 0.5;
  detail::fill_block(features, response, 0, sys);
  return sys;
}

inline AssocSystem build_system(const DataMatrix& x, const Sample& y, const MeasureSpec& measure) {
  measure.validate();
  if (x.rows() != y.size()) throw Error(ErrorCode::InvalidInput, "build_system: row count differs from response length");
  if (x.rows() < 3) throw Error(ErrorCode::InvalidInput, "build_system: need n >= 3");
  const auto feats = detail::sketch_columns(x, measure);
  const auto resp = detail::sketch_response(y, measure);
  return build_system(feats, resp, measure);
}

/// Joint original + knockoff system: stacked relevance, block-diagonal redundancy.
inline AssocSystem build_joint_system(const DataMatrix& x, const DataMatrix& xk, const Sample& y,
                                      const MeasureSpec& measure) {
  measure.validate();
  if (x.rows() != xk.rows() || x.cols() != xk.cols())
    throw Error(ErrorCode::InvalidInput, "build_joint_system: original and knockoff shapes differ");
  if (x.rows() != y.size()) throw Error(ErrorCode::InvalidInput, "build_joint_system: row count differs from response length");
  if (x.rows() < 3) throw Error(ErrorCode::InvalidInput, "build_joint_system: need n >= 3");
  const Eigen::Index p = x.cols();
  const auto resp = detail::sketch_response(y, measure);
  AssocSystem sys;
  sys.measure = measure;
  sys.relevance = Vector::Zero(2 * p);
  sys.redundancy = Matrix::Zero(2 * p, 2 * p);
  sys.constant = 0.0;
  {
    const auto feats = detail::sketch_columns(x, measure);
    detail::fill_block(feats, resp, 0, sys);
  }
  {
    const auto feats = detail::sketch_columns(xk, measure, static_cast<std::size_t>(p));
    detail::fill_block(feats, resp, p, sys);
  }
  return sys;
}

namespace detail {

/// Exact solve of the stationarity equations on the support of theta, one
/// connected component of K's sparsity pattern at a time (so decoupled blocks
/// are solved independently and in a fixed order). Empty if any component is
/// singular or the solution leaves the open orthant.
inline std::optional<Vector> polish_active_set(const AssocSystem& sys, const Vector& weights, double ridge,
                                               const Vector& theta) {
  const Matrix& k = sys.redundancy;
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < theta.size(); ++j)
    if (theta[j] > 0.0) active.push_back(j);
  if (active.empty()) return std::nullopt;

  std::vector<int> comp(active.size(), -1);
  int ncomp = 0;
  for (std::size_t a = 0; a < active.size(); ++a) {
    if (comp[a] >= 0) continue;
    comp[a] = ncomp;
    std::vector<std::size_t> stack{a};
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t b = 0; b < active.size(); ++b)
        if (comp[b] < 0 && k(active[u], active[b]) != 0.0) {
          comp[b] = ncomp;
          stack.push_back(b);
        }
    }
    ++ncomp;
  }

  Vector out = Vector::Zero(theta.size());
  for (int c = 0; c < ncomp; ++c) {
    std::vector<Eigen::Index> idx;
    for (std::size_t a = 0; a < active.size(); ++a)
      if (comp[a] == c) idx.push_back(active[a]);
    const auto m = static_cast<Eigen::Index>(idx.size());
    Matrix ka(m, m);
    Vector rhs(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      const auto ia = idx[static_cast<std::size_t>(a)];
      rhs[a] = sys.relevance[ia] - weights[ia];
      for (Eigen::Index b = 0; b < m; ++b) ka(a, b) = k(ia, idx[static_cast<std::size_t>(b)]);
      ka(a, a) += ridge;
    }
    const Eigen::LDLT<Matrix> ldlt(ka);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    const Vector sol = ldlt.solve(rhs);
    if (!sol.allFinite() || !(sol.array() > 0.0).all()) return std::nullopt;
    for (Eigen::Index a = 0; a < m; ++a) out[idx[static_cast<std::size_t>(a)]] = sol[a];
  }
  return out;
}

inline void check_theta(const AssocSystem& sys, const Vector& theta) {
  if (theta.size() != sys.dim()) throw Error(ErrorCode::InvalidInput, "theta has the wrong dimension");
  for (Eigen::Index k = 0; k < theta.size(); ++k)
    if (!(theta[k] >= 0.0)) throw Error(ErrorCode::InvalidInput, "theta must be non-negative");
}
}  // namespace detail

inline double loss_value(const AssocSystem& sys, const Vector& theta) {
  detail::check_theta(sys, theta);
  return sys.constant - sys.relevance.dot(theta) + 0.5 * theta.dot(sys.redundancy * theta);
}

inline double penalized_objective(const AssocSystem& sys, const PenaltySpec& pen, const Vector& theta,
                                  double ridge = 0.0) {
  return loss_value(sys, theta) + 0.5 * ridge * theta.squaredNorm() + penalty_sum(pen, theta);
}

/// min over theta >= 0 of loss(theta) + sum_k weights_k theta_k, by cyclic
/// coordinate descent in index order, warm-started from theta0.
inline Coefficients solve_weighted_l1(const AssocSystem& sys, const Vector& weights, const SolverConfig& cfg,
                                      const Vector& theta0) {
  cfg.validate();
  const Eigen::Index p = sys.dim();
  if (weights.size() != p || theta0.size() != p) throw Error(ErrorCode::InvalidInput, "solve_weighted_l1: dimension mismatch");
  if ((weights.array() < 0.0).any()) throw Error(ErrorCode::InvalidInput, "solve_weighted_l1: negative weight");
  const Matrix& k = sys.redundancy;
  const Vector diag = k.diagonal().array() + cfg.ridge;
  if ((diag.array() <= 0.0).any())
    throw Error(ErrorCode::NumericalFailure, "solve_weighted_l1: redundancy diagonal must be positive");

  Coefficients out;
  Vector theta = theta0.cwiseMax(0.0);
  Vector grad = k * theta + cfg.ridge * theta;  // (K + ridge I) theta
  auto objective = [&] {
    return sys.constant - sys.relevance.dot(theta) + 0.5 * theta.dot(grad) + weights.dot(theta);
  };

  out.converged = false;
  for (int sweep = 0; sweep < cfg.max_cd_iters; ++sweep) {
    double max_step = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double others = grad[j] - diag[j] * theta[j];
      const double updated = std::max(0.0, (sys.relevance[j] - others - weights[j]) / diag[j]);
      const double step = updated - theta[j];
      if (step != 0.0) {
        grad += k.col(j) * step;
        grad[j] += cfg.ridge * step;
        theta[j] = updated;
        max_step = std::max(max_step, std::abs(step));
      }
    }
    out.iterations = sweep + 1;
    out.trace.push_back(objective());
    if (max_step < cfg.cd_tol) {
      out.converged = true;
      break;
    }
  }
  grad = k * theta + cfg.ridge * theta;
  out.objective = objective();
  if (cfg.polish) {
    if (auto cand = detail::polish_active_set(sys, weights, cfg.ridge, theta)) {
      const Vector cg = k * *cand + cfg.ridge * *cand;
      bool kkt = true;
      for (Eigen::Index j = 0; j < p && kkt; ++j)
        if ((*cand)[j] == 0.0) kkt = sys.relevance[j] - cg[j] - weights[j] <= 1e-12;
      const double f = sys.constant - sys.relevance.dot(*cand) + 0.5 * cand->dot(cg) + weights.dot(*cand);
      // Relative guard only: the two objectives are sums in different orders.
      if (kkt && f <= out.objective + 1e-13 * (1.0 + std::abs(out.objective))) {
        theta = std::move(*cand);
        out.objective = f;
        out.trace.push_back(f);
      }
    }
  }
  out.support = support_of(theta);
  out.theta = std::move(theta);
  return out;
}

/// SmRMR estimate. None/Lasso: one weighted-L1 solve. SCAD/MCP: Lasso
/// initialisation followed by up to lla_m local-linear-approximation rounds.
inline Coefficients solve_smrmr(const AssocSystem& sys, const PenaltySpec& pen, const SolverConfig& cfg) {
  pen.validate();
  cfg.validate();
  const Eigen::Index p = sys.dim();
  const Vector zero = Vector::Zero(p);
  auto finish = [&](Coefficients c) {
    c.objective = penalized_objective(sys, pen, c.theta, cfg.ridge);
    return c;
  };

  if (pen.kind == PenaltySpec::Kind::None) {
    Coefficients c = solve_weighted_l1(sys, zero, cfg, zero);
    c.trace = {penalized_objective(sys, pen, c.theta, cfg.ridge)};
    return finish(std::move(c));
  }
  const Vector lasso_w = Vector::Constant(p, pen.lambda);
  Coefficients current = solve_weighted_l1(sys, lasso_w, cfg, zero);
  if (pen.kind == PenaltySpec::Kind::Lasso) {
    current.trace = {penalized_objective(sys, pen, current.theta, cfg.ridge)};
    return finish(std::move(current));
  }

  bool converged = current.converged;
  int iterations = current.iterations;
  std::vector<double> trace{penalized_objective(sys, pen, current.theta, cfg.ridge)};
  for (int round = 0; round < cfg.lla_m; ++round) {
    Vector w(p);
    for (Eigen::Index j = 0; j < p; ++j)
      w[j] = cfg.lla_weight == SolverConfig::LlaWeight::Derivative ? penalty_derivative(pen, current.theta[j])
                                                                    : penalty_value(pen, current.theta[j]);
    Coefficients next = solve_weighted_l1(sys, w, cfg, current.theta);
    converged = converged && next.converged;
    iterations += next.iterations;
    trace.push_back(penalized_objective(sys, pen, next.theta, cfg.ridge));
    const double change = (next.theta - current.theta).norm();
    current = std::move(next);
    if (change < cfg.lla_eps) break;
  }
  current.converged = converged;
  current.iterations = iterations;
  current.trace = std::move(trace);
  return finish(std::move(current));
}

}  // namespace smrmr
