#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "smrmr/common.hpp"

namespace smrmr {

struct PenaltySpec {
  enum class Kind { None, Lasso, Scad, Mcp };

  Kind kind = Kind::None;
  double lambda = 0.0;
  double a_scad = 3.7;
  double b_mcp = 3.0;

  static PenaltySpec none() { return {}; }
  static PenaltySpec lasso(double lambda) { return {Kind::Lasso, lambda}; }
  static PenaltySpec scad(double lambda, double a = 3.7) { return {Kind::Scad, lambda, a}; }
  static PenaltySpec mcp(double lambda, double b = 3.0) { return {Kind::Mcp, lambda, 3.7, b}; }

  PenaltySpec with_lambda(double l) const {
    PenaltySpec p = *this;
    p.lambda = l;
    return p;
  }

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidInput, "penalty: lambda must be >= 0");
    if (kind == Kind::Scad && !(a_scad > 2.0)) throw Error(ErrorCode::InvalidInput, "penalty: SCAD needs a > 2");
    if (kind == Kind::Mcp && !(b_mcp > 0.0)) throw Error(ErrorCode::InvalidInput, "penalty: MCP needs b > 0");
  }

  bool operator==(const PenaltySpec&) const = default;
};

inline std::string to_string(PenaltySpec::Kind k) {
  switch (k) {
    case PenaltySpec::Kind::None: return "none";
    case PenaltySpec::Kind::Lasso: return "lasso";
    case PenaltySpec::Kind::Scad: return "scad";
    case PenaltySpec::Kind::Mcp: return "mcp";
  }
  return "none";
}

inline PenaltySpec::Kind penalty_kind_from_string(const std::string& s) {
  if (s == "none") return PenaltySpec::Kind::None;
  if (s == "lasso" || s == "l1") return PenaltySpec::Kind::Lasso;
  if (s == "scad") return PenaltySpec::Kind::Scad;
  if (s == "mcp") return PenaltySpec::Kind::Mcp;
  throw Error(ErrorCode::InvalidInput, "unknown penalty kind '" + s + "'");
}

namespace detail {
inline void check_nonneg(double x) {
  if (!(x >= 0.0)) throw Error(ErrorCode::InvalidInput, "penalty evaluated at a negative argument");
}
}  // namespace detail

// Knots belong to the left branch.
inline double penalty_value(const PenaltySpec& pen, double x) {
  detail::check_nonneg(x);
  const double l = pen.lambda;
  switch (pen.kind) {
    case PenaltySpec::Kind::None:
      return 0.0;
    case PenaltySpec::Kind::Lasso:
      return l * x;
    case PenaltySpec::Kind::Scad: {
      const double a = pen.a_scad;
      if (x <= l) return l * x;
      if (x <= a * l) return (2.0 * a * l * x - x * x - l * l) / (2.0 * (a - 1.0));
      return 0.5 * (a + 1.0) * l * l;
    }
    case PenaltySpec::Kind::Mcp: {
      const double b = pen.b_mcp;
      if (x <= b * l) return l * x - x * x / (2.0 * b);
      return 0.5 * l * l * b;
    }
  }
  return 0.0;
}

inline double penalty_derivative(const PenaltySpec& pen, double x) {
  detail::check_nonneg(x);
  const double l = pen.lambda;
  switch (pen.kind) {
    case PenaltySpec::Kind::None:
      return 0.0;
    case PenaltySpec::Kind::Lasso:
      return l;
    case PenaltySpec::Kind::Scad:
      if (x <= l) return l;
      return std::max(pen.a_scad * l - x, 0.0) / (pen.a_scad - 1.0);
    case PenaltySpec::Kind::Mcp:
      return std::max(l - x / pen.b_mcp, 0.0);
  }
  return 0.0;
}

inline double penalty_sum(const PenaltySpec& pen, const Vector& theta) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) s += penalty_value(pen, theta[k]);
  return s;
}

}  // namespace smrmr
