#pragma once

// Synthetic benchmark designs: AR(1)-correlated Gaussian features with linear,
// non-linear, count and binary responses.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "smrmr/common.hpp"

namespace smrmr {

enum class DgpId { L1a, L1b, L1c, L1d, N2a, N2b, N2c, C3a, C3b, C3c };
enum class Task { Regression, Classification };

inline constexpr std::array<DgpId, 10> kAllDgps{DgpId::L1a, DgpId::L1b, DgpId::L1c, DgpId::L1d, DgpId::N2a,
                                                DgpId::N2b, DgpId::N2c, DgpId::C3a, DgpId::C3b, DgpId::C3c};

inline std::string to_string(DgpId id) {
  static constexpr std::array<const char*, 10> names{"1a", "1b", "1c", "1d", "2a", "2b", "2c", "3a", "3b", "3c"};
  return names[static_cast<std::size_t>(id)];
}

inline DgpId dgp_from_string(const std::string& s) {
  for (DgpId id : kAllDgps)
    if (to_string(id) == s) return id;
  throw Error(ErrorCode::InvalidInput, "unknown DGP '" + s + "' (expected one of 1a..1d, 2a..2c, 3a..3c)");
}

inline std::string to_string(Task t) { return t == Task::Regression ? "regression" : "classification"; }

enum class PoissonLink { Clamp, Exp };

struct DgpSpec {
  DgpId id = DgpId::L1a;
  int n = 100;
  int p = 100;
  /// Correlation decay; ignored by DGPs that fix it (1a, 1b, 3a, 3b use 0; 1c, 3c use 0.5).
  double c = 0.5;
  std::uint64_t seed = 0;
  /// Rate for 2c: max(sum, 1e-6) or exp(sum).
  PoissonLink poisson_link = PoissonLink::Clamp;
};

struct SynthDataset {
  DataMatrix x;
  Sample y;
  IndexSet true_support;
  Task task = Task::Regression;
};

inline IndexSet dgp_support(DgpId id) {
  switch (id) {
    case DgpId::L1a:
    case DgpId::C3a:
      return {0, 5};
    case DgpId::L1b:
    case DgpId::L1c:
    case DgpId::N2a:
    case DgpId::N2b:
      return {0, 10, 20, 30};
    case DgpId::L1d:
    case DgpId::N2c:
    case DgpId::C3b:
    case DgpId::C3c:
      return {0, 10, 20, 30, 40, 50, 60, 70, 80, 90};
  }
  return {};
}

inline Task dgp_task(DgpId id) {
  return (id == DgpId::C3a || id == DgpId::C3b || id == DgpId::C3c) ? Task::Classification : Task::Regression;
}

/// Correlation decay actually used by a DGP.
inline double dgp_correlation(const DgpSpec& spec) {
  switch (spec.id) {
    case DgpId::L1a:
    case DgpId::L1b:
    case DgpId::C3a:
    case DgpId::C3b:
      return 0.0;
    case DgpId::L1c:
    case DgpId::C3c:
      return 0.5;
    default:
      return spec.c;
  }
}

inline constexpr double kInverseGuard = 1e-3;

/// Binary response of the classification designs: 1{exp(s) > 1}, strict.
inline double exp_label(double s) { return std::exp(s) > 1.0 ? 1.0 : 0.0; }

namespace detail {

/// Rows of N(0, Sigma), Sigma_kl = c^|k-l|, via the AR(1) recursion. Column
/// guard_col (if >= 0) is redrawn while |x| < kInverseGuard.
inline DataMatrix ar_rows(std::mt19937_64& rng, int n, int p, double c, int guard_col) {
  std::normal_distribution<double> z;
  const double tail = std::sqrt(1.0 - c * c);
  DataMatrix x(n, p);
  for (int i = 0; i < n; ++i) {
    double prev = 0.0;
    for (int k = 0; k < p; ++k) {
      double v = k == 0 ? z(rng) : c * prev + tail * z(rng);
      if (k == guard_col)
        while (std::abs(v) < kInverseGuard) v = k == 0 ? z(rng) : c * prev + tail * z(rng);
      x(i, k) = v;
      prev = v;
    }
  }
  return x;
}

inline void check_ar_args(int n, int p, double c) {
  if (n < 2 || p < 1) throw Error(ErrorCode::InvalidInput, "DGP: need n >= 2 and p >= 1");
  if (!(c >= 0.0 && c < 1.0)) throw Error(ErrorCode::InvalidInput, "DGP: correlation c must lie in [0, 1)");
}

}  // namespace detail

inline DataMatrix sample_ar_gaussian(int n, int p, double c, std::uint64_t seed) {
  detail::check_ar_args(n, p, c);
  std::mt19937_64 rng(seed);
  return detail::ar_rows(rng, n, p, c, -1);
}

inline SynthDataset generate(const DgpSpec& spec) {
  const double c = dgp_correlation(spec);
  detail::check_ar_args(spec.n, spec.p, c);
  SynthDataset d;
  d.true_support = dgp_support(spec.id);
  d.task = dgp_task(spec.id);
  if (static_cast<int>(d.true_support.back()) >= spec.p)
    throw Error(ErrorCode::InvalidInput, "DGP " + to_string(spec.id) + " needs p >= " +
                                             std::to_string(d.true_support.back() + 1) + ", got p = " +
                                             std::to_string(spec.p));

  std::mt19937_64 rng(spec.seed);
  d.x = detail::ar_rows(rng, spec.n, spec.p, c, spec.id == DgpId::N2b ? 20 : -1);
  std::normal_distribution<double> eps;
  d.y.resize(spec.n);
  auto sum_support = [&](int i) {
    double s = 0.0;
    for (std::size_t k : d.true_support) s += d.x(i, static_cast<Eigen::Index>(k));
    return s;
  };

  for (int i = 0; i < spec.n; ++i) {
    const auto xi = [&](int k) { return d.x(i, k); };
    double v = 0.0;
    switch (spec.id) {
      case DgpId::L1a:
        v = 4 * xi(0) + 8 * xi(5) + eps(rng);
        break;
      case DgpId::L1b:
      case DgpId::L1c:
        v = xi(0) + 2 * xi(10) + 4 * xi(20) + 8 * xi(30) + eps(rng);
        break;
      case DgpId::L1d:
        v = sum_support(i) + eps(rng);
        break;
      case DgpId::N2a:
        v = 5 * xi(0) + 2 * std::sin(std::numbers::pi * xi(10) / 2) + 2 * xi(20) * (xi(20) > 0 ? 1.0 : 0.0) +
            2 * std::exp(5 * xi(30)) + eps(rng);
        break;
      case DgpId::N2b:
        v = 3 * xi(0) + 3 * std::pow(xi(10), 3) + 3 / xi(20) + 5 * (xi(30) > 0 ? 1.0 : 0.0) + eps(rng);
        break;
      case DgpId::N2c: {
        const double s = sum_support(i);
        const double rate = spec.poisson_link == PoissonLink::Exp ? std::exp(s) : std::max(s, 1e-6);
        std::poisson_distribution<long long> pois(rate);
        v = static_cast<double>(pois(rng));
        break;
      }
      case DgpId::C3a:
        v = exp_label(xi(0) + xi(5));
        break;
      case DgpId::C3b:
      case DgpId::C3c:
        v = exp_label(sum_support(i));
        break;
    }
    d.y[i] = v;
  }
  if (!d.y.allFinite()) throw Error(ErrorCode::NumericalFailure, "DGP produced a non-finite response");
  return d;
}

}  // namespace smrmr
