#pragma once

// Slow definitional reference implementations used only by the tests.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd normal_vector(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> z;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = z(rng);
  return v;
}

inline MatrixXd gauss_gram(const VectorXd& x, double bw) {
  const auto n = x.size();
  MatrixXd k(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) k(i, j) = std::exp(-(x[i] - x[j]) * (x[i] - x[j]) / (2 * bw * bw));
  return k;
}

/// V-statistic HSIC as three plain sums (1/n^2 sum KL + 1/n^4 sum K sum L - 2/n^3 sum K_ij L_im).
inline double hsic_sums(const MatrixXd& k, const MatrixXd& l) {
  const double n = static_cast<double>(k.rows());
  const int m = static_cast<int>(k.rows());
  double s1 = 0, s2k = 0, s2l = 0, s3 = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      s1 += k(i, j) * l(i, j);
      s2k += k(i, j);
      s2l += l(i, j);
      for (int q = 0; q < m; ++q) s3 += k(i, j) * l(i, q);
    }
  return s1 / (n * n) + s2k * s2l / (n * n * n * n) - 2 * s3 / (n * n * n);
}

/// Unbiased HSIC by enumerating ordered tuples of distinct indices.
inline double hsic_u_enumerate(const MatrixXd& k, const MatrixXd& l) {
  const int n = static_cast<int>(k.rows());
  double a = 0, b = 0, c = 0;
  double c2 = 0, c3 = 0, c4 = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      a += k(i, j) * l(i, j);
      ++c2;
      for (int q = 0; q < n; ++q) {
        if (q == i || q == j) continue;
        c += k(i, j) * l(i, q);
        ++c3;
        for (int r = 0; r < n; ++r) {
          if (r == i || r == j || r == q) continue;
          b += k(i, j) * l(q, r);
          ++c4;
        }
      }
    }
  return a / c2 + b / c4 - 2 * c / c3;
}

/// Angle at vertex x_r between x_i and x_l, with the zero conventions.
inline double angle(const VectorXd& x, int i, int l, int r) {
  if (i == r || l == r) return 0.0;
  const double a = x[i] - x[r], b = x[l] - x[r];
  if (a == 0.0 || b == 0.0) return 0.0;
  double c = a * b / (std::abs(a) * std::abs(b));
  c = std::max(-1.0, std::min(1.0, c));
  return std::acos(c);
}

/// Pcov_v^2 = S1 + S2 - 2 S3 as written, with 1/n^3 normalisation on S1.
inline double pcov_sums(const VectorXd& x, const VectorXd& y) {
  const int n = static_cast<int>(x.size());
  const double dn = n;
  double s1 = 0, s2 = 0, s3 = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) s1 += angle(x, i, l, j) * angle(y, i, l, j);
  for (int l = 0; l < n; ++l) {
    double sx = 0, sy = 0;
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < n; ++m) {
        sx += angle(x, i, m, l);
        sy += angle(y, i, m, l);
      }
    s2 += sx * sy;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l)
        for (int m = 0; m < n; ++m) s3 += angle(x, i, m, l) * angle(y, j, m, l);
  return s1 / (dn * dn * dn) + s2 / std::pow(dn, 5) - 2 * s3 / std::pow(dn, 4);
}

inline double pc_sums(const VectorXd& x, const VectorXd& y) {
  return pcov_sums(x, y) / std::sqrt(pcov_sums(x, x) * pcov_sums(y, y));
}

/// Random well-posed system: J in [0,1], K a correlation-like PSD matrix with unit diagonal.
struct QuadSystem {
  VectorXd j;
  MatrixXd k;
};

inline QuadSystem random_system(std::mt19937_64& rng, int p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MatrixXd a(p + 3, p);
  std::normal_distribution<double> z;
  for (int i = 0; i < a.rows(); ++i)
    for (int c = 0; c < p; ++c) a(i, c) = z(rng);
  MatrixXd k = a.transpose() * a;
  VectorXd d = k.diagonal().cwiseSqrt().cwiseInverse();
  k = d.asDiagonal() * k * d.asDiagonal();
  QuadSystem s;
  s.k = k;
  s.j = VectorXd(p);
  for (int c = 0; c < p; ++c) s.j[c] = u(rng);
  return s;
}

/// Exhaustive active-set minimiser of c - theta'J + theta'K theta/2 + w'theta over theta >= 0.
inline VectorXd enumerate_nonneg_qp(const VectorXd& j, const MatrixXd& k, const VectorXd& w, double c = 0.5) {
  const int p = static_cast<int>(j.size());
  VectorXd best = VectorXd::Zero(p);
  double best_val = c;
  for (int mask = 1; mask < (1 << p); ++mask) {
    std::vector<int> idx;
    for (int q = 0; q < p; ++q)
      if (mask & (1 << q)) idx.push_back(q);
    const int m = static_cast<int>(idx.size());
    MatrixXd ka(m, m);
    VectorXd rhs(m);
    for (int a = 0; a < m; ++a) {
      rhs[a] = j[idx[a]] - w[idx[a]];
      for (int b = 0; b < m; ++b) ka(a, b) = k(idx[a], idx[b]);
    }
    const VectorXd sol = ka.ldlt().solve(rhs);
    if ((sol.array() < 0).any()) continue;
    VectorXd theta = VectorXd::Zero(p);
    for (int a = 0; a < m; ++a) theta[idx[a]] = sol[a];
    const double val = c - j.dot(theta) + 0.5 * theta.dot(k * theta) + w.dot(theta);
    if (val < best_val) {
      best_val = val;
      best = theta;
    }
  }
  return best;
}

}  // namespace oracle
