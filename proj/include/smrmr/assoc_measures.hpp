#pragma once

// Kernel and projection dependence estimators between scalar samples: Gaussian
// Gram matrices, centred Grams, HSIC (V- and U-statistics), normalised HSIC
// and the squared projection correlation V-statistic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "smrmr/common.hpp"

namespace smrmr {

struct MeasureSpec {
  enum class Kind { NrHsic, PcSquared };

  Kind kind = Kind::PcSquared;
  /// Gaussian kernel width for NrHsic; empty means the median heuristic per sample.
  std::optional<double> bandwidth;
  /// Largest sample size accepted by the projection correlation routines.
  std::size_t max_pc_n = 1000;

  static MeasureSpec nr_hsic(std::optional<double> bw = std::nullopt) {
    MeasureSpec m;
    m.kind = Kind::NrHsic;
    m.bandwidth = bw;
    return m;
  }
  static MeasureSpec pc() { return MeasureSpec{}; }

  void validate() const {
    if (bandwidth && !(*bandwidth > 0.0 && std::isfinite(*bandwidth)))
      throw Error(ErrorCode::InvalidInput, "bandwidth must be positive and finite");
    if (max_pc_n < 3 || max_pc_n > 30000)
      throw Error(ErrorCode::InvalidInput, "max_pc_n must lie in [3, 30000]");
  }
};

inline std::string to_string(MeasureSpec::Kind k) {
  return k == MeasureSpec::Kind::NrHsic ? "hsic" : "pc";
}

namespace detail {

inline void check_sample(const Sample& x, Eigen::Index min_n, const char* who) {
  if (x.size() < min_n)
    throw Error(ErrorCode::InvalidInput,
                std::string(who) + ": need at least " + std::to_string(min_n) + " observations");
  if (!x.allFinite()) throw Error(ErrorCode::InvalidInput, std::string(who) + ": non-finite input");
}

inline void check_pc_size(Eigen::Index n, std::size_t max_n) {
  if (static_cast<std::size_t>(n) > max_n)
    throw Error(ErrorCode::ResourceLimit,
                "projection correlation: n = " + std::to_string(n) + " exceeds the configured limit " +
                    std::to_string(max_n));
}

}  // namespace detail

inline Matrix gaussian_kernel_matrix(const Sample& x, double bandwidth) {
  detail::check_sample(x, 1, "gaussian_kernel_matrix");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw Error(ErrorCode::InvalidInput, "gaussian_kernel_matrix: bandwidth must be positive");
  const Eigen::Index n = x.size();
  const double scale = 1.0 / (2.0 * bandwidth * bandwidth);
  Matrix k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double d = x[i] - x[j];
      k(i, j) = k(j, i) = std::exp(-d * d * scale);
    }
  }
  return k;
}

/// Median of all n(n-1)/2 pairwise absolute differences. Falls back to the
/// smallest positive difference when more than half of the pairs coincide.
inline double median_heuristic_bandwidth(const Sample& x) {
  detail::check_sample(x, 2, "median_heuristic_bandwidth");
  const Eigen::Index n = x.size();
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  double smallest_positive = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::abs(x[i] - x[j]);
      d.push_back(v);
      if (v > 0.0) smallest_positive = std::min(smallest_positive, v);
    }
  if (!std::isfinite(smallest_positive))
    throw Error(ErrorCode::DegenerateFeature, "median heuristic: all values identical");

  const std::size_t m = d.size();
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(m / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (m % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  return med > 0.0 ? med : smallest_positive;
}

struct CenteredGram {
  Matrix entries;
  double frob = 0.0;

  Eigen::Index n() const { return entries.rows(); }
};

/// H K H via K_ij - mean_col_j - mean_row_i + grand mean.
inline CenteredGram center_gram(const Matrix& k) {
  if (k.rows() != k.cols()) throw Error(ErrorCode::InvalidInput, "center_gram: matrix must be square");
  const Eigen::Index n = k.rows();
  const Vector row_mean = k.rowwise().mean();
  const Eigen::RowVectorXd col_mean = k.colwise().mean();
  const double grand = row_mean.mean();
  CenteredGram out;
  out.entries.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) out.entries(i, j) = k(i, j) - col_mean[j] - row_mean[i] + grand;
  const auto e = as_span(out.entries);
  out.frob = std::sqrt(pairwise_dot(e, e));
  return out;
}

/// (1/n^2) sum_ij [Kc]_ij [Lc]_ij.
inline double hsic_v(const CenteredGram& kc, const CenteredGram& lc) {
  if (kc.n() != lc.n()) throw Error(ErrorCode::InvalidInput, "hsic_v: sample sizes differ");
  const double n = static_cast<double>(kc.n());
  return pairwise_dot(as_span(kc.entries), as_span(lc.entries)) / (n * n);
}

/// Unbiased HSIC over tuples drawn without replacement, using the raw Grams.
/// The 3- and 4-tuple sums are reduced to row sums of the off-diagonal Grams.
inline double hsic_u(const Matrix& k, const Matrix& l) {
  if (k.rows() != k.cols() || l.rows() != l.cols() || k.rows() != l.rows())
    throw Error(ErrorCode::InvalidInput, "hsic_u: Gram matrices must be square and of equal size");
  const Eigen::Index n = k.rows();
  if (n < 4) throw Error(ErrorCode::InvalidInput, "hsic_u: need n >= 4");

  Matrix kt = k, lt = l;
  kt.diagonal().setZero();
  lt.diagonal().setZero();
  const double pairs = pairwise_dot(as_span(kt), as_span(lt));  // sum over distinct (i,j)
  const Vector rk = kt.rowwise().sum();
  const Vector rl = lt.rowwise().sum();
  const double row_cross = pairwise_dot(as_span(rk), as_span(rl));
  const double triples = row_cross - pairs;  // sum over distinct (i,j,m) of K_ij L_im
  const double quads = pairwise_sum(as_span(rk)) * pairwise_sum(as_span(rl)) - 4.0 * row_cross + 2.0 * pairs;

  const double nn = static_cast<double>(n);
  return pairs / (nn * (nn - 1.0)) + quads / (nn * (nn - 1.0) * (nn - 2.0) * (nn - 3.0)) -
         2.0 * triples / (nn * (nn - 1.0) * (nn - 2.0));
}

inline CenteredGram centered_gaussian_gram(const Sample& x, const std::optional<double>& bandwidth) {
  const double h = bandwidth ? *bandwidth : median_heuristic_bandwidth(x);
  return center_gram(gaussian_kernel_matrix(x, h));
}

inline double nr_hsic_v(const Sample& x, const Sample& y, const MeasureSpec& spec) {
  detail::check_sample(x, 2, "nr_hsic_v");
  detail::check_sample(y, 2, "nr_hsic_v");
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidInput, "nr_hsic_v: sample sizes differ");
  const CenteredGram kc = centered_gaussian_gram(x, spec.bandwidth);
  const CenteredGram lc = centered_gaussian_gram(y, spec.bandwidth);
  if (kc.frob == 0.0 || lc.frob == 0.0)
    throw Error(ErrorCode::DegenerateFeature, "nr_hsic_v: zero self-dependence");
  // hsic_v(x,x) = frob^2 / n^2, so the n^2 factors cancel.
  return pairwise_dot(as_span(kc.entries), as_span(lc.entries)) / (kc.frob * lc.frob);
}

/// Double-centred arccos angles; entries stored slice-major: (r, i, l).
struct AngleTensor {
  std::size_t n = 0;
  std::vector<double> entries;
  double sqnorm = 0.0;

  double operator()(std::size_t i, std::size_t l, std::size_t r) const { return entries[(r * n + i) * n + l]; }
};

/// Raw projection angle between x_i - x_r and x_l - x_r; zero when either difference vanishes.
inline double projection_angle(double xi, double xl, double xr) {
  const double a = xi - xr, b = xl - xr;
  if (a == 0.0 || b == 0.0) return 0.0;
  const double c = std::clamp((a * b) / (std::abs(a) * std::abs(b)), -1.0, 1.0);
  return std::acos(c);
}

inline AngleTensor angle_tensor(const Sample& x, std::size_t max_n = 1000) {
  detail::check_sample(x, 3, "angle_tensor");
  detail::check_pc_size(x.size(), max_n);
  const std::size_t n = static_cast<std::size_t>(x.size());
  AngleTensor t;
  t.n = n;
  t.entries.assign(n * n * n, 0.0);
  std::vector<double> row_mean(n), col_mean(n);
  for (std::size_t r = 0; r < n; ++r) {
    double* s = t.entries.data() + r * n * n;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < n; ++l)
        s[i * n + l] = (i == r || l == r) ? 0.0 : projection_angle(x[i], x[l], x[r]);
    std::fill(row_mean.begin(), row_mean.end(), 0.0);
    std::fill(col_mean.begin(), col_mean.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < n; ++l) {
        row_mean[i] += s[i * n + l];
        col_mean[l] += s[i * n + l];
      }
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      row_mean[i] /= static_cast<double>(n);
      col_mean[i] /= static_cast<double>(n);
      grand += row_mean[i];
    }
    grand /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < n; ++l) s[i * n + l] += grand - row_mean[i] - col_mean[l];
  }
  t.sqnorm = pairwise_dot(t.entries, t.entries);
  return t;
}

/// Tensor-form PC^2: <Kx, Ly> / sqrt(<Kx, Kx> <Ly, Ly>).
inline double pc_squared_v(const AngleTensor& kx, const AngleTensor& ly) {
  if (kx.n != ly.n) throw Error(ErrorCode::InvalidInput, "pc_squared_v: sample sizes differ");
  if (kx.sqnorm == 0.0 || ly.sqnorm == 0.0)
    throw Error(ErrorCode::DegenerateFeature, "pc_squared_v: zero self-covariance");
  return pairwise_dot(kx.entries, ly.entries) / std::sqrt(kx.sqnorm * ly.sqnorm);
}

/// Per-feature precomputation for the projection correlation.
///
/// For scalar samples every angle is 0 or pi, and slice r of the raw tensor
/// factors as (pi/2)(a a' - s s') with s_i = sign(x_i - x_r), a_i = |s_i|.
/// Centring a slice centres a and s, so the tensor inner product needs only
/// four integer dot products per slice. Everything up to the final ratio is
/// exact integer arithmetic.
class PcFeature {
 public:
  static PcFeature make(const Sample& x, std::size_t max_n = 1000) {
    detail::check_sample(x, 3, "projection correlation");
    detail::check_pc_size(x.size(), max_n);
    PcFeature f;
    const std::size_t n = static_cast<std::size_t>(x.size());
    f.n_ = n;
    f.signs_.resize(n * n);
    f.count_.resize(n);
    f.sum_.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      std::int8_t* s = f.signs_.data() + r * n;
      std::int64_t cnt = 0, sum = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = x[static_cast<Eigen::Index>(i)] - x[static_cast<Eigen::Index>(r)];
        s[i] = static_cast<std::int8_t>((d > 0.0) - (d < 0.0));
        cnt += s[i] != 0;
        sum += s[i];
      }
      f.count_[r] = cnt;
      f.sum_[r] = sum;
    }
    f.self_ = cross_raw(f, f);
    return f;
  }

  std::size_t n() const { return n_; }

  /// n^5 (4/pi^2) Pcov_v(x,x)^2; zero iff the sample is constant.
  double self_raw() const { return self_; }

  /// Pcov_v(x,y)^2 in the usual scaling.
  friend double pcov_v(const PcFeature& a, const PcFeature& b) {
    const double n = static_cast<double>(a.n_);
    return cross_raw(a, b) * (std::numbers::pi * std::numbers::pi / 4.0) / (n * n * n * n * n);
  }

  friend double pc_squared(const PcFeature& a, const PcFeature& b) {
    if (a.self_ == 0.0 || b.self_ == 0.0)
      throw Error(ErrorCode::DegenerateFeature, "pc_squared_v: zero self-covariance");
    return cross_raw(a, b) / std::sqrt(a.self_) / std::sqrt(b.self_);
  }

 private:
  static double cross_raw(const PcFeature& a, const PcFeature& b) {
    if (a.n_ != b.n_) throw Error(ErrorCode::InvalidInput, "pc_squared_v: sample sizes differ");
    const std::size_t n = a.n_;
    const auto nn = static_cast<std::int64_t>(n);
    std::vector<double> per_slice(n);
    for (std::size_t r = 0; r < n; ++r) {
      const std::int8_t* s = a.signs_.data() + r * n;
      const std::int8_t* t = b.signs_.data() + r * n;
      std::int32_t ab = 0, at = 0, sb = 0, st = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t si = s[i], ti = t[i];
        const std::int32_t ai = si * si, bi = ti * ti;
        ab += ai * bi;
        at += ai * ti;
        sb += si * bi;
        st += si * ti;
      }
      const std::int64_t p = nn * ab - a.count_[r] * b.count_[r];
      const std::int64_t q = nn * at - a.count_[r] * b.sum_[r];
      const std::int64_t u = nn * sb - a.sum_[r] * b.count_[r];
      const std::int64_t v = nn * st - a.sum_[r] * b.sum_[r];
      per_slice[r] = static_cast<double>(p * p - q * q - u * u + v * v);
    }
    return pairwise_sum(per_slice);
  }

  std::size_t n_ = 0;
  std::vector<std::int8_t> signs_;
  std::vector<std::int64_t> count_, sum_;
  double self_ = 0.0;
};

inline double pc_squared_v(const Sample& x, const Sample& y, std::size_t max_n = 1000) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidInput, "pc_squared_v: sample sizes differ");
  return pc_squared(PcFeature::make(x, max_n), PcFeature::make(y, max_n));
}

/// Centred Gaussian Gram kept for reuse across many pairs.
class HsicFeature {
 public:
  static HsicFeature make(const Sample& x, const std::optional<double>& bandwidth) {
    detail::check_sample(x, 2, "nr-HSIC");
    HsicFeature f;
    f.gram_ = centered_gaussian_gram(x, bandwidth);
    return f;
  }

  const CenteredGram& gram() const { return gram_; }

  friend double nr_hsic(const HsicFeature& a, const HsicFeature& b) {
    if (a.gram_.frob == 0.0 || b.gram_.frob == 0.0)
      throw Error(ErrorCode::DegenerateFeature, "nr_hsic_v: zero self-dependence");
    return pairwise_dot(as_span(a.gram_.entries), as_span(b.gram_.entries)) / (a.gram_.frob * b.gram_.frob);
  }

 private:
  CenteredGram gram_;
};

/// One feature (or the response) prepared for repeated normalised-dependence queries.
using FeatureSketch = std::variant<HsicFeature, PcFeature>;

/// Throws DegenerateFeature for a sample with zero self-dependence.
inline FeatureSketch make_sketch(const Sample& x, const MeasureSpec& spec) {
  if (spec.kind == MeasureSpec::Kind::NrHsic) {
    HsicFeature f = HsicFeature::make(x, spec.bandwidth);
    if (f.gram().frob == 0.0) throw Error(ErrorCode::DegenerateFeature, "zero self-dependence (constant sample)");
    return f;
  }
  PcFeature f = PcFeature::make(x, spec.max_pc_n);
  if (f.self_raw() == 0.0) throw Error(ErrorCode::DegenerateFeature, "zero self-dependence (constant sample)");
  return f;
}

/// D_v(a, b) for the normalised measures; D_v(a, a) = 1.
inline double dependence(const FeatureSketch& a, const FeatureSketch& b) {
  if (a.index() != b.index()) throw Error(ErrorCode::InvalidInput, "dependence: mixed measure kinds");
  if (const auto* ha = std::get_if<HsicFeature>(&a)) return nr_hsic(*ha, std::get<HsicFeature>(b));
  return pc_squared(std::get<PcFeature>(a), std::get<PcFeature>(b));
}

inline double dependence(const Sample& x, const Sample& y, const MeasureSpec& spec) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidInput, "dependence: sample sizes differ");
  return dependence(make_sketch(x, spec), make_sketch(y, spec));
}

}  // namespace smrmr
