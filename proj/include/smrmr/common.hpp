#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace smrmr {

/// n x p observations, one feature per column (column-major, so columns are contiguous).
using DataMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexSet = std::vector<std::size_t>;
/// One scalar observation per row.
using Sample = Eigen::VectorXd;

enum class ErrorCode {
  InvalidInput,
  DegenerateFeature,
  NumericalFailure,
  SampleTooSmall,
  ResourceLimit,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::DegenerateFeature: return "DegenerateFeature";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::SampleTooSmall: return "SampleTooSmall";
    case ErrorCode::ResourceLimit: return "ResourceLimit";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::optional<std::size_t> feature = std::nullopt,
        std::string stage = {})
      : std::runtime_error(what), code_(code), feature_(feature), stage_(std::move(stage)) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> feature() const noexcept { return feature_; }
  const std::string& stage() const noexcept { return stage_; }

  /// Same error, tagged with the pipeline stage it surfaced in.
  Error at_stage(const std::string& stage) const {
    return Error(code_, stage + ": " + what(), feature_, stage);
  }

 private:
  ErrorCode code_;
  std::optional<std::size_t> feature_;
  std::string stage_;
};

namespace detail {

inline constexpr std::size_t kPairwiseBlock = 32;

// Pairwise (tree) reduction of term(i) over [begin, end); error grows as O(log n).
template <typename Term>
double pairwise_reduce(std::size_t begin, std::size_t end, const Term& term) {
  if (end - begin <= kPairwiseBlock) {
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += term(i);
    return acc;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  return pairwise_reduce(begin, mid, term) + pairwise_reduce(mid, end, term);
}

}  // namespace detail

inline double pairwise_sum(std::span<const double> v) {
  return detail::pairwise_reduce(0, v.size(), [&](std::size_t i) { return v[i]; });
}

inline double pairwise_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidInput, "pairwise_dot: length mismatch");
  return detail::pairwise_reduce(0, a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline std::span<const double> as_span(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

/// splitmix64 finaliser; used to derive independent stream seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Row subset of a matrix, in the order given.
inline DataMatrix take_rows(const DataMatrix& x, std::span<const std::size_t> rows) {
  DataMatrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

inline Vector take_rows(const Vector& y, std::span<const std::size_t> rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(rows[i])];
  return out;
}

inline DataMatrix take_cols(const DataMatrix& x, std::span<const std::size_t> cols) {
  DataMatrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(cols[j]));
  return out;
}

}  // namespace smrmr
