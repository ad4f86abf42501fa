#pragma once

// End-to-end selection: optional data split with marginal and joint screening,
// penalty tuning on held-out rows, then the knockoff filter on the screened set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "smrmr/assoc_measures.hpp"
#include "smrmr/common.hpp"
#include "smrmr/knockoffs.hpp"
#include "smrmr/penalties.hpp"
#include "smrmr/solver.hpp"

namespace smrmr {

/// How the number of screened features is derived from the split sizes.
enum class PmaxRule {
  FloorN1Minus1Half,  // floor((n1 - 1) / 2): keeps 2 p_max < n1
  N1Plus1Half,        // floor((n1 + 1) / 2)
  NMinus1Half,        // floor((n - 1) / 2)
};

inline std::string to_string(PmaxRule r) {
  switch (r) {
    case PmaxRule::FloorN1Minus1Half: return "n1_minus_1_half";
    case PmaxRule::N1Plus1Half: return "n1_plus_1_half";
    case PmaxRule::NMinus1Half: return "n_minus_1_half";
  }
  return "n1_minus_1_half";
}

inline PmaxRule pmax_rule_from_string(const std::string& s) {
  for (PmaxRule r : {PmaxRule::FloorN1Minus1Half, PmaxRule::N1Plus1Half, PmaxRule::NMinus1Half})
    if (to_string(r) == s) return r;
  throw Error(ErrorCode::InvalidInput, "unknown pmax_rule '" + s + "'");
}

inline const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid{0.001, 0.005, 0.01, 0.05, 0.1};
  return grid;
}

struct PipelineConfig {
  MeasureSpec measure = MeasureSpec::pc();
  /// Penalty family; its lambda is used as is when tuning is off or the grid is a singleton.
  PenaltySpec penalty = PenaltySpec::mcp(0.01);
  double alpha = 0.3;
  bool escalate = false;
  double split_frac = 0.4;
  double lambda_screen = 0.01;
  /// Candidates for tune(); empty means the default lambda grid for penalty.kind.
  std::vector<PenaltySpec> hp_grid;
  bool tune = true;
  std::uint64_t seed = 0;
  PmaxRule pmax_rule = PmaxRule::FloorN1Minus1Half;
  SolverConfig solver;

  std::vector<PenaltySpec> grid() const {
    if (!hp_grid.empty()) return hp_grid;
    if (penalty.kind == PenaltySpec::Kind::None) return {penalty};
    std::vector<PenaltySpec> g;
    for (double l : default_lambda_grid()) g.push_back(penalty.with_lambda(l));
    return g;
  }

  void validate() const {
    measure.validate();
    penalty.validate();
    solver.validate();
    for (const auto& h : hp_grid) h.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidInput, "alpha must lie in (0, 1)");
    if (!(split_frac > 0.0 && split_frac < 1.0)) throw Error(ErrorCode::InvalidInput, "split_frac must lie in (0, 1)");
    if (!(lambda_screen > 0.0) || !std::isfinite(lambda_screen))
      throw Error(ErrorCode::InvalidInput, "lambda_screen must be positive");
  }
};

struct ScreenOutput {
  /// Screened features (ascending, original coordinates).
  IndexSet s0;
  /// Marginally pre-screened features (ascending); equals s0 when no split happened.
  IndexSet s0b;
  /// Row indices of the two splits; rows0 is empty when dr is false.
  IndexSet rows0, rows1;
  DataMatrix x1;
  Sample y1;
  bool dr = false;
  std::size_t p_max = 0;
};

struct PipelineResult {
  /// Report with selected indices in original coordinates.
  KnockoffReport report;
  /// Original index of each entry of report.w.
  IndexSet screened;
  PenaltySpec penalty_used;
  bool dr = false;
  std::size_t p_max = 0;
};

inline constexpr std::size_t kMinPipelineRows = 10;
inline constexpr double kValidationFrac = 0.2;

namespace detail {

inline std::uint64_t stage_seed(const PipelineConfig& cfg, std::uint64_t stage) { return mix_seed(cfg.seed, stage); }

inline void check_data(const DataMatrix& x, const Sample& y) {
  if (x.rows() != y.size()) throw Error(ErrorCode::InvalidInput, "row count of X differs from the length of y");
  if (x.cols() < 1) throw Error(ErrorCode::InvalidInput, "X has no columns");
  if (static_cast<std::size_t>(x.rows()) < kMinPipelineRows)
    throw Error(ErrorCode::SampleTooSmall, "need at least " + std::to_string(kMinPipelineRows) + " rows");
  if (!x.allFinite() || !y.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite value in X or y");
}

inline std::size_t pmax_for(PmaxRule rule, std::size_t n, std::size_t n1) {
  switch (rule) {
    case PmaxRule::FloorN1Minus1Half: return n1 >= 1 ? (n1 - 1) / 2 : 0;
    case PmaxRule::N1Plus1Half: return (n1 + 1) / 2;
    case PmaxRule::NMinus1Half: return n >= 1 ? (n - 1) / 2 : 0;
  }
  return 0;
}

/// Indices sorted by descending key, ascending index on ties.
inline IndexSet rank_desc(const std::vector<double>& key, const std::vector<double>& tie) {
  IndexSet order(key.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (key[a] != key[b]) return key[a] > key[b];
    if (tie[a] != tie[b]) return tie[a] > tie[b];
    return a < b;
  });
  return order;
}

template <typename F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw e.at_stage(stage);
  }
}

}  // namespace detail

/// Splits rows and screens features when n < 2p; otherwise keeps everything.
inline ScreenOutput screen(const DataMatrix& x, const Sample& y, const PipelineConfig& cfg) {
  cfg.validate();
  detail::check_data(x, y);
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  ScreenOutput out;
  if (n >= 2 * p) {
    out.s0.resize(p);
    std::iota(out.s0.begin(), out.s0.end(), std::size_t{0});
    out.s0b = out.s0;
    out.rows1.resize(n);
    std::iota(out.rows1.begin(), out.rows1.end(), std::size_t{0});
    out.x1 = x;
    out.y1 = y;
    out.dr = false;
    out.p_max = p;
    return out;
  }

  const auto n0 = static_cast<std::size_t>(std::floor(cfg.split_frac * static_cast<double>(n)));
  const std::size_t n1 = n - n0;
  if (n0 < 3 || n1 < 3) throw Error(ErrorCode::SampleTooSmall, "screen: split leaves fewer than 3 rows on one side");
  const std::size_t p_max = std::min(p, detail::pmax_for(cfg.pmax_rule, n, n1));
  if (p_max < 1) throw Error(ErrorCode::SampleTooSmall, "screen: p_max < 1 for n = " + std::to_string(n));

  IndexSet perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(detail::stage_seed(cfg, 1));
  std::shuffle(perm.begin(), perm.end(), rng);
  out.rows0.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n0));
  out.rows1.assign(perm.begin() + static_cast<std::ptrdiff_t>(n0), perm.end());
  std::sort(out.rows0.begin(), out.rows0.end());
  std::sort(out.rows1.begin(), out.rows1.end());
  const DataMatrix x0 = take_rows(x, out.rows0);
  const Sample y0 = take_rows(y, out.rows0);

  // Marginal pre-screen; features constant on split 0 are not eligible.
  const FeatureSketch ys = detail::sketch_response(y0, cfg.measure);
  std::vector<double> marginal(p, -std::numeric_limits<double>::infinity());
  std::size_t eligible = 0;
  for (std::size_t k = 0; k < p; ++k) {
    const Sample col = x0.col(static_cast<Eigen::Index>(k));
    try {
      marginal[k] = dependence(make_sketch(col, cfg.measure), ys);
      ++eligible;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateFeature) throw;
    }
  }
  const std::size_t m = std::min(4 * p_max, eligible);
  if (m == 0) throw Error(ErrorCode::DegenerateFeature, "screen: every feature is constant on the screening split");
  const IndexSet by_marginal = detail::rank_desc(marginal, marginal);
  IndexSet s0b(by_marginal.begin(), by_marginal.begin() + static_cast<std::ptrdiff_t>(m));

  // Joint screening on the pre-screened block.
  const AssocSystem sys = build_system(take_cols(x0, s0b), y0, cfg.measure);
  const Coefficients fit = solve_smrmr(sys, cfg.penalty.with_lambda(cfg.lambda_screen), cfg.solver);
  std::vector<double> theta(m), tie(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = fit.theta[static_cast<Eigen::Index>(j)];
    tie[j] = marginal[s0b[j]];
  }
  const IndexSet by_theta = detail::rank_desc(theta, tie);
  const std::size_t keep = std::min(p_max, m);
  for (std::size_t j = 0; j < keep; ++j) out.s0.push_back(s0b[by_theta[j]]);
  std::sort(out.s0.begin(), out.s0.end());
  std::sort(s0b.begin(), s0b.end());
  out.s0b = std::move(s0b);
  out.x1 = take_rows(x, out.rows1);
  out.y1 = take_rows(y, out.rows1);
  out.dr = true;
  out.p_max = p_max;
  return out;
}

/// Original and knockoff design of the knockoff stage, with the screening rows
/// recycled into both blocks when the data were split.
struct JointDesign {
  DataMatrix x, xk;
  Sample y;
};

inline JointDesign assemble_joint(const ScreenOutput& scr, const DataMatrix& x, const Sample& y,
                                  const PipelineConfig& cfg) {
  const DataMatrix xs1 = take_cols(scr.x1, scr.s0);
  if (scr.dr && 2 * scr.s0.size() >= static_cast<std::size_t>(xs1.rows()))
    throw Error(ErrorCode::SampleTooSmall, "knockoffs need 2|S0| < n1 (|S0| = " + std::to_string(scr.s0.size()) +
                                               ", n1 = " + std::to_string(xs1.rows()) + ")");
  const KnockoffMatrix km = sample_knockoffs(xs1, detail::stage_seed(cfg, 2));
  JointDesign j;
  if (!scr.dr) {
    j.x = xs1;
    j.xk = km.xk;
    j.y = scr.y1;
    return j;
  }
  const DataMatrix x0 = take_cols(take_rows(x, scr.rows0), scr.s0);
  const Sample y0 = take_rows(y, scr.rows0);
  const Eigen::Index n0 = x0.rows(), n1 = xs1.rows();
  j.x.resize(n0 + n1, xs1.cols());
  j.x << x0, xs1;
  j.xk.resize(n0 + n1, xs1.cols());
  j.xk << x0, km.xk;
  j.y.resize(n0 + n1);
  j.y << y0, scr.y1;
  return j;
}

/// Picks the candidate penalty minimising the unpenalised joint loss on a
/// held-out 20% of the knockoff-stage rows; ties go to the larger lambda.
inline PenaltySpec tune(const ScreenOutput& scr, const DataMatrix& x, const Sample& y, const PipelineConfig& cfg) {
  const std::vector<PenaltySpec> grid = cfg.grid();
  if (grid.empty()) throw Error(ErrorCode::InvalidInput, "tune: empty hyper-parameter grid");
  if (grid.size() == 1 || !cfg.tune) return grid.size() == 1 ? grid.front() : cfg.penalty;

  const JointDesign jd = assemble_joint(scr, x, y, cfg);
  const auto rows = static_cast<std::size_t>(jd.x.rows());
  const auto n_val = static_cast<std::size_t>(std::llround(kValidationFrac * static_cast<double>(rows)));
  if (n_val < 3 || rows - n_val < 3) throw Error(ErrorCode::SampleTooSmall, "tune: too few rows for a validation split");
  IndexSet perm(rows);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(detail::stage_seed(cfg, 3));
  std::shuffle(perm.begin(), perm.end(), rng);
  IndexSet val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  IndexSet train(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  const AssocSystem train_sys =
      build_joint_system(take_rows(jd.x, train), take_rows(jd.xk, train), take_rows(jd.y, train), cfg.measure);
  const AssocSystem val_sys =
      build_joint_system(take_rows(jd.x, val), take_rows(jd.xk, val), take_rows(jd.y, val), cfg.measure);

  std::size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h < grid.size(); ++h) {
    const Coefficients fit = solve_smrmr(train_sys, grid[h], cfg.solver);
    const double loss = loss_value(val_sys, fit.theta);
    if (loss < best_loss || (loss == best_loss && grid[h].lambda > grid[best].lambda)) {
      best = h;
      best_loss = loss;
    }
  }
  return grid[best];
}

inline PipelineResult knockoff_stage(const ScreenOutput& scr, const DataMatrix& x, const Sample& y,
                                     const PipelineConfig& cfg, const PenaltySpec& penalty) {
  const JointDesign jd = assemble_joint(scr, x, y, cfg);
  const AssocSystem sys = build_joint_system(jd.x, jd.xk, jd.y, cfg.measure);
  const Coefficients fit = solve_smrmr(sys, penalty, cfg.solver);
  PipelineResult r;
  r.report = select(importance_scores(fit), cfg.alpha, cfg.escalate);
  for (auto& k : r.report.selected) k = scr.s0[k];
  r.screened = scr.s0;
  r.penalty_used = penalty;
  r.dr = scr.dr;
  r.p_max = scr.p_max;
  return r;
}

/// Full procedure; errors are tagged with the stage they came from.
inline PipelineResult run(const DataMatrix& x, const Sample& y, const PipelineConfig& cfg) {
  detail::in_stage("config", [&] {
    cfg.validate();
    return 0;
  });
  const ScreenOutput scr = detail::in_stage("screen", [&] { return screen(x, y, cfg); });
  const PenaltySpec pen = detail::in_stage("tune", [&] { return tune(scr, x, y, cfg); });
  return detail::in_stage("knockoff", [&] { return knockoff_stage(scr, x, y, cfg, pen); });
}

}  // namespace smrmr
