#pragma once

// CSV tables, JSON configuration and JSON reports.

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "smrmr/common.hpp"
#include "smrmr/eval_bench.hpp"
#include "smrmr/pipeline.hpp"
#include "smrmr/synth_dgp.hpp"

namespace smrmr {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Numbers

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

// ---------------------------------------------------------------------------
// CSV

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based line number of each row in the source text.
  std::vector<std::size_t> lines;
};

/// RFC-4180 style reader: comma separated, double-quoted fields may contain
/// commas, quotes ("") and newlines. A header row is required.
inline Table read_csv(std::istream& in) {
  Table t;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false, any = false;
  std::size_t line = 1, record_line = 1;
  auto end_field = [&] {
    record.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      if (t.header.empty()) {
        t.header = record;
      } else {
        t.rows.push_back(record);
        t.lines.push_back(record_line);
      }
    }
    record.clear();
    any = false;
  };
  char c;
  while (in.get(c)) {
    if (!any) {
      record_line = line;
      any = true;
    }
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (in.peek() != '\n') field += c;
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw Error(ErrorCode::InvalidInput, "CSV: unterminated quoted field starting on line " + std::to_string(record_line));
  if (any) end_record();
  if (t.header.empty()) throw Error(ErrorCode::InvalidInput, "CSV: missing header row");
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (t.rows[r].size() != t.header.size())
      throw Error(ErrorCode::InvalidInput, "CSV: line " + std::to_string(t.lines[r]) + " has " +
                                               std::to_string(t.rows[r].size()) + " fields, header has " +
                                               std::to_string(t.header.size()));
  return t;
}

inline Table read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open '" + path + "'");
  return read_csv(in);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << csv_escape(fields[i]);
  out << '\n';
}

struct Dataset {
  DataMatrix x;
  Sample y;
  std::vector<std::string> feature_names;
};

/// Numeric matrix from a table; the response column is split off when named.
inline Dataset table_to_dataset(const Table& t, const std::string& response) {
  std::size_t resp = t.header.size();
  if (!response.empty()) {
    for (std::size_t j = 0; j < t.header.size(); ++j)
      if (t.header[j] == response) resp = j;
    if (resp == t.header.size()) throw Error(ErrorCode::InvalidInput, "response column '" + response + "' not found");
  }
  Dataset d;
  for (std::size_t j = 0; j < t.header.size(); ++j)
    if (j != resp) d.feature_names.push_back(t.header[j]);
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  d.x.resize(n, static_cast<Eigen::Index>(d.feature_names.size()));
  d.y.resize(resp == t.header.size() ? 0 : n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    Eigen::Index col = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      double v;
      if (!parse_double(row[j], v))
        throw Error(ErrorCode::InvalidInput, "CSV: line " + std::to_string(t.lines[static_cast<std::size_t>(i)]) +
                                                 ", column '" + t.header[j] + "': not a finite number: '" + row[j] + "'");
      if (j == resp)
        d.y[i] = v;
      else
        d.x(i, col++) = v;
    }
  }
  return d;
}

inline void write_matrix_csv(std::ostream& out, const DataMatrix& x, const std::vector<std::string>& names) {
  write_csv_row(out, names);
  std::vector<std::string> fields(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) fields[static_cast<std::size_t>(j)] = format_double(x(i, j));
    write_csv_row(out, fields);
  }
}

// ---------------------------------------------------------------------------
// Config

namespace detail {

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::InvalidInput, "config: '" + where + "' must be an object");
  const std::set<std::string> ok(known.begin(), known.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw Error(ErrorCode::InvalidInput, "config: unknown key '" + key + "' in " + where);
}

inline double get_number(const Json& obj, const char* key, const std::string& where) {
  const Json& v = obj.at(key);
  if (!v.is_number()) throw Error(ErrorCode::InvalidInput, "config: " + where + "." + key + " must be a number");
  return v.get<double>();
}

template <typename T>
T get_integer(const Json& obj, const char* key, const std::string& where) {
  const Json& v = obj.at(key);
  const bool ok = std::is_unsigned_v<T> ? v.is_number_unsigned() : v.is_number_integer();
  if (!ok || (!std::is_unsigned_v<T> && v.get<long long>() < 0))
    throw Error(ErrorCode::InvalidInput, "config: " + where + "." + key + " must be a non-negative integer");
  return v.get<T>();
}

inline bool get_bool(const Json& obj, const char* key, const std::string& where) {
  const Json& v = obj.at(key);
  if (!v.is_boolean()) throw Error(ErrorCode::InvalidInput, "config: " + where + "." + key + " must be true or false");
  return v.get<bool>();
}

inline std::string get_string(const Json& obj, const char* key, const std::string& where) {
  const Json& v = obj.at(key);
  if (!v.is_string()) throw Error(ErrorCode::InvalidInput, "config: " + where + "." + key + " must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline MeasureSpec::Kind measure_kind_from_string(const std::string& s) {
  if (s == "pc") return MeasureSpec::Kind::PcSquared;
  if (s == "hsic" || s == "nr_hsic") return MeasureSpec::Kind::NrHsic;
  throw Error(ErrorCode::InvalidInput, "unknown measure '" + s + "' (expected pc or hsic)");
}

inline MeasureSpec measure_from_json(const Json& j, MeasureSpec m = {}) {
  if (j.is_string()) {
    m.kind = measure_kind_from_string(j.get<std::string>());
    return m;
  }
  detail::reject_unknown(j, {"kind", "bandwidth", "max_pc_n"}, "measure");
  if (j.contains("kind")) m.kind = measure_kind_from_string(detail::get_string(j, "kind", "measure"));
  if (j.contains("bandwidth")) {
    const Json& b = j.at("bandwidth");
    if (b.is_string() && b.get<std::string>() == "median")
      m.bandwidth.reset();
    else if (b.is_number())
      m.bandwidth = b.get<double>();
    else
      throw Error(ErrorCode::InvalidInput, "config: measure.bandwidth must be a number or \"median\"");
  }
  if (j.contains("max_pc_n")) m.max_pc_n = detail::get_integer<std::size_t>(j, "max_pc_n", "measure");
  m.validate();
  return m;
}

inline PenaltySpec penalty_from_json(const Json& j, PenaltySpec p) {
  if (j.is_string()) {
    p.kind = penalty_kind_from_string(j.get<std::string>());
    return p;
  }
  detail::reject_unknown(j, {"kind", "lambda", "a_scad", "b_mcp"}, "penalty");
  if (j.contains("kind")) p.kind = penalty_kind_from_string(detail::get_string(j, "kind", "penalty"));
  if (j.contains("lambda")) p.lambda = detail::get_number(j, "lambda", "penalty");
  if (j.contains("a_scad")) p.a_scad = detail::get_number(j, "a_scad", "penalty");
  if (j.contains("b_mcp")) p.b_mcp = detail::get_number(j, "b_mcp", "penalty");
  p.validate();
  return p;
}

inline SolverConfig solver_from_json(const Json& j, SolverConfig s = {}) {
  detail::reject_unknown(j, {"max_cd_iters", "cd_tol", "lla_m", "lla_eps", "lla_weight", "ridge", "polish"}, "solver");
  if (j.contains("max_cd_iters")) s.max_cd_iters = detail::get_integer<int>(j, "max_cd_iters", "solver");
  if (j.contains("cd_tol")) s.cd_tol = detail::get_number(j, "cd_tol", "solver");
  if (j.contains("lla_m")) s.lla_m = detail::get_integer<int>(j, "lla_m", "solver");
  if (j.contains("lla_eps")) s.lla_eps = detail::get_number(j, "lla_eps", "solver");
  if (j.contains("lla_weight")) {
    const std::string w = detail::get_string(j, "lla_weight", "solver");
    if (w == "derivative")
      s.lla_weight = SolverConfig::LlaWeight::Derivative;
    else if (w == "value")
      s.lla_weight = SolverConfig::LlaWeight::Value;
    else
      throw Error(ErrorCode::InvalidInput, "config: solver.lla_weight must be \"derivative\" or \"value\"");
  }
  if (j.contains("ridge")) s.ridge = detail::get_number(j, "ridge", "solver");
  if (j.contains("polish")) s.polish = detail::get_bool(j, "polish", "solver");
  s.validate();
  return s;
}

inline const std::vector<std::string>& pipeline_keys() {
  static const std::vector<std::string> keys{"measure", "penalty", "alpha", "escalate", "split_frac",
                                                       "lambda_screen", "hp_grid", "tune", "seed", "pmax_rule",
                                                       "solver"};
  return keys;
}

/// Applies the pipeline keys of j on top of cfg. Unknown keys are rejected
/// unless listed in extra_keys (used by enclosing documents).
inline PipelineConfig pipeline_from_json(const Json& j, PipelineConfig cfg = {},
                                         std::initializer_list<const char*> extra_keys = {}) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidInput, "config: top level must be an object");
  std::set<std::string> ok(pipeline_keys().begin(), pipeline_keys().end());
  ok.insert(extra_keys.begin(), extra_keys.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw Error(ErrorCode::InvalidInput, "config: unknown key '" + key + "'");
  const std::string where = "config";
  if (j.contains("measure")) cfg.measure = measure_from_json(j.at("measure"), cfg.measure);
  if (j.contains("penalty")) cfg.penalty = penalty_from_json(j.at("penalty"), cfg.penalty);
  if (j.contains("alpha")) cfg.alpha = detail::get_number(j, "alpha", where);
  if (j.contains("escalate")) cfg.escalate = detail::get_bool(j, "escalate", where);
  if (j.contains("split_frac")) cfg.split_frac = detail::get_number(j, "split_frac", where);
  if (j.contains("lambda_screen")) cfg.lambda_screen = detail::get_number(j, "lambda_screen", where);
  if (j.contains("tune")) cfg.tune = detail::get_bool(j, "tune", where);
  if (j.contains("seed")) cfg.seed = detail::get_integer<std::uint64_t>(j, "seed", where);
  if (j.contains("pmax_rule")) cfg.pmax_rule = pmax_rule_from_string(detail::get_string(j, "pmax_rule", where));
  if (j.contains("solver")) cfg.solver = solver_from_json(j.at("solver"), cfg.solver);
  if (j.contains("hp_grid")) {
    const Json& g = j.at("hp_grid");
    if (!g.is_array()) throw Error(ErrorCode::InvalidInput, "config: hp_grid must be an array");
    cfg.hp_grid.clear();
    for (const Json& h : g) {
      // A bare number is a lambda for the configured penalty family.
      if (h.is_number())
        cfg.hp_grid.push_back(cfg.penalty.with_lambda(h.get<double>()));
      else
        cfg.hp_grid.push_back(penalty_from_json(h, cfg.penalty));
    }
    if (cfg.hp_grid.empty()) throw Error(ErrorCode::InvalidInput, "config: hp_grid must not be empty");
  }
  cfg.validate();
  return cfg;
}

inline Json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidInput, what + ": invalid JSON: " + e.what());
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

inline Json penalty_to_json(const PenaltySpec& p) {
  Json j;
  j["kind"] = to_string(p.kind);
  j["lambda"] = p.lambda;
  j["a_scad"] = p.a_scad;
  j["b_mcp"] = p.b_mcp;
  return j;
}

inline Json pipeline_to_json(const PipelineConfig& cfg) {
  Json j;
  j["measure"] = {{"kind", cfg.measure.kind == MeasureSpec::Kind::NrHsic ? "hsic" : "pc"}};
  if (cfg.measure.bandwidth)
    j["measure"]["bandwidth"] = *cfg.measure.bandwidth;
  else
    j["measure"]["bandwidth"] = "median";
  j["measure"]["max_pc_n"] = cfg.measure.max_pc_n;
  j["penalty"] = penalty_to_json(cfg.penalty);
  j["alpha"] = cfg.alpha;
  j["escalate"] = cfg.escalate;
  j["split_frac"] = cfg.split_frac;
  j["lambda_screen"] = cfg.lambda_screen;
  j["hp_grid"] = Json::array();
  for (const auto& h : cfg.hp_grid) j["hp_grid"].push_back(penalty_to_json(h));
  j["tune"] = cfg.tune;
  j["seed"] = cfg.seed;
  j["pmax_rule"] = to_string(cfg.pmax_rule);
  j["solver"] = {{"max_cd_iters", cfg.solver.max_cd_iters},
                 {"cd_tol", cfg.solver.cd_tol},
                 {"lla_m", cfg.solver.lla_m},
                 {"lla_eps", cfg.solver.lla_eps},
                 {"lla_weight", cfg.solver.lla_weight == SolverConfig::LlaWeight::Value ? "value" : "derivative"},
                 {"ridge", cfg.solver.ridge},
                 {"polish", cfg.solver.polish}};
  return j;
}

// ---------------------------------------------------------------------------
// Reports

inline Json report_to_json(const KnockoffReport& r) {
  Json j;
  j["w"] = Json::array();
  for (Eigen::Index k = 0; k < r.w.size(); ++k) j["w"].push_back(r.w[k]);
  if (std::isinf(r.threshold))
    j["threshold"] = "inf";
  else
    j["threshold"] = r.threshold;
  j["selected"] = r.selected;
  j["fdp_hat"] = r.fdp_hat;
  j["alpha_used"] = r.alpha_used;
  return j;
}

/// Report plus the screened set that maps positions of w to original columns.
inline Json result_to_json(const PipelineResult& res) {
  Json j = report_to_json(res.report);
  j["screened"] = res.screened;
  j["penalty"] = penalty_to_json(res.penalty_used);
  j["data_recycling"] = res.dr;
  return j;
}

inline KnockoffReport report_from_json(const Json& j) {
  detail::reject_unknown(j, {"w", "threshold", "selected", "fdp_hat", "alpha_used", "screened", "penalty", "data_recycling"},
                         "report");
  KnockoffReport r;
  const auto w = j.at("w").get<std::vector<double>>();
  r.w = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  const Json& t = j.at("threshold");
  r.threshold = t.is_string() ? std::numeric_limits<double>::infinity() : t.get<double>();
  r.selected = j.at("selected").get<IndexSet>();
  r.fdp_hat = j.at("fdp_hat").get<double>();
  r.alpha_used = j.at("alpha_used").get<double>();
  return r;
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Benchmark documents

struct BenchConfig {
  DgpSpec dgp;
  std::vector<Method> methods;
  BenchSettings settings;
};

inline DgpSpec dgp_from_json(const Json& j) {
  detail::reject_unknown(j, {"id", "n", "p", "c", "poisson_link"}, "dgp");
  DgpSpec s;
  if (!j.contains("id")) throw Error(ErrorCode::InvalidInput, "config: dgp.id is required");
  s.id = dgp_from_string(detail::get_string(j, "id", "dgp"));
  if (j.contains("n")) s.n = detail::get_integer<int>(j, "n", "dgp");
  if (j.contains("p")) s.p = detail::get_integer<int>(j, "p", "dgp");
  if (j.contains("c")) s.c = detail::get_number(j, "c", "dgp");
  if (j.contains("poisson_link")) {
    const std::string l = detail::get_string(j, "poisson_link", "dgp");
    if (l == "clamp")
      s.poisson_link = PoissonLink::Clamp;
    else if (l == "exp")
      s.poisson_link = PoissonLink::Exp;
    else
      throw Error(ErrorCode::InvalidInput, "config: dgp.poisson_link must be \"clamp\" or \"exp\"");
  }
  return s;
}

/// {"dgp": {...}, "methods": [pipeline objects, each with optional "name"],
///  "seed": master seed, "replicates": R, "n_test": rows of the test set}
inline BenchConfig bench_config_from_json(const Json& j) {
  detail::reject_unknown(j, {"dgp", "methods", "seed", "replicates", "n_test", "workers"}, "benchmark config");
  BenchConfig bc;
  if (!j.contains("dgp")) throw Error(ErrorCode::InvalidInput, "config: benchmark config needs a \"dgp\" object");
  bc.dgp = dgp_from_json(j.at("dgp"));
  if (j.contains("seed")) bc.settings.master_seed = detail::get_integer<std::uint64_t>(j, "seed", "config");
  if (j.contains("replicates")) bc.settings.replicates = detail::get_integer<int>(j, "replicates", "config");
  if (j.contains("n_test")) bc.settings.n_test = detail::get_integer<int>(j, "n_test", "config");
  if (j.contains("workers")) bc.settings.workers = detail::get_integer<int>(j, "workers", "config");
  if (j.contains("methods")) {
    const Json& ms = j.at("methods");
    if (!ms.is_array() || ms.empty()) throw Error(ErrorCode::InvalidInput, "config: methods must be a non-empty array");
    for (const Json& m : ms) {
      const PipelineConfig cfg = pipeline_from_json(m, {}, {"name"});
      bc.methods.push_back({m.contains("name") ? detail::get_string(m, "name", "method") : method_name(cfg), cfg});
    }
  } else {
    bc.methods.push_back(make_method(PipelineConfig{}));
  }
  return bc;
}

inline const std::vector<std::string>& bench_csv_header() {
  static const std::vector<std::string> h{"dgp", "method", "seed", "tpr", "fdr", "fpr",
                                          "n_selected", "mse", "acc", "alpha_used", "empty"};
  return h;
}

/// Successful replicate rows of all results, in (method, replicate) order.
inline void write_bench_csv(std::ostream& out, const std::vector<BenchResult>& results) {
  write_csv_row(out, bench_csv_header());
  for (const auto& br : results)
    for (const auto& row : br.rows) {
      if (!row.ok) continue;
      write_csv_row(out, {row.dgp, row.method, std::to_string(row.seed), format_double(row.metrics.tpr),
                          format_double(row.metrics.fdr), format_double(row.metrics.fpr),
                          std::to_string(row.metrics.n_selected), row.metrics.mse ? format_double(*row.metrics.mse) : "",
                          row.metrics.acc ? format_double(*row.metrics.acc) : "", format_double(row.alpha_used),
                          row.empty ? "1" : "0"});
    }
}

inline Json bench_summary_json(const std::vector<BenchResult>& results) {
  Json out = Json::array();
  auto stat = [](const MetricSummary& m) { return Json{{"mean", m.mean}, {"se", m.se}}; };
  for (const auto& br : results) {
    Json j;
    j["dgp"] = {{"id", to_string(br.dgp.id)}, {"n", br.dgp.n}, {"p", br.dgp.p}, {"c", dgp_correlation(br.dgp)}};
    j["method"] = br.method;
    j["replicates"] = br.replicates;
    j["failures"] = br.failures;
    j["tpr"] = stat(br.tpr);
    j["fdr"] = stat(br.fdr);
    j["fpr"] = stat(br.fpr);
    j["n_selected"] = stat(br.n_selected);
    if (dgp_task(br.dgp.id) == Task::Regression)
      j["mse"] = stat(br.mse);
    else
      j["acc"] = stat(br.acc);
    j["alpha_used"] = stat(br.alpha_used);
    j["empty_frequency"] = br.empty_frequency;
    Json errors = Json::array();
    for (const auto& row : br.rows)
      if (!row.ok) errors.push_back({{"replicate", row.replicate}, {"seed", row.seed}, {"error", row.error}});
    j["failed"] = errors;
    out.push_back(j);
  }
  return out;
}

}  // namespace smrmr
