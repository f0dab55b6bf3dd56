#pragma once

// Delimited-text ingestion with robust standardization, and the structured
// text result file shared by the command line subcommands.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rplam/error.hpp"
#include "rplam/loss.hpp"
#include "rplam/pipeline.hpp"
#include "rplam/splines.hpp"

namespace rplam {

// ---------------------------------------------------------------------------
// Tables

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Index column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return static_cast<Index>(k);
    fail(ErrorCategory::InvalidArgument, "column '" + name + "' not found");
  }
  bool has_column(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
};

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (ch == '"') {
      if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else {
        quoted = !quoted;
      }
    } else if (ch == delim && !quoted) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  out.push_back(trim(field));
  return out;
}

inline Table read_table(std::istream& in, char delim = ',') {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line, delim);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      fail(ErrorCategory::Io, "line " + std::to_string(lineno) + " has " +
                                  std::to_string(fields.size()) + " fields, header has " +
                                  std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) fail(ErrorCategory::Io, "input has no header row");
  return t;
}

inline Table read_table_file(const std::string& path, char delim = ',') {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::Io, "cannot open '" + path + "'");
  return read_table(in, delim);
}

inline bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "." || s == "?";
}

inline double parse_number(const std::string& s, const std::string& column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !std::isfinite(v))
    fail(ErrorCategory::Io, "column '" + column + "': cannot parse '" + s + "' as a number");
  return v;
}

// ---------------------------------------------------------------------------
// Standardization

enum class Standardize { MedianMad, MeanSd };

enum class ColumnRole { Response, Linear, Additive };

inline const char* to_string(ColumnRole r) {
  switch (r) {
    case ColumnRole::Response: return "response";
    case ColumnRole::Linear: return "linear";
    case ColumnRole::Additive: return "additive";
  }
  return "?";
}

inline ColumnRole parse_role(const std::string& s) {
  if (s == "response") return ColumnRole::Response;
  if (s == "linear") return ColumnRole::Linear;
  if (s == "additive") return ColumnRole::Additive;
  fail(ErrorCategory::Io, "unknown column role '" + s + "'");
}

struct ColumnTransform {
  std::string name;
  ColumnRole role = ColumnRole::Linear;
  /// "median_mad", "mean_sd" or "none" (binary pass-through).
  std::string method = "median_mad";
  double location = 0.0;
  double dispersion = 1.0;
  /// Additive columns only: standardized values are then mapped to [0,1].
  std::optional<UnitMap> unit;

  double apply(double v) const {
    const double s = (v - location) / dispersion;
    return unit ? unit->apply(s) : s;
  }
  double invert(double u) const {
    const double s = unit ? unit->invert(u) : u;
    return location + dispersion * s;
  }
};

struct StandardizationMap {
  ColumnTransform response;
  std::vector<ColumnTransform> linear;
  std::vector<ColumnTransform> additive;
};

inline bool is_binary(const VecRef& v) {
  for (Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0 && v[i] != 1.0) return false;
  return true;
}

inline ColumnTransform fit_transform(const std::string& name, ColumnRole role, const VecRef& v,
                                     Standardize how) {
  ColumnTransform t;
  t.name = name;
  t.role = role;
  if (role == ColumnRole::Linear && is_binary(v)) {
    t.method = "none";
    return t;
  }
  if (how == Standardize::MedianMad) {
    t.method = "median_mad";
    t.location = median(v);
    t.dispersion = mad_scale(v);
    if (!(t.dispersion > 0.0))
      fail(ErrorCategory::DegenerateScale, "column '" + name + "' has zero MAD");
  } else {
    t.method = "mean_sd";
    t.location = v.mean();
    const double ss = (v.array() - t.location).square().sum();
    t.dispersion = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    if (!(t.dispersion > 0.0))
      fail(ErrorCategory::DegenerateScale, "column '" + name + "' has zero standard deviation");
  }
  return t;
}

struct LoadConfig {
  std::string response;
  /// Empty means every column not used elsewhere.
  std::vector<std::string> linear;
  std::vector<std::string> additive;
  Standardize standardize = Standardize::MedianMad;
  bool standardize_response = true;
};

struct LoadedData {
  PlamData data;
  StandardizationMap map;
  std::vector<std::string> linear_names;
  std::vector<std::string> additive_names;
  Index dropped_rows = 0;
  /// Rows of the input table kept, in order.
  std::vector<Index> kept;
};

namespace detail {

/// Numeric matrix of the named columns; rows with a missing value in any of
/// them are dropped.
inline MatrixXd numeric_columns(const Table& t, const std::vector<std::string>& names,
                                std::vector<Index>& kept, Index& dropped) {
  std::vector<Index> cols;
  for (const auto& nm : names) cols.push_back(t.column(nm));
  kept.clear();
  dropped = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    bool ok = true;
    for (Index c : cols) ok = ok && !is_missing(t.rows[i][c]);
    if (ok) kept.push_back(static_cast<Index>(i));
    else ++dropped;
  }
  MatrixXd M(static_cast<Index>(kept.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < kept.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      M(static_cast<Index>(r), static_cast<Index>(c)) =
          parse_number(t.rows[kept[r]][cols[c]], names[c]);
  return M;
}

}  // namespace detail

/// Resolves column roles, drops incomplete rows and standardizes. Non-binary
/// columns are centered and scaled; additive columns are then mapped onto
/// [0,1] with their training range.
inline LoadedData load_table(const Table& t, const LoadConfig& cfg) {
  require(!cfg.response.empty(), "a response column is required");
  t.column(cfg.response);
  LoadedData out;
  out.additive_names = cfg.additive;
  out.linear_names = cfg.linear;
  if (out.linear_names.empty()) {
    for (const auto& h : t.header) {
      if (h == cfg.response) continue;
      if (std::find(cfg.additive.begin(), cfg.additive.end(), h) != cfg.additive.end()) continue;
      out.linear_names.push_back(h);
    }
  }
  std::vector<std::string> all{cfg.response};
  all.insert(all.end(), out.linear_names.begin(), out.linear_names.end());
  all.insert(all.end(), out.additive_names.begin(), out.additive_names.end());
  for (std::size_t a = 0; a < all.size(); ++a)
    for (std::size_t b = a + 1; b < all.size(); ++b)
      require(all[a] != all[b], "column '" + all[a] + "' is assigned more than one role");

  const MatrixXd M = detail::numeric_columns(t, all, out.kept, out.dropped_rows);
  require(M.rows() >= 2, "fewer than two complete rows");
  const Index q = static_cast<Index>(out.linear_names.size());
  const Index p = static_cast<Index>(out.additive_names.size());

  if (cfg.standardize_response) {
    out.map.response = fit_transform(cfg.response, ColumnRole::Response, M.col(0), cfg.standardize);
  } else {
    out.map.response.name = cfg.response;
    out.map.response.role = ColumnRole::Response;
    out.map.response.method = "none";
  }
  out.data.y = M.col(0).unaryExpr([&](double v) { return out.map.response.apply(v); });

  out.data.z.resize(M.rows(), q);
  for (Index s = 0; s < q; ++s) {
    out.map.linear.push_back(
        fit_transform(out.linear_names[s], ColumnRole::Linear, M.col(1 + s), cfg.standardize));
    out.data.z.col(s) =
        M.col(1 + s).unaryExpr([&](double v) { return out.map.linear.back().apply(v); });
  }

  out.data.x.resize(M.rows(), p);
  for (Index j = 0; j < p; ++j) {
    const VectorXd col = M.col(1 + q + j);
    if (is_binary(col))
      fail(ErrorCategory::InvalidArgument,
           "additive column '" + out.additive_names[j] + "' is binary");
    ColumnTransform tr =
        fit_transform(out.additive_names[j], ColumnRole::Additive, col, cfg.standardize);
    const VectorXd s = (col.array() - tr.location) / tr.dispersion;
    tr.unit = UnitMap::fit(s);
    out.data.x.col(j) = col.unaryExpr([&](double v) { return tr.apply(v); });
    out.map.additive.push_back(std::move(tr));
  }
  return out;
}

struct NewData {
  MatrixXd z;
  MatrixXd x;
  std::optional<VectorXd> y;  // standardized, when the response column is present
  std::vector<Index> kept;
  Index dropped_rows = 0;
};

/// Applies a stored map to new rows. Nothing is re-estimated.
inline NewData apply_map(const Table& t, const StandardizationMap& map) {
  std::vector<std::string> names;
  for (const auto& c : map.linear) names.push_back(c.name);
  for (const auto& c : map.additive) names.push_back(c.name);
  const bool with_y = t.has_column(map.response.name);
  if (with_y) names.push_back(map.response.name);
  NewData out;
  const MatrixXd M = detail::numeric_columns(t, names, out.kept, out.dropped_rows);
  const Index q = static_cast<Index>(map.linear.size());
  const Index p = static_cast<Index>(map.additive.size());
  out.z.resize(M.rows(), q);
  out.x.resize(M.rows(), p);
  for (Index s = 0; s < q; ++s)
    out.z.col(s) = M.col(s).unaryExpr([&](double v) { return map.linear[s].apply(v); });
  for (Index j = 0; j < p; ++j)
    out.x.col(j) = M.col(q + j).unaryExpr([&](double v) { return map.additive[j].apply(v); });
  if (with_y)
    out.y = M.col(q + p).unaryExpr([&](double v) { return map.response.apply(v); });
  return out;
}

// ---------------------------------------------------------------------------
// Holdout evaluation

/// Median absolute prediction error.
inline double mape(const VecRef& y, const VecRef& yhat) {
  require(y.size() == yhat.size(), "prediction and response lengths differ",
          ErrorCategory::DimensionMismatch);
  require(y.size() >= 1, "mape of an empty sample");
  return median(VectorXd((y - yhat).cwiseAbs()));
}

// ---------------------------------------------------------------------------
// Result file
//
// Plain text. A line "[name]" opens a section. Sections "meta" and
// "diagnostics" hold key=value lines; the others hold one CSV table each
// (header first). Vectors inside a CSV cell are ';'-separated.

struct ResultSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> kv;
  Table table;
  bool is_table = false;
};

struct ResultFile {
  std::vector<ResultSection> sections;

  ResultSection& section(const std::string& name, bool is_table) {
    for (auto& s : sections)
      if (s.name == name) return s;
    sections.push_back({name, {}, {}, is_table});
    return sections.back();
  }
  const ResultSection* find(const std::string& name) const {
    for (const auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  }
  const ResultSection& get(const std::string& name) const {
    if (const auto* s = find(name)) return *s;
    fail(ErrorCategory::Io, "result file has no [" + name + "] section");
  }
  std::string value(const std::string& sec, const std::string& key) const {
    for (const auto& [k, v] : get(sec).kv)
      if (k == key) return v;
    fail(ErrorCategory::Io, "result file has no key '" + key + "' in [" + sec + "]");
  }
  void set(const std::string& sec, const std::string& key, const std::string& v) {
    section(sec, false).kv.emplace_back(key, v);
  }
};

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline double parse_fmt(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return parse_number(s, "result file");
}

inline std::string join(const VecRef& v) {
  std::string s;
  for (Index i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fmt(v[i]);
  return s;
}

inline std::string join(const std::vector<double>& v) {
  return join(Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size())));
}

inline std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) out.push_back(parse_fmt(trim(item)));
  return out;
}

inline void write_result(std::ostream& os, const ResultFile& rf) {
  os << "# rplam result file v1\n";
  for (const auto& s : rf.sections) {
    os << '[' << s.name << "]\n";
    if (s.is_table) {
      for (std::size_t k = 0; k < s.table.header.size(); ++k)
        os << (k ? "," : "") << s.table.header[k];
      os << '\n';
      for (const auto& row : s.table.rows) {
        for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << row[k];
        os << '\n';
      }
    } else {
      for (const auto& [k, v] : s.kv) os << k << '=' << v << '\n';
    }
    os << '\n';
  }
}

inline ResultFile read_result(std::istream& in) {
  ResultFile rf;
  ResultSection* cur = nullptr;
  std::string line;
  while (std::getline(in, line)) {
    const std::string l = trim(line);
    if (l.empty() || l[0] == '#') continue;
    if (l.front() == '[' && l.back() == ']') {
      const std::string name = l.substr(1, l.size() - 2);
      const bool table = name != "meta" && name != "diagnostics";
      cur = &rf.section(name, table);
      continue;
    }
    if (!cur) fail(ErrorCategory::Io, "result file content before the first section");
    if (cur->is_table) {
      auto fields = split_fields(l, ',');
      if (cur->table.header.empty()) cur->table.header = std::move(fields);
      else cur->table.rows.push_back(std::move(fields));
    } else {
      const auto eq = l.find('=');
      if (eq == std::string::npos) fail(ErrorCategory::Io, "malformed key=value line: " + l);
      cur->kv.emplace_back(l.substr(0, eq), l.substr(eq + 1));
    }
  }
  return rf;
}

inline ResultFile read_result_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::Io, "cannot open '" + path + "'");
  return read_result(in);
}

inline void add_table(ResultFile& rf, const std::string& name, Table t) {
  auto& s = rf.section(name, true);
  s.table = std::move(t);
}

/// Serializes the standardization map, the fitted model and the selection
/// table. `eta_grid` points per additive covariate are evaluated for plotting.
inline ResultFile model_result(const StandardizationMap& map, const PlamEstimate& est,
                               int eta_grid = 101) {
  ResultFile rf;
  const auto& fit = est.fit();
  const auto& pre = est.prelim;

  rf.set("meta", "format", "rplam-result-1");
  rf.set("meta", "response", map.response.name);
  rf.set("meta", "mu_hat", fmt(pre.mu_hat));
  rf.set("meta", "sigma_hat", fmt(pre.sigma_hat));
  rf.set("meta", "s_scale", fmt(pre.s_scale));
  rf.set("meta", "df", std::to_string(fit.df));
  rf.set("meta", "rbic", fmt(est.selection.rbic_best));
  rf.set("meta", "lambda", join(est.selection.best_lambda));
  rf.set("meta", "objective", fmt(fit.objective));
  rf.set("meta", "converged", fit.converged ? "true" : "false");
  rf.set("meta", "stationarity", fmt(fit.stationarity));
  rf.set("meta", "preliminary_converged", pre.converged ? "true" : "false");
  rf.set("meta", "rho0", pre.rho0.kind() == RhoKind::Square ? "square" : "tukey");
  rf.set("meta", "c0", fmt(pre.rho0.c()));
  rf.set("meta", "b", fmt(pre.b));
  rf.set("meta", "ridge_lambda1", fmt(pre.lambda1));
  rf.set("meta", "ridge_lambda2", fmt(pre.lambda2));

  Table st;
  st.header = {"column", "role", "method", "location", "dispersion", "unit_lo", "unit_hi"};
  auto add_col = [&](const ColumnTransform& c) {
    st.rows.push_back({c.name, to_string(c.role), c.method, fmt(c.location), fmt(c.dispersion),
                       c.unit ? fmt(c.unit->lo) : "", c.unit ? fmt(c.unit->hi) : ""});
  };
  add_col(map.response);
  for (const auto& c : map.linear) add_col(c);
  for (const auto& c : map.additive) add_col(c);
  add_table(rf, "standardization", std::move(st));

  Table co;
  co.header = {"column", "beta_std", "beta_orig", "lambda", "nonzero", "beta_ini"};
  for (std::size_t s = 0; s < map.linear.size(); ++s) {
    const Index k = static_cast<Index>(s);
    const double b = fit.beta_hat[k];
    co.rows.push_back({map.linear[s].name, fmt(b), fmt(b / map.linear[s].dispersion),
                       fmt(fit.lambda[k]), b != 0.0 ? "1" : "0", fmt(pre.beta_ini[k])});
  }
  add_table(rf, "coefficients", std::move(co));

  Table sp;
  sp.header = {"column", "order", "internal_knots", "knots", "coefficients"};
  for (Index j = 0; j < pre.design.p(); ++j) {
    const auto& basis = pre.design.bases[j];
    sp.rows.push_back({map.additive[j].name, std::to_string(basis.spec().order),
                       std::to_string(basis.spec().internal_knots), join(basis.knots()),
                       join(pre.c_block(j))});
  }
  add_table(rf, "splines", std::move(sp));

  Table rb;
  rb.header = {"index", "lambda", "rbic", "df", "objective", "converged", "failed"};
  for (std::size_t k = 0; k < est.selection.table.size(); ++k) {
    const auto& row = est.selection.table[k];
    rb.rows.push_back({std::to_string(k), join(row.lambda), fmt(row.rbic), std::to_string(row.df),
                       fmt(row.objective), row.converged ? "1" : "0", row.failed ? "1" : "0"});
  }
  add_table(rf, "rbic_table", std::move(rb));

  Table eg;
  eg.header = {"column", "u", "x", "eta"};
  const auto etas = eta_functions(pre);
  for (Index j = 0; j < pre.design.p(); ++j)
    for (int g = 0; g < eta_grid; ++g) {
      const double u = eta_grid > 1 ? static_cast<double>(g) / (eta_grid - 1) : 0.0;
      eg.rows.push_back({map.additive[j].name, fmt(u), fmt(map.additive[j].invert(u)),
                         fmt(etas[j](u))});
    }
  add_table(rf, "eta_grid", std::move(eg));

  std::vector<std::string> warnings = est.warnings;
  warnings.insert(warnings.end(), pre.warnings.begin(), pre.warnings.end());
  warnings.insert(warnings.end(), fit.warnings.begin(), fit.warnings.end());
  Table wn;
  wn.header = {"message"};
  for (auto w : warnings) {
    std::replace(w.begin(), w.end(), ',', ';');
    wn.rows.push_back({w});
  }
  add_table(rf, "warnings", std::move(wn));
  return rf;
}

/// Everything needed to predict from a result file.
struct StoredModel {
  StandardizationMap map;
  double mu_hat = 0.0;
  double sigma_hat = 0.0;
  VectorXd beta;
  std::vector<CenteredBasis> bases;
  std::vector<VectorXd> coeff;

  /// Prediction on the standardized response scale.
  VectorXd predict_std(const MatRef& z, const MatRef& x, Index* clamped = nullptr) const {
    require(z.cols() == beta.size() && x.cols() == static_cast<Index>(bases.size()) &&
                z.rows() == x.rows(),
            "new data do not match the stored model", ErrorCategory::DimensionMismatch);
    VectorXd out = (z * beta).array() + mu_hat;
    Index c = 0;
    for (std::size_t j = 0; j < bases.size(); ++j)
      for (Index i = 0; i < x.rows(); ++i) {
        const double u = std::clamp(x(i, static_cast<Index>(j)), 0.0, 1.0);
        c += u != x(i, static_cast<Index>(j));
        out[i] += bases[j].eta(coeff[j], u);
      }
    if (clamped) *clamped = c;
    return out;
  }

  VectorXd to_original(const VecRef& y_std) const {
    return y_std.unaryExpr([&](double v) { return map.response.invert(v); });
  }
};

inline StoredModel load_model(const ResultFile& rf) {
  StoredModel m;
  m.mu_hat = parse_fmt(rf.value("meta", "mu_hat"));
  m.sigma_hat = parse_fmt(rf.value("meta", "sigma_hat"));

  const Table& st = rf.get("standardization").table;
  const Index cn = st.column("column"), cr = st.column("role"), cm = st.column("method"),
              cl = st.column("location"), cd = st.column("dispersion"),
              clo = st.column("unit_lo"), chi = st.column("unit_hi");
  for (const auto& row : st.rows) {
    ColumnTransform t;
    t.name = row[cn];
    t.role = parse_role(row[cr]);
    t.method = row[cm];
    t.location = parse_fmt(row[cl]);
    t.dispersion = parse_fmt(row[cd]);
    if (!row[clo].empty()) t.unit = UnitMap{parse_fmt(row[clo]), parse_fmt(row[chi])};
    switch (t.role) {
      case ColumnRole::Response: m.map.response = t; break;
      case ColumnRole::Linear: m.map.linear.push_back(t); break;
      case ColumnRole::Additive: m.map.additive.push_back(t); break;
    }
  }

  const Table& co = rf.get("coefficients").table;
  m.beta.resize(static_cast<Index>(co.rows.size()));
  for (std::size_t s = 0; s < co.rows.size(); ++s)
    m.beta[static_cast<Index>(s)] = parse_fmt(co.rows[s][co.column("beta_std")]);
  require(m.beta.size() == static_cast<Index>(m.map.linear.size()),
          "coefficient table does not match the standardization map", ErrorCategory::Io);

  const Table& sp = rf.get("splines").table;
  for (const auto& row : sp.rows) {
    SplineSpec spec;
    spec.order = std::stoi(row[sp.column("order")]);
    spec.internal_knots = std::stoi(row[sp.column("internal_knots")]);
    m.bases.emplace_back(spec, split_doubles(row[sp.column("knots")]));
    const auto c = split_doubles(row[sp.column("coefficients")]);
    m.coeff.push_back(Eigen::Map<const VectorXd>(c.data(), static_cast<Index>(c.size())));
  }
  require(m.bases.size() == m.map.additive.size(),
          "spline table does not match the standardization map", ErrorCategory::Io);
  return m;
}

}  // namespace rplam
