#pragma once

// Tab-separated tables and the line-oriented key/value documents used by the
// command-line tool. Numbers are written with 17 significant digits so every
// file reads back bit-for-bit.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "cbasdm/estimators.hpp"
#include "cbasdm/model.hpp"
#include "cbasdm/simulation.hpp"

namespace cbasdm {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s == "NA" || s == "nan" || s == "NaN") return NAN;
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (!s.empty() && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || s.empty()) throw DataError("cannot parse number '" + s + "' at " + where);
  return v;
}

inline std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

/// Header plus string cells; delimiter is tab when the header has one, else comma.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (header[k] == name) return k;
    }
    return std::nullopt;
  }
};

inline Table read_table(std::istream& in, const std::string& source) {
  Table t;
  std::string line;
  bool have_header = false;
  char delim = '\t';
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
      delim = line.find('\t') != std::string::npos ? '\t' : ',';
      t.header = split(line, delim);
      have_header = true;
      continue;
    }
    auto cells = split(line, delim);
    if (cells.size() != t.header.size()) {
      throw DataError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw DataError(source + ": missing header row");
  return t;
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_table(in, path);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace io

/// Background table: first column location ids, optional weight column (by
/// name), remaining columns features. Presence table: first column ids, one
/// per row, repeats allowed.
inline Dataset load_dataset(const io::Table& background, const io::Table& presence,
                            const std::optional<std::string>& weight_column = std::nullopt,
                            const std::string& bg_name = "background", const std::string& pres_name = "presence") {
  if (background.header.size() < 2) throw DataError(bg_name + ": need a location_id column and at least one feature");
  std::optional<std::size_t> wcol;
  if (weight_column) {
    wcol = background.column(*weight_column);
    if (!wcol || *wcol == 0) throw DataError(bg_name + ": weight column '" + *weight_column + "' not found");
  }
  std::vector<std::size_t> fcols;
  std::vector<std::string> names;
  for (std::size_t k = 1; k < background.header.size(); ++k) {
    if (wcol && k == *wcol) continue;
    fcols.push_back(k);
    names.push_back(background.header[k]);
  }
  if (fcols.empty()) throw DataError(bg_name + ": no feature columns");
  const auto n = static_cast<Index>(background.rows.size());
  Eigen::MatrixXd f(n, static_cast<Index>(fcols.size()));
  Eigen::VectorXd w;
  if (wcol) w.resize(n);
  std::vector<std::string> ids;
  std::unordered_map<std::string, Index> row_of;
  for (Index i = 0; i < n; ++i) {
    const auto& r = background.rows[static_cast<std::size_t>(i)];
    const std::string& id = r[0];
    if (!row_of.emplace(id, i).second) throw DataError(bg_name + ": duplicate location_id '" + id + "'");
    ids.push_back(id);
    for (std::size_t k = 0; k < fcols.size(); ++k) {
      const std::string where = bg_name + " row " + std::to_string(i + 1) + ", column '" + names[k] + "'";
      const double v = io::parse_double(r[fcols[k]], where);
      if (!std::isfinite(v)) throw DataError("non-finite value at " + where);
      f(i, static_cast<Index>(k)) = v;
    }
    if (wcol) {
      const std::string where = bg_name + " row " + std::to_string(i + 1) + ", column '" + *weight_column + "'";
      w[i] = io::parse_double(r[*wcol], where);
      if (!std::isfinite(w[i]) || w[i] < 0.0) throw DataError("negative or non-finite weight at " + where);
    }
  }
  std::vector<Index> pres;
  for (const auto& r : presence.rows) {
    auto it = row_of.find(r[0]);
    if (it == row_of.end()) throw DataError(pres_name + ": location_id '" + r[0] + "' is not in the background table");
    pres.push_back(it->second);
  }
  return Dataset::create(std::move(f), std::move(w), std::move(pres), std::move(ids), std::move(names));
}

inline Dataset load_dataset(const std::string& background_path, const std::string& presence_path,
                            const std::optional<std::string>& weight_column = std::nullopt) {
  return load_dataset(io::read_table(background_path), io::read_table(presence_path), weight_column, background_path,
                      presence_path);
}

/// Writes location ids, an optional weight column, then features.
inline void write_background(std::ostream& out, const Dataset& d, bool with_weights = false) {
  out << "location_id";
  if (with_weights) out << "\tweight";
  for (const auto& name : d.feature_names()) out << '\t' << name;
  out << '\n';
  for (Index i = 0; i < d.n(); ++i) {
    out << d.location_ids()[static_cast<std::size_t>(i)];
    if (with_weights) out << '\t' << io::format_double(d.weights()[i]);
    for (Index j = 0; j < d.p(); ++j) out << '\t' << io::format_double(d.features()(i, j));
    out << '\n';
  }
}

inline void write_presence(std::ostream& out, const Dataset& d) {
  out << "location_id\n";
  for (Index r : d.presence()) out << d.location_ids()[static_cast<std::size_t>(r)] << '\n';
}

/// Ordered key -> tab-separated values document.
struct KeyValueDoc {
  std::vector<std::pair<std::string, std::vector<std::string>>> entries;

  void add(const std::string& key, std::vector<std::string> values) { entries.emplace_back(key, std::move(values)); }
  void add(const std::string& key, const std::string& value) { add(key, std::vector<std::string>{value}); }

  const std::vector<std::string>& get(const std::string& key) const {
    for (const auto& [k, v] : entries) {
      if (k == key) return v;
    }
    throw DataError("document is missing key '" + key + "'");
  }
  const std::string& scalar(const std::string& key) const {
    const auto& v = get(key);
    if (v.size() != 1) throw DataError("key '" + key + "' should hold one value");
    return v.front();
  }
  bool has(const std::string& key) const {
    for (const auto& e : entries) {
      if (e.first == key) return true;
    }
    return false;
  }

  void write(std::ostream& out) const {
    for (const auto& [k, vals] : entries) {
      out << k;
      for (const auto& v : vals) out << '\t' << v;
      out << '\n';
    }
  }

  static KeyValueDoc read(std::istream& in) {
    KeyValueDoc doc;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      auto cells = io::split(line, '\t');
      std::string key = cells.front();
      cells.erase(cells.begin());
      doc.add(key, std::move(cells));
    }
    return doc;
  }
};

constexpr const char* kFitFormat = "cbasdm-fit-1";

inline KeyValueDoc fit_document(const Fit& fit, const std::vector<std::string>& feature_names) {
  KeyValueDoc doc;
  doc.add("format", kFitFormat);
  doc.add("method", to_string(fit.method.method));
  doc.add("gamma", io::format_double(fit.method.gamma));
  doc.add("tau", io::format_double(fit.method.tau));
  doc.add("order", std::to_string(fit.method.order));
  doc.add("p", std::to_string(fit.coeffs.slope.size()));
  doc.add("features", feature_names);
  std::vector<std::string> alpha;
  for (Index j = 0; j < fit.coeffs.slope.size(); ++j) alpha.push_back(io::format_double(fit.coeffs.slope[j]));
  doc.add("alpha", alpha);
  doc.add("intercept", fit.coeffs.intercept ? io::format_double(*fit.coeffs.intercept) : std::string("NA"));
  doc.add("iterations", std::to_string(fit.iterations));
  doc.add("converged", fit.converged ? "true" : "false");
  doc.add("wall_time", io::format_double(fit.wall_time));
  doc.add("nnz", std::to_string(fit.nnz));
  doc.add("objective", io::format_double(fit.objective));
  return doc;
}

struct FitFile {
  Fit fit;
  std::vector<std::string> feature_names;
};

inline FitFile parse_fit_document(const KeyValueDoc& doc) {
  if (doc.scalar("format") != kFitFormat) throw DataError("unrecognized fit document format '" + doc.scalar("format") + "'");
  FitFile f;
  f.fit.method = MethodConfig::defaults(parse_method(doc.scalar("method")));
  f.fit.method.gamma = io::parse_double(doc.scalar("gamma"), "fit gamma");
  f.fit.method.tau = io::parse_double(doc.scalar("tau"), "fit tau");
  f.fit.method.order = std::stoi(doc.scalar("order"));
  const auto p = static_cast<Index>(std::stol(doc.scalar("p")));
  f.feature_names = doc.get("features");
  const auto& alpha = doc.get("alpha");
  if (static_cast<Index>(alpha.size()) != p || static_cast<Index>(f.feature_names.size()) != p) {
    throw DataError("fit document: alpha/features length does not match p");
  }
  f.fit.coeffs.slope.resize(p);
  for (Index j = 0; j < p; ++j) f.fit.coeffs.slope[j] = io::parse_double(alpha[static_cast<std::size_t>(j)], "fit alpha");
  const double c = io::parse_double(doc.scalar("intercept"), "fit intercept");
  if (!std::isnan(c)) f.fit.coeffs.intercept = c;
  f.fit.iterations = std::stoi(doc.scalar("iterations"));
  f.fit.converged = doc.scalar("converged") == "true";
  f.fit.wall_time = io::parse_double(doc.scalar("wall_time"), "fit wall_time");
  f.fit.nnz = static_cast<Index>(std::stol(doc.scalar("nnz")));
  f.fit.objective = io::parse_double(doc.scalar("objective"), "fit objective");
  return f;
}

inline FitFile read_fit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_fit_document(KeyValueDoc::read(in));
}

inline KeyValueDoc simulation_document(const SimConfig& cfg, const Eigen::VectorXd& alpha_star) {
  KeyValueDoc doc;
  doc.add("case", to_string(cfg.kind));
  doc.add("rho", io::format_double(cfg.rho));
  doc.add("p", std::to_string(cfg.p));
  doc.add("n", std::to_string(cfg.n));
  doc.add("m", std::to_string(cfg.m));
  doc.add("lambda0", io::format_double(cfg.lambda0));
  doc.add("seed", std::to_string(cfg.seed));
  doc.add("rng", Rng::algorithm);
  std::vector<std::string> a;
  for (Index j = 0; j < alpha_star.size(); ++j) a.push_back(io::format_double(alpha_star[j]));
  doc.add("alpha_star", a);
  return doc;
}

/// Per-cell predictions: log-intensity, intensity, and the weighted cell
/// probability w_i lambda_i / sum_k w_k lambda_k.
struct Prediction {
  std::vector<std::string> location_ids;
  Eigen::VectorXd log_intensity;
  Eigen::VectorXd intensity;
  Eigen::VectorXd probability;
};

inline Prediction predict(const Coefficients& c, const Dataset& d) {
  Prediction pr;
  pr.location_ids = d.location_ids();
  pr.log_intensity = log_intensity(c, d);
  pr.intensity = pr.log_intensity.array().exp().matrix();
  pr.probability = numeric::softmax_weighted(pr.log_intensity, d.weights());
  return pr;
}

inline void write_prediction(std::ostream& out, const Prediction& pr) {
  out << "location_id\tlog_intensity\tintensity\tprobability\n";
  for (std::size_t i = 0; i < pr.location_ids.size(); ++i) {
    const auto k = static_cast<Index>(i);
    out << pr.location_ids[i] << '\t' << io::format_double(pr.log_intensity[k]) << '\t'
        << io::format_double(pr.intensity[k]) << '\t' << io::format_double(pr.probability[k]) << '\n';
  }
}

inline Prediction read_prediction(const io::Table& t, const std::string& source) {
  const auto id = t.column("location_id");
  const auto eta = t.column("log_intensity");
  const auto lam = t.column("intensity");
  const auto prob = t.column("probability");
  if (!id || !eta || !lam || !prob) throw DataError(source + ": not a prediction table");
  Prediction pr;
  const auto n = static_cast<Index>(t.rows.size());
  pr.log_intensity.resize(n);
  pr.intensity.resize(n);
  pr.probability.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    pr.location_ids.push_back(r[*id]);
    const std::string where = source + " row " + std::to_string(i + 1);
    pr.log_intensity[i] = io::parse_double(r[*eta], where);
    pr.intensity[i] = io::parse_double(r[*lam], where);
    pr.probability[i] = io::parse_double(r[*prob], where);
  }
  return pr;
}

/// Jeffreys divergence between two normalized cell distributions.
inline double jeffreys_from_probabilities(const Eigen::VectorXd& p1, const Eigen::VectorXd& p2) {
  if (p1.size() != p2.size()) throw std::invalid_argument("probability vectors differ in length");
  double j = 0.0;
  for (Index i = 0; i < p1.size(); ++i) {
    if (p1[i] > 0.0 && p2[i] > 0.0) j += (p1[i] - p2[i]) * (std::log(p1[i]) - std::log(p2[i]));
  }
  return j;
}

}  // namespace cbasdm
