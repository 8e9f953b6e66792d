// Command-line front end: simulate, fit, predict, eval, bench.
//
// Exit codes: 0 success, 2 usage, 3 numerical failure, 4 I/O or data error.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "cbasdm/cbasdm.hpp"

namespace fs = std::filesystem;
using namespace cbasdm;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv("CBA_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("CBA_SEED is not an unsigned integer: ") + env);
    }
  }
  return 1;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string kind = "gaussian";
  double rho = 0.0;
  long p = 0, n = 0, m = 0;
  double lambda0 = 3.0;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

SimConfig to_sim_config(const SimulateArgs& a) {
  SimConfig c;
  try {
    c.kind = parse_sim_case(a.kind);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  c.rho = a.rho;
  c.p = a.p;
  c.n = a.n;
  c.m = a.m;
  c.lambda0 = a.lambda0;
  c.seed = a.seed ? *a.seed : default_seed();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

void add_sim_flags(CLI::App* cmd, SimulateArgs& a) {
  cmd->add_option("--case", a.kind, "poisson | gaussian | uniform")->required();
  cmd->add_option("--rho", a.rho, "equicorrelation in [0,1)")->required();
  cmd->add_option("--p", a.p, "feature count (>= 2)")->required();
  cmd->add_option("--n", a.n, "background cells")->required();
  cmd->add_option("--m", a.m, "presence draws")->required();
  cmd->add_option("--lambda0", a.lambda0, "Poisson marginal rate");
  cmd->add_option("--seed", a.seed, "random seed (default: $CBA_SEED or 1)");
}

int run_simulate(const SimulateArgs& a) {
  const SimConfig cfg = to_sim_config(a);
  const Simulation sim = simulate(cfg);
  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  {
    auto out = io::open_out((dir / "background.tsv").string());
    write_background(out, sim.data);
  }
  {
    auto out = io::open_out((dir / "presence.tsv").string());
    write_presence(out, sim.data);
  }
  {
    auto out = io::open_out((dir / "meta.txt").string());
    simulation_document(cfg, sim.alpha_star).write(out);
  }
  std::cout << "wrote " << cfg.n << " background cells and " << cfg.m << " presences to " << a.out_dir << "\n";
  return 0;
}

// ---- fit ----------------------------------------------------------------------

struct FitArgs {
  std::string background, presence, weight_column, out = "fit.txt";
  std::string method;
  std::optional<double> gamma, tau, tau_multiplier;
  bool ridge = false;
  bool recover = false;
  double tol = 1e-8;
  int max_iter = 5000;
  std::string standardize = "none";
};

/// gm, fisher and rgm away from gamma ~ 0 take a tenth of the Maxent penalty.
double default_tau_multiplier(const MethodConfig& c) {
  if (c.method == Method::gm || c.method == Method::fisher) return 0.1;
  if (c.method == Method::rgm && std::abs(c.gamma) >= 0.01) return 0.1;
  return 1.0;
}

MethodConfig method_from_args(const FitArgs& a) {
  MethodConfig c;
  try {
    c = MethodConfig::defaults(parse_method(a.method));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.gamma) {
    if (c.method == Method::gamma && *a.gamma == 0.0) {
      throw UsageError("gamma = 0 is the Maxent limit; use --method maxent");
    }
    if (c.method == Method::gm || c.method == Method::fisher) {
      throw UsageError(std::string("--gamma does not apply to method ") + to_string(c.method));
    }
    c.gamma = *a.gamma;
  }
  if (a.tau && !a.tau_multiplier) {
    c.tau = *a.tau;
  } else {
    c.tau = a.tau.value_or(1.0) * a.tau_multiplier.value_or(default_tau_multiplier(c));
  }
  c.tol = a.tol;
  c.max_iter = a.max_iter;
  c.ridge = a.ridge;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

StandardizeMode parse_standardize(const std::string& s) {
  if (s == "none") return StandardizeMode::none;
  if (s == "unit") return StandardizeMode::unit_interval;
  if (s == "zscore") return StandardizeMode::zscore;
  throw UsageError("--standardize must be none, unit or zscore");
}

std::optional<std::string> opt_string(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

int run_fit(const FitArgs& a) {
  const MethodConfig cfg = method_from_args(a);
  const StandardizeMode mode = parse_standardize(a.standardize);
  const Dataset raw = load_dataset(a.background, a.presence, opt_string(a.weight_column));
  auto [data, transform] = standardize(raw, mode);
  const SuffStats stats = sufficient_stats(data);
  Fit fit = fit_method(cfg, data, stats);
  fit.coeffs = transform.to_original(fit.coeffs);
  if (a.recover) {
    const double g = (cfg.method == Method::gamma) ? cfg.gamma : 0.0;
    fit.coeffs.intercept = recover_intercept(fit.coeffs.slope, raw, g);
  }
  const SuffStats raw_stats = sufficient_stats(raw);
  const double loss = loss_value(cfg, fit.coeffs.slope, raw, raw_stats);
  {
    auto out = io::open_out(a.out);
    fit_document(fit, raw.feature_names()).write(out);
  }
  std::cout << "method=" << cfg.label() << "\tloss=" << io::format_double(loss) << "\tnnz=" << fit.nnz
            << "\titerations=" << fit.iterations << "\tconverged=" << (fit.converged ? "true" : "false")
            << "\twall_time=" << io::format_double(fit.wall_time) << "\n";
  return 0;
}

// ---- predict ------------------------------------------------------------------

struct PredictArgs {
  std::string fit, background, weight_column, out = "prediction.tsv";
};

int run_predict(const PredictArgs& a) {
  const FitFile ff = read_fit(a.fit);
  const io::Table bg = io::read_table(a.background);
  // Predictions need no presences; a placeholder keeps the Dataset invariants.
  io::Table pres;
  pres.header = {"location_id"};
  if (!bg.rows.empty()) pres.rows.push_back({bg.rows.front().front()});
  const Dataset d = load_dataset(bg, pres, opt_string(a.weight_column), a.background, "(none)");
  if (d.p() != ff.fit.coeffs.slope.size()) {
    throw DataError("fit has " + std::to_string(ff.fit.coeffs.slope.size()) + " coefficients but '" + a.background +
                    "' has " + std::to_string(d.p()) + " feature columns");
  }
  if (d.feature_names() != ff.feature_names) {
    std::cerr << "warning: feature names differ between fit and background table\n";
  }
  auto out = io::open_out(a.out);
  write_prediction(out, predict(ff.fit.coeffs, d));
  return 0;
}

// ---- eval ---------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> jeffreys;
  std::string predictions, presence, absence, fit, meta;
};

int run_eval(const EvalArgs& a) {
  bool did = false;
  if (!a.jeffreys.empty()) {
    if (a.jeffreys.size() != 2) throw UsageError("--jeffreys takes two prediction tables");
    const Prediction p1 = read_prediction(io::read_table(a.jeffreys[0]), a.jeffreys[0]);
    const Prediction p2 = read_prediction(io::read_table(a.jeffreys[1]), a.jeffreys[1]);
    if (p1.location_ids != p2.location_ids) throw DataError("prediction tables cover different locations");
    std::cout << "jeffreys\t" << io::format_double(jeffreys_from_probabilities(p1.probability, p2.probability)) << "\n";
    did = true;
  }
  if (!a.predictions.empty()) {
    if (a.presence.empty()) throw UsageError("--predictions needs --presence");
    const Prediction pr = read_prediction(io::read_table(a.predictions), a.predictions);
    std::unordered_map<std::string, Index> row;
    for (std::size_t i = 0; i < pr.location_ids.size(); ++i) row[pr.location_ids[i]] = static_cast<Index>(i);
    auto scores_for = [&](const std::string& path) {
      std::vector<double> s;
      const io::Table t = io::read_table(path);
      for (const auto& r : t.rows) {
        auto it = row.find(r[0]);
        if (it == row.end()) throw DataError(path + ": location_id '" + r[0] + "' has no prediction");
        s.push_back(pr.log_intensity[it->second]);
      }
      return s;
    };
    const std::vector<double> pres = scores_for(a.presence);
    std::vector<double> abs;
    if (a.absence.empty()) abs.assign(pr.log_intensity.data(), pr.log_intensity.data() + pr.log_intensity.size());
    else abs = scores_for(a.absence);
    std::cout << "auc\t" << io::format_double(auc(pres, abs)) << "\n";
    did = true;
  }
  if (!a.fit.empty()) {
    if (a.meta.empty()) throw UsageError("--fit needs --meta (simulation metadata with alpha_star)");
    const FitFile ff = read_fit(a.fit);
    std::ifstream in(a.meta);
    if (!in) throw IoError("cannot open '" + a.meta + "' for reading");
    const KeyValueDoc meta = KeyValueDoc::read(in);
    const auto& vals = meta.get("alpha_star");
    Eigen::VectorXd star(static_cast<Index>(vals.size()));
    for (std::size_t j = 0; j < vals.size(); ++j) star[static_cast<Index>(j)] = io::parse_double(vals[j], "alpha_star");
    if (star.size() != ff.fit.coeffs.slope.size()) throw DataError("fit and metadata disagree on p");
    std::cout << "squared_error\t" << io::format_double(squared_error(ff.fit.coeffs.slope, star)) << "\n";
    did = true;
  }
  if (!did) throw UsageError("eval needs --jeffreys, --predictions or --fit");
  return 0;
}

// ---- bench --------------------------------------------------------------------

struct BenchArgs {
  SimulateArgs sim;
  std::string methods = "fisher,gm,rgm,gamma";
  int reps = 10;
  int jobs = 1;
  double tau = 0.0;
  double tol = 1e-8;
  int max_iter = 5000;
};

/// "rgm" or "rgm:-0.1" style entries.
std::vector<MethodConfig> parse_methods(const std::string& list, double tau, double tol, int max_iter) {
  std::vector<MethodConfig> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    MethodConfig c;
    try {
      c = MethodConfig::defaults(parse_method(item.substr(0, colon)));
      if (colon != std::string::npos) c.gamma = io::parse_double(item.substr(colon + 1), "--methods");
      c.tau = tau;
      c.tol = tol;
      c.max_iter = max_iter;
      c.validate();
    } catch (const std::exception& e) {
      throw UsageError(std::string("bad --methods entry '") + item + "': " + e.what());
    }
    out.push_back(c);
  }
  if (out.empty()) throw UsageError("--methods is empty");
  return out;
}

std::string opt_num(const std::optional<double>& v) { return v ? io::format_double(*v) : "NA"; }

int run_bench(const BenchArgs& a) {
  if (a.reps < 1) throw UsageError("--reps must be at least 1");
  const SimConfig cfg = to_sim_config(a.sim);
  const auto methods = parse_methods(a.methods, a.tau, a.tol, a.max_iter);
  const ExperimentResult res = run_experiment(cfg, methods, a.reps, a.jobs);
  ensure_dir(a.sim.out_dir);
  const fs::path dir(a.sim.out_dir);
  {
    auto out = io::open_out((dir / "replications.tsv").string());
    out << "replication\tmethod\tstatus\tsquared_error\tauc_train\tauc_test\tjeffreys_vs_" << (res.reference.empty() ? "reference" : res.reference)
        << "\twall_time\trelative_cost\tnnz\titerations\tconverged\n";
    for (const auto& r : res.rows) {
      out << r.replication << '\t' << r.method << '\t' << (r.ok ? "ok" : "failed") << '\t';
      if (r.ok) {
        out << io::format_double(r.squared_error) << '\t' << io::format_double(r.auc_train) << '\t' << opt_num(r.auc_test)
            << '\t' << opt_num(r.jeffreys_vs_reference) << '\t' << io::format_double(r.wall_time) << '\t'
            << io::format_double(r.relative_cost) << '\t' << r.nnz << '\t' << r.iterations << '\t'
            << (r.converged ? "true" : "false") << '\n';
      } else {
        out << "NA\tNA\tNA\tNA\tNA\tNA\tNA\tNA\tNA\n";
        std::cerr << "replication " << r.replication << " " << r.method << " failed: " << r.error << "\n";
      }
    }
  }
  {
    auto out = io::open_out((dir / "summary.tsv").string());
    out << "method\tsuccesses\tfailures\tse_q1\tse_median\tse_q3\tse_mean\twall_median\twall_mean\t"
           "relative_cost_median\trelative_cost_mean\tauc_train_median\tauc_test_median\tnnz_median\tparallel_timing\n";
    for (const auto& s : res.summary) {
      out << s.method << '\t' << s.successes << '\t' << s.failures << '\t' << io::format_double(s.squared_error.q1) << '\t'
          << io::format_double(s.squared_error.median) << '\t' << io::format_double(s.squared_error.q3) << '\t'
          << io::format_double(s.squared_error.mean) << '\t' << io::format_double(s.wall_time.median) << '\t'
          << io::format_double(s.wall_time.mean) << '\t' << io::format_double(s.relative_cost.median) << '\t'
          << io::format_double(s.relative_cost.mean) << '\t' << io::format_double(s.auc_train.median) << '\t'
          << io::format_double(s.auc_test.median) << '\t' << io::format_double(s.nnz.median) << '\t'
          << (res.parallel_timing ? "true" : "false") << '\n';
    }
  }
  std::cout << "method\tse_median\trelative_cost_median\tfailures\n";
  for (const auto& s : res.summary) {
    std::cout << s.method << '\t' << io::format_double(s.squared_error.median) << '\t'
              << io::format_double(s.relative_cost.median) << '\t' << s.failures << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Species distribution models from presence-only data via cumulant-based approximations"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a Cox-process scenario");
  add_sim_flags(sim_cmd, sim_args);
  sim_cmd->add_option("--out-dir", sim_args.out_dir, "output directory");

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "fit a model to background and presence tables");
  fit_cmd->add_option("--background", fit_args.background)->required();
  fit_cmd->add_option("--presence", fit_args.presence)->required();
  fit_cmd->add_option("--weight-column", fit_args.weight_column, "quadrature weight column name");
  fit_cmd->add_option("--method", fit_args.method, "maxent | gamma | gm | rgm | fisher")->required();
  fit_cmd->add_option("--gamma", fit_args.gamma, "gamma (default 1e-5 for gamma/maxent, -0.5 for rgm)");
  fit_cmd->add_option("--tau", fit_args.tau, "L1 penalty (used as given unless --tau-multiplier is set)");
  fit_cmd->add_option("--tau-multiplier", fit_args.tau_multiplier, "scales tau (method default 1.0 or 0.1)");
  fit_cmd->add_flag("--ridge", fit_args.ridge, "jitter a singular covariance for fisher");
  fit_cmd->add_flag("--recover-intercept", fit_args.recover, "add the PPM intercept to the fit");
  fit_cmd->add_option("--tol", fit_args.tol);
  fit_cmd->add_option("--max-iter", fit_args.max_iter);
  fit_cmd->add_option("--standardize", fit_args.standardize, "none | unit | zscore");
  fit_cmd->add_option("--out", fit_args.out, "fit document path");

  PredictArgs pred_args;
  auto* pred_cmd = app.add_subcommand("predict", "evaluate a fit on a background table");
  pred_cmd->add_option("--fit", pred_args.fit)->required();
  pred_cmd->add_option("--background", pred_args.background)->required();
  pred_cmd->add_option("--weight-column", pred_args.weight_column);
  pred_cmd->add_option("--out", pred_args.out);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "AUC, Jeffreys divergence and squared error");
  eval_cmd->add_option("--jeffreys", eval_args.jeffreys, "two prediction tables")->expected(2);
  eval_cmd->add_option("--predictions", eval_args.predictions, "prediction table for AUC");
  eval_cmd->add_option("--presence", eval_args.presence, "presence ids for AUC");
  eval_cmd->add_option("--absence", eval_args.absence, "absence ids for AUC (default: all cells)");
  eval_cmd->add_option("--fit", eval_args.fit, "fit document for squared error");
  eval_cmd->add_option("--meta", eval_args.meta, "simulation metadata holding alpha_star");

  BenchArgs bench_args;
  bench_args.sim.out_dir = "bench";
  auto* bench_cmd = app.add_subcommand("bench", "repeat simulations and compare methods");
  add_sim_flags(bench_cmd, bench_args.sim);
  bench_cmd->add_option("--methods", bench_args.methods, "comma list, e.g. fisher,gm,rgm:-0.5,maxent");
  bench_cmd->add_option("--reps", bench_args.reps);
  bench_cmd->add_option("--jobs", bench_args.jobs, "parallel replications");
  bench_cmd->add_option("--tau", bench_args.tau);
  bench_cmd->add_option("--tol", bench_args.tol);
  bench_cmd->add_option("--max-iter", bench_args.max_iter);
  bench_cmd->add_option("--out-dir", bench_args.sim.out_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim_cmd) return run_simulate(sim_args);
    if (*fit_cmd) return run_fit(fit_args);
    if (*pred_cmd) return run_predict(pred_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*bench_cmd) return run_bench(bench_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
