#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "varinf/adaptive.hpp"
#include "varinf/counting_schemes.hpp"
#include "varinf/errors.hpp"
#include "varinf/exact_oracle.hpp"
#include "varinf/fmin.hpp"
#include "varinf/lbp_sbp.hpp"
#include "varinf/metrics.hpp"

namespace varinf {

inline constexpr int kCsvSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Algorithms

struct AlgorithmOptions {
  FminConfig fmin;
  AdaptCConfig adapt_c;
  AdaptZetaConfig adapt_zeta;
  LbpConfig lbp;
  double sbp_delta_zeta = 0.05;
  double c = 1.0;     // for f_c
  double zeta = 1.0;  // for f_zeta
};

/// Names accepted by run_algorithm. f_c and f_zeta use options.c / options.zeta.
inline const std::vector<std::string>& algorithm_names() {
  static const std::vector<std::string> names{"bethe", "trw",    "ls_convex", "sbp",
                                              "adapt_c", "adapt_zeta", "lbp", "f_c", "f_zeta"};
  return names;
}

inline bool is_algorithm(const std::string& name) {
  const auto& n = algorithm_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

/// Runs one named algorithm with every random choice seeded from `seed`.
/// All free-energy based algorithms share the same fmin seed, so f_c at c = 1
/// and f_zeta at zeta = 1 reproduce bethe exactly.
inline InferenceResult run_algorithm(const std::string& name, const IsingModel& m, AlgorithmOptions opt,
                                     std::uint64_t seed) {
  opt.fmin.seed = seed;
  opt.adapt_c.fmin.seed = seed;
  opt.adapt_zeta.fmin.seed = seed;
  opt.lbp.seed = seed;

  auto with_spec = [&](const FreeEnergySpec& spec, double c_final, double zeta_final) {
    auto r = result_from_fmin(spec, minimize(spec, opt.fmin));
    r.c_final = c_final;
    r.zeta_final = zeta_final;
    return r;
  };

  if (name == "bethe") return with_spec(FreeEnergySpec::bethe(m), 1.0, 1.0);
  if (name == "f_c") {
    if (!(opt.c > 0.0)) throw ConfigError("f_c needs a positive counting number");
    return with_spec(FreeEnergySpec::with_counting(m, uniform_counting(m.graph, opt.c)), opt.c, 1.0);
  }
  if (name == "f_zeta") {
    auto r = with_spec(FreeEnergySpec::with_zeta(m, opt.zeta), 1.0, opt.zeta);
    r.log_z_model_modified = opt.zeta != 1.0;
    return r;
  }
  if (name == "trw") {
    auto c = trw_counting(m.graph);
    const double mean = c.mean_pair();
    return with_spec(FreeEnergySpec::with_counting(m, std::move(c)), mean, 1.0);
  }
  if (name == "ls_convex") {
    auto c = ls_convex_counting(m.graph);
    const double mean = c.mean_pair();
    return with_spec(FreeEnergySpec::with_counting(m, std::move(c)), mean, 1.0);
  }
  InferenceResult r;
  if (name == "adapt_c") {
    r = adapt_c(m, opt.adapt_c).result;
  } else if (name == "adapt_zeta") {
    r = adapt_zeta(m, opt.adapt_zeta).result;
  } else if (name == "sbp") {
    r = sbp(m, opt.sbp_delta_zeta, opt.lbp).result;
  } else if (name == "lbp") {
    r = lbp_run(m, 1.0, opt.lbp).result;
  } else {
    throw ConfigError("unknown algorithm '" + name + "'");
  }
  // Whichever knob the algorithm does not move stays at its Bethe value.
  if (std::isnan(r.c_final)) r.c_final = 1.0;
  if (std::isnan(r.zeta_final)) r.zeta_final = 1.0;
  return r;
}

// ---------------------------------------------------------------------------
// Configuration

struct GraphFamily {
  enum class Kind { complete, grid, erdos_renyi };
  Kind kind = Kind::complete;
  std::size_t n = 10;
  std::size_t rows = 5;
  std::size_t cols = 5;
  double p = 0.2;

  std::string name() const {
    switch (kind) {
      case Kind::complete: return "complete";
      case Kind::grid: return "grid";
      case Kind::erdos_renyi: return "erdos_renyi";
    }
    return "";
  }
  std::size_t node_count() const { return kind == Kind::grid ? rows * cols : n; }
  Graph make(std::uint64_t seed) const {
    switch (kind) {
      case Kind::complete: return make_complete(n);
      case Kind::grid: return make_grid(rows, cols);
      case Kind::erdos_renyi: return make_erdos_renyi(n, p, seed);
    }
    throw ConfigError("bad graph family");
  }
};

enum class ModelClass { attractive, mixed };
enum class SweepKind { over_c, over_zeta, over_jhat };

inline std::string to_string(ModelClass m) { return m == ModelClass::attractive ? "attractive" : "mixed"; }
inline std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::over_c: return "over_c";
    case SweepKind::over_zeta: return "over_zeta";
    case SweepKind::over_jhat: return "over_jhat";
  }
  return "";
}

struct ExperimentConfig {
  GraphFamily family;
  ModelClass model_class = ModelClass::mixed;
  double jhat = 1.0;  // coupling range for over_c / over_zeta sweeps
  SweepKind sweep_kind = SweepKind::over_jhat;
  std::vector<double> sweep_values{1.0};
  std::vector<double> theta_halfwidths{0.6};
  std::size_t repetitions = 1;
  std::vector<std::string> algorithms{"bethe"};
  std::uint64_t master_seed = 0;
  std::string output;             // raw CSV; empty means none
  std::string summary_output;     // defaults to <output stem>.summary.csv
  std::string marginals_output;   // non-empty enables the marginal dump
  std::size_t threads = 1;
  bool record_timing = false;
  bool replication_mode = false;
  ErrorScale error_scale = ErrorScale::averaged;
  std::size_t enumeration_cap = kDefaultEnumerationCap;
  AlgorithmOptions options;

  void validate() const {
    if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
    if (sweep_values.empty()) throw ConfigError("sweep grid is empty");
    for (std::size_t k = 1; k < sweep_values.size(); ++k)
      if (!(sweep_values[k] > sweep_values[k - 1])) throw ConfigError("sweep grid must be strictly increasing");
    for (double v : sweep_values)
      if (!std::isfinite(v)) throw ConfigError("sweep values must be finite");
    if (sweep_kind == SweepKind::over_c && !(sweep_values.front() > 0.0))
      throw ConfigError("counting numbers in an over_c sweep must be positive");
    if (sweep_kind == SweepKind::over_jhat && !(sweep_values.front() > 0.0))
      throw ConfigError("coupling ranges in an over_jhat sweep must be positive");
    if (sweep_kind != SweepKind::over_jhat && !(jhat > 0.0)) throw ConfigError("jhat must be positive");
    if (theta_halfwidths.empty()) throw ConfigError("at least one theta half-width is required");
    for (double w : theta_halfwidths)
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("theta half-widths must be finite and nonnegative");
    for (const auto& a : algorithms) {
      if (!is_algorithm(a) || a == "f_c" || a == "f_zeta") throw ConfigError("unknown algorithm '" + a + "'");
    }
    if (std::set<std::string>(algorithms.begin(), algorithms.end()).size() != algorithms.size())
      throw ConfigError("duplicate algorithm in roster");
    if (algorithms.empty() && sweep_kind == SweepKind::over_jhat) throw ConfigError("no algorithms to run");
    if (family.node_count() < 1) throw ConfigError("graph must have at least one node");
    if (family.kind == GraphFamily::Kind::erdos_renyi && !(family.p >= 0.0 && family.p <= 1.0))
      throw ConfigError("edge probability must lie in [0, 1]");
    if (family.node_count() > enumeration_cap) throw EnumerationCapExceeded(family.node_count(), enumeration_cap);
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (!(options.sbp_delta_zeta > 0.0 && options.sbp_delta_zeta <= 1.0))
      throw ConfigError("sbp delta_zeta must lie in (0, 1]");
    try {
      options.fmin.validate();
      options.adapt_c.validate();
      options.adapt_zeta.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (replication_mode) {
      for (double w : theta_halfwidths)
        if (w != 0.2 && w != 0.6 && w != 1.0) throw ConfigError("replication mode uses theta half-widths 0.2, 0.6, 1.0");
      const double hi = sweep_kind == SweepKind::over_zeta ? 1.5 : 3.0;
      for (double v : sweep_values)
        if (!(v > 0.0 && v <= hi)) throw ConfigError("replication mode sweep values must lie in (0, " + std::to_string(hi) + "]");
    }
  }
};

namespace detail {

using json = nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

/// start, start + step, ..., up to stop inclusive, rounded to 12 decimals.
inline std::vector<double> range_values(double start, double stop, double step) {
  if (!(step > 0.0) || !(stop >= start)) throw ConfigError("sweep range needs step > 0 and stop >= start");
  std::vector<double> v;
  for (std::size_t k = 0;; ++k) {
    const double x = std::round((start + static_cast<double>(k) * step) * 1e12) / 1e12;
    if (x > stop + 1e-9) break;
    v.push_back(x);
    if (v.size() > 100000) throw ConfigError("sweep range too long");
  }
  return v;
}

}  // namespace detail

/// ExperimentConfig from its JSON form; unknown keys are errors.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  detail::check_keys(j,
                     {"family", "model_class", "jhat", "sweep", "theta_halfwidths", "repetitions", "algorithms",
                      "master_seed", "output", "summary_output", "marginals_output", "threads", "record_timing",
                      "replication_mode", "absolute_errors", "enumeration_cap", "fmin", "adapt_c", "adapt_zeta", "sbp"},
                     "config");
  ExperimentConfig c;
  if (j.contains("family")) {
    const auto& f = j.at("family");
    detail::check_keys(f, {"kind", "n", "rows", "cols", "p"}, "family");
    std::string kind = "complete";
    read(f, "kind", kind);
    if (kind == "complete") {
      c.family.kind = GraphFamily::Kind::complete;
    } else if (kind == "grid") {
      c.family.kind = GraphFamily::Kind::grid;
    } else if (kind == "erdos_renyi" || kind == "er") {
      c.family.kind = GraphFamily::Kind::erdos_renyi;
      c.family.n = 25;
    } else {
      throw ConfigError("unknown graph family '" + kind + "'");
    }
    read(f, "n", c.family.n);
    read(f, "rows", c.family.rows);
    read(f, "cols", c.family.cols);
    read(f, "p", c.family.p);
  }
  std::string mc = "mixed";
  read(j, "model_class", mc);
  if (mc == "attractive") {
    c.model_class = ModelClass::attractive;
  } else if (mc == "mixed") {
    c.model_class = ModelClass::mixed;
  } else {
    throw ConfigError("model_class must be 'attractive' or 'mixed'");
  }
  read(j, "jhat", c.jhat);
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    detail::check_keys(s, {"kind", "values", "start", "stop", "step"}, "sweep");
    std::string kind = "over_jhat";
    read(s, "kind", kind);
    if (kind == "over_c") {
      c.sweep_kind = SweepKind::over_c;
    } else if (kind == "over_zeta") {
      c.sweep_kind = SweepKind::over_zeta;
    } else if (kind == "over_jhat") {
      c.sweep_kind = SweepKind::over_jhat;
    } else {
      throw ConfigError("unknown sweep kind '" + kind + "'");
    }
    if (s.contains("values")) {
      read(s, "values", c.sweep_values);
    } else if (s.contains("start")) {
      double start = 0.0, stop = 0.0, step = 0.0;
      read(s, "start", start);
      read(s, "stop", stop);
      read(s, "step", step);
      c.sweep_values = detail::range_values(start, stop, step);
    }
  }
  read(j, "theta_halfwidths", c.theta_halfwidths);
  read(j, "repetitions", c.repetitions);
  read(j, "algorithms", c.algorithms);
  read(j, "master_seed", c.master_seed);
  read(j, "output", c.output);
  read(j, "summary_output", c.summary_output);
  read(j, "marginals_output", c.marginals_output);
  read(j, "threads", c.threads);
  read(j, "record_timing", c.record_timing);
  read(j, "replication_mode", c.replication_mode);
  bool absolute = false;
  read(j, "absolute_errors", absolute);
  c.error_scale = absolute ? ErrorScale::absolute : ErrorScale::averaged;
  read(j, "enumeration_cap", c.enumeration_cap);

  auto& o = c.options;
  if (j.contains("fmin")) {
    const auto& f = j.at("fmin");
    detail::check_keys(f, {"grad_tol", "max_iters", "restarts", "wolfe_c1", "wolfe_c2", "projection_shrink",
                           "wolfe_expand", "line_search_iters", "initial_step", "random_initial_step"},
                       "fmin");
    read(f, "grad_tol", o.fmin.grad_tol);
    read(f, "max_iters", o.fmin.max_iters);
    read(f, "restarts", o.fmin.restarts);
    read(f, "wolfe_c1", o.fmin.wolfe_c1);
    read(f, "wolfe_c2", o.fmin.wolfe_c2);
    read(f, "projection_shrink", o.fmin.projection_shrink);
    read(f, "wolfe_expand", o.fmin.wolfe_expand);
    read(f, "line_search_iters", o.fmin.line_search_iters);
    read(f, "initial_step", o.fmin.initial_step);
    read(f, "random_initial_step", o.fmin.random_initial_step);
  }
  // The adaptive algorithms inherit the shared fmin settings unless overridden.
  const auto zeta_restarts = o.adapt_zeta.fmin.restarts;
  o.adapt_c.fmin = o.fmin;
  o.adapt_zeta.fmin = o.fmin;
  o.adapt_zeta.fmin.restarts = zeta_restarts;
  if (j.contains("adapt_c")) {
    const auto& a = j.at("adapt_c");
    detail::check_keys(a, {"delta_c", "c_tol", "c_max", "restarts"}, "adapt_c");
    read(a, "delta_c", o.adapt_c.delta_c);
    read(a, "c_tol", o.adapt_c.c_tol);
    read(a, "c_max", o.adapt_c.c_max);
    read(a, "restarts", o.adapt_c.fmin.restarts);
  }
  if (j.contains("adapt_zeta")) {
    const auto& a = j.at("adapt_zeta");
    detail::check_keys(a, {"delta_zeta", "restarts"}, "adapt_zeta");
    read(a, "delta_zeta", o.adapt_zeta.delta_zeta);
    read(a, "restarts", o.adapt_zeta.fmin.restarts);
  }
  if (j.contains("sbp")) {
    const auto& a = j.at("sbp");
    detail::check_keys(a, {"delta_zeta", "max_sweeps", "tol", "damping"}, "sbp");
    read(a, "delta_zeta", o.sbp_delta_zeta);
    read(a, "max_sweeps", o.lbp.max_sweeps);
    read(a, "tol", o.lbp.tol);
    read(a, "damping", o.lbp.damping);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Sweeps

struct ErrorRecord {
  std::string family;
  std::size_t n_nodes = 0;
  std::size_t n_edges = 0;
  std::string model_class;
  double theta_halfwidth = 0.0;
  std::string sweep_kind;
  double sweep_value = std::numeric_limits<double>::quiet_NaN();  // NaN: not on the grid
  std::size_t rep = 0;
  std::uint64_t instance_seed = 0;
  std::string algorithm;
  double err_singleton = 0.0;
  double err_pairwise = 0.0;
  double err_log_z = 0.0;
  double log_z_est = 0.0;
  double log_z_exact = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  double c_final = std::numeric_limits<double>::quiet_NaN();
  double zeta_final = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;

  // Ordering keys: grid index (-1 for roster rows of c/zeta sweeps), theta
  // index, repetition, position of the algorithm in the row list.
  long sweep_index = 0;
  std::size_t theta_index = 0;
  std::size_t algorithm_index = 0;
};

/// Marginals of one instance for the optional dump.
struct MarginalDump {
  ErrorRecord key;  // identifies the row; algorithm "exact" for ground truth
  std::vector<double> singleton;
  std::vector<PairTable> pairwise;
  double log_z = 0.0;
};

struct SweepOutput {
  std::vector<ErrorRecord> records;
  std::vector<MarginalDump> marginals;
};

/// Deterministic seed of one model instance. Over c and zeta the instance is
/// shared by all grid values so that the curves compare like with like.
inline std::uint64_t instance_seed(const ExperimentConfig& cfg, std::size_t sweep_index, std::size_t theta_index,
                                   std::size_t rep) {
  if (cfg.sweep_kind == SweepKind::over_jhat) return derive_seed(cfg.master_seed, 1, sweep_index, theta_index, rep);
  return derive_seed(cfg.master_seed, 2, theta_index, rep);
}

/// The model of one instance.
inline IsingModel instance_model(const ExperimentConfig& cfg, double jhat, double theta_halfwidth,
                                 std::uint64_t seed) {
  const auto g = cfg.family.make(derive_seed(seed, 0));
  const double lo = cfg.model_class == ModelClass::attractive ? 0.0 : -jhat;
  return sample_ising(g, lo, jhat, theta_halfwidth, derive_seed(seed, 1));
}

namespace detail {

struct SweepTask {
  long sweep_index;  // -1 for c/zeta sweeps (all grid values in one task)
  std::size_t theta_index;
  std::size_t rep;
};

inline void run_task(const ExperimentConfig& cfg, const SweepTask& task, SweepOutput& out) {
  const bool over_jhat = cfg.sweep_kind == SweepKind::over_jhat;
  const double jhat = over_jhat ? cfg.sweep_values[static_cast<std::size_t>(task.sweep_index)] : cfg.jhat;
  const double theta = cfg.theta_halfwidths[task.theta_index];
  const auto seed = instance_seed(cfg, over_jhat ? static_cast<std::size_t>(task.sweep_index) : 0,
                                  task.theta_index, task.rep);
  const auto model = instance_model(cfg, jhat, theta, seed);
  const auto exact = exact_marginals(model, cfg.enumeration_cap);
  const auto algo_seed = derive_seed(seed, 2);

  ErrorRecord base;
  base.family = cfg.family.name();
  base.n_nodes = model.node_count();
  base.n_edges = model.edge_count();
  base.model_class = to_string(cfg.model_class);
  base.theta_halfwidth = theta;
  base.sweep_kind = to_string(cfg.sweep_kind);
  base.rep = task.rep;
  base.instance_seed = seed;
  base.log_z_exact = exact.log_z;
  base.theta_index = task.theta_index;

  const bool dump = !cfg.marginals_output.empty();
  if (dump) {
    MarginalDump d{base, exact.singleton, exact.pairwise, exact.log_z};
    d.key.algorithm = "exact";
    d.key.sweep_index = over_jhat ? task.sweep_index : -1;
    if (over_jhat) d.key.sweep_value = jhat;
    out.marginals.push_back(std::move(d));
  }

  auto emit = [&](const std::string& name, long sweep_index, double sweep_value, std::size_t algorithm_index,
                  const AlgorithmOptions& opt) {
    ErrorRecord r = base;
    r.algorithm = name;
    r.sweep_index = sweep_index;
    r.sweep_value = sweep_value;
    r.algorithm_index = algorithm_index;
    const auto t0 = std::chrono::steady_clock::now();
    InferenceResult res;
    try {
      res = run_algorithm(name, model, opt, algo_seed);
    } catch (const std::exception& e) {
      // Recorded in-row; the sweep carries on.
      res = InferenceResult{};
      res.flags.emplace_back(e.what());
    }
    const auto t1 = std::chrono::steady_clock::now();
    if (cfg.record_timing) r.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    const bool complete = res.singleton.size() == model.node_count() && res.pairwise.size() == model.edge_count();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.err_singleton = complete ? err_singleton(exact, res, cfg.error_scale) : nan;
    r.err_pairwise = complete ? err_pairwise(exact, res, cfg.error_scale) : nan;
    r.err_log_z = err_log_z(exact.log_z, res.log_z);
    r.log_z_est = res.log_z;
    r.converged = res.converged;
    r.iterations = res.iterations;
    r.c_final = res.c_final;
    r.zeta_final = res.zeta_final;
    if (dump && complete) out.marginals.push_back({r, res.singleton, res.pairwise, res.log_z});
    out.records.push_back(std::move(r));
  };

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const long roster_index = over_jhat ? task.sweep_index : -1;
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a)
    emit(cfg.algorithms[a], roster_index, over_jhat ? jhat : nan, a, cfg.options);
  if (!over_jhat) {
    const bool over_c = cfg.sweep_kind == SweepKind::over_c;
    for (std::size_t k = 0; k < cfg.sweep_values.size(); ++k) {
      AlgorithmOptions opt = cfg.options;
      (over_c ? opt.c : opt.zeta) = cfg.sweep_values[k];
      emit(over_c ? "f_c" : "f_zeta", static_cast<long>(k), cfg.sweep_values[k], cfg.algorithms.size(), opt);
    }
  }
}

inline auto row_key(const ErrorRecord& r) {
  return std::make_tuple(r.sweep_index, r.theta_index, r.rep, r.algorithm_index);
}

}  // namespace detail

/// Every (sweep point, theta scenario, repetition) instance, all algorithms,
/// sorted by (sweep point, scenario, repetition, algorithm). Instances run on
/// cfg.threads workers; the result does not depend on the thread count.
inline SweepOutput run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<detail::SweepTask> tasks;
  const long points = cfg.sweep_kind == SweepKind::over_jhat ? static_cast<long>(cfg.sweep_values.size()) : 1;
  for (long s = 0; s < points; ++s)
    for (std::size_t t = 0; t < cfg.theta_halfwidths.size(); ++t)
      for (std::size_t r = 0; r < cfg.repetitions; ++r)
        tasks.push_back({cfg.sweep_kind == SweepKind::over_jhat ? s : -1, t, r});

  std::vector<SweepOutput> parts(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) detail::run_task(cfg, tasks[i], parts[i]);
  };
  const auto n_threads = std::min(cfg.threads, std::max<std::size_t>(tasks.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  SweepOutput out;
  for (auto& p : parts) {
    for (auto& r : p.records) out.records.push_back(std::move(r));
    for (auto& m : p.marginals) out.marginals.push_back(std::move(m));
  }
  auto by_key = [](const ErrorRecord& a, const ErrorRecord& b) { return detail::row_key(a) < detail::row_key(b); };
  std::stable_sort(out.records.begin(), out.records.end(), by_key);
  std::stable_sort(out.marginals.begin(), out.marginals.end(),
                   [&](const MarginalDump& a, const MarginalDump& b) { return by_key(a.key, b.key); });
  return out;
}

// ---------------------------------------------------------------------------
// CSV output

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline const char* raw_csv_header() {
  return "schema_version,family,n_nodes,n_edges,model_class,theta_halfwidth,sweep_kind,sweep_value,rep,"
         "instance_seed,algorithm,err_singleton,err_pairwise,err_logZ,logz_est,logz_exact,converged,iterations,"
         "c_final,zeta_final,wall_ms";
}

inline void write_raw_csv(std::ostream& os, const std::vector<ErrorRecord>& rows) {
  using detail::fmt;
  os << raw_csv_header() << '\n';
  for (const auto& r : rows) {
    os << kCsvSchemaVersion << ',' << r.family << ',' << r.n_nodes << ',' << r.n_edges << ',' << r.model_class << ','
       << fmt(r.theta_halfwidth) << ',' << r.sweep_kind << ',' << fmt(r.sweep_value) << ',' << r.rep << ','
       << r.instance_seed << ',' << r.algorithm << ',' << fmt(r.err_singleton) << ',' << fmt(r.err_pairwise) << ','
       << fmt(r.err_log_z) << ',' << fmt(r.log_z_est) << ',' << fmt(r.log_z_exact) << ',' << (r.converged ? 1 : 0)
       << ',' << r.iterations << ',' << fmt(r.c_final) << ',' << fmt(r.zeta_final) << ',' << fmt(r.wall_ms) << '\n';
  }
}

struct SummaryRow {
  std::string sweep_kind;
  double sweep_value = 0.0;
  double theta_halfwidth = 0.0;
  std::string algorithm;
  std::size_t count = 0;     // rows included in the means
  std::size_t excluded = 0;  // rows with a non-finite error
  double mean_err_singleton = 0.0;
  double mean_err_pairwise = 0.0;
  double mean_err_log_z = 0.0;
  double converged_fraction = 0.0;
  double mean_c_final = 0.0;
  double mean_zeta_final = 0.0;
};

/// Means per (sweep point, scenario, algorithm), in first-appearance order of
/// the sorted raw rows. Rows with any non-finite error are excluded and counted.
inline std::vector<SummaryRow> summarize(const std::vector<ErrorRecord>& rows) {
  std::vector<SummaryRow> out;
  std::map<std::tuple<long, std::size_t, std::size_t>, std::size_t> index;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.sweep_index, r.theta_index, r.algorithm_index);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      SummaryRow s;
      s.sweep_kind = r.sweep_kind;
      s.sweep_value = r.sweep_value;
      s.theta_halfwidth = r.theta_halfwidth;
      s.algorithm = r.algorithm;
      out.push_back(s);
    }
    auto& s = out[it->second];
    if (!std::isfinite(r.err_singleton) || !std::isfinite(r.err_pairwise) || !std::isfinite(r.err_log_z)) {
      ++s.excluded;
      continue;
    }
    ++s.count;
    s.mean_err_singleton += r.err_singleton;
    s.mean_err_pairwise += r.err_pairwise;
    s.mean_err_log_z += r.err_log_z;
    s.converged_fraction += r.converged ? 1.0 : 0.0;
    s.mean_c_final += r.c_final;
    s.mean_zeta_final += r.zeta_final;
  }
  for (auto& s : out) {
    const double n = static_cast<double>(s.count);
    if (s.count == 0) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      s.mean_err_singleton = s.mean_err_pairwise = s.mean_err_log_z = nan;
      s.converged_fraction = s.mean_c_final = s.mean_zeta_final = nan;
      continue;
    }
    s.mean_err_singleton /= n;
    s.mean_err_pairwise /= n;
    s.mean_err_log_z /= n;
    s.converged_fraction /= n;
    s.mean_c_final /= n;
    s.mean_zeta_final /= n;
  }
  return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows, const ExperimentConfig& cfg) {
  using detail::fmt;
  os << "schema_version,family,model_class,sweep_kind,sweep_value,theta_halfwidth,algorithm,count,excluded_count,"
        "mean_err_singleton,mean_err_pairwise,mean_err_logZ,converged_fraction,mean_c_final,mean_zeta_final\n";
  for (const auto& s : rows) {
    os << kCsvSchemaVersion << ',' << cfg.family.name() << ',' << to_string(cfg.model_class) << ',' << s.sweep_kind
       << ',' << fmt(s.sweep_value) << ',' << fmt(s.theta_halfwidth) << ',' << s.algorithm << ',' << s.count << ','
       << s.excluded << ',' << fmt(s.mean_err_singleton) << ',' << fmt(s.mean_err_pairwise) << ','
       << fmt(s.mean_err_log_z) << ',' << fmt(s.converged_fraction) << ',' << fmt(s.mean_c_final) << ','
       << fmt(s.mean_zeta_final) << '\n';
  }
}

/// Long format: one line per log Z, node and edge of every dumped result.
inline void write_marginals_csv(std::ostream& os, const std::vector<MarginalDump>& dumps) {
  using detail::fmt;
  os << "schema_version,sweep_kind,sweep_value,theta_halfwidth,rep,instance_seed,algorithm,item,index,v0,v1,v2,v3\n";
  for (const auto& d : dumps) {
    std::ostringstream prefix;
    prefix << kCsvSchemaVersion << ',' << d.key.sweep_kind << ',' << fmt(d.key.sweep_value) << ','
           << fmt(d.key.theta_halfwidth) << ',' << d.key.rep << ',' << d.key.instance_seed << ',' << d.key.algorithm
           << ',';
    const auto p = prefix.str();
    os << p << "logz,0," << fmt(d.log_z) << ",,,\n";
    for (std::size_t i = 0; i < d.singleton.size(); ++i) os << p << "node," << i << ',' << fmt(d.singleton[i]) << ",,,\n";
    for (std::size_t k = 0; k < d.pairwise.size(); ++k) {
      const auto& t = d.pairwise[k];
      os << p << "edge," << k << ',' << fmt(t[0]) << ',' << fmt(t[1]) << ',' << fmt(t[2]) << ',' << fmt(t[3]) << '\n';
    }
  }
}

/// <stem>.summary.csv next to the raw CSV unless configured.
inline std::string summary_path(const ExperimentConfig& cfg) {
  if (!cfg.summary_output.empty()) return cfg.summary_output;
  auto p = cfg.output;
  if (p.size() > 4 && p.compare(p.size() - 4, 4, ".csv") == 0) p.resize(p.size() - 4);
  return p + ".summary.csv";
}

/// Runs the sweep and writes the raw, summary and (optional) marginal CSVs.
inline SweepOutput run_and_write(const ExperimentConfig& cfg) {
  auto out = run_sweep(cfg);
  auto open = [](const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    return f;
  };
  if (!cfg.output.empty()) {
    auto raw = open(cfg.output);
    write_raw_csv(raw, out.records);
    auto sum = open(summary_path(cfg));
    write_summary_csv(sum, summarize(out.records), cfg);
  }
  if (!cfg.marginals_output.empty()) {
    auto m = open(cfg.marginals_output);
    write_marginals_csv(m, out.marginals);
  }
  return out;
}

}  // namespace varinf
