#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "varinf/errors.hpp"
#include "varinf/exact_oracle.hpp"
#include "varinf/graph_model.hpp"
#include "varinf/harness.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kParse = 3, kCap = 4 };

varinf::IsingModel read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw varinf::ConfigError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return varinf::parse_model(ss.str());
}

nlohmann::json vec_json(const std::vector<double>& v) { return nlohmann::json(v); }

nlohmann::json tables_json(const std::vector<varinf::PairTable>& t) {
  auto out = nlohmann::json::array();
  for (const auto& p : t) out.push_back({p[0], p[1], p[2], p[3]});
  return out;
}

// JSON has no NaN; map non-finite numbers to null.
nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate inference for binary pairwise models"};
  app.require_subcommand(1);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run an experiment sweep from a JSON config");
  std::string config_path, out_override, dump_path;
  std::size_t threads = 0;
  bool timing = false;
  sweep->add_option("--config", config_path, "Experiment config (JSON)")->required();
  sweep->add_option("--output", out_override, "Override the raw CSV path");
  sweep->add_option("--dump-marginals", dump_path, "Write all marginals to this CSV");
  sweep->add_option("--threads", threads, "Worker threads");
  sweep->add_flag("--timing", timing, "Record wall-clock time per run");

  // infer
  auto* infer = app.add_subcommand("infer", "Run one algorithm on a model file");
  std::string model_path, algo = "bethe";
  varinf::AlgorithmOptions opt;
  std::uint64_t seed = 0;
  infer->add_option("--model", model_path, "Model file")->required();
  infer->add_option("--algo", algo, "bethe|trw|ls_convex|sbp|lbp|adapt_c|adapt_zeta|f_c|f_zeta")->required();
  auto* c_opt = infer->add_option("--c", opt.c, "Uniform pairwise counting number (implies f_c)");
  auto* z_opt = infer->add_option("--zeta", opt.zeta, "Uniform potential scale (implies f_zeta)");
  c_opt->excludes(z_opt);
  infer->add_option("--seed", seed, "Random seed");
  infer->add_option("--grad-tol", opt.fmin.grad_tol);
  infer->add_option("--max-iters", opt.fmin.max_iters);
  infer->add_option("--restarts", opt.fmin.restarts);
  infer->add_option("--wolfe-c1", opt.fmin.wolfe_c1);
  infer->add_option("--wolfe-c2", opt.fmin.wolfe_c2);
  infer->add_option("--initial-step", opt.fmin.initial_step);
  infer->add_flag("--random-initial-step", opt.fmin.random_initial_step);
  infer->add_option("--sbp-delta-zeta", opt.sbp_delta_zeta);

  // exact
  auto* exact = app.add_subcommand("exact", "Exact marginals and log Z by enumeration");
  std::size_t cap = varinf::kDefaultEnumerationCap;
  exact->add_option("--model", model_path, "Model file")->required();
  exact->add_option("--cap", cap, "Maximum number of nodes");
  unsigned exact_threads = 1;
  exact->add_option("--threads", exact_threads);

  // gen
  auto* gen = app.add_subcommand("gen", "Sample a random model");
  std::string family;
  std::size_t n = 10, rows = 5, cols = 5;
  double p = 0.2, jhat = 1.0, theta = 0.6;
  bool attractive = false;
  std::string gen_out;
  gen->add_option("--family", family, "complete|grid|er")
      ->required()
      ->check(CLI::IsMember({"complete", "grid", "er"}));
  gen->add_option("--n", n);
  gen->add_option("--rows", rows);
  gen->add_option("--cols", cols);
  gen->add_option("--p", p);
  gen->add_option("--jhat", jhat, "Couplings in U(-jhat, jhat), or U(0, jhat) with --attractive");
  gen->add_option("--theta", theta, "Field half-width");
  gen->add_flag("--attractive", attractive);
  gen->add_option("--seed", seed);
  gen->add_option("--output", gen_out, "Write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*sweep) {
      auto cfg = varinf::load_config(config_path);
      if (!out_override.empty()) {
        cfg.output = out_override;
        cfg.summary_output.clear();
      }
      if (!dump_path.empty()) cfg.marginals_output = dump_path;
      if (threads > 0) cfg.threads = threads;
      if (timing) cfg.record_timing = true;
      if (cfg.output.empty() && cfg.marginals_output.empty()) {
        const auto out = varinf::run_sweep(cfg);
        varinf::write_raw_csv(std::cout, out.records);
      } else {
        const auto out = varinf::run_and_write(cfg);
        std::cerr << out.records.size() << " rows written to " << cfg.output << '\n';
      }
    } else if (*infer) {
      const auto model = read_model(model_path);
      if (*c_opt) algo = "f_c";
      if (*z_opt) algo = "f_zeta";
      if (!varinf::is_algorithm(algo)) throw varinf::ConfigError("unknown algorithm '" + algo + "'");
      const auto r = varinf::run_algorithm(algo, model, opt, seed);
      nlohmann::json j{{"algorithm", algo},
                       {"log_z", num(r.log_z)},
                       {"converged", r.converged},
                       {"iterations", r.iterations},
                       {"c_final", num(r.c_final)},
                       {"zeta_final", num(r.zeta_final)},
                       {"log_z_model_modified", r.log_z_model_modified},
                       {"flags", r.flags},
                       {"singleton", vec_json(r.singleton)},
                       {"pairwise", tables_json(r.pairwise)}};
      std::cout << j.dump(2) << '\n';
    } else if (*exact) {
      const auto model = read_model(model_path);
      const auto r = varinf::exact_marginals(model, cap, exact_threads);
      nlohmann::json j{{"log_z", r.log_z}, {"singleton", vec_json(r.singleton)}, {"pairwise", tables_json(r.pairwise)}};
      std::cout << j.dump(2) << '\n';
    } else if (*gen) {
      varinf::Graph g = family == "complete" ? varinf::make_complete(n)
                        : family == "grid"   ? varinf::make_grid(rows, cols)
                                             : varinf::make_erdos_renyi(n, p, varinf::derive_seed(seed, 0));
      const auto m = varinf::sample_ising(g, attractive ? 0.0 : -jhat, jhat, theta, varinf::derive_seed(seed, 1));
      const auto text = varinf::serialize_model(m);
      if (gen_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(gen_out);
        if (!f) throw varinf::ConfigError("cannot write '" + gen_out + "'");
        f << text;
      }
    }
  } catch (const varinf::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kParse;
  } catch (const varinf::EnumerationCapExceeded& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCap;
  } catch (const varinf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kOk;
}
