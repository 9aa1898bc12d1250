// Command-line driver: run, evaluate, histogram, list-systems.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qens/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct RunFlags {
  std::string config;
  std::optional<std::string> system, optimizer, output;
  std::optional<double> alpha, beta1, beta2, epsilon, momentum, total_time;
  std::optional<std::size_t> batch, grid_points, budget, steps, test_size, eval_stride, workers;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> snapshot_iterations;
};

qens::Json layered_config(const RunFlags& f) {
  qens::Json doc = f.config.empty() ? qens::Json::object() : qens::read_json_file(f.config);
  if (!doc.is_object()) throw qens::ConfigError("config file must hold a JSON object");
  auto& opt = doc["optimizer"];
  if (opt.is_null()) opt = qens::Json::object();
  auto set = [](qens::Json& j, const char* key, const auto& v) {
    if (v) j[key] = *v;
  };
  set(doc, "system", f.system);
  set(doc, "output", f.output);
  set(doc, "T", f.total_time);
  set(doc, "Q", f.steps);
  set(doc, "seed", f.seed);
  set(doc, "test_size", f.test_size);
  set(doc, "eval_stride", f.eval_stride);
  set(doc, "workers", f.workers);
  if (!f.snapshot_iterations.empty()) doc["snapshot_iterations"] = f.snapshot_iterations;
  set(opt, "kind", f.optimizer);
  set(opt, "alpha", f.alpha);
  set(opt, "beta1", f.beta1);
  set(opt, "beta2", f.beta2);
  set(opt, "epsilon", f.epsilon);
  set(opt, "momentum", f.momentum);
  set(opt, "M", f.batch);
  set(opt, "grid_points_per_dim", f.grid_points);
  set(opt, "budget", f.budget);
  return doc;
}

int list_systems() {
  for (auto id : qens::kAllSystems) {
    std::visit(
        [](const auto& spec) {
          std::cout << spec.name() << "  N=" << spec.dim << "  d=" << spec.domain.dim()
                    << "  L=" << spec.channels << "  T=" << spec.default_time
                    << "  Q=" << spec.default_steps << "  theta in";
          for (std::size_t i = 0; i < spec.domain.dim(); ++i)
            std::cout << " [" << spec.domain.lower(i) << ", " << spec.domain.upper(i) << "]";
          std::cout << '\n';
        },
        qens::make_system(id));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust control of inhomogeneous quantum ensembles by stochastic optimization"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "optimize a control and write manifest, trace and control");
  run->add_option("--config", rf.config, "JSON config file (flags override its keys)");
  run->add_option("--system", rf.system, "spin2 | lambda3 | relax3d | relax6d");
  run->add_option("--optimizer", rf.optimizer, "sgd | adam | momentum | fixed_grid");
  run->add_option("--alpha", rf.alpha, "learning rate");
  run->add_option("--beta1", rf.beta1);
  run->add_option("--beta2", rf.beta2);
  run->add_option("--epsilon", rf.epsilon);
  run->add_option("--momentum", rf.momentum, "decay lambda of the momentum method");
  run->add_option("--M", rf.batch, "mini-batch size");
  run->add_option("--grid-points", rf.grid_points, "points per dimension for fixed_grid");
  run->add_option("--budget", rf.budget, "maximum cumulative gradient evaluations");
  run->add_option("--seed", rf.seed, "master seed");
  run->add_option("--T", rf.total_time, "final time");
  run->add_option("--Q", rf.steps, "number of time steps");
  run->add_option("--test-size", rf.test_size, "test-set size");
  run->add_option("--eval-stride", rf.eval_stride, "iterations between test evaluations");
  run->add_option("--workers", rf.workers, "worker threads");
  run->add_option("--output", rf.output, "output directory");
  run->add_option("--snapshot-iterations", rf.snapshot_iterations,
                  "iterations whose controls are kept for histograms");

  std::string control_file, eval_system, report_file;
  std::uint64_t eval_seed = 0;
  std::size_t eval_test_size = qens::kDefaultTestSize, eval_workers = 1;
  std::optional<double> eval_time;
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a control file on a seeded test set");
  evaluate->add_option("--control", control_file, "control CSV (t,u1,...,uL)")->required();
  evaluate->add_option("--system", eval_system)->required();
  evaluate->add_option("--seed", eval_seed, "master seed of the test set");
  evaluate->add_option("--test-size", eval_test_size);
  evaluate->add_option("--T", eval_time, "final time (default: system default)");
  evaluate->add_option("--workers", eval_workers);
  evaluate->add_option("--report", report_file, "JSON report path (default: next to the control)");

  std::string run_dir;
  std::vector<std::size_t> hist_iterations;
  auto* histogram = app.add_subcommand("histogram", "write gradient histograms from a run");
  histogram->add_option("--run", run_dir, "run directory")->required();
  histogram->add_option("--iterations", hist_iterations, "snapshot iterations")->delimiter(',');

  app.add_subcommand("list-systems", "print the benchmark catalog");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      const auto cfg = qens::resolve_config(layered_config(rf));
      const auto outcome = qens::run_experiment(cfg);
      const auto& last = outcome.result.trace.back();
      std::cout << "wrote " << outcome.output.string() << "  iterations=" << last.iteration
                << "  grad_evals=" << last.grad_evals << "  mean_rel_error=" << last.mean_rel_error
                << "  max_rel_error=" << last.max_rel_error << '\n';
    } else if (*evaluate) {
      const auto id = qens::parse_system_id(eval_system);
      if (!id) throw qens::ConfigError("unknown system '" + eval_system + "'");
      if (eval_test_size == 0) throw qens::ConfigError("test size must be >= 1");
      qens::EvaluateRequest req{control_file, *id,         eval_seed,
                                eval_test_size, eval_time, eval_workers,
                                report_file};
      if (req.report_file.empty())
        req.report_file = std::filesystem::path(control_file).parent_path() / "report.json";
      const auto report = qens::evaluate_control(req);
      std::cout << std::setprecision(17) << "mean_rel_error=" << report.mean_rel_error
                << "  max_rel_error=" << report.max_rel_error << "  report=" << req.report_file
                << '\n';
    } else if (*histogram) {
      const auto files = qens::emit_histograms(run_dir, hist_iterations);
      std::cout << "wrote " << files.size() << " histogram files\n";
    } else {
      return list_systems();
    }
  } catch (const qens::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const qens::DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
