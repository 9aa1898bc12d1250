#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynamics.hpp"
#include "evaluate.hpp"
#include "optimize.hpp"
#include "sampling.hpp"
#include "systems.hpp"

namespace qens {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "QENS_OUTPUT_ROOT";

using Json = nlohmann::json;

/// Fully resolved experiment description.
struct RunConfig {
  SystemId system = SystemId::spin2;
  double total_time = 0.0;
  std::size_t steps = 200;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  std::size_t test_size = kDefaultTestSize;
  std::size_t eval_stride = 1;
  std::size_t workers = 1;
  std::filesystem::path output;
  std::set<std::size_t> snapshot_iterations;
  std::vector<double> snapshot_times;

  TimeGrid grid() const { return TimeGrid(total_time, steps); }
};

namespace detail {

inline const std::set<std::string>& known_top_keys() {
  static const std::set<std::string> keys = {
      "system", "T", "Q", "seed", "test_size", "eval_stride", "workers", "output",
      "snapshot_iterations", "snapshot_times", "optimizer",
      // manifest-only keys
      "version", "created", "streams"};
  return keys;
}

inline const std::set<std::string>& known_optimizer_keys() {
  static const std::set<std::string> keys = {"kind", "alpha", "beta1", "beta2", "epsilon",
                                             "momentum", "M", "grid_points_per_dim", "budget"};
  return keys;
}

template <class T>
T get_as(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = get_as<T>(j, key);
}

inline std::size_t read_count(const Json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace detail

/// Resolves a layered JSON document into a RunConfig, filling per-system
/// defaults for anything missing.
inline RunConfig resolve_config(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, _] : doc.items())
    if (!detail::known_top_keys().contains(k)) throw ConfigError("unknown config key '" + k + "'");

  RunConfig cfg;
  if (!doc.contains("system")) throw ConfigError("config is missing 'system'");
  const auto name = detail::get_as<std::string>(doc, "system");
  const auto id = parse_system_id(name);
  if (!id) throw ConfigError("unknown system '" + name + "'");
  cfg.system = *id;

  const AnySystem sys = make_system(cfg.system);
  std::visit(
      [&](const auto& spec) {
        cfg.total_time = spec.default_time;
        cfg.steps = spec.default_steps;
      },
      sys);
  detail::read_opt(doc, "T", cfg.total_time);
  cfg.steps = detail::read_count(doc, "Q", cfg.steps);
  if (!(cfg.total_time > 0.0) || !std::isfinite(cfg.total_time)) throw ConfigError("T must be > 0");
  if (cfg.steps == 0) throw ConfigError("Q must be >= 1");

  if (doc.contains("seed")) {
    const auto& s = doc.at("seed");
    if (!s.is_number_integer()) throw ConfigError("seed must be an integer");
    cfg.seed = s.is_number_unsigned() ? s.get<std::uint64_t>()
                                      : static_cast<std::uint64_t>(s.get<std::int64_t>());
  }
  cfg.test_size = detail::read_count(doc, "test_size", cfg.test_size);
  cfg.eval_stride = detail::read_count(doc, "eval_stride", cfg.eval_stride);
  cfg.workers = detail::read_count(doc, "workers", cfg.workers);
  if (cfg.test_size == 0) throw ConfigError("test_size must be >= 1");
  if (cfg.eval_stride == 0) throw ConfigError("eval_stride must be >= 1");
  if (cfg.workers == 0) cfg.workers = 1;
  if (doc.contains("output")) cfg.output = detail::get_as<std::string>(doc, "output");
  if (doc.contains("snapshot_iterations"))
    for (auto k : detail::get_as<std::vector<std::int64_t>>(doc, "snapshot_iterations")) {
      if (k < 0) throw ConfigError("snapshot_iterations must be non-negative");
      cfg.snapshot_iterations.insert(static_cast<std::size_t>(k));
    }
  if (doc.contains("snapshot_times")) {
    cfg.snapshot_times = detail::get_as<std::vector<double>>(doc, "snapshot_times");
  } else {
    for (int k = 0; k <= 5; ++k) cfg.snapshot_times.push_back(cfg.total_time * (k / 5.0));
  }
  for (double t : cfg.snapshot_times)
    if (!(t >= 0.0 && t <= cfg.total_time)) throw ConfigError("snapshot_times must lie in [0, T]");

  const Json opt = doc.value("optimizer", Json::object());
  if (!opt.is_object()) throw ConfigError("'optimizer' must be an object");
  for (const auto& [k, _] : opt.items())
    if (!detail::known_optimizer_keys().contains(k))
      throw ConfigError("unknown optimizer key '" + k + "'");
  auto& o = cfg.optimizer;
  if (opt.contains("kind")) {
    const auto kind = detail::get_as<std::string>(opt, "kind");
    const auto parsed = parse_optimizer_kind(kind);
    if (!parsed) throw ConfigError("unknown optimizer kind '" + kind + "'");
    o.kind = *parsed;
  }
  detail::read_opt(opt, "alpha", o.alpha);
  detail::read_opt(opt, "beta1", o.beta1);
  detail::read_opt(opt, "beta2", o.beta2);
  detail::read_opt(opt, "epsilon", o.epsilon);
  detail::read_opt(opt, "momentum", o.momentum);
  o.batch_size = detail::read_count(opt, "M", o.batch_size);
  o.grid_points = detail::read_count(opt, "grid_points_per_dim", o.grid_points);
  o.budget = detail::read_count(opt, "budget", o.budget);
  o.validate();
  return cfg;
}

/// Inverse of resolve_config for the resolved fields.
inline Json config_to_json(const RunConfig& cfg) {
  const auto& o = cfg.optimizer;
  return Json{{"system", std::string(to_string(cfg.system))},
              {"T", cfg.total_time},
              {"Q", cfg.steps},
              {"seed", cfg.seed},
              {"test_size", cfg.test_size},
              {"eval_stride", cfg.eval_stride},
              {"workers", cfg.workers},
              {"output", cfg.output.string()},
              {"snapshot_iterations", cfg.snapshot_iterations},
              {"snapshot_times", cfg.snapshot_times},
              {"optimizer",
               {{"kind", std::string(to_string(o.kind))},
                {"alpha", o.alpha},
                {"beta1", o.beta1},
                {"beta2", o.beta2},
                {"epsilon", o.epsilon},
                {"momentum", o.momentum},
                {"M", o.batch_size},
                {"grid_points_per_dim", o.grid_points},
                {"budget", o.budget}}}};
}

inline Json make_manifest(const RunConfig& cfg) {
  Json m = config_to_json(cfg);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ts;
  ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  m["version"] = std::string(kVersion);
  m["created"] = ts.str();
  m["streams"] = {{"training", derive_seed(cfg.seed, Stream::training)},
                  {"test", derive_seed(cfg.seed, Stream::test)}};
  return m;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

/// Output directory: explicit value, else $QENS_OUTPUT_ROOT (or ./runs) plus a
/// name derived from the config.
inline std::filesystem::path default_output_dir(const RunConfig& cfg) {
  const char* root = std::getenv(kOutputRootEnv);
  std::filesystem::path base = root && *root ? root : "runs";
  return base / (std::string(to_string(cfg.system)) + "_" +
                 std::string(to_string(cfg.optimizer.kind)) + "_seed" + std::to_string(cfg.seed));
}

// ---- CSV I/O ---------------------------------------------------------------

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

inline void write_trace_csv(const std::filesystem::path& path, const ConvergenceTrace& trace) {
  auto out = open_output(path);
  out << "iter,grad_evals,mean_rel_error,max_rel_error\n";
  for (const auto& r : trace)
    out << r.iteration << ',' << r.grad_evals << ',' << r.mean_rel_error << ','
        << r.max_rel_error << '\n';
}

inline void write_control_csv(const std::filesystem::path& path, const ControlField& u) {
  auto out = open_output(path);
  out << 't';
  for (std::size_t l = 0; l < u.channels(); ++l) out << ",u" << (l + 1);
  out << '\n';
  for (std::size_t n = 0; n < u.steps(); ++n) {
    out << u.grid.time(n);
    for (std::size_t l = 0; l < u.channels(); ++l) out << ',' << u.values(l, n);
    out << '\n';
  }
}

inline void write_values_csv(const std::filesystem::path& path, const std::vector<double>& values) {
  auto out = open_output(path);
  for (double v : values) out << v << '\n';
}

inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path,
                                                         std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::getline(in, header);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": not a number: '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Reads a `t,u1,...,uL` file onto the given time grid.
inline ControlField read_control_csv(const std::filesystem::path& path, const TimeGrid& grid,
                                     std::size_t channels) {
  std::string header;
  const auto rows = read_numeric_csv(path, header);
  if (rows.size() != grid.steps())
    throw std::runtime_error(path.string() + ": expected " + std::to_string(grid.steps()) +
                             " rows, found " + std::to_string(rows.size()));
  ControlField u(grid, channels);
  for (std::size_t n = 0; n < rows.size(); ++n) {
    if (rows[n].size() != channels + 1)
      throw std::runtime_error(path.string() + ": row " + std::to_string(n + 1) + " has " +
                               std::to_string(rows[n].size()) + " columns, expected " +
                               std::to_string(channels + 1));
    if (std::abs(rows[n][0] - grid.time(n)) > 1e-9 * std::max(1.0, grid.total_time()))
      throw std::runtime_error(path.string() + ": time column does not match the grid at row " +
                               std::to_string(n + 1));
    for (std::size_t l = 0; l < channels; ++l) u.values(l, n) = rows[n][l + 1];
  }
  return u;
}

inline std::filesystem::path snapshot_path(const std::filesystem::path& run_dir,
                                           std::size_t iteration) {
  return run_dir / "snapshots" / ("control_iter" + std::to_string(iteration) + ".csv");
}

inline std::size_t time_to_index(double t, const TimeGrid& grid) {
  const auto n = static_cast<std::size_t>(std::floor(t / grid.dt() + 1e-9));
  return std::min(n, grid.steps() - 1);
}

// ---- subcommands -----------------------------------------------------------

struct ExperimentOutcome {
  std::filesystem::path output;
  OptimizationResult result;
};

inline ExperimentOutcome run_experiment(RunConfig cfg) {
  if (cfg.output.empty()) cfg.output = default_output_dir(cfg);
  std::filesystem::create_directories(cfg.output);

  const AnySystem sys = make_system(cfg.system);
  auto result = std::visit(
      [&](const auto& spec) {
        const TestSet test = make_test_set(spec.domain, cfg.test_size, cfg.seed);
        EvalSchedule schedule{cfg.eval_stride, cfg.snapshot_iterations};
        RunOptions options{cfg.workers, std::nullopt};
        return run_optimization(spec, cfg.grid(), cfg.optimizer, cfg.seed, test, schedule,
                                options);
      },
      sys);

  {
    auto out = open_output(cfg.output / "manifest.json");
    out << make_manifest(cfg).dump(2) << '\n';
  }
  write_trace_csv(cfg.output / "trace.csv", result.trace);
  write_control_csv(cfg.output / "control.csv", result.control);
  if (!result.snapshots.empty()) {
    std::filesystem::create_directories(cfg.output / "snapshots");
    for (const auto& [k, u] : result.snapshots) write_control_csv(snapshot_path(cfg.output, k), u);
  }
  return {cfg.output, std::move(result)};
}

struct EvaluateRequest {
  std::filesystem::path control_file;
  SystemId system;
  std::uint64_t seed = 0;
  std::size_t test_size = kDefaultTestSize;
  std::optional<double> total_time;
  std::size_t workers = 1;
  std::filesystem::path report_file;
};

/// Evaluates a stored control on a freshly seeded test set and writes a JSON report.
inline EvaluationReport evaluate_control(const EvaluateRequest& req) {
  const AnySystem sys = make_system(req.system);
  auto report = std::visit(
      [&](const auto& spec) {
        std::string header;
        const auto rows = read_numeric_csv(req.control_file, header);
        if (rows.empty()) throw std::runtime_error(req.control_file.string() + ": no rows");
        const TimeGrid grid(req.total_time.value_or(spec.default_time), rows.size());
        const ControlField u = read_control_csv(req.control_file, grid, spec.channels);
        const TestSet test = make_test_set(spec.domain, req.test_size, req.seed);
        return evaluate_report(spec, u, test, req.workers);
      },
      sys);

  if (!req.report_file.empty()) {
    Json samples = Json::array();
    for (const auto& s : report.per_sample)
      samples.push_back({{"fidelity", s.fidelity},
                         {"f_max", s.f_max},
                         {"rel_error", s.relative_error()}});
    const Json doc{{"system", std::string(to_string(req.system))},
                   {"seed", req.seed},
                   {"test_size", req.test_size},
                   {"control", req.control_file.string()},
                   {"mean_rel_error", report.mean_rel_error},
                   {"max_rel_error", report.max_rel_error},
                   {"samples", samples}};
    if (req.report_file.has_parent_path())
      std::filesystem::create_directories(req.report_file.parent_path());
    auto out = open_output(req.report_file);
    out << doc.dump(2) << '\n';
  }
  return report;
}

class MissingSnapshot : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One CSV of M_test first-channel gradients per (iteration, snapshot time).
inline std::vector<std::filesystem::path> emit_histograms(const std::filesystem::path& run_dir,
                                                          const std::vector<std::size_t>& iterations) {
  std::vector<std::filesystem::path> written;
  if (iterations.empty()) return written;
  const RunConfig cfg = resolve_config(read_json_file(run_dir / "manifest.json"));
  for (std::size_t k : iterations)
    if (!std::filesystem::exists(snapshot_path(run_dir, k)))
      throw MissingSnapshot("no control snapshot stored for iteration " + std::to_string(k) +
                            " in " + run_dir.string());

  const TimeGrid grid = cfg.grid();
  std::vector<std::size_t> indices;
  for (double t : cfg.snapshot_times) indices.push_back(time_to_index(t, grid));

  const auto out_dir = run_dir / "histograms";
  std::filesystem::create_directories(out_dir);
  const AnySystem sys = make_system(cfg.system);
  std::visit(
      [&](const auto& spec) {
        const TestSet test = make_test_set(spec.domain, cfg.test_size, cfg.seed);
        for (std::size_t k : iterations) {
          const ControlField u = read_control_csv(snapshot_path(run_dir, k), grid, spec.channels);
          for (const auto& snap : gradient_histogram(spec, u, test, indices, k, cfg.workers)) {
            const auto path = out_dir / ("grad_iter" + std::to_string(k) + "_n" +
                                         std::to_string(snap.time_index) + ".csv");
            write_values_csv(path, snap.values);
            written.push_back(path);
          }
        }
      },
      sys);
  return written;
}

}  // namespace qens
