#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dynamics.hpp"
#include "evaluate.hpp"
#include "parallel.hpp"
#include "sampling.hpp"
#include "systems.hpp"

namespace qens {

enum class OptimizerKind { sgd, adam, momentum, fixed_grid };

inline std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::fixed_grid: return "fixed_grid";
  }
  return "unknown";
}

inline std::optional<OptimizerKind> parse_optimizer_kind(std::string_view s) {
  for (auto k : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::momentum,
                 OptimizerKind::fixed_grid})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double alpha = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;  // λ of the momentum kind
  std::size_t batch_size = 1;
  std::size_t grid_points = 5;
  std::size_t budget = 1000;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (batch_size == 0) throw ConfigError("batch size M must be >= 1");
    if (kind == OptimizerKind::fixed_grid && grid_points < 2)
      throw ConfigError("grid_points must be >= 2");
  }
};

/// Gradient evaluations charged for one iteration.
inline std::size_t iteration_cost(const OptimizerConfig& config, std::size_t param_dim) {
  if (config.kind != OptimizerKind::fixed_grid) return config.batch_size;
  std::size_t cost = 1;
  for (std::size_t i = 0; i < param_dim; ++i) cost *= config.grid_points;
  return cost;
}

struct OptimizerState {
  std::size_t iteration = 0;
  GradientField first_moment;
  GradientField second_moment;
  ControlField control;
  std::size_t grad_evals = 0;

  explicit OptimizerState(ControlField u, double initial_second_moment = 0.0)
      : first_moment(u.channels(), u.steps()),
        second_moment(u.channels(), u.steps()),
        control(std::move(u)) {
    for (double& v : second_moment.flat()) v = initial_second_moment;
  }
};

/// Adam update rule knobs; the momentum method is β₂ = 1, v⁰ = 1 and no bias
/// correction.
struct AdamParams {
  double alpha;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool bias_correction = true;
};

namespace detail {
inline void check_shape(const OptimizerState& s, const GradientField& g) {
  if (!s.control.values.same_shape(g))
    throw std::invalid_argument("gradient shape does not match the control");
}
}  // namespace detail

/// (1/M)·Σ ∇ᵤL(u; θ_m), summed in batch order.
template <Field S>
GradientField minibatch_gradient(const SystemSpec<S>& spec, const ControlField& u,
                                 const std::vector<ParameterSample>& batch,
                                 std::size_t workers = 1) {
  if (batch.empty()) throw std::invalid_argument("minibatch_gradient: empty batch");
  std::vector<GradientField> parts(batch.size());
  parallel_for(batch.size(), workers,
               [&](std::size_t m) { parts[m] = loss_and_gradient(spec, batch[m], u).grad; });
  GradientField mean(u.channels(), u.steps());
  auto acc = mean.flat();
  for (const auto& g : parts) {
    auto src = g.flat();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
  }
  const double count = static_cast<double>(batch.size());
  for (double& x : acc) x /= count;
  return mean;
}

inline void sgd_step(OptimizerState& state, const GradientField& g, double alpha) {
  detail::check_shape(state, g);
  auto u = state.control.values.flat();
  auto gv = g.flat();
  for (std::size_t i = 0; i < u.size(); ++i) u[i] -= alpha * gv[i];
  ++state.iteration;
}

/// One Adam iteration. The counter is advanced before the bias correction so
/// the k-th call divides by 1 − βᵏ.
inline void adam_step(OptimizerState& state, const GradientField& g, const AdamParams& p) {
  detail::check_shape(state, g);
  ++state.iteration;
  const double k = static_cast<double>(state.iteration);
  const double c1 = p.bias_correction ? 1.0 - std::pow(p.beta1, k) : 1.0;
  const double c2 = p.bias_correction ? 1.0 - std::pow(p.beta2, k) : 1.0;
  auto u = state.control.values.flat();
  auto mu = state.first_moment.flat();
  auto v = state.second_moment.flat();
  auto gv = g.flat();
  for (std::size_t i = 0; i < u.size(); ++i) {
    mu[i] = p.beta1 * mu[i] + (1.0 - p.beta1) * gv[i];
    v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * (gv[i] * gv[i]);
    const double mu_hat = p.bias_correction ? mu[i] / c1 : mu[i];
    const double v_hat = p.bias_correction ? v[i] / c2 : v[i];
    u[i] -= p.alpha * mu_hat / (std::sqrt(v_hat) + p.epsilon);
  }
}

inline void adam_step(OptimizerState& state, const GradientField& g,
                      const OptimizerConfig& config) {
  adam_step(state, g, AdamParams{config.alpha, config.beta1, config.beta2, config.epsilon, true});
}

/// μ ← λμ + (1−λ)g; u ← u − α·μ/(1+ε)
inline void momentum_step(OptimizerState& state, const GradientField& g, double alpha,
                          double lambda, double epsilon) {
  detail::check_shape(state, g);
  ++state.iteration;
  auto u = state.control.values.flat();
  auto mu = state.first_moment.flat();
  auto gv = g.flat();
  const double denom = 1.0 + epsilon;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mu[i] = lambda * mu[i] + (1.0 - lambda) * gv[i];
    u[i] -= alpha * mu[i] / denom;
  }
}

inline void momentum_step(OptimizerState& state, const GradientField& g,
                          const OptimizerConfig& config) {
  momentum_step(state, g, config.alpha, config.momentum, config.epsilon);
}

struct EvalSchedule {
  /// Evaluate the test set every `stride` iterations (and always after the last one).
  std::size_t stride = 1;
  /// Iterations k after which u^k is kept for later histogram work.
  std::set<std::size_t> snapshot_iterations;
};

struct RunOptions {
  std::size_t workers = 1;
  std::optional<ControlField> initial_control;
};

struct OptimizationResult {
  ControlField control;
  ConvergenceTrace trace;
  std::vector<std::pair<std::size_t, ControlField>> snapshots;
};

/// Draw batch, average gradients, step; repeat while the next iteration fits
/// in the gradient-evaluation budget. Test-set evaluations are free.
template <Field S>
OptimizationResult run_optimization(const SystemSpec<S>& spec, const TimeGrid& grid,
                                    const OptimizerConfig& config, std::uint64_t seed,
                                    const TestSet& test, const EvalSchedule& schedule = {},
                                    const RunOptions& options = {}) {
  config.validate();
  if (schedule.stride == 0) throw ConfigError("eval stride must be >= 1");
  const std::size_t cost = iteration_cost(config, spec.domain.dim());
  if (config.budget > 0 && config.budget < cost)
    throw ConfigError("budget " + std::to_string(config.budget) +
                      " is smaller than one iteration (" + std::to_string(cost) +
                      " gradient evaluations)");

  ControlField u0 = options.initial_control.value_or(sine_control(grid, spec.channels));
  if (u0.grid != grid || u0.channels() != spec.channels)
    throw ConfigError("initial control does not match the system and time grid");

  const bool momentum = config.kind == OptimizerKind::momentum;
  OptimizerState state(std::move(u0), momentum ? 1.0 : 0.0);
  OptimizationResult result{state.control, {}, {}};

  auto record = [&] {
    const auto report = evaluate_report(spec, state.control, test, options.workers);
    result.trace.push_back(
        {state.iteration, state.grad_evals, report.mean_rel_error, report.max_rel_error});
  };
  record();
  if (schedule.snapshot_iterations.contains(0)) result.snapshots.emplace_back(0, state.control);

  SeededRng rng(derive_seed(seed, Stream::training));
  std::vector<ParameterSample> grid_batch;
  if (config.kind == OptimizerKind::fixed_grid)
    grid_batch = fixed_grid(spec.domain, config.grid_points);

  while (state.grad_evals + cost <= config.budget) {
    const auto batch = config.kind == OptimizerKind::fixed_grid
                           ? grid_batch
                           : sample_batch(spec.domain, config.batch_size, rng);
    const GradientField g = minibatch_gradient(spec, state.control, batch, options.workers);
    switch (config.kind) {
      case OptimizerKind::sgd:
      case OptimizerKind::fixed_grid: sgd_step(state, g, config.alpha); break;
      case OptimizerKind::adam: adam_step(state, g, config); break;
      case OptimizerKind::momentum: momentum_step(state, g, config); break;
    }
    state.grad_evals += cost;

    if (schedule.snapshot_iterations.contains(state.iteration))
      result.snapshots.emplace_back(state.iteration, state.control);
    const bool last = state.grad_evals + cost > config.budget;
    if (last || state.iteration % schedule.stride == 0) record();
  }
  result.control = std::move(state.control);
  return result;
}

}  // namespace qens
