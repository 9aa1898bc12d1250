#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "linalg.hpp"
#include "systems.hpp"

namespace qens {

/// Uniform grid t_n = n·dt on [0, T] with Q intervals.
class TimeGrid {
 public:
  TimeGrid(double total_time, std::size_t steps) : total_(total_time), steps_(steps) {
    if (!(total_time > 0.0) || !std::isfinite(total_time))
      throw std::invalid_argument("time grid requires T > 0");
    if (steps == 0) throw std::invalid_argument("time grid requires Q >= 1");
  }

  double total_time() const { return total_; }
  std::size_t steps() const { return steps_; }
  double dt() const { return total_ / static_cast<double>(steps_); }
  double time(std::size_t n) const { return static_cast<double>(n) * dt(); }

  bool operator==(const TimeGrid&) const = default;

 private:
  double total_;
  std::size_t steps_;
};

struct ControlTag {};
struct GradientTag {};

/// L channels × Q real values, channel-major.
template <class Tag>
class ChannelArray {
 public:
  ChannelArray() = default;
  ChannelArray(std::size_t channels, std::size_t steps)
      : channels_(channels), steps_(steps), data_(channels * steps, 0.0) {}

  std::size_t channels() const { return channels_; }
  std::size_t steps() const { return steps_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t l, std::size_t n) { return data_[l * steps_ + n]; }
  double operator()(std::size_t l, std::size_t n) const { return data_[l * steps_ + n]; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  bool same_shape(std::size_t channels, std::size_t steps) const {
    return channels_ == channels && steps_ == steps;
  }
  template <class Other>
  bool same_shape(const ChannelArray<Other>& o) const {
    return same_shape(o.channels(), o.steps());
  }

  bool operator==(const ChannelArray&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t steps_ = 0;
  std::vector<double> data_;
};

using ControlValues = ChannelArray<ControlTag>;
using GradientField = ChannelArray<GradientTag>;

/// Piecewise-constant control: uₗ(t) = values(ℓ, n) on [t_n, t_{n+1}).
struct ControlField {
  TimeGrid grid;
  ControlValues values;

  ControlField(TimeGrid g, std::size_t channels) : grid(g), values(channels, g.steps()) {}
  ControlField(TimeGrid g, ControlValues v) : grid(g), values(std::move(v)) {
    if (values.steps() != grid.steps())
      throw std::invalid_argument("control values do not match the time grid");
  }

  std::size_t channels() const { return values.channels(); }
  std::size_t steps() const { return grid.steps(); }

  /// Values of all channels on interval n.
  std::vector<double> at(std::size_t n) const {
    std::vector<double> u(channels());
    for (std::size_t l = 0; l < channels(); ++l) u[l] = values(l, n);
    return u;
  }

  bool operator==(const ControlField&) const = default;
};

/// uₗ(t_n) = sin(t_n) on every channel.
inline ControlField sine_control(const TimeGrid& grid, std::size_t channels) {
  ControlField u(grid, channels);
  for (std::size_t l = 0; l < channels; ++l)
    for (std::size_t n = 0; n < grid.steps(); ++n) u.values(l, n) = std::sin(grid.time(n));
  return u;
}

template <Field S>
using Trajectory = std::vector<Vector<S>>;

template <Field S>
struct LossAndGradient {
  double loss;
  GradientField grad;
};

namespace detail {

template <Field S>
void check_control(const SystemSpec<S>& spec, const ControlField& u) {
  if (u.channels() != spec.channels)
    throw std::invalid_argument("control has " + std::to_string(u.channels()) +
                                " channels, system " + std::string(spec.name()) + " expects " +
                                std::to_string(spec.channels));
  for (double v : u.values.flat())
    if (!std::isfinite(v)) throw std::invalid_argument("control field has non-finite values");
}

template <Field S>
Matrix<S> step_generator(const GeneratorParts<S>& parts, const ControlField& u, std::size_t n) {
  Matrix<S> x = parts.drift;
  for (std::size_t l = 0; l < parts.controls.size(); ++l)
    x.add_scaled(S{u.values(l, n)}, parts.controls[l]);
  x *= S{u.grid.dt()};
  return x;
}

}  // namespace detail

/// C₀..C_Q with C_{n+1} = exp(dt·X(θ, u(t_n)))·C_n.
template <Field S>
Trajectory<S> propagate_forward(const SystemSpec<S>& spec, const ParameterSample& theta,
                                const ControlField& u) {
  detail::check_control(spec, u);
  const auto parts = generator_parts(spec, theta);
  Trajectory<S> states;
  states.reserve(u.steps() + 1);
  states.push_back(spec.initial_state);
  for (std::size_t n = 0; n < u.steps(); ++n)
    states.push_back(expm_order8(detail::step_generator(parts, u, n)) * states.back());
  return states;
}

template <Field S>
Vector<S> final_state(const SystemSpec<S>& spec, const ParameterSample& theta,
                      const ControlField& u) {
  detail::check_control(spec, u);
  const auto parts = generator_parts(spec, theta);
  Vector<S> c = spec.initial_state;
  for (std::size_t n = 0; n < u.steps(); ++n)
    c = expm_order8(detail::step_generator(parts, u, n)) * c;
  return c;
}

/// F(u; θ), the unsquared overlap or the target coordinate at time T.
template <Field S>
double fidelity(const SystemSpec<S>& spec, const ParameterSample& theta, const ControlField& u) {
  return target_overlap(spec, final_state(spec, theta, u));
}

/// Derivative of the per-member loss with respect to C(T).
template <Field S>
Vector<S> terminal_adjoint(const SystemSpec<S>& spec, const Vector<S>& final) {
  if (final.size() != spec.dim) throw LinalgError("terminal_adjoint: dimension mismatch");
  return std::visit(
      [&](const auto& t) -> Vector<S> {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, CoordinateTarget>) {
          Vector<S> lam(spec.dim);
          lam[t.index] = S{-1.0};
          return lam;
        } else {
          return -inner(t.state, final) * t.state;
        }
      },
      spec.target);
}

/// λ₀..λ_Q with λ_n = exp(dt·X(u(t_n)))†·λ_{n+1}.
template <Field S>
Trajectory<S> propagate_adjoint(const SystemSpec<S>& spec, const ParameterSample& theta,
                                const ControlField& u, const Vector<S>& terminal) {
  detail::check_control(spec, u);
  if (terminal.size() != spec.dim) throw LinalgError("propagate_adjoint: dimension mismatch");
  const auto parts = generator_parts(spec, theta);
  Trajectory<S> lam(u.steps() + 1);
  lam[u.steps()] = terminal;
  for (std::size_t n = u.steps(); n-- > 0;)
    lam[n] = expm_order8(detail::step_generator(parts, u, n)).adjoint() * lam[n + 1];
  return lam;
}

/// Loss value from a final state: ½(1 − |f|²) for overlap targets, 1 − c_j otherwise.
template <Field S>
double loss_from_final(const SystemSpec<S>& spec, const Vector<S>& final) {
  return std::visit(
      [&](const auto& t) -> double {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, CoordinateTarget>)
          return 1.0 - real_part(final[t.index]);
        else
          return 0.5 * (1.0 - std::norm(inner(t.state, final)));
      },
      spec.target);
}

/// Per-member loss and its exact discrete gradient.
///
/// grad(ℓ, n) = Re⟨λ_{n+1}, D_{ℓ,n}·C_n⟩ where D_{ℓ,n} is the Fréchet
/// derivative of exp at dt·X(u(t_n)) along dt·∂X/∂uₗ. The step exponentials
/// and derivatives come out of one expm_frechet call per interval.
template <Field S>
LossAndGradient<S> loss_and_gradient(const SystemSpec<S>& spec, const ParameterSample& theta,
                                     const ControlField& u) {
  detail::check_control(spec, u);
  const auto parts = generator_parts(spec, theta);
  const std::size_t steps = u.steps();
  const double dt = u.grid.dt();

  std::vector<Matrix<S>> directions;
  directions.reserve(parts.controls.size());
  for (const auto& c : parts.controls) directions.push_back(S{dt} * c);

  std::vector<ExpmDirectional<S>> props;
  props.reserve(steps);
  Trajectory<S> states;
  states.reserve(steps + 1);
  states.push_back(spec.initial_state);
  for (std::size_t n = 0; n < steps; ++n) {
    props.push_back(expm_frechet<S>(detail::step_generator(parts, u, n), directions));
    states.push_back(props.back().exponential * states.back());
  }

  LossAndGradient<S> out{loss_from_final(spec, states.back()),
                         GradientField(spec.channels, steps)};
  Vector<S> lam = terminal_adjoint(spec, states.back());
  for (std::size_t n = steps; n-- > 0;) {
    const auto& p = props[n];
    for (std::size_t l = 0; l < spec.channels; ++l)
      out.grad(l, n) = real_part(inner(lam, p.derivatives[l] * states[n]));
    lam = p.exponential.adjoint() * lam;
  }
  return out;
}

}  // namespace qens
