#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "linalg.hpp"

namespace qens {

enum class SystemId { spin2, lambda3, relax3d, relax6d };

inline constexpr std::array<SystemId, 4> kAllSystems = {SystemId::spin2, SystemId::lambda3,
                                                        SystemId::relax3d, SystemId::relax6d};

inline std::string_view to_string(SystemId id) {
  switch (id) {
    case SystemId::spin2: return "spin2";
    case SystemId::lambda3: return "lambda3";
    case SystemId::relax3d: return "relax3d";
    case SystemId::relax6d: return "relax6d";
  }
  return "unknown";
}

inline std::optional<SystemId> parse_system_id(std::string_view name) {
  for (SystemId id : kAllSystems)
    if (to_string(id) == name) return id;
  return std::nullopt;
}

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A drawn parameter vector θ.
struct ParameterSample {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const ParameterSample&) const = default;
};

/// Box Θ = Π [lowerᵢ, upperᵢ] with the uniform law.
class ParameterDomain {
 public:
  ParameterDomain(std::vector<double> lower, std::vector<double> upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.empty()) throw DomainError("parameter domain must have dimension >= 1");
    if (lower_.size() != upper_.size()) throw DomainError("parameter domain bound size mismatch");
    for (std::size_t i = 0; i < lower_.size(); ++i)
      if (!(lower_[i] < upper_[i]))
        throw DomainError("parameter domain requires lower < upper in coordinate " +
                          std::to_string(i));
  }

  std::size_t dim() const { return lower_.size(); }
  std::span<const double> lower() const { return lower_; }
  std::span<const double> upper() const { return upper_; }
  double lower(std::size_t i) const { return lower_[i]; }
  double upper(std::size_t i) const { return upper_[i]; }

  bool contains(const ParameterSample& theta) const {
    if (theta.size() != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
      if (!(lower_[i] <= theta[i] && theta[i] <= upper_[i])) return false;
    return true;
  }

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

/// Fidelity is |⟨C_target, C(T)⟩|.
template <Field S>
struct StateOverlapTarget {
  Vector<S> state;
};

/// Fidelity is the j-th coordinate of C(T).
struct CoordinateTarget {
  std::size_t index;
};

template <Field S>
using Target = std::variant<StateOverlapTarget<S>, CoordinateTarget>;

/// Drift and control matrices: X(θ, u) = drift + Σ uₗ·controls[ℓ].
template <Field S>
struct GeneratorParts {
  Matrix<S> drift;
  std::vector<Matrix<S>> controls;
};

template <Field S>
struct SystemSpec {
  SystemId id;
  std::size_t dim;
  std::size_t channels;
  ParameterDomain domain;
  Vector<S> initial_state;
  Target<S> target;
  double default_time;
  std::size_t default_steps;

  std::string_view name() const { return to_string(id); }
};

using ComplexSystem = SystemSpec<Complex>;
using RealSystem = SystemSpec<double>;
using AnySystem = std::variant<ComplexSystem, RealSystem>;

/// Fixed coupling J of the cross-correlated model.
inline constexpr double kRelax6dCoupling = 1.0;

// Final time for lambda3 is not fixed by the benchmark description; see README.
inline constexpr double kLambda3DefaultTime = 2.0;

inline ComplexSystem make_spin2() {
  return {SystemId::spin2,
          2,
          2,
          ParameterDomain({0.8, 0.8}, {1.2, 1.2}),
          Vector<Complex>{1.0, 0.0},
          StateOverlapTarget<Complex>{Vector<Complex>{0.0, 1.0}},
          2.0,
          200};
}

inline ComplexSystem make_lambda3() {
  const double a = 1.0 / std::sqrt(3.0);
  return {SystemId::lambda3,
          3,
          2,
          ParameterDomain({0.8, 0.8}, {1.2, 1.2}),
          Vector<Complex>{a, a, a},
          StateOverlapTarget<Complex>{Vector<Complex>{0.0, 0.0, 1.0}},
          kLambda3DefaultTime,
          200};
}

inline RealSystem make_relax3d() {
  return {SystemId::relax3d,
          4,
          2,
          ParameterDomain({0.9, 0.5, 0.0}, {1.1, 1.5, 2.0}),
          Vector<double>::unit(4, 0),
          CoordinateTarget{3},
          7.0 * std::numbers::pi / 6.0,
          200};
}

inline RealSystem make_relax6d() {
  return {SystemId::relax6d,
          6,
          2,
          ParameterDomain({0.9, 0.9, 0.0, 0.0, 0.75, 0.7}, {1.1, 1.1, 1.0, 1.0, 1.25, 0.9}),
          Vector<double>::unit(6, 0),
          CoordinateTarget{5},
          5.0,
          200};
}

inline AnySystem make_system(SystemId id) {
  switch (id) {
    case SystemId::spin2: return make_spin2();
    case SystemId::lambda3: return make_lambda3();
    case SystemId::relax3d: return make_relax3d();
    case SystemId::relax6d: return make_relax6d();
  }
  throw DomainError("unknown system id");
}

namespace detail {

inline constexpr Complex kI{0.0, 1.0};

// θ = (ω, ε). The lower-left control entry is −½ε(u₂ + i·u₁) so that X is
// skew-Hermitian.
inline GeneratorParts<Complex> spin2_parts(const ParameterSample& p) {
  const double omega = p[0], eps = p[1];
  GeneratorParts<Complex> g{Matrix<Complex>(2), {Matrix<Complex>(2), Matrix<Complex>(2)}};
  g.drift(0, 0) = 0.5 * omega * kI;
  g.drift(1, 1) = -0.5 * omega * kI;
  g.controls[0](0, 1) = -0.5 * eps * kI;
  g.controls[0](1, 0) = -0.5 * eps * kI;
  g.controls[1](0, 1) = 0.5 * eps;
  g.controls[1](1, 0) = -0.5 * eps;
  return g;
}

// θ = (ω, ε)
inline GeneratorParts<Complex> lambda3_parts(const ParameterSample& p) {
  const double omega = p[0], eps = p[1];
  GeneratorParts<Complex> g{Matrix<Complex>(3), {Matrix<Complex>(3), Matrix<Complex>(3)}};
  g.drift(0, 0) = -1.5 * omega * kI;
  g.drift(1, 1) = -omega * kI;
  g.controls[0](1, 2) = -eps * kI;
  g.controls[0](2, 1) = -eps * kI;
  g.controls[1](0, 2) = -eps * kI;
  g.controls[1](2, 0) = -eps * kI;
  return g;
}

// θ = (ε, J, ξ)
inline GeneratorParts<double> relax3d_parts(const ParameterSample& p) {
  const double eps = p[0], coupling = p[1], xi = p[2];
  GeneratorParts<double> g{Matrix<double>(4), {Matrix<double>(4), Matrix<double>(4)}};
  g.drift(1, 1) = -xi;
  g.drift(1, 2) = -coupling;
  g.drift(2, 1) = coupling;
  g.drift(2, 2) = -xi;
  g.controls[0](0, 1) = -eps;
  g.controls[0](1, 0) = eps;
  g.controls[1](2, 3) = -eps;
  g.controls[1](3, 2) = eps;
  return g;
}

// θ = (ε₁, ε₂, ω₁, ω₂, ξa, ξc/ξa), J fixed.
inline GeneratorParts<double> relax6d_parts(const ParameterSample& p) {
  const double e1 = p[0], e2 = p[1], w1 = p[2], w2 = p[3], xa = p[4];
  const double xc = p[4] * p[5];
  const double j = kRelax6dCoupling;
  GeneratorParts<double> g{Matrix<double>(6), {Matrix<double>(6), Matrix<double>(6)}};
  Matrix<double>& d = g.drift;
  d(1, 1) = -xa; d(1, 2) = w1;  d(1, 3) = -j;  d(1, 4) = -xc;
  d(2, 1) = -w1; d(2, 2) = -xa; d(2, 3) = -xc; d(2, 4) = j;
  d(3, 1) = j;   d(3, 2) = -xc; d(3, 3) = -xa; d(3, 4) = w2;
  d(4, 1) = -xc; d(4, 2) = -j;  d(4, 3) = -w2; d(4, 4) = -xa;

  Matrix<double>& c1 = g.controls[0];
  c1(0, 1) = -e1;
  c1(1, 0) = e1;
  c1(4, 5) = e1;
  c1(5, 4) = -e1;

  Matrix<double>& c2 = g.controls[1];
  c2(0, 2) = e2;
  c2(2, 0) = -e2;
  c2(3, 5) = -e2;
  c2(5, 3) = e2;
  return g;
}

template <Field S>
void check_theta(const SystemSpec<S>& spec, const ParameterSample& theta) {
  if (!spec.domain.contains(theta))
    throw DomainError("parameter sample outside the domain of " + std::string(spec.name()));
}

}  // namespace detail

template <Field S>
GeneratorParts<S> generator_parts(const SystemSpec<S>& spec, const ParameterSample& theta) {
  detail::check_theta(spec, theta);
  if constexpr (is_complex_v<S>) {
    switch (spec.id) {
      case SystemId::spin2: return detail::spin2_parts(theta);
      case SystemId::lambda3: return detail::lambda3_parts(theta);
      default: break;
    }
  } else {
    switch (spec.id) {
      case SystemId::relax3d: return detail::relax3d_parts(theta);
      case SystemId::relax6d: return detail::relax6d_parts(theta);
      default: break;
    }
  }
  throw DomainError("system " + std::string(spec.name()) + " has no generator over this field");
}

/// X(θ, u) for one time slice with control values u (one per channel).
template <Field S>
Matrix<S> assemble(const GeneratorParts<S>& parts, std::span<const double> u) {
  if (u.size() != parts.controls.size()) throw DomainError("control channel count mismatch");
  Matrix<S> x = parts.drift;
  for (std::size_t l = 0; l < u.size(); ++l) {
    if (!std::isfinite(u[l])) throw DomainError("non-finite control value");
    x.add_scaled(S{u[l]}, parts.controls[l]);
  }
  return x;
}

template <Field S>
Matrix<S> generator(const SystemSpec<S>& spec, const ParameterSample& theta,
                    std::span<const double> u) {
  return assemble(generator_parts(spec, theta), u);
}

/// Best fidelity attainable for a single member θ.
template <Field S>
double f_max(const SystemSpec<S>& spec, const ParameterSample& theta) {
  detail::check_theta(spec, theta);
  switch (spec.id) {
    case SystemId::spin2:
    case SystemId::lambda3: return 1.0;
    case SystemId::relax3d: {
      const double r = theta[2] / theta[1];
      return std::sqrt(1.0 + r * r) - r;
    }
    case SystemId::relax6d: {
      const double xa = theta[4];
      const double xc = theta[4] * theta[5];
      const double j = kRelax6dCoupling;
      const double radicand = (xa * xa - xc * xc) / (j * j + xc * xc);
      if (radicand < 0.0) throw std::logic_error("relax6d: negative radicand in f_max");
      const double eta = std::sqrt(radicand);
      return std::sqrt(1.0 + eta * eta) - eta;
    }
  }
  throw DomainError("unknown system id");
}

/// Raw fidelity of a final state: |⟨C_target, C_T⟩| or the target coordinate.
template <Field S>
double target_overlap(const SystemSpec<S>& spec, const Vector<S>& final_state) {
  if (final_state.size() != spec.dim) throw LinalgError("target_overlap: dimension mismatch");
  return std::visit(
      [&](const auto& t) -> double {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, CoordinateTarget>)
          return real_part(final_state[t.index]);
        else
          return std::abs(inner(t.state, final_state));
      },
      spec.target);
}

}  // namespace qens
