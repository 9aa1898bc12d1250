#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "parallel.hpp"
#include "sampling.hpp"
#include "systems.hpp"

namespace qens {

struct SampleFidelity {
  double fidelity;
  double f_max;

  double relative_error() const { return 1.0 - fidelity / f_max; }
};

struct EvaluationReport {
  double mean_rel_error;
  double max_rel_error;
  std::vector<SampleFidelity> per_sample;
};

struct TraceRecord {
  std::size_t iteration;
  std::size_t grad_evals;
  double mean_rel_error;
  double max_rel_error;

  bool operator==(const TraceRecord&) const = default;
};

using ConvergenceTrace = std::vector<TraceRecord>;

struct GradientHistogramSnapshot {
  std::size_t time_index;
  std::size_t iteration;
  std::vector<double> values;
};

/// Mean and max of 1 − F/F_max over a list of samples.
///
/// The mean is accumulated as max − Σ(max − eᵢ)/M so that mean ≤ max holds
/// exactly and identical errors give mean == max.
inline EvaluationReport summarize(std::vector<SampleFidelity> per_sample) {
  if (per_sample.empty()) throw std::invalid_argument("cannot summarize an empty test set");
  double worst = per_sample.front().relative_error();
  for (const auto& s : per_sample) worst = std::max(worst, s.relative_error());
  double gap = 0.0;
  for (const auto& s : per_sample) gap += worst - s.relative_error();
  const double mean = worst - gap / static_cast<double>(per_sample.size());
  return {mean, worst, std::move(per_sample)};
}

template <Field S>
EvaluationReport evaluate_report(const SystemSpec<S>& spec, const ControlField& u,
                                 const TestSet& test, std::size_t workers = 1) {
  if (test.size() == 0) throw std::invalid_argument("empty test set");
  std::vector<SampleFidelity> rows(test.size());
  parallel_for(test.size(), workers, [&](std::size_t k) {
    const auto& theta = test.samples[k];
    rows[k] = {fidelity(spec, theta, u), f_max(spec, theta)};
  });
  return summarize(std::move(rows));
}

template <Field S>
double mean_relative_error(const SystemSpec<S>& spec, const ControlField& u, const TestSet& test,
                           std::size_t workers = 1) {
  return evaluate_report(spec, u, test, workers).mean_rel_error;
}

template <Field S>
double max_relative_error(const SystemSpec<S>& spec, const ControlField& u, const TestSet& test,
                          std::size_t workers = 1) {
  return evaluate_report(spec, u, test, workers).max_rel_error;
}

/// Interval indices for t = 0, T/5, ..., T; t = T maps to the last interval.
inline std::vector<std::size_t> default_snapshot_indices(std::size_t steps) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k <= 5; ++k) idx.push_back(std::min(k * steps / 5, steps - 1));
  return idx;
}

/// First-channel gradient at each requested interval, one value per test sample.
template <Field S>
std::vector<GradientHistogramSnapshot> gradient_histogram(
    const SystemSpec<S>& spec, const ControlField& u, const TestSet& test,
    const std::vector<std::size_t>& time_indices, std::size_t iteration = 0,
    std::size_t workers = 1) {
  for (std::size_t n : time_indices)
    if (n >= u.steps())
      throw std::out_of_range("histogram time index " + std::to_string(n) + " outside 0.." +
                              std::to_string(u.steps() - 1));
  std::vector<GradientField> grads(test.size());
  parallel_for(test.size(), workers, [&](std::size_t k) {
    grads[k] = loss_and_gradient(spec, test.samples[k], u).grad;
  });
  std::vector<GradientHistogramSnapshot> out;
  for (std::size_t n : time_indices) {
    GradientHistogramSnapshot snap{n, iteration, {}};
    snap.values.reserve(test.size());
    for (const auto& g : grads) snap.values.push_back(g(0, n));
    out.push_back(std::move(snap));
  }
  return out;
}

}  // namespace qens
