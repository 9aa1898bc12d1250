#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "qens/optimize.hpp"

using namespace qens;

namespace {

GradientField random_gradient(std::size_t steps, std::mt19937_64& gen) {
  std::normal_distribution<double> d;
  GradientField g(2, steps);
  for (double& v : g.flat()) v = d(gen);
  return g;
}

GradientField constant_gradient(std::size_t steps, double value) {
  GradientField g(2, steps);
  for (double& v : g.flat()) v = value;
  return g;
}

const TimeGrid kGrid(1.0, 16);

}  // namespace

TEST(Optimize, ParseKinds) {
  for (auto k : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::momentum,
                 OptimizerKind::fixed_grid})
    EXPECT_EQ(parse_optimizer_kind(to_string(k)), k);
  EXPECT_FALSE(parse_optimizer_kind("lbfgs"));
}

TEST(Optimize, ConfigValidation) {
  EXPECT_NO_THROW(OptimizerConfig{}.validate());
  EXPECT_THROW(OptimizerConfig{.alpha = 0.0}.validate(), ConfigError);
  EXPECT_THROW(OptimizerConfig{.beta1 = 1.0}.validate(), ConfigError);
  EXPECT_THROW(OptimizerConfig{.epsilon = 0.0}.validate(), ConfigError);
  EXPECT_THROW(OptimizerConfig{.batch_size = 0}.validate(), ConfigError);
  EXPECT_THROW((OptimizerConfig{.kind = OptimizerKind::fixed_grid, .grid_points = 1}.validate()),
               ConfigError);
}

TEST(Optimize, IterationCost) {
  EXPECT_EQ(iteration_cost(OptimizerConfig{.batch_size = 4}, 6), 4u);
  EXPECT_EQ(iteration_cost(OptimizerConfig{.kind = OptimizerKind::fixed_grid}, 2), 25u);
  EXPECT_EQ(iteration_cost(OptimizerConfig{.kind = OptimizerKind::fixed_grid, .grid_points = 3}, 3),
            27u);
}

TEST(Optimize, SgdStep) {
  std::mt19937_64 gen(1);
  OptimizerState s(sine_control(kGrid, 2));
  const auto u0 = s.control;
  const auto g = random_gradient(kGrid.steps(), gen);
  sgd_step(s, g, 0.25);
  for (std::size_t i = 0; i < g.size(); ++i)
    EXPECT_EQ(s.control.values.flat()[i], u0.values.flat()[i] - 0.25 * g.flat()[i]);
  EXPECT_EQ(s.iteration, 1u);
}

TEST(Optimize, AdamFirstStepIsSignLike) {
  std::mt19937_64 gen(2);
  OptimizerState s(sine_control(kGrid, 2));
  const auto u0 = s.control;
  const auto g = random_gradient(kGrid.steps(), gen);
  adam_step(s, g, AdamParams{0.01});
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double expect = -0.01 * g.flat()[i] / (std::abs(g.flat()[i]) + 1e-8);
    EXPECT_NEAR(s.control.values.flat()[i] - u0.values.flat()[i], expect, 1e-14 * 0.01);
  }
}

TEST(Optimize, AdamConstantGradientLimit) {
  // With g constant both bias-corrected moments equal g, so every step is
  // −α·g/(|g|+ε).
  OptimizerState s(ControlField(kGrid, 2));
  const auto g = constant_gradient(kGrid.steps(), -0.3);
  for (int k = 0; k < 1000; ++k) adam_step(s, g, AdamParams{0.001});
  const double per_step = 0.001 * 0.3 / (0.3 + 1e-8);
  for (double v : s.control.values.flat()) EXPECT_NEAR(v, 1000 * per_step, 1e-9);
}

TEST(Optimize, MomentumIsAdamSpecialCase) {
  std::mt19937_64 gen(3);
  OptimizerState mom(sine_control(kGrid, 2), 1.0);
  OptimizerState adam(sine_control(kGrid, 2), 1.0);
  for (int k = 0; k < 100; ++k) {
    const auto g = random_gradient(kGrid.steps(), gen);
    momentum_step(mom, g, 0.7, 0.85, 1e-8);
    adam_step(adam, g, AdamParams{0.7, 0.85, 1.0, 1e-8, false});
    ASSERT_EQ(mom.control, adam.control);
    ASSERT_EQ(mom.first_moment, adam.first_moment);
  }
}

TEST(Optimize, MomentumWithoutMemoryIsScaledSgd) {
  std::mt19937_64 gen(4);
  OptimizerState mom(sine_control(kGrid, 2), 1.0);
  OptimizerState sgd(sine_control(kGrid, 2));
  for (int k = 0; k < 10; ++k) {
    const auto g = random_gradient(kGrid.steps(), gen);
    momentum_step(mom, g, 0.5, 0.0, 1e-8);
    sgd_step(sgd, g, 0.5 / (1.0 + 1e-8));
  }
  for (std::size_t i = 0; i < mom.control.values.size(); ++i)
    EXPECT_NEAR(mom.control.values.flat()[i], sgd.control.values.flat()[i], 1e-14);
}

TEST(Optimize, MomentumKeepsInertia) {
  OptimizerState s(ControlField(kGrid, 2), 1.0);
  momentum_step(s, constant_gradient(kGrid.steps(), 1.0), 1.0, 0.9, 0.0);
  const double after_one = s.control.values(0, 0);
  momentum_step(s, constant_gradient(kGrid.steps(), 0.0), 1.0, 0.9, 0.0);
  EXPECT_NEAR(after_one, -0.1, 1e-15);
  EXPECT_NEAR(s.control.values(0, 0) - after_one, -0.09, 1e-15);
}

TEST(Optimize, StepRejectsShapeMismatch) {
  OptimizerState s(ControlField(kGrid, 2));
  EXPECT_THROW(sgd_step(s, GradientField(2, 3), 1.0), std::invalid_argument);
  EXPECT_THROW(adam_step(s, GradientField(1, 16), AdamParams{1.0}), std::invalid_argument);
}

TEST(Optimize, MinibatchOfOneIsThePlainGradient) {
  const auto spec = make_spin2();
  const ControlField u = sine_control(TimeGrid(2.0, 40), 2);
  const ParameterSample theta{{0.9, 1.1}};
  EXPECT_EQ(minibatch_gradient(spec, u, {theta}), loss_and_gradient(spec, theta, u).grad);
  EXPECT_EQ(minibatch_gradient(spec, u, {theta, theta}), loss_and_gradient(spec, theta, u).grad);
  EXPECT_THROW(minibatch_gradient(spec, u, {}), std::invalid_argument);
}

TEST(Optimize, FullGridBatchIsGridAverage) {
  const auto spec = make_spin2();
  const ControlField u = sine_control(TimeGrid(2.0, 40), 2);
  const auto grid = fixed_grid(spec.domain, 5);
  GradientField expect(2, 40);
  for (const auto& theta : grid) {
    const auto g = loss_and_gradient(spec, theta, u).grad;
    for (std::size_t i = 0; i < g.size(); ++i) expect.flat()[i] += g.flat()[i] / 25.0;
  }
  const auto got = minibatch_gradient(spec, u, grid, 3);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.flat()[i], expect.flat()[i], 1e-14);
}

TEST(Optimize, BudgetAccounting) {
  const auto spec = make_spin2();
  const TimeGrid grid(2.0, 20);
  const auto test = make_test_set(spec.domain, 5, 1);
  const auto r = run_optimization(spec, grid,
                                  OptimizerConfig{.alpha = 1.0, .batch_size = 3, .budget = 10},
                                  1, test);
  ASSERT_EQ(r.trace.size(), 4u);
  EXPECT_EQ(r.trace.back().iteration, 3u);
  EXPECT_EQ(r.trace.back().grad_evals, 9u);
  for (std::size_t k = 1; k < r.trace.size(); ++k)
    EXPECT_GT(r.trace[k].grad_evals, r.trace[k - 1].grad_evals);

  const auto fg = run_optimization(
      spec, grid, OptimizerConfig{.kind = OptimizerKind::fixed_grid, .budget = 60}, 1, test);
  EXPECT_EQ(fg.trace.back().grad_evals, 50u);
}

TEST(Optimize, ZeroBudgetKeepsInitialControl) {
  const auto spec = make_relax3d();
  const TimeGrid grid(spec.default_time, 20);
  const auto test = make_test_set(spec.domain, 5, 1);
  const auto r = run_optimization(spec, grid, OptimizerConfig{.budget = 0}, 1, test);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].grad_evals, 0u);
  EXPECT_EQ(r.control, sine_control(grid, 2));
}

TEST(Optimize, BudgetBelowOneIterationIsRejected) {
  const auto spec = make_spin2();
  const auto test = make_test_set(spec.domain, 5, 1);
  EXPECT_THROW(run_optimization(spec, TimeGrid(2.0, 20),
                                OptimizerConfig{.kind = OptimizerKind::fixed_grid, .budget = 24},
                                1, test),
               ConfigError);
}

TEST(Optimize, StrideAndSnapshots) {
  const auto spec = make_spin2();
  const TimeGrid grid(2.0, 20);
  const auto test = make_test_set(spec.domain, 5, 1);
  const auto r = run_optimization(spec, grid, OptimizerConfig{.alpha = 1.0, .budget = 7}, 1, test,
                                  EvalSchedule{3, {0, 2, 7, 9}});
  std::vector<std::size_t> iters;
  for (const auto& t : r.trace) iters.push_back(t.iteration);
  EXPECT_EQ(iters, (std::vector<std::size_t>{0, 3, 6, 7}));
  ASSERT_EQ(r.snapshots.size(), 3u);
  EXPECT_EQ(r.snapshots[0].first, 0u);
  EXPECT_EQ(r.snapshots[2].first, 7u);
  EXPECT_EQ(r.snapshots[2].second, r.control);
}

TEST(Optimize, RunsAreReproducible) {
  const auto spec = make_lambda3();
  const TimeGrid grid(2.0, 20);
  const auto test = make_test_set(spec.domain, 10, 1);
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::fixed_grid}) {
    const OptimizerConfig c{.kind = kind, .alpha = 0.5, .batch_size = 2, .budget = 100};
    const auto a = run_optimization(spec, grid, c, 5, test, {}, RunOptions{1, {}});
    const auto b = run_optimization(spec, grid, c, 5, test, {}, RunOptions{4, {}});
    EXPECT_EQ(a.trace, b.trace);
    EXPECT_EQ(a.control, b.control);
  }
  const OptimizerConfig c{.kind = OptimizerKind::sgd, .alpha = 0.5, .budget = 20};
  EXPECT_NE(run_optimization(spec, grid, c, 5, test).control,
            run_optimization(spec, grid, c, 6, test).control);
}

TEST(Optimize, SgdReducesEnsembleError) {
  const auto spec = make_spin2();
  const auto test = make_test_set(spec.domain, 50, 1);
  const auto r = run_optimization(spec, TimeGrid(2.0, 200),
                                  OptimizerConfig{.alpha = 500.0, .batch_size = 4, .budget = 200},
                                  1, test, EvalSchedule{50, {}});
  EXPECT_LT(r.trace.back().mean_rel_error, 0.1 * r.trace.front().mean_rel_error);
}
