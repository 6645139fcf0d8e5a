// Copyright 2026 The Surrogate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace surrogate;
using Catch::Matchers::WithinAbs;

namespace {

Matrix coherent_qubit() {
  Matrix r(2, 2);
  r << 0.5, Complex(0.3, 0.2), Complex(0.3, -0.2), 0.5;
  return r;
}

/// <exp(-i int xi)> for a symmetric telegraph process of amplitude a and
/// flip rate gamma started from its stationary law.
Complex telegraph_coherence(double a, double gamma, double t) {
  const Complex omega = std::sqrt(Complex(gamma * gamma - a * a));
  if (std::abs(omega) < 1e-12) return std::exp(-gamma * t) * (1.0 + gamma * t);
  return std::exp(-gamma * t) * (std::cosh(omega * t) + gamma / omega * std::sinh(omega * t));
}

}  // namespace

TEST_CASE("exact evolution, closed environment", "[dynamics]") {
  std::mt19937_64 rng(1);
  const Matrix h_s = testing::random_hermitian(2, rng);
  const Matrix rho_s = testing::random_density(2, rng);
  const EnvironmentSpec env = testing::random_environment(3, rng);
  const std::vector<double> times{0.0, 0.4, 1.1, 2.5};

  SECTION("decoupled") {
    const SystemContext sys(Operator::hermitian(h_s), Operator::hermitian(Matrix::Zero(2, 2)),
                            Operator::density(rho_s));
    const auto states = exact_reduced_evolution(sys, env, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const Matrix u = testing::pade_expi(h_s, times[i]);
      CHECK(linalg::max_abs(states[i] - u * rho_s * u.adjoint()) <= 1e-12);
    }
  }

  SECTION("trace, hermiticity and joint purity") {
    const SystemContext sys(Operator::hermitian(h_s),
                            Operator::hermitian(testing::random_hermitian(2, rng)),
                            Operator::density(rho_s));
    const auto states = exact_reduced_evolution(sys, env, times);
    const Matrix h = joint_hamiltonian(sys, env);
    const Matrix rho0 = linalg::kron(rho_s, env.rho_e().matrix());
    const double purity0 = (rho0 * rho0).trace().real();
    for (std::size_t i = 0; i < times.size(); ++i) {
      CHECK(std::abs(states[i].trace() - 1.0) <= 1e-12);
      CHECK(linalg::max_abs(states[i] - states[i].adjoint()) <= 1e-12);
      const Matrix u = testing::pade_expi(h, times[i]);
      const Matrix joint = u * rho0 * u.adjoint();
      CHECK_THAT((joint * joint).trace().real(), WithinAbs(purity0, 1e-10));
      CHECK(linalg::max_abs(states[i] - linalg::partial_trace_env(joint, 2, 3)) <= 1e-10);
    }
  }

  SECTION("dephasing qubit with a quasi-static environment") {
    Matrix rho_e(2, 2);
    rho_e << 0.7, Complex(0.1, 0.2), Complex(0.1, -0.2), 0.3;
    const double vp = 0.8, vm = -0.3;
    const EnvironmentSpec qs = make_quasi_static({0.5, -0.5}, {vp, vm}, Operator::density(rho_e));
    const SystemContext sys = SystemContext::dephasing_qubit(Operator::density(coherent_qubit()));
    const auto states = exact_reduced_evolution(sys, qs, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double t = times[i];
      const Complex factor = 0.7 * std::exp(-kI * t * vp) + 0.3 * std::exp(-kI * t * vm);
      CHECK(std::abs(states[i](0, 1) - coherent_qubit()(0, 1) * factor) <= 1e-12);
      CHECK(std::abs(states[i](0, 0) - 0.5) <= 1e-12);
    }
  }

  SECTION("validation and budget") {
    const SystemContext sys = SystemContext::dephasing_qubit(Operator::maximally_mixed(2));
    CHECK_THROWS_AS(exact_reduced_evolution(sys, env, {0.5, 0.2}), ValidationError);
    CHECK_THROWS_AS(exact_reduced_evolution(sys, env, {-0.5}), ValidationError);
    ExactOptions tiny;
    tiny.max_joint_dim = 4;
    CHECK_THROWS_AS(exact_reduced_evolution(sys, env, {0.5}, tiny), BudgetError);
  }
}

TEST_CASE("exact evolution, Lindblad environment", "[dynamics]") {
  const std::vector<double> times{0.0, 0.3, 0.9, 1.7, 3.0};
  const SystemContext sys = SystemContext::dephasing_qubit(Operator::density(coherent_qubit()));

  for (double gamma : {0.2, 0.5, 2.0}) {
    const RtnModel rtn = make_rtn(gamma);
    const auto states = exact_reduced_evolution(sys, rtn.lindbladian, rtn.environment, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const Complex expect = coherent_qubit()(0, 1) * telegraph_coherence(0.5, gamma, times[i]);
      CHECK(std::abs(states[i](0, 1) - expect) <= 1e-10);
      CHECK(std::abs(states[i].trace() - 1.0) <= 1e-12);
    }
  }

  // A purely Hamiltonian generator reproduces the closed evolution.
  std::mt19937_64 rng(2);
  const EnvironmentSpec env = testing::random_environment(2, rng);
  const SystemContext generic(Operator::hermitian(testing::random_hermitian(2, rng)),
                              Operator::hermitian(testing::random_hermitian(2, rng)),
                              Operator::density(testing::random_density(2, rng)));
  const Lindbladian l = Lindbladian::from_gksl(env.h_e().matrix(), {});
  const auto open = exact_reduced_evolution(generic, l, env, times);
  const auto closed = exact_reduced_evolution(generic, env, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK(linalg::max_abs(open[i] - closed[i]) <= 1e-10);
  }
}

TEST_CASE("trajectory-driven evolution", "[dynamics]") {
  const SystemContext sys = SystemContext::dephasing_qubit(Operator::density(coherent_qubit()));
  const TimeGrid grid = TimeGrid::uniform(2.0, 8);

  Trajectory zero{grid, std::vector<double>(9, 0.0), 0, 0};
  for (const Matrix& r : evolve_under_trajectory(sys, zero)) {
    CHECK(linalg::max_abs(r - coherent_qubit()) <= 1e-14);
  }

  Trajectory half{grid, std::vector<double>(9, 0.5), 0, 0};
  const auto states = evolve_under_trajectory(sys, half);
  const auto times = grid.ascending();
  for (std::size_t i = 0; i < times.size(); ++i) {
    const Complex expect = coherent_qubit()(0, 1) * std::exp(-kI * times[i] * 0.5);
    CHECK(std::abs(states[i](0, 1) - expect) <= 1e-12);
  }

  // Field value on [t_a, t_{a+1}] is the one at t_a.
  std::vector<double> step(9, 0.0);
  step[8] = 1.0;  // value at t = 0 (grid order is descending)
  const auto stepped = evolve_under_trajectory(sys, Trajectory{grid, step, 0, 0});
  const Complex after = coherent_qubit()(0, 1) * std::exp(-kI * 0.25);
  for (std::size_t i = 1; i < times.size(); ++i) {
    CHECK(std::abs(stepped[i](0, 1) - after) <= 1e-12);
  }

  // Grids that do not start at zero extend the earliest value back to 0.
  const TimeGrid late({1.0, 0.5});
  const auto l2 = evolve_under_trajectory(sys, Trajectory{late, {0.0, 1.0}, 0, 0});
  CHECK(std::abs(l2[0](0, 1) - coherent_qubit()(0, 1) * std::exp(-kI * 0.5)) <= 1e-12);
  CHECK(std::abs(l2[1](0, 1) - coherent_qubit()(0, 1) * std::exp(-kI * 1.0)) <= 1e-12);
}

TEST_CASE("euler converges to exact-step at first order", "[dynamics]") {
  std::mt19937_64 rng(3);
  const SystemContext sys(Operator::hermitian(testing::random_hermitian(2, rng)),
                          Operator::hermitian(testing::random_hermitian(2, rng)),
                          Operator::density(testing::random_density(2, rng)));
  const TimeGrid grid = TimeGrid::uniform(1.0, 5);
  const Trajectory tr{grid, {0.5, -0.5, 0.5, 0.5, -0.5, 0.5}, 0, 0};
  const Matrix ref = evolve_under_trajectory(sys, tr).back();
  std::vector<double> hs, errs;
  for (int sub : {50, 100, 200, 400}) {
    const auto e = evolve_under_trajectory(sys, tr, {EvolutionMethod::euler, sub});
    hs.push_back(0.2 / sub);
    errs.push_back(testing::distance(e.back(), ref));
  }
  CHECK_THAT(testing::loglog_slope(hs, errs), WithinAbs(1.0, 0.1));
  CHECK_THROWS_AS(evolve_under_trajectory(sys, tr, {EvolutionMethod::euler, 0}), ValidationError);
}

TEST_CASE("monte carlo ensemble", "[dynamics]") {
  const SystemContext sys = SystemContext::dephasing_qubit(Operator::density(coherent_qubit()));
  const TimeGrid grid = TimeGrid::uniform(3.0, 30);

  SECTION("one sample of a deterministic field is a pure evolution") {
    Matrix pure = Matrix::Zero(2, 2);
    pure(1, 1) = 1.0;
    const EnvironmentSpec env = make_quasi_static({0.0, 0.0}, {0.5, -0.5}, Operator::density(pure));
    const MonteCarloResult mc = monte_carlo_state(sys, build_plan(env, grid), 1, 5);
    const auto exact = exact_reduced_evolution(sys, env, mc.times);
    for (std::size_t i = 0; i < mc.times.size(); ++i) {
      CHECK(linalg::max_abs(mc.mean[i] - exact[i]) <= 1e-12);
      const double purity0 = (coherent_qubit() * coherent_qubit()).trace().real();
      CHECK_THAT((mc.mean[i] * mc.mean[i]).trace().real(), WithinAbs(purity0, 1e-12));
      CHECK(mc.stderr_estimate[i] == 0.0);
    }
  }

  SECTION("quasi-static mixture") {
    Matrix rho_e(2, 2);
    rho_e << 0.65, 0.2, 0.2, 0.35;
    const EnvironmentSpec env = make_quasi_static({0.3, -0.3}, {0.5, -0.5}, Operator::density(rho_e));
    const SamplerPlan plan = build_plan(env, grid);
    const MonteCarloResult mc = monte_carlo_state(sys, plan, 4000, 17);
    for (std::size_t i = 0; i < mc.times.size(); ++i) {
      const double t = mc.times[i];
      const Complex expect = coherent_qubit()(0, 1) *
                             (0.35 * std::exp(-kI * t * -0.5) + 0.65 * std::exp(-kI * t * 0.5));
      CHECK(std::abs(mc.mean[i](0, 1) - expect) <= 3.0 * mc.stderr_estimate[i] + 1e-12);
    }
    // Every trajectory is exact, so the enumerated average is the exact state.
    const auto enumerated = enumerated_surrogate_average(sys, build_plan(env, TimeGrid::uniform(3.0, 2)));
    const auto exact = exact_reduced_evolution(sys, env, {0.0, 1.5, 3.0});
    for (int i = 0; i < 3; ++i) CHECK(linalg::max_abs(enumerated[i] - exact[i]) <= 1e-12);
  }

  SECTION("thread count does not change the result") {
    const RtnModel rtn = make_rtn(0.8);
    const SamplerPlan plan = build_plan(rtn.dynamics(), grid);
    MonteCarloOptions one, four;
    four.threads = 4;
    const MonteCarloResult a = monte_carlo_state(sys, plan, 1000, 3, one);
    const MonteCarloResult b = monte_carlo_state(sys, plan, 1000, 3, four);
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
      CHECK(a.mean[i] == b.mean[i]);
      CHECK(a.stderr_estimate[i] == b.stderr_estimate[i]);
    }
  }

  SECTION("estimator is unbiased for the plan law") {
    const RtnModel rtn = make_rtn(0.8);
    const TimeGrid coarse({2.0, 1.0, 0.0});
    const SamplerPlan plan = build_plan(rtn.dynamics(), coarse);
    const auto enumerated = enumerated_surrogate_average(sys, plan);
    const MonteCarloResult mc = monte_carlo_state(sys, plan, 20000, 23);
    for (std::size_t i = 0; i < enumerated.size(); ++i) {
      CHECK(testing::distance(enumerated[i], mc.mean[i]) <= 3.0 * mc.stderr_estimate[i] + 1e-12);
    }
  }

  SECTION("compare against the Lindblad reference") {
    const RtnModel rtn = make_rtn(1.0);
    const SamplerPlan plan = build_plan(rtn.dynamics(), TimeGrid::uniform(2.0, 200));
    const SimulationReport rep = compare(sys, rtn.lindbladian, rtn.environment, plan, 3000, 31);
    CHECK(rep.times.size() == 201);
    CHECK(rep.n_samples == 3000);
    CHECK(rep.within(3.0, 1e-3));
    for (std::size_t i = 0; i < rep.times.size(); ++i) {
      const double min_eig = linalg::hermitian_eigenvalues(rep.rho_surrogate[i]).minCoeff();
      CHECK(min_eig >= -3.0 * rep.stderr_estimate[i] - 1e-12);
    }
  }
}
