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

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "experiment.hpp"
#include "test_support.hpp"

using namespace surrogate;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  /// Records one check; the detail line lists every measured quantity.
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [violated]");
  }
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

cli::ExperimentConfig fixture(const std::string& name) {
  return cli::load_config(fs::path(SURROGATE_CONFIG_DIR) / (name + ".json"));
}

TimeGrid random_grid(int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 3.0);
  std::vector<double> t(k);
  for (double& x : t) x = u(rng);
  std::sort(t.rbegin(), t.rend());
  return TimeGrid(t);
}

void consistency(Outcome& o) {
  std::mt19937_64 rng(101);
  double worst = 0.0, worst_oracle = 0.0, worst_norm = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 3;
    const EnvironmentSpec env = testing::random_environment(d, rng);
    const UnitaryDynamics dyn(env);
    const TimeGrid grid = random_grid(3, rng);
    const QuasiProbTable q3 = quasi_prob(dyn, grid);
    for (int drop = 0; drop < 3; ++drop) {
      const QuasiProbTable q2 = quasi_prob(dyn, grid.without(drop));
      worst = std::max(worst, consistency_check(q3, q2, drop));
    }
    const auto oracle = testing::brute_force_q(env.spectrum(), grid,
                                               testing::unitary_propagator(env),
                                               testing::unitary_tail(env, grid[2]));
    worst_oracle = std::max(worst_oracle, testing::max_abs_diff(q3.q, oracle));
    worst_norm = std::max(worst_norm, std::abs(total_mass(q3) - 1.0));
  }
  o.check(worst <= 1e-10, "max 3->2 residual " + fmt(worst) + " (<= 1e-10)");
  o.check(worst_oracle <= 1e-10, "max |q - loop oracle| " + fmt(worst_oracle));
  o.check(worst_norm <= 1e-10, "max |sum q - 1| " + fmt(worst_norm));
}

void quasi_static(Outcome& o) {
  std::vector<EnvironmentSpec> envs;
  envs.push_back(*fixture("quasi_static_validity").environment);
  envs.push_back(*fixture("back_action_b").environment);
  std::mt19937_64 rng(202);
  // Degenerate coupling spectrum with a non-diagonal commuting H_E.
  {
    const Matrix w = testing::random_unitary(4, rng);
    Matrix v = Matrix::Zero(4, 4), h = Matrix::Zero(4, 4);
    v.diagonal() << 0.5, 0.5, -0.5, 1.0;
    Matrix hb = Matrix::Zero(4, 4);
    hb.topLeftCorner(2, 2) = testing::random_hermitian(2, rng);
    hb(2, 2) = 0.3;
    hb(3, 3) = -0.9;
    envs.emplace_back(Operator::hermitian(w * hb * w.adjoint()),
                      Operator::hermitian(w * v * w.adjoint()),
                      Operator::density(testing::random_density(4, rng)));
  }
  double worst_metric = 0.0;
  for (const auto& env : envs) {
    const ValiditySweep s = validity_sweep(UnitaryDynamics(env), random_grid(5, rng), 3);
    worst_metric = std::max(worst_metric, s.max_metric());
  }
  o.check(worst_metric <= 1e-12, "max validity metric k<=3 " + fmt(worst_metric) + " (<= 1e-12)");

  const cli::ExperimentConfig cfg = fixture("quasi_static_compare");
  const SamplerPlan plan = build_plan(*cfg.environment, *cfg.grid);
  const SimulationReport r =
      compare(*cfg.system, *cfg.environment, plan, 10000, cfg.seed);
  o.check(r.within(3.0, 1e-3), "compare N=1e4 max distance " + fmt(r.max_distance()) +
                                   ", max distance/stderr " + fmt(r.max_sigma_ratio()));
}

void rtn(Outcome& o) {
  double worst = 0.0;
  for (double gd : {0.1, 1.0, 10.0}) {
    const double gamma = 0.7;
    const double delta = gd / gamma;
    const RtnModel m = make_rtn(gamma);
    const QuasiProbTable t = lindblad_quasi_prob(m.lindbladian, m.environment,
                                                 TimeGrid({1.3 + delta, 1.3}));
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double sign = a == b ? 1.0 : -1.0;
        const double expect = 0.5 * (1.0 + sign * std::exp(-2.0 * gd)) / 2.0;
        worst = std::max(worst, std::abs(t.p[a * 2 + b] - expect));
      }
    }
  }
  o.check(worst <= 1e-10, "max |P2 - closed form| " + fmt(worst) + " (<= 1e-10)");

  // Two-point histogram from trajectories on a fine grid (h = 0.005).
  const RtnModel m = make_rtn(1.0);
  const TimeGrid fine = TimeGrid::uniform(1.0, 200);
  const SamplerPlan plan = build_plan(m.lindbladian, m.environment, fine);
  const std::size_t n = 100000;
  const auto batch = sample_batch(plan, n, 2026);
  double counts[4] = {0, 0, 0, 0};
  for (const auto& tr : batch) {
    const int a = tr.values[0] > 0 ? 1 : 0;
    const int b = tr.values[100] > 0 ? 1 : 0;
    counts[a * 2 + b] += 1.0;
  }
  const QuasiProbTable t = lindblad_quasi_prob(m.lindbladian, m.environment,
                                               TimeGrid({fine[0], fine[100]}));
  double chi2 = 0.0;
  for (int c = 0; c < 4; ++c) {
    const double e = t.p[c] * double(n);
    chi2 += (counts[c] - e) * (counts[c] - e) / e;
  }
  const double p = 1.0 - boost::math::cdf(boost::math::chi_squared(3.0), chi2);
  o.check(p > 0.01, "chi-square 1e5 samples p = " + fmt(p) + " (> 0.01)");

  const cli::ExperimentConfig cfg = fixture("rtn_compare");
  const SamplerPlan cplan = build_plan(*cfg.lindbladian, *cfg.environment, *cfg.grid);
  const SimulationReport r = compare(*cfg.system, *cfg.lindbladian, *cfg.environment,
                                     cplan, cfg.n_samples, cfg.seed);
  bool bounded = true;
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    bounded = bounded && r.distance[i] <= 3.0 * r.stderr_estimate[i] + 1e-12;
  }
  o.check(bounded, "joint-Lindblad compare max distance/stderr " +
                       fmt(r.max_sigma_ratio()) + " (<= 3)");
}

void negative_control(Outcome& o) {
  const cli::ExperimentConfig cfg = fixture("noncommuting_validity");
  const EnvironmentSpec& env = *cfg.environment;
  const TimeGrid& grid = *cfg.grid;
  const QuasiProbTable t = quasi_prob(UnitaryDynamics(env), grid);
  const auto q = testing::brute_force_q(env.spectrum(), grid, testing::unitary_propagator(env),
                                        testing::unitary_tail(env, grid[1]));
  const auto p = testing::brute_force_p(env.spectrum(), grid, testing::unitary_propagator(env),
                                        testing::unitary_tail(env, grid[1]));
  const std::size_t s = t.sequences();
  double oracle_metric = 0.0;
  for (std::size_t xi = 0; xi < s; ++xi) {
    for (std::size_t zeta = 0; zeta < s; ++zeta) {
      oracle_metric += std::abs(q[xi * s + zeta] - (xi == zeta ? p[xi] : 0.0));
    }
  }
  const double metric = validity_metric(t);
  o.check(metric > 1e-3, "validity metric k=2 " + fmt(metric) + " (> 1e-3)");
  o.check(std::abs(metric - oracle_metric) <= 1e-10,
          "loop oracle metric " + fmt(oracle_metric));

  const cli::ExperimentConfig c2 = fixture("noncommuting_compare");
  const SimulationReport r = compare(*c2.system, *c2.environment,
                                     build_plan(*c2.environment, *c2.grid), c2.n_samples, c2.seed);
  o.check(r.max_sigma_ratio() > 10.0,
          "compare max distance/stderr " + fmt(r.max_sigma_ratio()) + " (> 10)");
}

void dyson_order(Outcome& o) {
  const cli::ExperimentConfig cfg = fixture("dyson");
  const SystemContext& sys = *cfg.system;
  const EnvironmentSpec& env = *cfg.environment;
  const std::vector<double> ts = {0.05, 0.1, 0.2};
  const auto exact = exact_reduced_evolution(sys, env, ts);
  for (int k : {1, 2}) {
    std::vector<double> err;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const DysonResult r = dyson_reduced_state(sys, UnitaryDynamics(env), ts[i], k);
      err.push_back(testing::distance(r.schrodinger, exact[i]));
    }
    const double slope = testing::loglog_slope(ts, err);
    o.check(std::abs(slope - (k + 1)) <= 0.3,
            "k_max=" + std::to_string(k) + " slope " + fmt(slope) + " (target " +
                std::to_string(k + 1) + " +- 0.3)");
  }
}

struct LinkFixture {
  double back_action = 0.0;
  double entanglement = 0.0;
  double metric = 0.0;
};

LinkFixture link_fixture(const std::string& name) {
  const cli::ExperimentConfig cfg = fixture(name);
  LinkFixture f;
  for (double t : cfg.times) {
    f.back_action = std::max(f.back_action, back_action_check(*cfg.system, *cfg.environment, t));
    f.entanglement = std::max(f.entanglement, entanglement_check_dephasing(*cfg.environment, t));
  }
  f.metric = validity_sweep(UnitaryDynamics(*cfg.environment), *cfg.grid, cfg.k_max).max_metric();
  return f;
}

void back_action(Outcome& o) {
  const LinkFixture a = link_fixture("back_action_a");
  o.check(a.back_action <= 1e-10 && a.metric > 1e-3,
          "A: back-action " + fmt(a.back_action) + ", validity " + fmt(a.metric));
  const LinkFixture b = link_fixture("back_action_b");
  o.check(b.metric <= 1e-12 && b.back_action > 1e-3,
          "B: validity " + fmt(b.metric) + ", back-action " + fmt(b.back_action));
}

void entanglement(Outcome& o) {
  const LinkFixture m = link_fixture("entanglement_mixed");
  o.check(m.entanglement <= 1e-12, "mixed: violation " + fmt(m.entanglement));
  const LinkFixture q = link_fixture("entanglement_quasi_static");
  o.check(q.entanglement > 1e-3 && q.metric <= 1e-12,
          "quasi-static: violation " + fmt(q.entanglement) + ", validity " + fmt(q.metric));
}

void sampler(Outcome& o) {
  std::mt19937_64 rng(808);
  double worst_table = 0.0, worst_oracle = 0.0;
  auto check_plan = [&](const auto& dyn, const TimeGrid& grid,
                        const testing::Propagator& prop, const Matrix& tail) {
    const SamplerPlan plan = build_plan(dyn, grid);
    const auto law = enumerate_value_law(plan);
    const QuasiProbTable t = quasi_prob(dyn, grid);
    worst_table = std::max(worst_table, testing::max_abs_diff(law, t.p));
    const auto p = testing::brute_force_p(dyn.environment().spectrum(), grid, prop, tail);
    worst_oracle = std::max(worst_oracle, testing::max_abs_diff(law, p));
  };
  for (int d = 2; d <= 4; ++d) {
    for (int k = 1; k <= 3; ++k) {
      const EnvironmentSpec env = testing::random_environment(d, rng);
      const TimeGrid grid = random_grid(k, rng);
      check_plan(UnitaryDynamics(env), grid, testing::unitary_propagator(env),
                 testing::unitary_tail(env, grid[k - 1]));
    }
  }
  for (int k = 1; k <= 3; ++k) {
    const RtnModel m = make_rtn(0.9, Operator::density(testing::random_density(2, rng)));
    const TimeGrid grid = random_grid(k, rng);
    check_plan(m.dynamics(), grid, testing::lindblad_propagator(m.lindbladian, m.environment),
               testing::lindblad_tail(m.lindbladian, m.environment, grid[k - 1]));
  }
  o.check(worst_table <= 1e-12, "max |enumerated law - P table| " + fmt(worst_table));
  o.check(worst_oracle <= 1e-12, "max |enumerated law - loop oracle| " + fmt(worst_oracle));

  const cli::ExperimentConfig cfg = fixture("quasi_static_compare");
  const TimeGrid grid = TimeGrid::uniform(4.0, 20);
  const SamplerPlan plan = build_plan(*cfg.environment, grid);
  const std::vector<double> ns = {1e2, 1e3, 1e4};
  std::vector<double> mean_dist;
  const int seeds = 32;
  for (double n : ns) {
    double acc = 0.0;
    for (int s = 0; s < seeds; ++s) {
      acc += compare(*cfg.system, *cfg.environment, plan, std::size_t(n), 5000 + s)
                 .max_distance();
    }
    mean_dist.push_back(acc / seeds);
  }
  const double slope = testing::loglog_slope(ns, mean_dist);
  o.check(std::abs(slope + 0.5) <= 0.1,
          "Monte Carlo slope " + fmt(slope) + " over 32 seeds (target -0.5 +- 0.1)");
}

void impostor(Outcome& o) {
  int fixtures = 0;
  double worst_neg = 0.0, worst_rebin = 0.0;
  bool all_nonneg = true;
  std::string probes;
  for (const auto& entry : fs::directory_iterator(SURROGATE_CONFIG_DIR)) {
    if (entry.path().extension() != ".json" || entry.path().stem() == "schema") continue;
    const cli::ExperimentConfig cfg = cli::load_config(entry.path());
    const TimeGrid grid = cfg.grid ? cli::detail::probe_grid(*cfg.grid) : TimeGrid({2.0, 1.4, 0.9, 0.3});
    const int k = std::min(3, grid.size());
    cli::detail::with_dynamics(cfg, [&](const auto& dyn) {
      if (validity_sweep(dyn, grid, k).verdict != Verdict::exactly_valid) return 0;
      ++fixtures;
      const MomentTable m = impostor_moments(dyn, grid, k);
      all_nonneg = all_nonneg && m.all_nonnegative();
      for (const auto& e : m.entries) worst_neg = std::min(worst_neg, e.min_real);
      worst_rebin = std::max(worst_rebin, m.max_rebin_deviation());
      if (m.gaussian) {
        probes += " " + entry.path().stem().string() + ":" +
                  fmt(m.gaussian->relative_residual) +
                  (m.gaussian->gaussian_like ? "(gaussian-like)" : "(non-gaussian)");
      }
      return 0;
    });
  }
  o.check(fixtures >= 4, std::to_string(fixtures) + " exactly-valid fixtures");
  o.check(all_nonneg, "min Re f " + fmt(worst_neg) + " (>= -1e-10)");
  o.check(worst_rebin <= 1e-10, "max rebin deviation " + fmt(worst_rebin) + " (<= 1e-10)");
  o.detail << "; gaussian probe relative residual:" << (probes.empty() ? " none" : probes);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"consistency", consistency},
      {"quasi-static exactness", quasi_static},
      {"telegraph noise reproduction", rtn},
      {"negative control", negative_control},
      {"Dyson order", dyson_order},
      {"back-action non-link", back_action},
      {"entanglement non-link", entanglement},
      {"sampler exactness", sampler},
      {"impostor diagnostics", impostor}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %zu (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), o.detail.str().c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
