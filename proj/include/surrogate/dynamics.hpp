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

// Exact system+environment evolution, system evolution driven by surrogate
// trajectories, the Monte Carlo ensemble average and their comparison.
// All states here are in the Schroedinger picture.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "surrogate/lindblad.hpp"
#include "surrogate/sampler.hpp"
#include "surrogate/system.hpp"

namespace surrogate {

struct ExactOptions {
  int max_joint_dim = 512;
  /// The open case exponentiates (dim_S dim_E)^2 square superoperators.
  int max_open_joint_dim = 24;
};

namespace detail {

inline void check_ascending(const std::vector<double>& times) {
  if (times.empty()) throw ValidationError("time list is empty");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || times[i] < 0.0) {
      throw ValidationError("time " + std::to_string(i) +
                            " is negative or not finite");
    }
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw ValidationError("times must be strictly ascending at index " +
                            std::to_string(i));
    }
  }
}

/// Half the trace norm of the Hermitian part of a - b.
inline double hermitian_distance(const Matrix& a, const Matrix& b) {
  return 0.5 * linalg::hermitian_eigenvalues(a - b).cwiseAbs().sum();
}

}  // namespace detail

/// H_SE = H_S x 1 + V_S x V_E + 1 x H_E, system index most significant.
inline Matrix joint_hamiltonian(const SystemContext& sys,
                                const EnvironmentSpec& env) {
  const Matrix id_s = Matrix::Identity(sys.dim(), sys.dim());
  const Matrix id_e = Matrix::Identity(env.dim(), env.dim());
  return linalg::kron(sys.h_s().matrix(), id_e) +
         linalg::kron(sys.v_s().matrix(), env.v_e().matrix()) +
         linalg::kron(id_s, env.h_e().matrix());
}

/// tr_E of the jointly evolved rho_S x rho_E at each (ascending) time.
inline std::vector<Matrix> exact_reduced_evolution(
    const SystemContext& sys, const EnvironmentSpec& env,
    const std::vector<double>& times, const ExactOptions& options = {}) {
  detail::check_ascending(times);
  const int ds = sys.dim(), de = env.dim();
  if (ds * de > options.max_joint_dim) {
    throw BudgetError("exact evolution: joint dimension " +
                      std::to_string(ds * de) + " exceeds " +
                      std::to_string(options.max_joint_dim));
  }
  const EigenDecomposition eig =
      eigh(Operator::hermitian(joint_hamiltonian(sys, env)));
  const Matrix rho0 =
      linalg::kron(sys.rho_s().matrix(), env.rho_e().matrix());
  const Matrix rho0_eig = eig.vectors.adjoint() * rho0 * eig.vectors;

  std::vector<Matrix> out;
  out.reserve(times.size());
  for (double t : times) {
    Vector phase(eig.values.size());
    for (Eigen::Index i = 0; i < phase.size(); ++i) {
      phase(i) = std::exp(-kI * (t * eig.values(i)));
    }
    const Matrix evolved_eig =
        phase.asDiagonal() * rho0_eig * phase.conjugate().asDiagonal();
    const Matrix joint = eig.vectors * evolved_eig * eig.vectors.adjoint();
    out.push_back(linalg::partial_trace_env(joint, ds, de));
  }
  return out;
}

/// Joint generator -i[H_S x 1 + V_S x V_E, .] + 1_S x L_E. The environment
/// Hamiltonian enters only through L_E.
inline Matrix joint_open_generator(const SystemContext& sys, const Lindbladian& l,
                                   const EnvironmentSpec& env) {
  const int ds = sys.dim(), de = env.dim();
  if (l.dim_e() != de) {
    throw DimensionError("lindbladian and environment dimensions differ");
  }
  const int dj = ds * de;
  const Matrix id_e = Matrix::Identity(de, de);
  const Matrix h = linalg::kron(sys.h_s().matrix(), id_e) +
                   linalg::kron(sys.v_s().matrix(), env.v_e().matrix());
  const Matrix id_j = Matrix::Identity(dj, dj);
  Matrix g = -kI * (superop::sandwich(h, id_j) - superop::sandwich(id_j, h));

  // (1_S x L_E) on |s><s'| x |n><n'|.
  const Matrix& ge = l.generator();
  for (int s = 0; s < ds; ++s) {
    for (int sp = 0; sp < ds; ++sp) {
      for (int n = 0; n < de; ++n) {
        for (int np = 0; np < de; ++np) {
          const int col = (s * de + n) + (sp * de + np) * dj;
          const int col_e = n + np * de;
          for (int a = 0; a < de; ++a) {
            for (int b = 0; b < de; ++b) {
              const Complex v = ge(a + b * de, col_e);
              if (v == Complex(0.0)) continue;
              g((s * de + a) + (sp * de + b) * dj, col) += v;
            }
          }
        }
      }
    }
  }
  return g;
}

/// Reduced system states for an environment driven by a Lindbladian.
inline std::vector<Matrix> exact_reduced_evolution(
    const SystemContext& sys, const Lindbladian& l, const EnvironmentSpec& env,
    const std::vector<double>& times, const ExactOptions& options = {}) {
  detail::check_ascending(times);
  const int ds = sys.dim(), de = env.dim();
  if (ds * de > options.max_open_joint_dim) {
    throw BudgetError("exact open evolution: joint dimension " +
                      std::to_string(ds * de) + " exceeds " +
                      std::to_string(options.max_open_joint_dim));
  }
  const Matrix g = joint_open_generator(sys, l, env);
  Vector state = superop::vec(
      linalg::kron(sys.rho_s().matrix(), env.rho_e().matrix()));

  std::vector<Matrix> out;
  out.reserve(times.size());
  double t_prev = 0.0, dt_cached = -1.0;
  Matrix step;
  for (double t : times) {
    const double dt = t - t_prev;
    if (dt > 0.0) {
      if (dt != dt_cached) {
        step = (dt * g).exp();
        dt_cached = dt;
      }
      state = step * state;
    }
    t_prev = t;
    out.push_back(
        linalg::partial_trace_env(superop::unvec(state, ds * de), ds, de));
  }
  return out;
}

enum class EvolutionMethod { exact_step, euler };

inline std::string to_string(EvolutionMethod m) {
  return m == EvolutionMethod::exact_step ? "exact-step" : "euler";
}

struct EvolutionOptions {
  EvolutionMethod method = EvolutionMethod::exact_step;
  /// Euler steps per grid interval; ignored by exact-step.
  int substeps = 1;
};

/// Evolves rho_S under H_S + xi(t) V_S for a field held piecewise constant
/// at its value on the earlier end of each grid interval. If the grid does
/// not start at zero, the earliest value also covers [0, t_min].
class FieldEvolver {
 public:
  FieldEvolver(const SystemContext& sys, const TimeGrid& grid,
               std::vector<double> field_values, EvolutionOptions options = {})
      : sys_(sys), times_(grid.ascending()), values_(std::move(field_values)),
        options_(options) {
    if (options_.substeps < 1) {
      throw ValidationError("substeps must be >= 1");
    }
    std::sort(values_.begin(), values_.end());
    values_.erase(std::unique(values_.begin(), values_.end()), values_.end());
    starts_at_zero_ = times_.front() == 0.0;

    if (options_.method == EvolutionMethod::exact_step) {
      const int segments = int(times_.size()) - (starts_at_zero_ ? 1 : 0);
      unitaries_.resize(std::size_t(segments) * values_.size());
      for (int a = 0; a < segments; ++a) {
        const double h = segment_length(a);
        for (std::size_t v = 0; v < values_.size(); ++v) {
          unitaries_[a * values_.size() + v] = linalg::expi_hermitian(
              generator(values_[v]), h);
        }
      }
    }
  }

  const std::vector<double>& times() const { return times_; }

  /// `values` in grid (descending) order; states returned at ascending times.
  std::vector<Matrix> evolve(const std::vector<double>& values) const {
    const int k = static_cast<int>(times_.size());
    if (int(values.size()) != k) {
      throw DimensionError("trajectory length does not match the grid");
    }
    std::vector<Matrix> out;
    out.reserve(k);
    Matrix rho = sys_.rho_s().matrix();
    if (starts_at_zero_) out.push_back(rho);
    const int segments = k - (starts_at_zero_ ? 1 : 0);
    for (int a = 0; a < segments; ++a) {
      // Segment a ends at ascending time index a (+1 if the grid has 0).
      const int left = starts_at_zero_ ? a : std::max(a - 1, 0);
      const double xi = values[k - 1 - left];
      if (options_.method == EvolutionMethod::exact_step) {
        const Matrix& u = unitaries_[a * values_.size() + value_index(xi)];
        rho = u * rho * u.adjoint();
      } else {
        const Matrix h = generator(xi);
        const double dt = segment_length(a) / options_.substeps;
        for (int s = 0; s < options_.substeps; ++s) {
          rho = rho - kI * dt * (h * rho - rho * h);
        }
      }
      out.push_back(rho);
    }
    return out;
  }

 private:
  Matrix generator(double xi) const {
    return sys_.h_s().matrix() + xi * sys_.v_s().matrix();
  }

  double segment_length(int a) const {
    if (starts_at_zero_) return times_[a + 1] - times_[a];
    return a == 0 ? times_[0] : times_[a] - times_[a - 1];
  }

  std::size_t value_index(double xi) const {
    const auto it = std::lower_bound(values_.begin(), values_.end(), xi);
    if (it == values_.end() || *it != xi) {
      throw ValidationError("field value outside the evolver's value set");
    }
    return std::size_t(it - values_.begin());
  }

  SystemContext sys_;
  std::vector<double> times_;
  std::vector<double> values_;
  EvolutionOptions options_;
  bool starts_at_zero_ = true;
  std::vector<Matrix> unitaries_;
};

inline std::vector<Matrix> evolve_under_trajectory(
    const SystemContext& sys, const Trajectory& traj,
    const EvolutionOptions& options = {}) {
  return FieldEvolver(sys, traj.grid, traj.values, options).evolve(traj.values);
}

struct MonteCarloOptions {
  EvolutionOptions evolution;
  int threads = 1;
  /// Trajectories per partial sum; fixes the summation tree.
  std::size_t block_size = 256;
  std::uint64_t first_stream = 0;
};

struct MonteCarloResult {
  std::vector<double> times;
  std::vector<Matrix> mean;
  /// sqrt(sum over entries of (var Re + var Im) / N): a Frobenius-norm
  /// standard error of the mean.
  std::vector<double> stderr_estimate;
  std::size_t n_samples = 0;
};

namespace detail {

struct Moments {
  std::vector<Matrix> sum;
  std::vector<RealMatrix> sq;  // |x|^2 entrywise, i.e. Re^2 + Im^2

  void add_states(const std::vector<Matrix>& states) {
    if (sum.empty()) {
      sum = states;
      sq.resize(states.size());
      for (std::size_t i = 0; i < states.size(); ++i) sq[i] = states[i].cwiseAbs2();
      return;
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
      sum[i] += states[i];
      sq[i] += states[i].cwiseAbs2();
    }
  }

  void merge(const Moments& other) {
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] += other.sum[i];
      sq[i] += other.sq[i];
    }
  }
};

/// Pairwise merge of blocks fed in a fixed order; the tree depends only on
/// the number of blocks.
class PairwiseReducer {
 public:
  void push(Moments block) {
    int level = 0;
    while (!stack_.empty() && stack_.back().first == level) {
      Moments left = std::move(stack_.back().second);
      stack_.pop_back();
      left.merge(block);
      block = std::move(left);
      ++level;
    }
    stack_.emplace_back(level, std::move(block));
  }

  Moments finish() {
    Moments acc = std::move(stack_.back().second);
    stack_.pop_back();
    while (!stack_.empty()) {
      Moments left = std::move(stack_.back().second);
      stack_.pop_back();
      left.merge(acc);
      acc = std::move(left);
    }
    return acc;
  }

 private:
  std::vector<std::pair<int, Moments>> stack_;
};

}  // namespace detail

/// Ensemble average of trajectory-driven system states. Results are
/// bit-identical for a fixed seed regardless of thread count.
inline MonteCarloResult monte_carlo_state(const SystemContext& sys,
                                          const SamplerPlan& plan,
                                          std::size_t n_samples,
                                          std::uint64_t seed,
                                          const MonteCarloOptions& options = {}) {
  if (n_samples < 1) throw ValidationError("monte_carlo_state: n_samples must be >= 1");
  if (options.block_size < 1) throw ValidationError("block_size must be >= 1");
  const FieldEvolver evolver(sys, plan.grid, plan.unique_values,
                             options.evolution);
  const std::size_t blocks =
      (n_samples + options.block_size - 1) / options.block_size;
  const std::size_t wave =
      std::max<std::size_t>(1, std::size_t(std::max(options.threads, 1)) * 4);

  detail::PairwiseReducer reducer;
  for (std::size_t first = 0; first < blocks; first += wave) {
    const std::size_t count = std::min(wave, blocks - first);
    std::vector<detail::Moments> partial(count);
    parallel_for(count, options.threads, [&](std::size_t j) {
      const std::size_t b = first + j;
      const std::size_t lo = b * options.block_size;
      const std::size_t hi = std::min(n_samples, lo + options.block_size);
      for (std::size_t i = lo; i < hi; ++i) {
        const Trajectory tr = sample(plan, seed, options.first_stream + i);
        partial[j].add_states(evolver.evolve(tr.values));
      }
    });
    for (auto& p : partial) reducer.push(std::move(p));
  }
  const detail::Moments total = reducer.finish();

  MonteCarloResult out;
  out.times = evolver.times();
  out.n_samples = n_samples;
  const double n = double(n_samples);
  for (std::size_t i = 0; i < total.sum.size(); ++i) {
    const Matrix mean = total.sum[i] / n;
    double var_sum = 0.0;
    if (n_samples > 1) {
      const RealMatrix var =
          (total.sq[i] - n * mean.cwiseAbs2()) / (n - 1.0);
      var_sum = var.cwiseMax(0.0).sum();
    }
    out.mean.push_back(mean);
    out.stderr_estimate.push_back(std::sqrt(var_sum / n));
  }
  return out;
}

/// Law-weighted average over every hidden index chain of the plan; the
/// n -> infinity limit of monte_carlo_state.
inline std::vector<Matrix> enumerated_surrogate_average(
    const SystemContext& sys, const SamplerPlan& plan,
    const EvolutionOptions& options = {}) {
  const std::vector<double> law = enumerate_index_law(plan);
  const FieldEvolver evolver(sys, plan.grid, plan.unique_values, options);
  const int d = plan.dim(), k = plan.k();
  std::vector<Matrix> acc;
  for (std::size_t code = 0; code < law.size(); ++code) {
    if (law[code] == 0.0) continue;
    std::vector<double> values(k);
    std::size_t rest = code;
    for (int l = k - 1; l >= 0; --l) {
      values[l] = plan.unique_values[plan.group_of[rest % d]];
      rest /= d;
    }
    const std::vector<Matrix> states = evolver.evolve(values);
    if (acc.empty()) {
      acc.assign(states.size(), Matrix::Zero(sys.dim(), sys.dim()));
    }
    for (std::size_t i = 0; i < states.size(); ++i) acc[i] += law[code] * states[i];
  }
  return acc;
}

struct SimulationReport {
  std::vector<double> times;
  std::vector<Matrix> rho_exact;
  std::vector<Matrix> rho_surrogate;
  std::vector<double> distance;
  std::size_t n_samples = 0;
  std::vector<double> stderr_estimate;

  double max_distance() const {
    return distance.empty() ? 0.0
                            : *std::max_element(distance.begin(), distance.end());
  }

  /// distance <= max(factor * stderr, floor) at every time.
  bool within(double factor = 3.0, double floor = 1e-3) const {
    for (std::size_t i = 0; i < distance.size(); ++i) {
      if (distance[i] > std::max(factor * stderr_estimate[i], floor)) return false;
    }
    return true;
  }

  /// Largest distance / stderr over times with nonzero stderr.
  double max_sigma_ratio() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < distance.size(); ++i) {
      if (stderr_estimate[i] > 0.0) {
        worst = std::max(worst, distance[i] / stderr_estimate[i]);
      }
    }
    return worst;
  }
};

inline SimulationReport make_report(std::vector<Matrix> exact,
                                    const MonteCarloResult& mc) {
  SimulationReport r;
  r.times = mc.times;
  r.rho_exact = std::move(exact);
  r.rho_surrogate = mc.mean;
  r.n_samples = mc.n_samples;
  r.stderr_estimate = mc.stderr_estimate;
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    r.distance.push_back(
        detail::hermitian_distance(r.rho_exact[i], r.rho_surrogate[i]));
  }
  return r;
}

inline SimulationReport compare(const SystemContext& sys,
                                const EnvironmentSpec& env,
                                const SamplerPlan& plan, std::size_t n_samples,
                                std::uint64_t seed,
                                const MonteCarloOptions& options = {}) {
  MonteCarloResult mc = monte_carlo_state(sys, plan, n_samples, seed, options);
  return make_report(exact_reduced_evolution(sys, env, mc.times), mc);
}

inline SimulationReport compare(const SystemContext& sys, const Lindbladian& l,
                                const EnvironmentSpec& env,
                                const SamplerPlan& plan, std::size_t n_samples,
                                std::uint64_t seed,
                                const MonteCarloOptions& options = {}) {
  MonteCarloResult mc = monte_carlo_state(sys, plan, n_samples, seed, options);
  return make_report(exact_reduced_evolution(sys, l, env, mc.times), mc);
}

}  // namespace surrogate
