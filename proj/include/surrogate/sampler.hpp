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

// Surrogate-field trajectories drawn from P^(k).
//
// P^(k) factorises into an initial population vector at t_k and one
// column-stochastic population kernel per grid interval, so the law is that
// of a Markov chain on environment eigen-indices observed through the map
// index -> coupling eigenvalue. Sampling walks that chain from t_k to t_1.

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "surrogate/lindblad.hpp"
#include "surrogate/random.hpp"

namespace surrogate {

/// One realisation xi_1, ..., xi_k on a descending grid.
struct Trajectory {
  TimeGrid grid;
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::vector<double> ascending_times() const { return grid.ascending(); }
  std::vector<double> ascending_values() const {
    return {values.rbegin(), values.rend()};
  }
};

struct SamplerPlan {
  TimeGrid grid;
  /// <n|rho_E(t_k)|n> in the coupling eigenbasis.
  RealVector initial_weights;
  /// step_kernels[l] carries indices from t_{l+1} to t_l; column n' is the
  /// law of the next index given n'.
  std::vector<RealMatrix> step_kernels;
  std::vector<int> group_of;
  std::vector<double> unique_values;
  /// Set when the environment failed its validity check; sampling proceeds.
  bool invalid_warning = false;

  int dim() const { return static_cast<int>(initial_weights.size()); }
  int k() const { return grid.size(); }
};

struct PlanTolerances {
  /// Entries in [-clamp, 0) are clamped to zero.
  double clamp = 1e-12;
  /// Allowed deviation of weight and column sums from one.
  double normalization = 1e-10;
};

namespace detail {

inline void clamp_distribution(Eigen::Ref<RealVector> w, double clamp,
                               double normalization, const std::string& what) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w(i)) || w(i) < -clamp) {
      throw ValidationError(what + " has negative entry " +
                            std::to_string(w(i)) + " at index " +
                            std::to_string(i));
    }
    if (w(i) < 0.0) w(i) = 0.0;
  }
  const double total = w.sum();
  if (std::abs(total - 1.0) > normalization) {
    throw ValidationError(what + " sums to " + std::to_string(total) +
                          ", not 1");
  }
  w /= total;
}

}  // namespace detail

template <ChainDynamics D>
SamplerPlan build_plan(const D& dyn, const TimeGrid& grid,
                       const PlanTolerances& tol = {}) {
  const auto& spec = dyn.environment().spectrum();
  const int k = grid.size();
  const int d = spec.dim();
  SamplerPlan plan;
  plan.grid = grid;
  plan.group_of = spec.group_of;
  plan.unique_values = spec.unique_values;

  const Matrix rho_k = dyn.initial_link(grid[k - 1]);
  plan.initial_weights.resize(d);
  for (int n = 0; n < d; ++n) plan.initial_weights(n) = rho_k(n, n).real();
  detail::clamp_distribution(plan.initial_weights, tol.clamp,
                             tol.normalization, "initial weights");

  for (int l = 0; l + 1 < k; ++l) {
    RealMatrix kernel = dyn.step(grid[l] - grid[l + 1]).population_kernel();
    for (int c = 0; c < d; ++c) {
      detail::clamp_distribution(kernel.col(c), tol.clamp, tol.normalization,
                                 "kernel " + std::to_string(l) + " column " +
                                     std::to_string(c));
    }
    plan.step_kernels.push_back(std::move(kernel));
  }
  return plan;
}

inline SamplerPlan build_plan(const EnvironmentSpec& env, const TimeGrid& grid,
                              const PlanTolerances& tol = {}) {
  return build_plan(UnitaryDynamics(env), grid, tol);
}

inline SamplerPlan build_plan(const Lindbladian& l, const EnvironmentSpec& env,
                              const TimeGrid& grid,
                              const PlanTolerances& tol = {}) {
  return build_plan(LindbladDynamics(l, env), grid, tol);
}

namespace detail {

/// Inverse-CDF draw from a normalised column.
template <class Column>
int draw_index(const Column& weights, double u) {
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights(i) <= 0.0) continue;
    acc += weights(i);
    last_positive = static_cast<int>(i);
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding left u just above the accumulated total.
  return last_positive;
}

}  // namespace detail

/// Hidden index chain n_k, ..., n_1 for one (seed, stream). Index l of the
/// result corresponds to grid position l.
inline std::vector<int> sample_indices(const SamplerPlan& plan,
                                       std::uint64_t seed,
                                       std::uint64_t stream) {
  RandomStream rng(seed, stream);
  const int k = plan.k();
  std::vector<int> idx(k);
  idx[k - 1] = detail::draw_index(plan.initial_weights, rng.uniform());
  for (int l = k - 2; l >= 0; --l) {
    idx[l] = detail::draw_index(plan.step_kernels[l].col(idx[l + 1]),
                                rng.uniform());
  }
  return idx;
}

inline Trajectory sample(const SamplerPlan& plan, std::uint64_t seed,
                         std::uint64_t stream = 0) {
  const std::vector<int> idx = sample_indices(plan, seed, stream);
  Trajectory traj{plan.grid, {}, seed, stream};
  traj.values.reserve(idx.size());
  for (int n : idx) traj.values.push_back(plan.unique_values[plan.group_of[n]]);
  return traj;
}

/// Trajectory i uses stream first_stream + i, so a batch is the same no
/// matter how it is split or scheduled.
inline std::vector<Trajectory> sample_batch(const SamplerPlan& plan,
                                            std::size_t n_samples,
                                            std::uint64_t seed,
                                            std::uint64_t first_stream = 0,
                                            int threads = 1) {
  if (n_samples < 1) throw ValidationError("sample_batch: n_samples must be >= 1");
  std::vector<Trajectory> out(n_samples);
  parallel_for(n_samples, threads, [&](std::size_t i) {
    out[i] = sample(plan, seed, first_stream + i);
  });
  return out;
}

/// Probability of every hidden index chain under the plan, by exhaustive
/// enumeration. Chains are encoded base-dim with grid position 0 most
/// significant.
inline std::vector<double> enumerate_index_law(const SamplerPlan& plan,
                                               std::size_t max_chains = 1 << 20) {
  const int d = plan.dim();
  const int k = plan.k();
  const std::size_t total = detail::checked_power(d, k, max_chains);
  if (total > max_chains) {
    throw BudgetError("enumerate_index_law: too many index chains");
  }
  std::vector<double> law(total, 0.0);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    std::vector<int> idx(k);
    for (int l = k - 1; l >= 0; --l) {
      idx[l] = static_cast<int>(rest % d);
      rest /= d;
    }
    double p = plan.initial_weights(idx[k - 1]);
    for (int l = k - 2; l >= 0 && p != 0.0; --l) {
      p *= plan.step_kernels[l](idx[l], idx[l + 1]);
    }
    law[code] = p;
  }
  return law;
}

/// Law of eigenvalue sequences, laid out like QuasiProbTable::p.
inline std::vector<double> enumerate_value_law(const SamplerPlan& plan) {
  const std::vector<double> index_law = enumerate_index_law(plan);
  const int d = plan.dim();
  const int k = plan.k();
  const std::size_t r = plan.unique_values.size();
  std::size_t seqs = 1;
  for (int i = 0; i < k; ++i) seqs *= r;
  std::vector<double> out(seqs, 0.0);
  for (std::size_t code = 0; code < index_law.size(); ++code) {
    std::size_t rest = code, weight = 1, value_code = 0;
    for (int l = k - 1; l >= 0; --l) {
      value_code += weight * static_cast<std::size_t>(plan.group_of[rest % d]);
      rest /= d;
      weight *= r;
    }
    out[value_code] += index_law[code];
  }
  return out;
}

namespace io_detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_f64(std::ostream& os, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, sizeof v);
  put_u64(os, v);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw ValidationError("trajectory file truncated");
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double x;
  std::memcpy(&x, &v, sizeof x);
  return x;
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace io_detail

/// Columns sample_id, t, xi with t ascending inside each sample.
inline void write_trajectories_csv(std::ostream& os,
                                   const std::vector<Trajectory>& batch) {
  os << "sample_id,t,xi\n";
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& tr = batch[i];
    for (int l = tr.grid.size() - 1; l >= 0; --l) {
      os << i << ',' << io_detail::format_double(tr.grid[l]) << ','
         << io_detail::format_double(tr.values[l]) << '\n';
    }
  }
}

inline constexpr char kTrajectoryMagic[8] = {'S', 'G', 'T', 'R',
                                             'A', 'J', '0', '1'};

/// Little-endian layout: magic "SGTRAJ01", u64 k, u64 n_samples, u64 seed,
/// k f64 grid times (descending), then n_samples rows of k f64 values in the
/// same descending-time order.
inline void write_trajectories_binary(std::ostream& os,
                                      const std::vector<Trajectory>& batch) {
  if (batch.empty()) throw ValidationError("cannot serialise an empty batch");
  const TimeGrid& grid = batch.front().grid;
  os.write(kTrajectoryMagic, 8);
  io_detail::put_u64(os, static_cast<std::uint64_t>(grid.size()));
  io_detail::put_u64(os, batch.size());
  io_detail::put_u64(os, batch.front().seed);
  for (double t : grid.points()) io_detail::put_f64(os, t);
  for (const auto& tr : batch) {
    if (!tr.grid.approx_equal(grid, 0.0)) {
      throw ValidationError("batch trajectories use different grids");
    }
    for (double v : tr.values) io_detail::put_f64(os, v);
  }
}

inline std::vector<Trajectory> read_trajectories_binary(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kTrajectoryMagic, 8) != 0) {
    throw ValidationError("not a trajectory file");
  }
  const std::uint64_t k = io_detail::get_u64(is);
  const std::uint64_t n = io_detail::get_u64(is);
  const std::uint64_t seed = io_detail::get_u64(is);
  if (k == 0 || k > (1u << 24)) throw ValidationError("bad trajectory length");
  std::vector<double> times(k);
  for (auto& t : times) t = io_detail::get_f64(is);
  const TimeGrid grid(times);
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Trajectory tr{grid, std::vector<double>(k), seed, i};
    for (auto& v : tr.values) v = io_detail::get_f64(is);
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace surrogate
