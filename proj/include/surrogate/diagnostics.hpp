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

// Checks that separate surrogate validity from neighbouring notions: the
// environment's response to the system, system-environment entanglement, and
// whether the dephasing-qubit moments look like those of a classical process.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "surrogate/dynamics.hpp"

namespace surrogate {

/// Trace distance between tr_S of the coupled evolution and of the evolution
/// under H_S x 1 + 1 x H_E alone. Zero means no E-only observable can tell
/// whether the system was there.
inline double back_action_check(const SystemContext& sys,
                                const EnvironmentSpec& env, double t,
                                const ExactOptions& options = {}) {
  if (t < 0.0) throw ValidationError("back_action_check: negative time");
  const int ds = sys.dim(), de = env.dim();
  if (ds * de > options.max_joint_dim) {
    throw BudgetError("back_action_check: joint dimension too large");
  }
  const Matrix rho0 = linalg::kron(sys.rho_s().matrix(), env.rho_e().matrix());
  const Matrix h_coupled = joint_hamiltonian(sys, env);
  const Matrix h_free =
      linalg::kron(sys.h_s().matrix(), Matrix::Identity(de, de)) +
      linalg::kron(Matrix::Identity(ds, ds), env.h_e().matrix());
  const Matrix u_c = linalg::expi_hermitian(h_coupled, t);
  const Matrix u_f = linalg::expi_hermitian(h_free, t);
  const Matrix env_coupled =
      linalg::partial_trace_sys(u_c * rho0 * u_c.adjoint(), ds, de);
  const Matrix env_free =
      linalg::partial_trace_sys(u_f * rho0 * u_f.adjoint(), ds, de);
  return detail::hermitian_distance(env_coupled, env_free);
}

/// For H_S = 0, V_S = sigma_z / 2: trace distance between the environment
/// states conditioned on the two qubit basis states. Zero iff the joint state
/// stays separable for every initial qubit state.
inline double entanglement_check_dephasing(const EnvironmentSpec& env, double t) {
  if (t < 0.0) throw ValidationError("entanglement_check_dephasing: negative time");
  const Matrix& h = env.h_e().matrix();
  const Matrix& v = env.v_e().matrix();
  const Matrix u_up = linalg::expi_hermitian(h + 0.5 * v, t);
  const Matrix u_dn = linalg::expi_hermitian(h - 0.5 * v, t);
  const Matrix& rho = env.rho_e().matrix();
  return detail::hermitian_distance(u_up * rho * u_up.adjoint(),
                                    u_dn * rho * u_dn.adjoint());
}

/// Moments of one order on one set of times.
struct MomentEntry {
  int k = 0;
  TimeGrid grid;
  /// F^(k) = sum delta_{xi_1 zeta_1} prod_l (xi_l + zeta_l)/2 q^(k).
  Complex moment;
  /// f^(k)(phi) over midpoint sequences, encoded base-|midpoints| with
  /// phi_1 most significant.
  std::vector<Complex> density;
  /// P^(k) moved onto the same bins (phi = xi).
  std::vector<double> p_rebinned;
  double min_real = 0.0;
  double max_imag = 0.0;
  double rebin_deviation = 0.0;
  bool nonnegative = false;
};

struct GaussianProbe {
  TimeGrid grid;
  /// F^(4) on the first four times.
  Complex fourth_moment;
  /// Fourth joint cumulant from all sub-moments; zero for a Gaussian process.
  Complex fourth_cumulant;
  /// |cumulant| / max(|F^(4)|, tiny).
  double relative_residual = 0.0;
  bool gaussian_like = false;
};

struct MomentTable {
  std::vector<int> orders;
  std::vector<double> midpoints;
  std::vector<MomentEntry> entries;
  std::optional<GaussianProbe> gaussian;

  bool all_nonnegative() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const MomentEntry& e) { return e.nonnegative; });
  }
  double max_rebin_deviation() const {
    double worst = 0.0;
    for (const auto& e : entries) worst = std::max(worst, e.rebin_deviation);
    return worst;
  }
};

struct MomentOptions {
  double nonnegativity_tolerance = 1e-10;
  double gaussian_tolerance = 1e-8;
  /// Cap on the number of k-subsets of the grid per order.
  std::size_t max_subsets = 4096;
  QuasiProbOptions table;
};

namespace detail {

/// Sorted midpoints (a + b)/2 over all value pairs, merged within a relative
/// tolerance, and the bin of each ordered pair.
struct MidpointBins {
  std::vector<double> points;
  std::vector<int> bin;  // bin[a * r + b]

  explicit MidpointBins(const std::vector<double>& values) {
    const int r = int(values.size());
    double scale = 1.0;
    for (double v : values) scale = std::max(scale, std::abs(v));
    std::vector<double> raw;
    for (int a = 0; a < r; ++a) {
      for (int b = 0; b < r; ++b) raw.push_back(0.5 * (values[a] + values[b]));
    }
    std::vector<double> sorted = raw;
    std::sort(sorted.begin(), sorted.end());
    for (double x : sorted) {
      if (points.empty() || x - points.back() > 1e-12 * scale) points.push_back(x);
    }
    bin.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const auto it = std::min_element(
          points.begin(), points.end(), [&](double p, double q) {
            return std::abs(p - raw[i]) < std::abs(q - raw[i]);
          });
      bin[i] = int(it - points.begin());
    }
  }
};

inline Complex contract_moment(const QuasiProbTable& table) {
  const std::size_t seqs = table.sequences();
  Complex acc = 0.0;
  for (std::size_t xi = 0; xi < seqs; ++xi) {
    const std::vector<int> xd = table.decode(xi);
    for (std::size_t zeta = 0; zeta < seqs; ++zeta) {
      const Complex q = table.q[xi * seqs + zeta];
      if (q == Complex(0.0)) continue;
      const std::vector<int> zd = table.decode(zeta);
      if (xd[0] != zd[0]) continue;
      double prod = 1.0;
      for (int l = 0; l < table.k; ++l) {
        prod *= 0.5 * (table.values[xd[l]] + table.values[zd[l]]);
      }
      acc += prod * q;
    }
  }
  return acc;
}

inline MomentEntry moment_entry(const QuasiProbTable& table,
                                const MidpointBins& bins,
                                const MomentOptions& options) {
  const int r = table.radix();
  const int m = int(bins.points.size());
  const int k = table.k;
  std::size_t cells = 1;
  for (int i = 0; i < k; ++i) cells *= std::size_t(m);

  MomentEntry e;
  e.k = k;
  e.grid = table.grid;
  e.density.assign(cells, Complex(0.0));
  e.p_rebinned.assign(cells, 0.0);

  const std::size_t seqs = table.sequences();
  for (std::size_t xi = 0; xi < seqs; ++xi) {
    const std::vector<int> xd = table.decode(xi);
    std::size_t diag_cell = 0;
    for (int l = 0; l < k; ++l) diag_cell = diag_cell * m + bins.bin[xd[l] * r + xd[l]];
    e.p_rebinned[diag_cell] += table.p[xi];
    for (std::size_t zeta = 0; zeta < seqs; ++zeta) {
      const std::vector<int> zd = table.decode(zeta);
      if (xd[0] != zd[0]) continue;
      std::size_t cell = 0;
      for (int l = 0; l < k; ++l) cell = cell * m + bins.bin[xd[l] * r + zd[l]];
      e.density[cell] += table.q[xi * seqs + zeta];
    }
  }

  e.min_real = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cells; ++c) {
    e.min_real = std::min(e.min_real, e.density[c].real());
    e.max_imag = std::max(e.max_imag, std::abs(e.density[c].imag()));
    e.rebin_deviation =
        std::max(e.rebin_deviation, std::abs(e.density[c] - e.p_rebinned[c]));
  }
  e.nonnegative = e.min_real >= -options.nonnegativity_tolerance &&
                  e.max_imag <= options.nonnegativity_tolerance;
  e.moment = contract_moment(table);
  return e;
}

/// Joint cumulant of four variables from the moments of every sub-block.
inline Complex fourth_cumulant(const std::function<Complex(unsigned)>& moment) {
  // Set partitions of {0,1,2,3}, each block a bitmask.
  static const std::vector<std::vector<unsigned>> partitions = [] {
    std::vector<std::vector<unsigned>> out;
    std::function<void(unsigned, std::vector<unsigned>&)> rec =
        [&](unsigned remaining, std::vector<unsigned>& blocks) {
          if (remaining == 0) {
            out.push_back(blocks);
            return;
          }
          const unsigned lowest = remaining & (~remaining + 1);
          const unsigned rest = remaining ^ lowest;
          for (unsigned sub = rest;; sub = (sub - 1) & rest) {
            blocks.push_back(lowest | sub);
            rec(rest ^ sub, blocks);
            blocks.pop_back();
            if (sub == 0) break;
          }
        };
    std::vector<unsigned> blocks;
    rec(0xFu, blocks);
    return out;
  }();
  static const double kFactorial[] = {1.0, 1.0, 2.0, 6.0};
  Complex acc = 0.0;
  for (const auto& part : partitions) {
    const int b = int(part.size());
    Complex prod = (b % 2 == 1 ? 1.0 : -1.0) * kFactorial[b - 1];
    for (unsigned block : part) prod *= moment(block);
    acc += prod;
  }
  return acc;
}

}  // namespace detail

/// F^(k) and f^(k) for k = 1..k_max over every k-subset of the grid, with a
/// Gaussian-factorisation probe on the first four times when available.
template <ChainDynamics D>
MomentTable impostor_moments(const D& dyn, const TimeGrid& grid, int k_max,
                             const MomentOptions& options = {}) {
  if (k_max < 1) throw ValidationError("impostor_moments: k_max must be >= 1");
  if (k_max > grid.size()) {
    throw ValidationError("impostor_moments: k_max exceeds grid size");
  }
  const detail::MidpointBins bins(dyn.environment().spectrum().unique_values);
  MomentTable out;
  out.midpoints = bins.points;
  for (int k = 1; k <= k_max; ++k) {
    out.orders.push_back(k);
    std::size_t count = 0;
    detail::for_each_subset(grid.size(), k, [&](const std::vector<int>& idx) {
      if (++count > options.max_subsets) {
        throw BudgetError("impostor_moments: too many grid subsets at order " +
                          std::to_string(k));
      }
      const QuasiProbTable table = quasi_prob(dyn, grid.subset(idx), options.table);
      out.entries.push_back(detail::moment_entry(table, bins, options));
    });
  }

  if (grid.size() >= 4) {
    const std::vector<int> first4 = {0, 1, 2, 3};
    const TimeGrid g4 = grid.subset(first4);
    auto moment = [&](unsigned mask) {
      std::vector<int> idx;
      for (int i = 0; i < 4; ++i) {
        if (mask & (1u << i)) idx.push_back(i);
      }
      return detail::contract_moment(quasi_prob(dyn, g4.subset(idx), options.table));
    };
    GaussianProbe probe;
    probe.grid = g4;
    probe.fourth_moment = moment(0xFu);
    probe.fourth_cumulant = detail::fourth_cumulant(moment);
    probe.relative_residual = std::abs(probe.fourth_cumulant) /
                              std::max(std::abs(probe.fourth_moment), 1e-300);
    probe.gaussian_like = std::abs(probe.fourth_cumulant) <= options.gaussian_tolerance;
    out.gaussian = probe;
  }
  return out;
}

inline MomentTable impostor_moments(const EnvironmentSpec& env,
                                    const TimeGrid& grid, int k_max,
                                    const MomentOptions& options = {}) {
  return impostor_moments(UnitaryDynamics(env), grid, k_max, options);
}

}  // namespace surrogate
