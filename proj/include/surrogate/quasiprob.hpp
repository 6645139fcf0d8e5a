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

// Joint quasi-probabilities q^(k) built from propagator chains, their split
// into the projector-connected part P^(k) and the coherence remainder dQ^(k),
// the marginal-consistency check and the surrogate validity metric.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "surrogate/chain.hpp"
#include "surrogate/parallel.hpp"

namespace surrogate {

/// Strictly descending sampling times t_1 > t_2 > ... > t_k >= 0.
class TimeGrid {
 public:
  TimeGrid() = default;

  explicit TimeGrid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.empty()) throw ValidationError("time grid is empty");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!std::isfinite(points_[i])) {
        throw ValidationError("time grid point " + std::to_string(i) +
                              " is not finite");
      }
      if (i > 0 && !(points_[i] < points_[i - 1])) {
        throw ValidationError("time grid must be strictly descending at index " +
                              std::to_string(i));
      }
    }
    if (points_.back() < 0.0) {
      throw ValidationError("time grid has negative times");
    }
  }

  /// t_max, t_max - h, ..., h, 0 with h = t_max / steps.
  static TimeGrid uniform(double t_max, int steps) {
    if (steps < 1 || !(t_max > 0.0)) {
      throw ValidationError("uniform grid needs t_max > 0 and steps >= 1");
    }
    std::vector<double> pts(steps + 1);
    for (int i = 0; i <= steps; ++i) {
      pts[i] = t_max * double(steps - i) / double(steps);
    }
    return TimeGrid(std::move(pts));
  }

  int size() const { return static_cast<int>(points_.size()); }
  double operator[](int i) const { return points_[i]; }
  const std::vector<double>& points() const { return points_; }

  std::vector<double> ascending() const {
    return {points_.rbegin(), points_.rend()};
  }

  TimeGrid without(int index) const {
    if (index < 0 || index >= size() || size() < 2) {
      throw ValidationError("cannot drop index " + std::to_string(index) +
                            " from grid of size " + std::to_string(size()));
    }
    std::vector<double> pts;
    for (int i = 0; i < size(); ++i) {
      if (i != index) pts.push_back(points_[i]);
    }
    return TimeGrid(std::move(pts));
  }

  TimeGrid subset(std::span<const int> indices) const {
    std::vector<double> pts;
    for (int i : indices) pts.push_back(points_.at(i));
    return TimeGrid(std::move(pts));
  }

  bool approx_equal(const TimeGrid& other, double tol = 1e-12) const {
    if (size() != other.size()) return false;
    for (int i = 0; i < size(); ++i) {
      if (std::abs(points_[i] - other.points_[i]) >
          tol * std::max(1.0, std::abs(points_[i]))) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<double> points_;
};

/// q^(k)(xi, zeta, t) with its P^(k) / dQ^(k) split.
///
/// Sequences over the coupling spectrum are encoded as base-r integers with
/// xi_1 (the latest time) as the most significant digit. Entry (xi, zeta)
/// of q and dq lives at xi * sequences() + zeta.
struct QuasiProbTable {
  int k = 0;
  TimeGrid grid;
  std::vector<double> values;
  std::vector<Complex> q;
  std::vector<double> p;
  std::vector<Complex> dq;

  int radix() const { return static_cast<int>(values.size()); }

  std::size_t sequences() const {
    std::size_t n = 1;
    for (int i = 0; i < k; ++i) n *= static_cast<std::size_t>(radix());
    return n;
  }

  std::size_t encode(std::span<const int> digits) const {
    std::size_t idx = 0;
    for (int d : digits) idx = idx * radix() + static_cast<std::size_t>(d);
    return idx;
  }

  std::vector<int> decode(std::size_t idx) const {
    std::vector<int> digits(k);
    for (int l = k - 1; l >= 0; --l) {
      digits[l] = static_cast<int>(idx % radix());
      idx /= radix();
    }
    return digits;
  }

  Complex q_at(std::size_t xi, std::size_t zeta) const {
    return q[xi * sequences() + zeta];
  }
  Complex dq_at(std::size_t xi, std::size_t zeta) const {
    return dq[xi * sequences() + zeta];
  }
};

struct QuasiProbOptions {
  /// Upper bound on the number of (xi, zeta) table entries.
  std::size_t max_entries = std::size_t{1} << 24;
  int threads = 1;
};

namespace detail {

/// Calls fn with every k-subset of {0..n-1} in lexicographic order.
inline void for_each_subset(int n, int k,
                            const std::function<void(const std::vector<int>&)>& fn) {
  if (k < 1 || k > n) return;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  for (;;) {
    fn(idx);
    int pos = k - 1;
    while (pos >= 0 && idx[pos] == n - k + pos) --pos;
    if (pos < 0) return;
    ++idx[pos];
    for (int i = pos + 1; i < k; ++i) idx[i] = idx[i - 1] + 1;
  }
}

inline std::size_t checked_power(std::size_t base, int exp, std::size_t cap) {
  std::size_t out = 1;
  for (int i = 0; i < exp; ++i) {
    if (base != 0 && out > cap / base) return cap + 1;
    out *= base;
  }
  return out;
}

/// Zeroes rows outside `rows` and columns outside `cols`.
inline Matrix block_mask(const Matrix& x, const std::vector<int>& rows,
                         const std::vector<int>& cols) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (int r : rows) {
    for (int c : cols) out(r, c) = x(r, c);
  }
  return out;
}

}  // namespace detail

/// Projector-connected probabilities P^(k)(xi) for every xi-sequence:
/// a forward pass of the hidden index chain from t_k up to t_1.
template <ChainDynamics D>
std::vector<double> projector_probabilities(const D& dyn, const TimeGrid& grid) {
  const auto& spec = dyn.environment().spectrum();
  const int k = grid.size();
  const int r = spec.size();
  const int d = spec.dim();

  std::vector<RealMatrix> kernels;
  for (int l = 0; l + 1 < k; ++l) {
    kernels.push_back(dyn.step(grid[l] - grid[l + 1]).population_kernel());
  }
  const Matrix rho_k = dyn.initial_link(grid[k - 1]);
  RealVector start(d);
  for (int n = 0; n < d; ++n) start(n) = rho_k(n, n).real();

  std::size_t total = 1;
  for (int i = 0; i < k; ++i) total *= static_cast<std::size_t>(r);
  std::vector<double> out(total, 0.0);

  // Depth-first over xi_k, xi_{k-1}, ..., xi_1.
  auto recurse = [&](auto&& self, int pos, const RealVector& w,
                     std::size_t prefix, std::size_t weight) -> void {
    for (int g = 0; g < r; ++g) {
      RealVector masked = RealVector::Zero(d);
      for (int n : spec.membership[g]) masked(n) = w(n);
      const std::size_t idx = prefix + static_cast<std::size_t>(g) * weight;
      if (pos == 0) {
        out[idx] = masked.sum();
      } else {
        self(self, pos - 1, RealVector(kernels[pos - 1] * masked), idx,
             weight * r);
      }
    }
  };
  recurse(recurse, k - 1, start, 0, 1);
  return out;
}

/// Builds q^(k) by contracting propagator chains, P^(k) by the projector-only
/// chains, and dQ^(k) = q - delta * P.
template <ChainDynamics D>
QuasiProbTable quasi_prob(const D& dyn, const TimeGrid& grid,
                          const QuasiProbOptions& options = {}) {
  const auto& spec = dyn.environment().spectrum();
  const int k = grid.size();
  if (k < 1) throw ValidationError("quasi_prob: order k must be >= 1");
  const int r = spec.size();

  const std::size_t seqs = detail::checked_power(r, k, options.max_entries);
  if (seqs > options.max_entries || seqs * seqs > options.max_entries) {
    throw BudgetError("quasi_prob: |Omega_V|^(2k) = " + std::to_string(r) +
                      "^" + std::to_string(2 * k) + " exceeds entry budget " +
                      std::to_string(options.max_entries));
  }

  QuasiProbTable table;
  table.k = k;
  table.grid = grid;
  table.values = spec.unique_values;
  table.q.assign(seqs * seqs, Complex(0.0));

  std::vector<decltype(dyn.step(0.0))> steps;
  steps.reserve(k > 0 ? k - 1 : 0);
  for (int l = 0; l + 1 < k; ++l) steps.push_back(dyn.step(grid[l] - grid[l + 1]));
  const Matrix rho_k = dyn.initial_link(grid[k - 1]);

  // Digit weight of position l (0-based, l = 0 is t_1) in the encoding.
  std::vector<std::size_t> weight(k);
  for (int l = k - 1, w = 1; l >= 0; --l, w *= r) weight[l] = std::size_t(w);

  // Walk from t_k towards t_1; each (xi_l, zeta_l) choice projects rows onto
  // the xi_l subspace and columns onto the zeta_l subspace.
  auto recurse = [&](auto&& self, int pos, const Matrix& x, std::size_t xi_idx,
                     std::size_t zeta_idx) -> void {
    for (int gx = 0; gx < r; ++gx) {
      for (int gz = 0; gz < r; ++gz) {
        const std::size_t xi = xi_idx + gx * weight[pos];
        const std::size_t zeta = zeta_idx + gz * weight[pos];
        if (pos == 0) {
          // Head link delta_{n_1, m_1}: only xi_1 == zeta_1 survives.
          if (gx != gz) continue;
          Complex acc = 0.0;
          for (int n : spec.membership[gx]) acc += x(n, n);
          table.q[xi * seqs + zeta] = acc;
        } else {
          const Matrix masked =
              detail::block_mask(x, spec.membership[gx], spec.membership[gz]);
          self(self, pos - 1, steps[pos - 1].apply(masked), xi, zeta);
        }
      }
    }
  };

  if (k == 1) {
    recurse(recurse, 0, rho_k, 0, 0);
  } else {
    // Top-level (xi_k, zeta_k) pairs are independent work items.
    parallel_for(std::size_t(r) * r, options.threads, [&](std::size_t item) {
      const int gx = int(item / r), gz = int(item % r);
      const Matrix masked =
          detail::block_mask(rho_k, spec.membership[gx], spec.membership[gz]);
      recurse(recurse, k - 2, steps[k - 2].apply(masked),
              gx * weight[k - 1], gz * weight[k - 1]);
    });
  }

  table.p = projector_probabilities(dyn, grid);
  table.dq = table.q;
  for (std::size_t xi = 0; xi < seqs; ++xi) table.dq[xi * seqs + xi] -= table.p[xi];
  return table;
}

/// Sum of all q entries; equals one for any environment.
inline Complex total_mass(const QuasiProbTable& table) {
  Complex acc = 0.0;
  for (const Complex& v : table.q) acc += v;
  return acc;
}

/// Max elementwise |sum over (xi_l, zeta_l) of q^(k) - q^(k-1)| where l is the
/// dropped (0-based) grid position.
inline double consistency_check(const QuasiProbTable& table_k,
                                const QuasiProbTable& table_k_minus_1,
                                int drop_index) {
  if (table_k.k != table_k_minus_1.k + 1) {
    throw ValidationError("consistency_check: orders must differ by one");
  }
  if (drop_index < 0 || drop_index >= table_k.k) {
    throw ValidationError("consistency_check: drop index out of range");
  }
  if (!table_k.grid.without(drop_index).approx_equal(table_k_minus_1.grid)) {
    throw ValidationError(
        "consistency_check: grids do not match after dropping index " +
        std::to_string(drop_index));
  }
  if (table_k.values != table_k_minus_1.values) {
    throw ValidationError("consistency_check: coupling spectra differ");
  }
  const std::size_t seqs_lo = table_k_minus_1.sequences();
  const std::size_t seqs_hi = table_k.sequences();
  std::vector<Complex> marg(seqs_lo * seqs_lo, Complex(0.0));

  for (std::size_t xi = 0; xi < seqs_hi; ++xi) {
    std::vector<int> xd = table_k.decode(xi);
    xd.erase(xd.begin() + drop_index);
    const std::size_t xi_lo = table_k_minus_1.encode(xd);
    for (std::size_t zeta = 0; zeta < seqs_hi; ++zeta) {
      std::vector<int> zd = table_k.decode(zeta);
      zd.erase(zd.begin() + drop_index);
      marg[xi_lo * seqs_lo + table_k_minus_1.encode(zd)] +=
          table_k.q[xi * seqs_hi + zeta];
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < marg.size(); ++i) {
    worst = std::max(worst, std::abs(marg[i] - table_k_minus_1.q[i]));
  }
  return worst;
}

/// L1 mass of the coherence remainder, sum |dQ|. Zero means the surrogate is
/// exact at this order and grid.
inline double validity_metric(const QuasiProbTable& table) {
  double acc = 0.0;
  for (const Complex& v : table.dq) acc += std::abs(v);
  return acc;
}

inline double validity_max_abs(const QuasiProbTable& table) {
  double worst = 0.0;
  for (const Complex& v : table.dq) worst = std::max(worst, std::abs(v));
  return worst;
}

enum class Verdict { exactly_valid, approximately_valid, invalid };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::exactly_valid:
      return "exactly-valid";
    case Verdict::approximately_valid:
      return "approximately-valid";
    case Verdict::invalid:
      return "invalid";
  }
  return "invalid";
}

struct ValidityThresholds {
  /// At or below: numerically zero remainder.
  double exact = 1e-12;
  /// At or below: remainder negligible at the requested level.
  double tau = 1e-8;
};

inline Verdict classify(double metric, const ValidityThresholds& th = {}) {
  if (metric <= th.exact) return Verdict::exactly_valid;
  if (metric <= th.tau) return Verdict::approximately_valid;
  return Verdict::invalid;
}

/// Worst verdict over a set of per-order verdicts.
inline Verdict combine(Verdict a, Verdict b) {
  return static_cast<int>(a) >= static_cast<int>(b) ? a : b;
}

/// Worst-case validity of one order over every k-subset of a grid.
struct OrderValidity {
  int k = 0;
  std::size_t subsets = 0;
  double metric = 0.0;
  double max_abs = 0.0;
  TimeGrid worst_grid;
  Verdict verdict = Verdict::exactly_valid;
};

struct ValiditySweep {
  std::vector<OrderValidity> orders;
  Verdict verdict = Verdict::exactly_valid;

  double max_metric() const {
    double worst = 0.0;
    for (const auto& o : orders) worst = std::max(worst, o.metric);
    return worst;
  }
};

struct SweepOptions {
  ValidityThresholds thresholds;
  std::size_t max_subsets = 4096;
  QuasiProbOptions table;
};

/// Orders 1..min(k_max, |grid|), each over all k-subsets of the grid. The
/// verdict covers the tested orders only.
template <ChainDynamics D>
ValiditySweep validity_sweep(const D& dyn, const TimeGrid& grid, int k_max,
                             const SweepOptions& options = {}) {
  if (k_max < 1) throw ValidationError("validity_sweep: k_max must be >= 1");
  ValiditySweep out;
  for (int k = 1; k <= std::min(k_max, grid.size()); ++k) {
    OrderValidity ov;
    ov.k = k;
    detail::for_each_subset(grid.size(), k, [&](const std::vector<int>& idx) {
      if (++ov.subsets > options.max_subsets) {
        throw BudgetError("validity_sweep: too many grid subsets at order " +
                          std::to_string(k));
      }
      const TimeGrid sub = grid.subset(idx);
      const QuasiProbTable table = quasi_prob(dyn, sub, options.table);
      const double m = validity_metric(table);
      if (ov.worst_grid.size() == 0 || m > ov.metric) {
        ov.metric = m;
        ov.worst_grid = sub;
      }
      ov.max_abs = std::max(ov.max_abs, validity_max_abs(table));
    });
    ov.verdict = classify(ov.metric, options.thresholds);
    out.verdict = combine(out.verdict, ov.verdict);
    out.orders.push_back(std::move(ov));
  }
  return out;
}

}  // namespace surrogate
