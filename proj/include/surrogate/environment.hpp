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

// The environment triple (H_E, V_E, rho_E) and its coupling spectrum.
//
// Every chain computation in the library runs in the eigenbasis {|n>} of the
// coupling operator V_E. The basis is fixed deterministically:
//   * eigenvalues closer than the grouping tolerance form one member of the
//     coupling spectrum;
//   * inside a degenerate subspace, the basis diagonalizes the compression of
//     H_E onto that subspace;
//   * each eigenvector is rephased so that its largest-magnitude component
//     is real and positive.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "surrogate/operator.hpp"

namespace surrogate {

struct GroupingOptions {
  /// Eigenvalues i, j share a group when |v_i - v_j| <= rel * max(1, |v|max)
  /// (applied between neighbours of the sorted spectrum).
  double relative_tolerance = 1e-9;
  /// Explicit partition of eigenvector indices (ascending-eigenvalue order).
  std::optional<std::vector<std::vector<int>>> override_groups;
  /// Largest accepted environment dimension.
  int max_dim = 64;
};

struct SpectralDecomposition {
  /// v_n for each eigenvector index n.
  std::vector<double> eigenvalues_raw;
  /// The coupling spectrum, ascending.
  std::vector<double> unique_values;
  /// membership[g] lists the indices n with v_n == unique_values[g].
  std::vector<std::vector<int>> membership;
  /// group_of[n] is the position of v_n in unique_values.
  std::vector<int> group_of;
  /// Columns are the eigenvectors |n>.
  Matrix basis;
  /// True when a group joined eigenvalues that were not bitwise equal.
  bool merged_distinct = false;
  double tolerance = 0.0;

  int dim() const { return static_cast<int>(eigenvalues_raw.size()); }
  int size() const { return static_cast<int>(unique_values.size()); }
};

namespace detail {

inline void fix_phase(Eigen::Ref<Vector> v) {
  const double peak = v.cwiseAbs().maxCoeff();
  if (peak == 0.0) return;
  Eigen::Index pick = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= peak * (1.0 - 1e-9)) {
      pick = i;
      break;
    }
  }
  const Complex phase = std::conj(v(pick)) / std::abs(v(pick));
  v *= phase;
}

inline std::vector<std::vector<int>> tolerance_groups(const RealVector& w,
                                                      double tol) {
  std::vector<std::vector<int>> groups;
  for (int i = 0; i < int(w.size()); ++i) {
    if (!groups.empty() && w(i) - w(groups.back().back()) <= tol) {
      groups.back().push_back(i);
    } else {
      groups.push_back({i});
    }
  }
  return groups;
}

}  // namespace detail

/// Spectral decomposition of V_E with grouping of (near-)degenerate values.
/// `h_e` selects the basis inside degenerate subspaces.
inline SpectralDecomposition decompose_coupling(
    const Operator& v_e, const Operator& h_e,
    const GroupingOptions& options = {}) {
  const EigenDecomposition eig = eigh(v_e);
  const int d = v_e.dim();
  const double scale = std::max(1.0, eig.values.cwiseAbs().maxCoeff());
  const double tol = options.relative_tolerance * scale;

  std::vector<std::vector<int>> groups;
  if (options.override_groups) {
    groups = *options.override_groups;
    std::vector<int> seen(d, 0);
    for (const auto& g : groups) {
      if (g.empty()) throw ValidationError("grouping override has empty group");
      for (int n : g) {
        if (n < 0 || n >= d) {
          throw ValidationError("grouping override index " + std::to_string(n) +
                                " out of range");
        }
        ++seen[n];
      }
    }
    if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) {
      throw ValidationError("grouping override is not a partition of indices");
    }
  } else {
    groups = detail::tolerance_groups(eig.values, tol);
  }

  struct Group {
    double value;
    std::vector<int> members;
  };
  std::vector<Group> sorted;
  bool merged = false;
  for (auto& g : groups) {
    std::sort(g.begin(), g.end());
    double mean = 0.0;
    for (int n : g) mean += eig.values(n);
    mean /= double(g.size());
    for (int n : g) merged = merged || eig.values(n) != eig.values(g.front());
    sorted.push_back({mean, g});
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const Group& a, const Group& b) { return a.value < b.value; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].value - sorted[i - 1].value <= tol) {
      throw ValidationError(
          "coupling spectrum groups closer than the grouping tolerance");
    }
  }

  SpectralDecomposition out;
  out.tolerance = tol;
  out.merged_distinct = merged;
  out.basis = Matrix(d, d);
  out.eigenvalues_raw.resize(d);
  out.group_of.resize(d);
  int next = 0;
  for (int gi = 0; gi < int(sorted.size()); ++gi) {
    const auto& members = sorted[gi].members;
    const int gsize = int(members.size());
    Matrix block(d, gsize);
    for (int j = 0; j < gsize; ++j) block.col(j) = eig.vectors.col(members[j]);
    if (gsize > 1) {
      const Matrix compressed = block.adjoint() * h_e.matrix() * block;
      Eigen::SelfAdjointEigenSolver<Matrix> inner(
          0.5 * (compressed + compressed.adjoint()));
      block = (block * inner.eigenvectors()).eval();
    }
    out.unique_values.push_back(sorted[gi].value);
    out.membership.emplace_back();
    for (int j = 0; j < gsize; ++j) {
      Vector col = block.col(j);
      detail::fix_phase(col);
      out.basis.col(next) = col;
      out.eigenvalues_raw[next] =
          (col.adjoint() * v_e.matrix() * col)(0, 0).real();
      out.group_of[next] = gi;
      out.membership.back().push_back(next);
      ++next;
    }
  }
  return out;
}

/// The environment side of a coupled model. Immutable.
class EnvironmentSpec {
 public:
  EnvironmentSpec(Operator h_e, Operator v_e, Operator rho_e,
                  const GroupingOptions& options = {})
      : h_e_(std::move(h_e)), v_e_(std::move(v_e)), rho_e_(std::move(rho_e)) {
    if (!h_e_.is(Structure::hermitian)) {
      throw ValidationError("environment h_e must be hermitian");
    }
    if (!v_e_.is(Structure::hermitian)) {
      throw ValidationError("environment v_e must be hermitian");
    }
    if (!rho_e_.is(Structure::density)) {
      throw ValidationError("environment rho_e must be a density operator");
    }
    if (h_e_.dim() != v_e_.dim() || h_e_.dim() != rho_e_.dim()) {
      throw DimensionError("environment operators have unequal dimensions");
    }
    if (h_e_.dim() > options.max_dim) {
      throw BudgetError("environment dimension " + std::to_string(h_e_.dim()) +
                        " exceeds cap " + std::to_string(options.max_dim));
    }
    spectrum_ = decompose_coupling(v_e_, h_e_, options);

    const Matrix& b = spectrum_.basis;
    RealVector raw(dim());
    for (int n = 0; n < dim(); ++n) raw(n) = spectrum_.eigenvalues_raw[n];
    const Matrix rebuilt = b * raw.cast<Complex>().asDiagonal() * b.adjoint();
    const double scale = std::max(1.0, linalg::max_abs(v_e_.matrix()));
    if (linalg::max_abs(rebuilt - v_e_.matrix()) > 1e-10 * scale) {
      throw ValidationError("coupling spectrum does not reconstruct v_e");
    }

    h_eig_ = b.adjoint() * h_e_.matrix() * b;
    h_eig_ = 0.5 * (h_eig_ + h_eig_.adjoint()).eval();
    rho_eig_ = b.adjoint() * rho_e_.matrix() * b;
    rho_eig_ = 0.5 * (rho_eig_ + rho_eig_.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> hs(h_eig_);
    h_energies_ = hs.eigenvalues();
    h_vectors_ = hs.eigenvectors();
  }

  int dim() const { return h_e_.dim(); }
  const Operator& h_e() const { return h_e_; }
  const Operator& v_e() const { return v_e_; }
  const Operator& rho_e() const { return rho_e_; }
  const SpectralDecomposition& spectrum() const { return spectrum_; }

  /// H_E and rho_E expressed in the coupling eigenbasis.
  const Matrix& h_eigenbasis() const { return h_eig_; }
  const Matrix& rho_eigenbasis() const { return rho_eig_; }

  Matrix to_eigenbasis(const Matrix& a) const {
    return spectrum_.basis.adjoint() * a * spectrum_.basis;
  }
  Matrix from_eigenbasis(const Matrix& a) const {
    return spectrum_.basis * a * spectrum_.basis.adjoint();
  }

  /// <n| e^{-i t H_E} |n'> in the coupling eigenbasis.
  Matrix evolution_eigenbasis(double t) const {
    Vector phases(h_energies_.size());
    for (Eigen::Index i = 0; i < h_energies_.size(); ++i) {
      phases(i) = std::exp(-kI * (t * h_energies_(i)));
    }
    return h_vectors_ * phases.asDiagonal() * h_vectors_.adjoint();
  }

  /// True when [H_E, V_E] vanishes to `tol` (elementwise).
  bool is_quasi_static(double tol = 1e-12) const {
    return linalg::max_abs(linalg::commutator(h_e_.matrix(), v_e_.matrix())) <=
           tol;
  }

 private:
  Operator h_e_;
  Operator v_e_;
  Operator rho_e_;
  SpectralDecomposition spectrum_;
  Matrix h_eig_;
  Matrix rho_eig_;
  RealVector h_energies_;
  Matrix h_vectors_;
};

/// Single-step unitary propagator e^{-i dt H_E} in the coupling eigenbasis.
struct PropagatorCache {
  double dt = 0.0;
  Operator u_dt;
};

inline PropagatorCache make_propagator_cache(const EnvironmentSpec& env,
                                             double dt) {
  if (!(dt > 0.0)) throw ValidationError("propagator step must be positive");
  return {dt, Operator::unitary(env.evolution_eigenbasis(dt))};
}

/// T_t(nm|n'm') = <n|e^{-itH_E}|n'> <m|e^{-itH_E}|m'>^*.
inline Complex propagator(const EnvironmentSpec& env, double t, int n, int m,
                          int n_prime, int m_prime) {
  const int d = env.dim();
  for (int idx : {n, m, n_prime, m_prime}) {
    if (idx < 0 || idx >= d) {
      throw ValidationError("propagator index " + std::to_string(idx) +
                            " out of range for dimension " + std::to_string(d));
    }
  }
  const Matrix u = env.evolution_eigenbasis(t);
  return u(n, n_prime) * std::conj(u(m, m_prime));
}

/// rho_E(t) = e^{-itH_E} rho_E e^{itH_E}, in the original basis.
inline Operator evolved_state(const EnvironmentSpec& env, double t) {
  if (t < 0.0) throw ValidationError("evolved_state: negative time");
  const Matrix u = linalg::expi_hermitian(env.h_e().matrix(), t);
  return Operator::density(u * env.rho_e().matrix() * u.adjoint());
}

/// Environment with diagonal, hence commuting, H_E and V_E.
inline EnvironmentSpec make_quasi_static(const std::vector<double>& h_diag,
                                         const std::vector<double>& v_diag,
                                         const Operator& rho_e,
                                         const GroupingOptions& options = {}) {
  if (h_diag.size() != v_diag.size()) {
    throw DimensionError("make_quasi_static: h and v lengths differ");
  }
  const int d = int(h_diag.size());
  Matrix h = Matrix::Zero(d, d);
  Matrix v = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    h(i, i) = h_diag[i];
    v(i, i) = v_diag[i];
  }
  return EnvironmentSpec(Operator::hermitian(h), Operator::hermitian(v), rho_e,
                         options);
}

}  // namespace surrogate
