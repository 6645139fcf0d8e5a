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

// Dense complex operators on finite-dimensional Hilbert spaces.
//
// Joint system-environment indices are system-major throughout the library:
// the basis state |s>|n> has joint index s * dim_e + n.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <string>

#include "surrogate/errors.hpp"

namespace surrogate {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

enum class Structure : unsigned {
  none = 0,
  hermitian = 1u << 0,
  unitary = 1u << 1,
  density = 1u << 2,
};

constexpr Structure operator|(Structure a, Structure b) {
  return static_cast<Structure>(static_cast<unsigned>(a) |
                                static_cast<unsigned>(b));
}
constexpr Structure operator&(Structure a, Structure b) {
  return static_cast<Structure>(static_cast<unsigned>(a) &
                                static_cast<unsigned>(b));
}
constexpr bool has_flag(Structure set, Structure flag) {
  return (set & flag) == flag && flag != Structure::none;
}

/// Validation thresholds applied when a structure flag is claimed.
struct StructureTolerances {
  double hermitian = 1e-12;
  double unitary = 1e-10;
  double density_trace = 1e-10;
  double density_min_eigenvalue = 1e-10;
};

namespace linalg {

inline double max_abs(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline Matrix commutator(const Matrix& a, const Matrix& b) {
  return a * b - b * a;
}

inline Matrix anticommutator(const Matrix& a, const Matrix& b) {
  return a * b + b * a;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  const Eigen::Index ra = a.rows(), ca = a.cols();
  const Eigen::Index rb = b.rows(), cb = b.cols();
  Matrix out(ra * rb, ca * cb);
  for (Eigen::Index i = 0; i < ra; ++i) {
    for (Eigen::Index j = 0; j < ca; ++j) {
      out.block(i * rb, j * cb, rb, cb) = a(i, j) * b;
    }
  }
  return out;
}

inline Matrix partial_trace_env(const Matrix& a, int dim_s, int dim_e) {
  if (a.rows() != a.cols() || a.rows() != Eigen::Index(dim_s) * dim_e) {
    throw DimensionError("partial_trace_env: operator dimension " +
                         std::to_string(a.rows()) + " != " +
                         std::to_string(dim_s) + "*" + std::to_string(dim_e));
  }
  Matrix out = Matrix::Zero(dim_s, dim_s);
  for (int s = 0; s < dim_s; ++s) {
    for (int sp = 0; sp < dim_s; ++sp) {
      Complex acc = 0.0;
      for (int n = 0; n < dim_e; ++n) acc += a(s * dim_e + n, sp * dim_e + n);
      out(s, sp) = acc;
    }
  }
  return out;
}

inline Matrix partial_trace_sys(const Matrix& a, int dim_s, int dim_e) {
  if (a.rows() != a.cols() || a.rows() != Eigen::Index(dim_s) * dim_e) {
    throw DimensionError("partial_trace_sys: operator dimension " +
                         std::to_string(a.rows()) + " != " +
                         std::to_string(dim_s) + "*" + std::to_string(dim_e));
  }
  Matrix out = Matrix::Zero(dim_e, dim_e);
  for (int s = 0; s < dim_s; ++s) {
    out += a.block(s * dim_e, s * dim_e, dim_e, dim_e);
  }
  return out;
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
inline RealVector hermitian_eigenvalues(const Matrix& a) {
  const Matrix h = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

/// Sum of singular values.
inline double trace_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues().sum();
}

/// e^{-i t h} for Hermitian h, through the eigendecomposition.
inline Matrix expi_hermitian(const Matrix& h, double t) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (h + h.adjoint()));
  const RealVector& w = solver.eigenvalues();
  const Matrix& v = solver.eigenvectors();
  Vector phases(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    phases(i) = std::exp(-kI * (t * w(i)));
  }
  return v * phases.asDiagonal() * v.adjoint();
}

}  // namespace linalg

/// A square complex matrix together with the structure it was validated to
/// have. Immutable once built.
class Operator {
 public:
  Operator() = default;

  explicit Operator(Matrix entries, Structure structure = Structure::none,
                    const StructureTolerances& tol = {})
      : entries_(std::move(entries)), structure_(structure) {
    validate(tol);
  }

  static Operator hermitian(Matrix m, const StructureTolerances& tol = {}) {
    return Operator(std::move(m), Structure::hermitian, tol);
  }
  static Operator unitary(Matrix m, const StructureTolerances& tol = {}) {
    return Operator(std::move(m), Structure::unitary, tol);
  }
  static Operator density(Matrix m, const StructureTolerances& tol = {}) {
    return Operator(std::move(m), Structure::density | Structure::hermitian,
                    tol);
  }
  static Operator identity(int dim) {
    return Operator(Matrix::Identity(dim, dim),
                    Structure::hermitian | Structure::unitary);
  }
  /// The maximally mixed state 1/dim.
  static Operator maximally_mixed(int dim) {
    return density(Matrix::Identity(dim, dim) / double(dim));
  }

  int dim() const { return static_cast<int>(entries_.rows()); }
  const Matrix& matrix() const { return entries_; }
  Structure structure() const { return structure_; }
  bool is(Structure flag) const { return has_flag(structure_, flag); }
  Complex operator()(int i, int j) const { return entries_(i, j); }

 private:
  void validate(const StructureTolerances& tol) {
    if (entries_.rows() == 0 || entries_.rows() != entries_.cols()) {
      throw DimensionError("operator must be a non-empty square matrix, got " +
                           std::to_string(entries_.rows()) + "x" +
                           std::to_string(entries_.cols()));
    }
    if (!entries_.allFinite()) {
      throw ValidationError("operator has non-finite entries");
    }
    if (has_flag(structure_, Structure::density)) {
      structure_ = structure_ | Structure::hermitian;
    }
    if (has_flag(structure_, Structure::hermitian)) {
      const double asym = linalg::max_abs(entries_ - entries_.adjoint());
      if (asym > tol.hermitian) {
        throw ValidationError("operator flagged hermitian deviates by " +
                              std::to_string(asym));
      }
      entries_ = 0.5 * (entries_ + entries_.adjoint()).eval();
    }
    if (has_flag(structure_, Structure::unitary)) {
      const Matrix id = Matrix::Identity(dim(), dim());
      const double dev = linalg::max_abs(entries_.adjoint() * entries_ - id);
      if (dev > tol.unitary) {
        throw ValidationError("operator flagged unitary deviates by " +
                              std::to_string(dev));
      }
    }
    if (has_flag(structure_, Structure::density)) {
      const double tr_dev = std::abs(entries_.trace() - 1.0);
      if (tr_dev > tol.density_trace) {
        throw ValidationError("density operator trace deviates from 1 by " +
                              std::to_string(tr_dev));
      }
      const double min_eig = linalg::hermitian_eigenvalues(entries_).minCoeff();
      if (min_eig < -tol.density_min_eigenvalue) {
        throw ValidationError("density operator has negative eigenvalue " +
                              std::to_string(min_eig));
      }
    }
  }

  Matrix entries_;
  Structure structure_ = Structure::none;
};

/// Spectrum (ascending) and column eigenvectors of a Hermitian operator.
struct EigenDecomposition {
  RealVector values;
  Matrix vectors;

  Matrix reconstruct() const {
    return vectors * values.cast<Complex>().asDiagonal() * vectors.adjoint();
  }
};

inline EigenDecomposition eigh(const Operator& a) {
  if (!a.is(Structure::hermitian)) {
    throw ValidationError("eigh: operator is not flagged hermitian");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a.matrix());
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Kronecker product, first factor major (system first, environment second).
inline Operator tensor(const Operator& a, const Operator& b) {
  Structure s = Structure::none;
  for (Structure flag :
       {Structure::hermitian, Structure::unitary, Structure::density}) {
    if (a.is(flag) && b.is(flag)) s = s | flag;
  }
  return Operator(linalg::kron(a.matrix(), b.matrix()), s);
}

inline Operator partial_trace_env(const Operator& a, int dim_s, int dim_e) {
  Matrix r = linalg::partial_trace_env(a.matrix(), dim_s, dim_e);
  Structure s = a.structure() & (Structure::hermitian | Structure::density);
  return Operator(std::move(r), s);
}

inline Operator partial_trace_sys(const Operator& a, int dim_s, int dim_e) {
  Matrix r = linalg::partial_trace_sys(a.matrix(), dim_s, dim_e);
  Structure s = a.structure() & (Structure::hermitian | Structure::density);
  return Operator(std::move(r), s);
}

/// e^{-i t h}. Time is measured in inverse energy units (hbar = 1).
inline Operator matexp_i(const Operator& h, double t) {
  if (!h.is(Structure::hermitian)) {
    throw ValidationError("matexp_i: generator is not flagged hermitian");
  }
  return Operator::unitary(linalg::expi_hermitian(h.matrix(), t));
}

/// Half the trace norm of a - b. Both arguments must be density operators.
inline double trace_distance(const Operator& a, const Operator& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("trace_distance: dimensions " +
                         std::to_string(a.dim()) + " and " +
                         std::to_string(b.dim()) + " differ");
  }
  if (!a.is(Structure::density) || !b.is(Structure::density)) {
    throw ValidationError("trace_distance: arguments must be density operators");
  }
  const RealVector w = linalg::hermitian_eigenvalues(a.matrix() - b.matrix());
  return 0.5 * w.cwiseAbs().sum();
}

/// Pauli matrices, handy for fixtures.
namespace pauli {
inline Matrix x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
inline Matrix y() {
  Matrix m(2, 2);
  m << 0, -kI, kI, 0;
  return m;
}
inline Matrix z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}
}  // namespace pauli

}  // namespace surrogate
