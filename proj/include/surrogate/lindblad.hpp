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

// Open environments: time-independent Lindblad generators, the dynamical
// maps they generate, and propagator chains built from those maps.
//
// Superoperators act on column-stacked operators: vec(X)[i + j*d] = X(i, j),
// so vec(A X B) = (B^T kron A) vec(X).

#pragma once

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <string>
#include <vector>

#include "surrogate/chain.hpp"
#include "surrogate/quasiprob.hpp"

namespace surrogate {

namespace superop {

inline Vector vec(const Matrix& x) {
  return Eigen::Map<const Vector>(x.data(), x.size());
}

inline Matrix unvec(const Vector& v, int dim) {
  return Eigen::Map<const Matrix>(v.data(), dim, dim);
}

/// X -> A X B as a superoperator matrix.
inline Matrix sandwich(const Matrix& a, const Matrix& b) {
  return linalg::kron(b.transpose(), a);
}

/// Choi matrix sum_ij |i><j| kron M(|i><j|).
inline Matrix choi(const Matrix& map, int dim) {
  Matrix c(dim * dim, dim * dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      c.block(i * dim, j * dim, dim, dim) =
          unvec(map.col(i + j * dim), dim);
    }
  }
  return c;
}

}  // namespace superop

struct JumpOperator {
  Matrix op;
  double rate = 0.0;
};

/// Time-independent generator L of environment dynamics, dR/dt = L R.
class Lindbladian {
 public:
  /// -i[H, .] + sum_j rate_j (L_j . L_j^dag - {L_j^dag L_j, .} / 2).
  static Lindbladian from_gksl(const Matrix& hamiltonian,
                               const std::vector<JumpOperator>& jumps) {
    const Operator h = Operator::hermitian(hamiltonian);
    const int d = h.dim();
    const Matrix id = Matrix::Identity(d, d);
    Matrix g = -kI * (superop::sandwich(h.matrix(), id) -
                      superop::sandwich(id, h.matrix()));
    for (std::size_t j = 0; j < jumps.size(); ++j) {
      const auto& jump = jumps[j];
      if (jump.op.rows() != d || jump.op.cols() != d) {
        throw DimensionError("jump operator " + std::to_string(j) +
                             " has wrong dimension");
      }
      if (!(jump.rate >= 0.0) || !std::isfinite(jump.rate)) {
        throw ValidationError("jump operator " + std::to_string(j) +
                              " has negative or non-finite rate");
      }
      const Matrix ldl = jump.op.adjoint() * jump.op;
      g += jump.rate * (superop::sandwich(jump.op, jump.op.adjoint()) -
                        0.5 * superop::sandwich(ldl, id) -
                        0.5 * superop::sandwich(id, ldl));
    }
    Lindbladian out(std::move(g));
    out.check_trace_preserving();
    return out;
  }

  /// A raw dim^2 x dim^2 generator. Checked for trace preservation and for
  /// complete positivity of a short-time map.
  static Lindbladian from_generator(Matrix generator) {
    Lindbladian out(std::move(generator));
    out.check_trace_preserving();
    const double scale = std::max(1.0, linalg::max_abs(out.generator_));
    const double min_eig = out.choi_min_eigenvalue(0.1 / scale);
    if (min_eig < -1e-10) {
      throw ValidationError(
          "lindbladian generates a map that is not completely positive "
          "(Choi eigenvalue " + std::to_string(min_eig) + ")");
    }
    return out;
  }

  int dim_e() const { return dim_; }
  const Matrix& generator() const { return generator_; }

  Matrix apply(const Matrix& x) const {
    return superop::unvec(generator_ * superop::vec(x), dim_);
  }

  /// max |tr(L X)| over basis operators X, i.e. the trace-row of L.
  double trace_defect() const {
    double worst = 0.0;
    for (Eigen::Index c = 0; c < generator_.cols(); ++c) {
      Complex acc = 0.0;
      for (int i = 0; i < dim_; ++i) acc += generator_(i + i * dim_, c);
      worst = std::max(worst, std::abs(acc));
    }
    return worst;
  }

  double choi_min_eigenvalue(double dt) const {
    const Matrix map = (dt * generator_).exp();
    return linalg::hermitian_eigenvalues(superop::choi(map, dim_)).minCoeff();
  }

 private:
  explicit Lindbladian(Matrix g) : generator_(std::move(g)) {
    const Eigen::Index n = generator_.rows();
    if (n == 0 || n != generator_.cols()) {
      throw DimensionError("lindbladian generator must be square");
    }
    const int d = static_cast<int>(std::lround(std::sqrt(double(n))));
    if (Eigen::Index(d) * d != n) {
      throw DimensionError("lindbladian generator size " + std::to_string(n) +
                           " is not a perfect square");
    }
    if (!generator_.allFinite()) {
      throw ValidationError("lindbladian generator has non-finite entries");
    }
    dim_ = d;
  }

  void check_trace_preserving() const {
    const double scale = std::max(1.0, linalg::max_abs(generator_));
    const double defect = trace_defect();
    if (defect > 1e-12 * scale) {
      throw ValidationError("lindbladian is not trace preserving (defect " +
                            std::to_string(defect) + ")");
    }
  }

  Matrix generator_;
  int dim_ = 0;
};

/// Lambda_{t_to, t_from} = exp((t_to - t_from) L).
struct DynamicalMap {
  double t_from = 0.0;
  double t_to = 0.0;
  Matrix map;

  int dim() const {
    return static_cast<int>(std::lround(std::sqrt(double(map.rows()))));
  }
  Matrix apply(const Matrix& x) const {
    return superop::unvec(map * superop::vec(x), dim());
  }
};

inline DynamicalMap map_from_lindbladian(const Lindbladian& l, double t_from,
                                         double t_to) {
  if (t_to < t_from) {
    throw ValidationError("map_from_lindbladian: t_to < t_from");
  }
  return {t_from, t_to, ((t_to - t_from) * l.generator()).exp()};
}

/// Lambda_{t,t'} Lambda_{t',t''} = Lambda_{t,t''}. `later` must start where
/// `earlier` ends.
inline DynamicalMap compose(const DynamicalMap& later,
                            const DynamicalMap& earlier) {
  if (std::abs(later.t_from - earlier.t_to) >
      1e-12 * std::max(1.0, std::abs(later.t_from))) {
    throw ValidationError("compose: maps are not adjacent in time");
  }
  return {earlier.t_from, later.t_to, later.map * earlier.map};
}

class LindbladStep {
 public:
  LindbladStep(Matrix map, int dim) : map_(std::move(map)), dim_(dim) {}

  Matrix apply(const Matrix& x) const {
    return superop::unvec(map_ * superop::vec(x), dim_);
  }
  /// u(n, n') = <n| Lambda(|n'><n'|) |n>.
  RealMatrix population_kernel() const {
    RealMatrix k(dim_, dim_);
    for (int n = 0; n < dim_; ++n) {
      for (int np = 0; np < dim_; ++np) {
        k(n, np) = map_(n + n * dim_, np + np * dim_).real();
      }
    }
    return k;
  }
  const Matrix& map() const { return map_; }

 private:
  Matrix map_;
  int dim_;
};

/// Environment driven by a Lindbladian; propagators use the maps it
/// generates, expressed in the coupling eigenbasis.
class LindbladDynamics {
 public:
  LindbladDynamics(Lindbladian l, EnvironmentSpec env)
      : lindbladian_(std::move(l)), env_(std::move(env)) {
    if (lindbladian_.dim_e() != env_.dim()) {
      throw DimensionError("lindbladian acts on dimension " +
                           std::to_string(lindbladian_.dim_e()) +
                           " but environment has " +
                           std::to_string(env_.dim()));
    }
    const Matrix& b = env_.spectrum().basis;
    const Matrix s = linalg::kron(b.conjugate(), b);
    generator_eig_ = s.adjoint() * lindbladian_.generator() * s;
  }

  const EnvironmentSpec& environment() const { return env_; }
  const Lindbladian& lindbladian() const { return lindbladian_; }
  /// The generator in the coupling eigenbasis.
  const Matrix& generator_eigenbasis() const { return generator_eig_; }

  Matrix initial_link(double t) const {
    return step(t).apply(env_.rho_eigenbasis());
  }

  LindbladStep step(double dt) const {
    if (dt < 0.0) throw ValidationError("lindblad step: negative duration");
    return LindbladStep((dt * generator_eig_).exp(), env_.dim());
  }

 private:
  Lindbladian lindbladian_;
  EnvironmentSpec env_;
  Matrix generator_eig_;
};

static_assert(ChainDynamics<LindbladDynamics>);

struct DrivingReport {
  bool satisfied = false;
  /// Largest coherence component of a projector image, or projector
  /// component of a coherence image, over all probes.
  double max_leakage = 0.0;
};

/// Checks that the maps send projectors |n><n| to combinations of projectors
/// and coherences |n><n'| to combinations of coherences.
inline DrivingReport driving_condition_check(const Lindbladian& l,
                                             const EnvironmentSpec& env,
                                             const std::vector<double>& t_probe,
                                             double threshold = 1e-10) {
  const LindbladDynamics dyn(l, env);
  const int d = env.dim();
  double worst = 0.0;
  for (double t : t_probe) {
    const LindbladStep st = dyn.step(t);
    const Matrix& m = st.map();
    for (int n = 0; n < d; ++n) {
      for (int np = 0; np < d; ++np) {
        const int col = n + np * d;
        for (int a = 0; a < d; ++a) {
          for (int b = 0; b < d; ++b) {
            const bool in_projector = n == np;
            const bool out_projector = a == b;
            if (in_projector != out_projector) {
              worst = std::max(worst, std::abs(m(a + b * d, col)));
            }
          }
        }
      }
    }
  }
  return {worst <= threshold, worst};
}

template <class... Args>
QuasiProbTable lindblad_quasi_prob(const Lindbladian& l,
                                   const EnvironmentSpec& env,
                                   const TimeGrid& grid, Args&&... options) {
  return quasi_prob(LindbladDynamics(l, env), grid,
                    std::forward<Args>(options)...);
}

/// Two-level environment with L A = -(gamma/2)[sigma_x, [sigma_x, A]],
/// H_E = 0 and V_E = sigma_z / 2: random telegraph noise at rate gamma.
struct RtnModel {
  Lindbladian lindbladian;
  EnvironmentSpec environment;

  LindbladDynamics dynamics() const {
    return LindbladDynamics(lindbladian, environment);
  }
};

inline RtnModel make_rtn(double gamma,
                         const Operator& rho_e = Operator::maximally_mixed(2)) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("make_rtn: gamma must be positive");
  }
  Lindbladian l =
      Lindbladian::from_gksl(Matrix::Zero(2, 2), {{pauli::x(), gamma}});
  EnvironmentSpec env(Operator::hermitian(Matrix::Zero(2, 2)),
                      Operator::hermitian(0.5 * pauli::z()), rho_e);
  return {std::move(l), std::move(env)};
}

}  // namespace surrogate
