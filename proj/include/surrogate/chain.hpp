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

// Environment dynamics as seen by propagator chains.
//
// A chain model supplies two things, both in the coupling eigenbasis:
//   initial_link(t)  the evolved environment state at time t;
//   step(dt)         the map carrying an environment operator across dt,
//                    with population_kernel() giving T_dt(nn|n'n').
// Closed (unitary) environments live here; Lindblad-driven ones live in
// lindblad.hpp. Everything downstream is templated on this concept.

#pragma once

#include <concepts>
#include <vector>

#include "surrogate/environment.hpp"

namespace surrogate {

template <class S>
concept ChainStep = requires(const S& s, const Matrix& x) {
  { s.apply(x) } -> std::convertible_to<Matrix>;
  { s.population_kernel() } -> std::convertible_to<RealMatrix>;
};

template <class D>
concept ChainDynamics = requires(const D& d, double t) {
  { d.environment() } -> std::convertible_to<const EnvironmentSpec&>;
  { d.initial_link(t) } -> std::convertible_to<Matrix>;
  { d.step(t) } -> ChainStep;
};

class UnitaryStep {
 public:
  explicit UnitaryStep(Matrix u) : u_(std::move(u)) {}

  Matrix apply(const Matrix& x) const { return u_ * x * u_.adjoint(); }
  /// K(n, n') = |<n|U|n'>|^2; columns sum to one.
  RealMatrix population_kernel() const { return u_.cwiseAbs2(); }
  const Matrix& unitary() const { return u_; }

 private:
  Matrix u_;
};

/// Closed environment evolving under H_E alone.
class UnitaryDynamics {
 public:
  explicit UnitaryDynamics(EnvironmentSpec env) : env_(std::move(env)) {}

  const EnvironmentSpec& environment() const { return env_; }

  Matrix initial_link(double t) const {
    const Matrix u = env_.evolution_eigenbasis(t);
    return u * env_.rho_eigenbasis() * u.adjoint();
  }

  UnitaryStep step(double dt) const {
    return UnitaryStep(env_.evolution_eigenbasis(dt));
  }

 private:
  EnvironmentSpec env_;
};

static_assert(ChainDynamics<UnitaryDynamics>);

}  // namespace surrogate
