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

#pragma once

#include "surrogate/operator.hpp"

namespace surrogate {

/// The system side: free Hamiltonian, coupling operator and initial state.
class SystemContext {
 public:
  SystemContext(Operator h_s, Operator v_s, Operator rho_s)
      : h_s_(std::move(h_s)), v_s_(std::move(v_s)), rho_s_(std::move(rho_s)) {
    if (!h_s_.is(Structure::hermitian) || !v_s_.is(Structure::hermitian)) {
      throw ValidationError("system h_s and v_s must be hermitian");
    }
    if (!rho_s_.is(Structure::density)) {
      throw ValidationError("system rho_s must be a density operator");
    }
    if (h_s_.dim() != v_s_.dim() || h_s_.dim() != rho_s_.dim()) {
      throw DimensionError("system operators have unequal dimensions");
    }
  }

  /// H_S = 0, V_S = sigma_z / 2.
  static SystemContext dephasing_qubit(const Operator& rho_s) {
    return SystemContext(Operator::hermitian(Matrix::Zero(2, 2)),
                         Operator::hermitian(0.5 * pauli::z()), rho_s);
  }

  int dim() const { return h_s_.dim(); }
  const Operator& h_s() const { return h_s_; }
  const Operator& v_s() const { return v_s_; }
  const Operator& rho_s() const { return rho_s_; }

 private:
  Operator h_s_;
  Operator v_s_;
  Operator rho_s_;
};

}  // namespace surrogate
