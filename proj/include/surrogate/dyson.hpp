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

// Truncated quasi-probability expansion of the reduced system state:
//
//   rho_S^I(t) = sum_k (-i)^k int_{t > t_1 > ... > t_k > 0}
//                sum_{xi, zeta} q^(k)(xi, zeta, t) W(xi_1 zeta_1 t_1) ... W(xi_k zeta_k t_k) rho_S
//
// with W(xi zeta t) A = xi V_S(t) A - zeta A V_S(t) and V_S(t) in the
// interaction picture of H_S. Ordered time integrals use tensor-product
// Gauss-Legendre rules mapped onto the simplex by t_l = t u_1 ... u_l.

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "surrogate/quasiprob.hpp"
#include "surrogate/system.hpp"

namespace surrogate {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [0, 1].
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw ValidationError("gauss_legendre: need at least one node");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.nodes[n - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = 0.5 * w;
    rule.weights[n - 1 - i] = 0.5 * w;
  }
  return rule;
}

struct DysonOptions {
  int max_order = 4;
  /// Cap on quad_nodes^k * |Omega_V|^(2k) summed over orders.
  double max_work = 5e8;
  QuasiProbOptions table;
};

struct DysonResult {
  Matrix interaction;
  Matrix schrodinger;
};

/// Evaluates the expansion through order k_max. The truncation is Hermitian
/// with unit trace but not necessarily positive.
template <ChainDynamics D>
DysonResult dyson_reduced_state(const SystemContext& sys, const D& dyn,
                                double t, int k_max, int quad_nodes = 12,
                                const DysonOptions& options = {}) {
  if (k_max < 0 || k_max > options.max_order) {
    throw BudgetError("dyson_reduced_state: k_max " + std::to_string(k_max) +
                      " outside [0, " + std::to_string(options.max_order) + "]");
  }
  if (t < 0.0) throw ValidationError("dyson_reduced_state: negative time");
  const int r = dyn.environment().spectrum().size();
  double work = 0.0;
  for (int k = 1; k <= k_max; ++k) {
    work += std::pow(double(quad_nodes), k) * std::pow(double(r), 2 * k);
  }
  if (work > options.max_work) {
    throw BudgetError("dyson_reduced_state: estimated work " +
                      std::to_string(work) + " exceeds budget");
  }

  const Matrix& rho0 = sys.rho_s().matrix();
  const Matrix& h_s = sys.h_s().matrix();
  const Matrix& v_s = sys.v_s().matrix();
  const std::vector<double>& values = dyn.environment().spectrum().unique_values;

  Matrix rho_int = rho0;
  if (t > 0.0 && k_max > 0) {
    const QuadratureRule rule = gauss_legendre(quad_nodes);
    for (int k = 1; k <= k_max; ++k) {
      Matrix order_sum = Matrix::Zero(rho0.rows(), rho0.cols());
      std::vector<int> node(k, 0);
      for (;;) {
        std::vector<double> times(k);
        double scale = 1.0, jac = 1.0, w = 1.0;
        for (int l = 0; l < k; ++l) {
          const double u = rule.nodes[node[l]];
          scale *= u;
          times[l] = t * scale;
          jac *= std::pow(u, k - 1 - l);
          w *= rule.weights[node[l]];
        }
        const double measure = w * jac * std::pow(t, k);

        std::vector<Matrix> v_int(k);
        for (int l = 0; l < k; ++l) {
          const Matrix u = linalg::expi_hermitian(h_s, -times[l]);
          v_int[l] = u * v_s * u.adjoint();
        }

        const QuasiProbTable table =
            quasi_prob(dyn, TimeGrid(times), options.table);
        const std::size_t seqs = table.sequences();
        for (std::size_t xi = 0; xi < seqs; ++xi) {
          const std::vector<int> xd = table.decode(xi);
          for (std::size_t zeta = 0; zeta < seqs; ++zeta) {
            const Complex weight = table.q[xi * seqs + zeta];
            if (weight == Complex(0.0)) continue;
            const std::vector<int> zd = table.decode(zeta);
            Matrix a = rho0;
            for (int l = k - 1; l >= 0; --l) {
              a = values[xd[l]] * (v_int[l] * a) - values[zd[l]] * (a * v_int[l]);
            }
            order_sum += (measure * weight) * a;
          }
        }

        int pos = k - 1;
        while (pos >= 0 && ++node[pos] == quad_nodes) node[pos--] = 0;
        if (pos < 0) break;
      }
      rho_int += std::pow(-kI, k) * order_sum;
    }
  }

  const Matrix u_free = linalg::expi_hermitian(h_s, t);
  return {rho_int, u_free * rho_int * u_free.adjoint()};
}

}  // namespace surrogate
