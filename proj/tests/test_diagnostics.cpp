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

#include <catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace surrogate;
using Catch::Matchers::WithinAbs;

namespace {

Matrix coherent_env() {
  Matrix r(2, 2);
  r << 0.6, Complex(0.25, 0.15), Complex(0.25, -0.15), 0.4;
  return r;
}

}  // namespace

TEST_CASE("back-action", "[diagnostics]") {
  std::mt19937_64 rng(1);
  const SystemContext dephasing = SystemContext::dephasing_qubit(
      Operator::density(testing::random_density(2, rng)));
  for (int trial = 0; trial < 3; ++trial) {
    const EnvironmentSpec mixed(Operator::hermitian(testing::random_hermitian(3, rng)),
                                Operator::hermitian(testing::random_hermitian(3, rng)),
                                Operator::maximally_mixed(3));
    for (double t : {0.3, 1.7, 4.0}) CHECK(back_action_check(dephasing, mixed, t) <= 1e-10);
  }

  const EnvironmentSpec qs = make_quasi_static({0.4, -0.4}, {0.5, -0.5}, Operator::density(coherent_env()));
  CHECK(back_action_check(dephasing, qs, 1.0) > 1e-3);
  CHECK(back_action_check(dephasing, qs, 0.0) <= 1e-15);

  const SystemContext uncoupled(Operator::hermitian(testing::random_hermitian(2, rng)),
                                Operator::hermitian(Matrix::Zero(2, 2)),
                                Operator::density(testing::random_density(2, rng)));
  CHECK(back_action_check(uncoupled, testing::random_environment(3, rng), 2.0) <= 1e-12);
}

TEST_CASE("entanglement", "[diagnostics]") {
  std::mt19937_64 rng(2);
  const EnvironmentSpec mixed(Operator::hermitian(testing::random_hermitian(3, rng)),
                              Operator::hermitian(testing::random_hermitian(3, rng)),
                              Operator::maximally_mixed(3));
  CHECK(entanglement_check_dephasing(mixed, 1.3) <= 1e-12);

  const EnvironmentSpec qs = make_quasi_static({0.4, -0.4}, {0.5, -0.5}, Operator::density(coherent_env()));
  CHECK(entanglement_check_dephasing(qs, 0.0) <= 1e-15);
  CHECK(entanglement_check_dephasing(qs, 1.0) > 1e-3);
  CHECK(validity_metric(quasi_prob(UnitaryDynamics(qs), TimeGrid({1.0, 0.5}))) <= 1e-12);

  // Closed form for this fixture: the conditioned states differ only in the
  // phase of the coherence, rotated by e^{-i t} relative to each other.
  const double t = 0.8;
  const double c = std::abs(coherent_env()(0, 1));
  CHECK_THAT(entanglement_check_dephasing(qs, t), WithinAbs(2.0 * c * std::abs(std::sin(t / 2.0)), 1e-12));
}

TEST_CASE("moments of valid environments", "[diagnostics]") {
  const RtnModel rtn = make_rtn(0.7);
  const TimeGrid grid({2.0, 1.4, 0.9, 0.3});
  const MomentTable m = impostor_moments(rtn.dynamics(), grid, 3);
  CHECK(m.orders == std::vector<int>{1, 2, 3});
  CHECK(m.entries.size() == 4 + 6 + 4);
  CHECK(m.midpoints == std::vector<double>{-0.5, 0.0, 0.5});
  CHECK(m.all_nonnegative());
  CHECK(m.max_rebin_deviation() <= 1e-10);
  REQUIRE(m.gaussian.has_value());
  CHECK(std::isfinite(m.gaussian->relative_residual));
  // A telegraph process is not Gaussian.
  CHECK_FALSE(m.gaussian->gaussian_like);

  Matrix rho_e(3, 3);
  rho_e << 0.5, 0.1, 0.05, 0.1, 0.3, 0.0, 0.05, 0.0, 0.2;
  const EnvironmentSpec qs = make_quasi_static({0.1, 0.5, -0.2}, {1.0, -0.5, 0.25}, Operator::density(rho_e));
  const MomentTable mq = impostor_moments(qs, grid, 2);
  CHECK(mq.all_nonnegative());
  CHECK(mq.max_rebin_deviation() <= 1e-10);
  const Complex f1 = mq.entries.front().moment;
  for (const auto& e : mq.entries) {
    if (e.k == 1) CHECK(std::abs(e.moment - f1) <= 1e-12);
  }
}

TEST_CASE("moments match operator correlation functions", "[diagnostics]") {
  std::mt19937_64 rng(3);
  const EnvironmentSpec env = testing::random_environment(3, rng);
  const Matrix& v = env.v_e().matrix();
  const Matrix& h = env.h_e().matrix();
  const Matrix& rho = env.rho_e().matrix();
  const TimeGrid grid({1.6, 0.7});
  const MomentTable m = impostor_moments(env, grid, 2);

  // F^(1)(t) = tr(V rho(t)); F^(2)(t1, t2) = tr(V U {V, rho(t2)} U^dag) / 2.
  for (const auto& e : m.entries) {
    if (e.k == 1) {
      const Matrix u = testing::pade_expi(h, e.grid[0]);
      CHECK(std::abs(e.moment - (v * u * rho * u.adjoint()).trace()) <= 1e-12);
    } else {
      const Matrix u2 = testing::pade_expi(h, e.grid[1]);
      const Matrix r2 = u2 * rho * u2.adjoint();
      const Matrix u = testing::pade_expi(h, e.grid[0] - e.grid[1]);
      const Complex expect = 0.5 * (v * u * (v * r2 + r2 * v) * u.adjoint()).trace();
      CHECK(std::abs(e.moment - expect) <= 1e-12);
    }
  }
}

TEST_CASE("negative quasi-densities are flagged", "[diagnostics]") {
  Matrix up = Matrix::Zero(2, 2);
  up(0, 0) = 1.0;
  const EnvironmentSpec env(Operator::hermitian(0.5 * 2.0 * pauli::x()),
                            Operator::hermitian(0.5 * pauli::z()), Operator::density(up));
  const MomentTable m = impostor_moments(env, TimeGrid({2.1, 1.3, 0.4}), 3);
  CHECK_FALSE(m.all_nonnegative());
  CHECK(m.max_rebin_deviation() > 1e-3);
  CHECK_FALSE(m.gaussian.has_value());
  CHECK_THROWS_AS(impostor_moments(env, TimeGrid({1.0}), 2), ValidationError);
}

TEST_CASE("fourth cumulant of known moments", "[diagnostics]") {
  // Independent +-1 coins with mean mu: cumulant of four distinct variables is 0.
  const double mu = 0.3;
  auto indep = [&](unsigned mask) { return Complex(std::pow(mu, std::popcount(mask))); };
  CHECK(std::abs(detail::fourth_cumulant(indep)) <= 1e-15);
  // Four copies of one +-1 coin with mean 0: kappa_4 = 1 - 3 = -2.
  auto same = [&](unsigned mask) { return Complex(std::popcount(mask) % 2 == 0 ? 1.0 : 0.0); };
  CHECK_THAT(detail::fourth_cumulant(same).real(), WithinAbs(-2.0, 1e-15));
}
