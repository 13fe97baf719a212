// SPDX-License-Identifier: Apache-2.0
//
// uwbsr: joint detection and estimation of specular multipath components
// Copyright (C) 2026 The uwbsr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace uwbsr;
using namespace uwbsr::testing;

TEST_CASE("relative delay of a two-element array")
{
    const ArrayGeometry g({Vec2(0.03, 0.0), Vec2(-0.03, 0.0)});
    CHECK(g.center_of_gravity().norm() < 1e-18);
    CHECK(relative_delay(0.0, g, 0) == rel(0.03 / speed_of_light).epsilon(1e-14));
    CHECK(std::abs(relative_delay(pi / 2, g, 0)) < 1e-25);
    CHECK(relative_delay(pi, g, 0) == rel(-0.03 / speed_of_light).epsilon(1e-14));
}

TEST_CASE("relative delays of a centered grid sum to zero")
{
    const ArrayGeometry g = ArrayGeometry::uniform_grid(3, 3, 0.02, 0.3, Vec2(1.0, -2.0));
    CHECK(g.centro_symmetric());
    for (double phi : {-3.0, -1.0, 0.0, 0.7, 2.5})
    {
        double sum = 0.0, dsum = 0.0;
        for (std::size_t m = 0; m < g.size(); ++m)
        {
            sum += relative_delay(phi, g, m);
            dsum += relative_delay_derivative(phi, g, m);
        }
        // individual terms are about 1e-10 s; the sum cancels to round-off
        CHECK(std::abs(sum) < 1e-21);
        CHECK(std::abs(dsum) < 1e-21);
    }
    const ArrayGeometry lopsided({Vec2(0, 0), Vec2(0.02, 0), Vec2(0.05, 0.01)});
    CHECK_FALSE(lopsided.centro_symmetric());
}

TEST_CASE("grid span and linear factory")
{
    CHECK(ArrayGeometry::uniform_grid(3, 3, 0.02).span() == rel(0.04 * std::sqrt(2.0)));
    CHECK(ArrayGeometry::uniform_linear(5, 0.02).span() == rel(0.08));
    CHECK(ArrayGeometry::uniform_linear(1, 0.02).span() == 0.0);
}

TEST_CASE("frequency indices are centered, half-integers for even N")
{
    const PulseSpectrum odd = rrc(27), even = rrc(54);
    CHECK(odd.index(0) == -13.0);
    CHECK(odd.index(26) == 13.0);
    CHECK(even.index(0) == -26.5);
    CHECK(even.index(53) == 26.5);
    CHECK(odd.delta() == rel(1.6e9 / 27));
    CHECK(odd.alias_period() == rel(27 / 1.6e9));
}

TEST_CASE("root-raised-cosine spectrum is normalized and conjugate symmetric")
{
    for (std::size_t n : {16u, 27u, 54u})
    {
        const PulseSpectrum s = rrc(n);
        CHECK(s.energy() == rel(1.0).epsilon(1e-13));
        CHECK(s.conjugate_symmetric());
        const CVec sf = delay_steering(0.0, s);
        CHECK((sf.reverse() - sf.conjugate()).norm() < 1e-14);
    }
    const PulseSpectrum f = PulseSpectrum::flat(1e9, 6e9, 10);
    CHECK(f.energy() == rel(1.0));
    CHECK(std::abs(f.sample(3)) == rel(std::sqrt(0.1)));
}

TEST_CASE("single element at zero delay returns the spectrum samples")
{
    const PulseSpectrum s = rrc(27);
    const ArrayGeometry g({Vec2(0.3, 0.1)});
    const CVec v = steering_vector(DispersionVector(0.0, 1.2), g, s);
    CHECK((v - s.samples()).norm() == 0.0);
}

TEST_CASE("steering vector norm equals M times the spectrum energy")
{
    std::mt19937_64 rng(11);
    const PulseSpectrum s = rrc(27);
    const ArrayGeometry g = ArrayGeometry::uniform_grid(3, 3, 0.02);
    for (int i = 0; i < 50; ++i)
    {
        const DispersionVector psi(uniform(rng, 0.0, s.alias_period()), uniform(rng, -pi, pi));
        for (bool wb : {true, false})
            CHECK(steering_vector(psi, g, s, wb).squaredNorm() == rel(9.0 * s.energy()).epsilon(1e-12));
    }
}

TEST_CASE("wideband and narrowband coincide only for a single element")
{
    const PulseSpectrum s = rrc(27);
    const DispersionVector psi(3e-9, 0.8);
    const ArrayGeometry one({Vec2(0.0, 0.0)});
    CHECK((steering_vector(psi, one, s, true) - steering_vector(psi, one, s, false)).norm() < 1e-15);
    const ArrayGeometry lin = ArrayGeometry::uniform_linear(5, 0.02);
    CHECK((steering_vector(psi, lin, s, true) - steering_vector(psi, lin, s, false)).norm() > 1e-3);
}

TEST_CASE("antenna-major stacking")
{
    const PulseSpectrum s = rrc(16);
    const ArrayGeometry g = ArrayGeometry::uniform_linear(3, 0.02);
    const DispersionVector psi(2e-9, 0.4);
    const CVec v = steering_vector(psi, g, s);
    for (std::size_t m = 0; m < 3; ++m)
    {
        const double gm = relative_delay(psi.phi, g, m);
        for (std::size_t n = 0; n < s.size(); ++n)
        {
            const cplx expected = std::exp(cplx(0.0, two_pi * s.center_frequency() * gm)) * s.sample(n) *
                                  std::exp(cplx(0.0, -two_pi * s.frequency(n) * (psi.tau - gm)));
            CHECK(std::abs(v[static_cast<Eigen::Index>(m * s.size() + n)] - expected) < 1e-13);
        }
    }
}

TEST_CASE("steering is 2 pi periodic in angle and alias periodic in delay")
{
    const PulseSpectrum s = rrc(27);
    const ArrayGeometry g = ArrayGeometry::uniform_grid(3, 3, 0.02);
    const CVec a = steering_vector(DispersionVector(4e-9, 0.3), g, s);
    const CVec b = steering_vector(DispersionVector(4e-9, 0.3 + two_pi), g, s);
    CHECK((a - b).norm() < 1e-12);
    // odd N: exactly periodic; even N: periodic up to a global sign
    const CVec c = steering_vector(DispersionVector(4e-9 + s.alias_period(), 0.3), g, s, false);
    CHECK((steering_vector(DispersionVector(4e-9, 0.3), g, s, false) - c).norm() < 1e-9);
    const PulseSpectrum e = rrc(54);
    const CVec d0 = steering_vector(DispersionVector(4e-9, 0.3), g, e, false);
    const CVec d1 = steering_vector(DispersionVector(4e-9 + e.alias_period(), 0.3), g, e, false);
    CHECK((d0 + d1).norm() < 1e-9);
}

TEST_CASE("narrowband delay derivative")
{
    const PulseSpectrum s = rrc(27);
    const ArrayGeometry g = ArrayGeometry::uniform_grid(3, 3, 0.02);
    const DispersionVector psi(5e-9, -1.1);
    const CVec v = steering_vector(psi, g, s, false);
    const SteeringJacobian j = steering_jacobian(psi, g, s, false);
    for (std::size_t m = 0; m < g.size(); ++m)
        for (std::size_t n = 0; n < s.size(); ++n)
        {
            const auto i = static_cast<Eigen::Index>(m * s.size() + n);
            CHECK(std::abs(j.d_tau[i] - cplx(0.0, -two_pi * s.frequency(n)) * v[i]) < 1e-12 * j.d_tau.cwiseAbs().maxCoeff());
        }
}

TEST_CASE("analytic Jacobian agrees with finite differences")
{
    std::mt19937_64 rng(5);
    const PulseSpectrum s = rrc(27);
    const ArrayGeometry g = ArrayGeometry::uniform_grid(3, 3, 0.02, 0.2);
    const double ht = 1e-14, hp = 1e-6;
    for (int i = 0; i < 100; ++i)
    {
        const DispersionVector psi(uniform(rng, 0.0, s.alias_period()), uniform(rng, -pi, pi));
        for (bool wb : {true, false})
        {
            const SteeringJacobian j = steering_jacobian(psi, g, s, wb);
            const CVec ft = (steering_vector(DispersionVector(psi.tau + ht, psi.phi), g, s, wb) -
                             steering_vector(DispersionVector(psi.tau - ht, psi.phi), g, s, wb)) /
                            (2.0 * ht);
            const CVec fp = (steering_vector(DispersionVector(psi.tau, psi.phi + hp), g, s, wb) -
                             steering_vector(DispersionVector(psi.tau, psi.phi - hp), g, s, wb)) /
                            (2.0 * hp);
            CHECK((ft - j.d_tau).norm() <= 1e-4 * j.d_tau.norm());
            CHECK((fp - j.d_phi).norm() <= 1e-4 * j.d_phi.norm());
        }
    }
}

TEST_CASE("angle derivative vanishes for a single element")
{
    const PulseSpectrum s = rrc(27);
    const ArrayGeometry one({Vec2(0.5, 0.5)});
    CHECK(steering_jacobian(DispersionVector(1e-9, 0.3), one, s).d_phi.norm() == 0.0);
}

TEST_CASE("dispersion domain")
{
    const PulseSpectrum s = rrc(27);
    CHECK_THROWS_AS(DispersionDomain(0.0, s), std::invalid_argument);
    CHECK_THROWS_AS(DispersionDomain(2.0 * s.alias_period(), s), std::invalid_argument);
    const DispersionDomain full = DispersionDomain::unambiguous(s);
    CHECK(full.periodic());
    CHECK(full.normalize_delay(full.max_delay() + 1e-9) == rel(1e-9));
    const DispersionDomain part(10e-9, s);
    CHECK_FALSE(part.periodic());
    CHECK(part.contains(DispersionVector(9e-9, 0.0)));
    CHECK_FALSE(part.contains(DispersionVector(11e-9, 0.0)));
    CHECK(DispersionVector(0.0, 3.5 * pi).phi == rel(-0.5 * pi));
}
