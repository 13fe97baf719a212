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

#ifndef UWBSR_THRESHOLD_HPP
#define UWBSR_THRESHOLD_HPP

#include "uwbsr/core_model.hpp"
#include "uwbsr/noise_model.hpp"

namespace uwbsr
{
    // Covariance of the gradient of the normalized matched-filter field x(psi) at one dispersion point.
    //   Lambda = diag(4 pi^2 a b^2, 4 pi^2 fc^2 (1/M) sum_m d_m^2)
    struct FieldMetric
    {
        Eigen::Matrix2d lambda = Eigen::Matrix2d::Zero();
        double a_tau = 1.0;         // in [0, 1]
        double b_tau = 0.0;         // Hz
        double angular_term = 0.0;  // (1/M) sum_m d_m(phi)^2, s^2
    };

    FieldMetric field_metric(const DispersionVector &psi, const ArrayGeometry &geometry, const PulseSpectrum &spectrum,
                             const CMat &q_tilde);

    // Delay-only factors a(tau) and b(tau) for a given block covariance inverse.
    struct DelayFactors
    {
        double a = 1.0;
        double b = 0.0;
    };
    DelayFactors delay_factors(double tau, const PulseSpectrum &spectrum, const CMat &q_tilde_inverse);

    struct ExcursionOptions
    {
        // Integrate delays over [0, 1/delta] (default) or over [0, T).
        bool delay_range_alias_period = true;
        double tolerance = 1e-10; // relative error target of the adaptive rules
    };

    // q = 4 pi int_0^{1/delta} int_0^{2 pi} [((1/M) sum_m d_m^2(phi)) a(tau)]^{1/2} fc b(tau) dtau dphi
    double excursion_constant_q(const ArrayGeometry &geometry, const PulseSpectrum &spectrum, const CMat &q_tilde,
                                const DispersionDomain &domain, const ExcursionOptions &options = {});

    // Lower real branch W_{-1} on [-1/e, 0). Throws DomainError elsewhere.
    double lambert_w_minus1(double u);

    struct ThresholdSpec
    {
        double epsilon = 0.0;
        double q = 0.0;
        double kappa_star = 1.0;
        double kappa_log_approx = 1.0; // -log(eps/q) + log(-log(eps/q))
    };

    // kappa* = -W_{-1}(-eps/q). Throws EpsilonOutOfRange unless eps in (0, q/e].
    ThresholdSpec kappa_star(double epsilon, double q);

    // Asymptotic spurious-detection probability min(1, q kappa e^{-kappa}).
    double p_false(double kappa, double q);

    // Missed-detection probability int_0^kappa e^{-(x + d)} I_0(2 sqrt(d x)) dx for deflection d.
    double p_miss(double kappa, double deflection);

    // Marcum Q_1(a, b).
    double marcum_q1(double a, double b);

    // d = |alpha|^2 s(psi)^H Q^{-1} s(psi) (half the noncentrality of 2|x|^2).
    double deflection(cplx alpha, const DispersionVector &psi, const ArrayGeometry &geometry,
                      const PulseSpectrum &spectrum, const StructuredCovariance &q, bool wideband = true);
}

#endif
