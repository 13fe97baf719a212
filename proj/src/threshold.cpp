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

#include "uwbsr/threshold.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace uwbsr
{
    namespace
    {
        constexpr double inv_e = 0.36787944117144232159552377016146;

        double angular_term(double phi, const ArrayGeometry &geometry)
        {
            double sum = 0.0;
            for (std::size_t m = 0; m < geometry.size(); ++m)
            {
                const double d = relative_delay_derivative(phi, geometry, m);
                sum += d * d;
            }
            return sum / static_cast<double>(geometry.size());
        }

        template <class F>
        double adaptive_integral(F f, double lo, double hi, double tol, const char *what)
        {
            double error = 0.0, l1 = 0.0;
            const double value =
                boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, tol, &error, &l1);
            if (!std::isfinite(value) || error > std::max(tol * l1, 1e-300) * 100.0)
                throw QuadratureNotConverged(std::string(what) + " did not converge (error estimate " + std::to_string(error) + ").");
            return value;
        }

        // Smooth periodic integrand: the trapezoidal rule converges geometrically. Doubling from `start` nodes.
        template <class F>
        double periodic_trapezoid(F f, double lo, double hi, std::size_t start, double tol, const char *what)
        {
            std::size_t n = start;
            double h = (hi - lo) / static_cast<double>(n);
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                sum += f(lo + h * static_cast<double>(i));
            double value = sum * h;
            double change = 0.0;
            for (int level = 0; level < 8; ++level)
            {
                // midpoints of the current grid
                double extra = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    extra += f(lo + h * (static_cast<double>(i) + 0.5));
                sum += extra;
                n *= 2;
                h *= 0.5;
                const double next = sum * h;
                change = std::abs(next - value);
                value = next;
                if (change <= tol * std::abs(value))
                    return value;
            }
            // Round-off floor of the integrand; accept a somewhat looser agreement.
            if (change <= 100.0 * tol * std::abs(value))
                return value;
            throw QuadratureNotConverged(std::string(what) + " did not converge.");
        }

        // Angles where the quadratic form (1/M) sum d_m^2 is extremal; a linear array has its kinks there.
        std::vector<double> principal_breaks(const ArrayGeometry &geometry)
        {
            Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
            for (std::size_t m = 0; m < geometry.size(); ++m)
            {
                const Vec2 o = geometry.offset(m);
                c += o * o.transpose();
            }
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(c);
            double base = std::atan2(es.eigenvectors()(1, 0), es.eigenvectors()(0, 0));
            base = std::fmod(base, 0.5 * pi);
            if (base < 0.0)
                base += 0.5 * pi;
            return {base, base + 0.5 * pi, base + pi, base + 1.5 * pi, base + two_pi};
        }
    }

    DelayFactors delay_factors(double tau, const PulseSpectrum &spectrum, const CMat &q_tilde_inverse)
    {
        const CVec s = delay_steering(tau, spectrum);
        const CVec sd = delay_steering_derivative(tau, spectrum);
        const CVec rs = q_tilde_inverse * s;
        const double ss = s.dot(rs).real();
        const double dd = sd.dot(q_tilde_inverse * sd).real();
        const double cross = sd.dot(rs).real();
        DelayFactors out;
        out.b = std::sqrt(std::max(0.0, dd / (4.0 * pi * pi * ss)));
        out.a = (ss > 0.0 && dd > 0.0) ? std::clamp(1.0 - cross * cross / (ss * dd), 0.0, 1.0) : 1.0;
        return out;
    }

    FieldMetric field_metric(const DispersionVector &psi, const ArrayGeometry &geometry, const PulseSpectrum &spectrum,
                             const CMat &q_tilde)
    {
        const CMat inv = q_tilde.llt().solve(CMat::Identity(q_tilde.rows(), q_tilde.cols()));
        const DelayFactors f = delay_factors(psi.tau, spectrum, inv);
        FieldMetric m;
        m.a_tau = f.a;
        m.b_tau = f.b;
        m.angular_term = angular_term(psi.phi, geometry);
        const double fc = spectrum.center_frequency();
        m.lambda(0, 0) = 4.0 * pi * pi * f.a * f.b * f.b;
        m.lambda(1, 1) = 4.0 * pi * pi * m.angular_term * fc * fc;
        return m;
    }

    double excursion_constant_q(const ArrayGeometry &geometry, const PulseSpectrum &spectrum, const CMat &q_tilde,
                                const DispersionDomain &domain, const ExcursionOptions &options)
    {
        const CMat inv = q_tilde.llt().solve(CMat::Identity(q_tilde.rows(), q_tilde.cols()));
        const double tau_max = options.delay_range_alias_period ? spectrum.alias_period() : domain.max_delay();

        // The integrand factorizes, so the tensor-product integral is the product of two 1-D integrals.
        auto delay_integrand = [&](double tau)
        {
            const DelayFactors f = delay_factors(tau, spectrum, inv);
            return std::sqrt(f.a) * f.b;
        };
        // Periodic in tau over 1/delta; otherwise fall back to the adaptive rule.
        const double delay_part =
            options.delay_range_alias_period
                ? periodic_trapezoid(delay_integrand, 0.0, tau_max, 8 * spectrum.size(), options.tolerance,
                                     "Delay integral of the excursion constant")
                : adaptive_integral(delay_integrand, 0.0, tau_max, options.tolerance,
                                    "Delay integral of the excursion constant");
        // Smooth between the principal directions, so integrate piecewise.
        const std::vector<double> breaks = principal_breaks(geometry);
        double angle_part = 0.0;
        for (std::size_t i = 0; i + 1 < breaks.size(); ++i)
            angle_part += adaptive_integral([&](double phi) { return std::sqrt(angular_term(phi, geometry)); },
                                            breaks[i], breaks[i + 1], options.tolerance,
                                            "Angle integral of the excursion constant");
        return 4.0 * pi * spectrum.center_frequency() * delay_part * angle_part;
    }

    double lambert_w_minus1(double u)
    {
        if (!(u >= -inv_e && u < 0.0))
            throw DomainError("lambert_w_minus1: argument must lie in [-1/e, 0).");
        const double dist = u + inv_e;
        if (dist <= 4.0 * std::numeric_limits<double>::epsilon() * inv_e)
            return -1.0;

        double w;
        if (u < -0.25)
        {
            // Series about the branch point in p = -sqrt(2 (1 + e u)).
            const double p = -std::sqrt(2.0 * std::exp(1.0) * dist);
            w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
        }
        else
        {
            // Asymptotic behaviour for u -> 0^-: log(-u) - log(-log(-u)).
            const double l1 = std::log(-u);
            const double l2 = std::log(-l1);
            w = l1 - l2 + l2 / l1;
        }

        for (int it = 0; it < 64; ++it)
        {
            const double ew = std::exp(w);
            const double f = w * ew - u;
            const double wp1 = w + 1.0;
            if (wp1 == 0.0)
                break;
            const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
            w -= step;
            if (std::abs(step) <= 1e-15 * std::abs(w))
                break;
        }
        return std::min(w, -1.0);
    }

    ThresholdSpec kappa_star(double epsilon, double q)
    {
        if (!(q > 0.0))
            throw EpsilonOutOfRange("kappa_star: excursion constant q must be positive.");
        if (!(epsilon > 0.0) || epsilon > q * inv_e * (1.0 + 1e-12))
            throw EpsilonOutOfRange("kappa_star: epsilon must lie in (0, q/e].");
        ThresholdSpec spec;
        spec.epsilon = epsilon;
        spec.q = q;
        const double u = std::max(-epsilon / q, -inv_e);
        spec.kappa_star = std::max(1.0, -lambert_w_minus1(u));
        const double r = epsilon / q;
        spec.kappa_log_approx = r < 1.0 ? -std::log(r) + std::log(-std::log(r)) : 1.0;
        return spec;
    }

    double p_false(double kappa, double q)
    {
        return std::min(1.0, q * kappa * std::exp(-kappa));
    }

    double p_miss(double kappa, double deflection)
    {
        if (!(kappa > 0.0))
            return 0.0;
        if (deflection <= 0.0)
            return -std::expm1(-kappa);

        // Poisson(deflection)-weighted central chi^2 CDFs: sum_j w_j P(j + 1, kappa).
        const double lambda = deflection;
        const auto mode = static_cast<long>(std::floor(lambda));
        const double log_w0 = -lambda + static_cast<double>(mode) * std::log(lambda) - std::lgamma(static_cast<double>(mode) + 1.0);
        const double w0 = std::exp(log_w0);
        double sum = w0 * boost::math::gamma_p(static_cast<double>(mode) + 1.0, kappa);

        constexpr double cutoff = 1e-15;
        double w = w0;
        for (long j = mode + 1;; ++j)
        {
            w *= lambda / static_cast<double>(j);
            const double term = w * boost::math::gamma_p(static_cast<double>(j) + 1.0, kappa);
            sum += term;
            // P(j+1, kappa) decreases in j, so the remaining tail is bounded by the Poisson tail.
            if (w < cutoff * std::max(sum, 1e-300) || term < cutoff * 1e-300 || j > mode + 100000)
                break;
        }
        w = w0;
        for (long j = mode - 1; j >= 0; --j)
        {
            w *= static_cast<double>(j + 1) / lambda;
            const double term = w * boost::math::gamma_p(static_cast<double>(j) + 1.0, kappa);
            sum += term;
            if (w < cutoff * std::max(sum, 1e-300) && term < cutoff * std::max(sum, 1e-300))
                break;
        }
        return std::clamp(sum, 0.0, 1.0);
    }

    double marcum_q1(double a, double b)
    {
        return 1.0 - p_miss(0.5 * b * b, 0.5 * a * a);
    }

    double deflection(cplx alpha, const DispersionVector &psi, const ArrayGeometry &geometry,
                      const PulseSpectrum &spectrum, const StructuredCovariance &q, bool wideband)
    {
        const CVec s = steering_vector(psi, geometry, spectrum, wideband);
        return std::norm(alpha) * q.quadratic(s);
    }
}
