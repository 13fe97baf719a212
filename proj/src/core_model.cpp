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

#include "uwbsr/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uwbsr
{
    ArrayGeometry::ArrayGeometry(std::vector<Vec2> positions, double orientation)
        : positions_(std::move(positions)), orientation_(orientation)
    {
        if (positions_.empty())
            throw std::invalid_argument("ArrayGeometry needs at least one element.");
        Vec2 sum = Vec2::Zero();
        for (const auto &p : positions_)
            sum += p;
        center_ = sum / static_cast<double>(positions_.size());
    }

    ArrayGeometry ArrayGeometry::uniform_grid(std::size_t rows, std::size_t cols, double spacing, double orientation,
                                              Vec2 center)
    {
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("Grid dimensions must be positive.");
        if (!(spacing > 0.0))
            throw std::invalid_argument("Grid spacing must be positive.");
        const double co = std::cos(orientation), so = std::sin(orientation);
        std::vector<Vec2> pos;
        pos.reserve(rows * cols);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
            {
                const double x = (static_cast<double>(c) - 0.5 * (static_cast<double>(cols) - 1.0)) * spacing;
                const double y = (static_cast<double>(r) - 0.5 * (static_cast<double>(rows) - 1.0)) * spacing;
                pos.emplace_back(center.x() + co * x - so * y, center.y() + so * x + co * y);
            }
        return ArrayGeometry(std::move(pos), orientation);
    }

    ArrayGeometry ArrayGeometry::uniform_linear(std::size_t count, double spacing, double orientation, Vec2 center)
    {
        return uniform_grid(1, count, spacing, orientation, center);
    }

    bool ArrayGeometry::centro_symmetric(double tol) const
    {
        for (std::size_t m = 0; m < size(); ++m)
        {
            const Vec2 target = -offset(m);
            const bool found = std::any_of(positions_.begin(), positions_.end(), [&](const Vec2 &p)
                                           { return (p - center_ - target).norm() <= tol; });
            if (!found)
                return false;
        }
        return true;
    }

    double ArrayGeometry::span() const
    {
        double best = 0.0;
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = i + 1; j < size(); ++j)
                best = std::max(best, (positions_[i] - positions_[j]).norm());
        return best;
    }

    PulseSpectrum::PulseSpectrum(CVec samples, double delta, double center_frequency)
        : samples_(std::move(samples)), delta_(delta), center_frequency_(center_frequency)
    {
        if (samples_.size() == 0)
            throw std::invalid_argument("PulseSpectrum needs at least one sample.");
        if (!(delta_ > 0.0))
            throw std::invalid_argument("Frequency spacing must be positive.");
    }

    PulseSpectrum PulseSpectrum::root_raised_cosine(double rolloff, double bandwidth, double center_frequency,
                                                    std::size_t num_samples)
    {
        if (!(rolloff >= 0.0 && rolloff <= 1.0))
            throw std::invalid_argument("Roll-off must lie in [0, 1].");
        if (!(bandwidth > 0.0) || num_samples == 0)
            throw std::invalid_argument("Bandwidth and sample count must be positive.");
        const double delta = bandwidth / static_cast<double>(num_samples);
        const double symbol_rate = bandwidth / (1.0 + rolloff);
        const double f_pass = 0.5 * (1.0 - rolloff) * symbol_rate;
        const double f_stop = 0.5 * (1.0 + rolloff) * symbol_rate;

        CVec s(static_cast<Eigen::Index>(num_samples));
        for (std::size_t k = 0; k < num_samples; ++k)
        {
            const double f = std::abs((static_cast<double>(k) - 0.5 * (static_cast<double>(num_samples) - 1.0)) * delta);
            double h = 0.0;
            if (f <= f_pass)
                h = 1.0;
            else if (f < f_stop)
                h = std::sqrt(0.5 * (1.0 + std::cos(pi / (rolloff * symbol_rate) * (f - f_pass))));
            s[static_cast<Eigen::Index>(k)] = h;
        }
        s /= s.norm();
        return PulseSpectrum(std::move(s), delta, center_frequency);
    }

    PulseSpectrum PulseSpectrum::flat(double bandwidth, double center_frequency, std::size_t num_samples)
    {
        if (!(bandwidth > 0.0) || num_samples == 0)
            throw std::invalid_argument("Bandwidth and sample count must be positive.");
        CVec s = CVec::Constant(static_cast<Eigen::Index>(num_samples), 1.0 / std::sqrt(static_cast<double>(num_samples)));
        return PulseSpectrum(std::move(s), bandwidth / static_cast<double>(num_samples), center_frequency);
    }

    bool PulseSpectrum::conjugate_symmetric(double tol) const
    {
        const Eigen::Index n = samples_.size();
        for (Eigen::Index k = 0; k < n; ++k)
            if (std::abs(samples_[n - 1 - k] - std::conj(samples_[k])) > tol)
                return false;
        return true;
    }

    DispersionDomain::DispersionDomain(double max_delay, const PulseSpectrum &spectrum)
        : max_delay_(max_delay), period_(spectrum.alias_period())
    {
        if (!(max_delay_ > 0.0))
            throw std::invalid_argument("Maximum delay T must be positive.");
        if (max_delay_ > period_ * (1.0 + 1e-12))
            throw std::invalid_argument("Maximum delay T exceeds the aliasing-free range 1/delta.");
        periodic_ = max_delay_ >= period_ * (1.0 - 1e-12);
        if (periodic_)
            max_delay_ = period_;
    }

    DispersionDomain DispersionDomain::unambiguous(const PulseSpectrum &spectrum)
    {
        return DispersionDomain(spectrum.alias_period(), spectrum);
    }

    double DispersionDomain::normalize_delay(double tau) const
    {
        if (periodic_)
        {
            double t = std::fmod(tau, period_);
            if (t < 0.0)
                t += period_;
            return t >= period_ ? 0.0 : t;
        }
        return std::clamp(tau, 0.0, std::nextafter(max_delay_, 0.0));
    }

    double relative_delay(double phi, const ArrayGeometry &geometry, std::size_t m)
    {
        const Vec2 d = geometry.offset(m);
        return (std::cos(phi) * d.x() + std::sin(phi) * d.y()) / speed_of_light;
    }

    double relative_delay_derivative(double phi, const ArrayGeometry &geometry, std::size_t m)
    {
        const Vec2 d = geometry.offset(m);
        return (-std::sin(phi) * d.x() + std::cos(phi) * d.y()) / speed_of_light;
    }

    CVec steering_vector(const DispersionVector &psi, const ArrayGeometry &geometry, const PulseSpectrum &spectrum,
                         bool wideband)
    {
        const std::size_t M = geometry.size(), N = spectrum.size();
        const double fc = spectrum.center_frequency(), delta = spectrum.delta();
        CVec s(static_cast<Eigen::Index>(M * N));
        for (std::size_t m = 0; m < M; ++m)
        {
            const double g = relative_delay(psi.phi, geometry, m);
            const double tau_eff = wideband ? psi.tau - g : psi.tau;
            for (std::size_t k = 0; k < N; ++k)
            {
                const double phase = two_pi * (fc * g - spectrum.index(k) * delta * tau_eff);
                s[static_cast<Eigen::Index>(m * N + k)] = spectrum.sample(k) * std::polar(1.0, phase);
            }
        }
        return s;
    }

    SteeringJacobian steering_jacobian(const DispersionVector &psi, const ArrayGeometry &geometry,
                                       const PulseSpectrum &spectrum, bool wideband)
    {
        const std::size_t M = geometry.size(), N = spectrum.size();
        const double fc = spectrum.center_frequency(), delta = spectrum.delta();
        const CVec s = steering_vector(psi, geometry, spectrum, wideband);
        SteeringJacobian jac{CVec(s.size()), CVec(s.size())};
        const cplx j2pi(0.0, two_pi);
        for (std::size_t m = 0; m < M; ++m)
        {
            const double dg = relative_delay_derivative(psi.phi, geometry, m);
            for (std::size_t k = 0; k < N; ++k)
            {
                const auto i = static_cast<Eigen::Index>(m * N + k);
                const double f = spectrum.index(k) * delta;
                jac.d_tau[i] = -j2pi * f * s[i];
                jac.d_phi[i] = j2pi * (fc + (wideband ? f : 0.0)) * dg * s[i];
            }
        }
        return jac;
    }

    CVec delay_steering(double tau, const PulseSpectrum &spectrum)
    {
        const std::size_t N = spectrum.size();
        CVec s(static_cast<Eigen::Index>(N));
        for (std::size_t k = 0; k < N; ++k)
            s[static_cast<Eigen::Index>(k)] = spectrum.sample(k) * std::polar(1.0, -two_pi * spectrum.frequency(k) * tau);
        return s;
    }

    CVec delay_steering_derivative(double tau, const PulseSpectrum &spectrum)
    {
        CVec s = delay_steering(tau, spectrum);
        for (Eigen::Index k = 0; k < s.size(); ++k)
            s[k] *= cplx(0.0, -two_pi * spectrum.frequency(static_cast<std::size_t>(k)));
        return s;
    }
}
