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

#ifndef UWBSR_CORE_MODEL_HPP
#define UWBSR_CORE_MODEL_HPP

#include "uwbsr/types.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace uwbsr
{
    // Planar receive array. Element positions are stored in the global frame (meters);
    // the orientation angle is kept as metadata and used by the factory functions.
    class ArrayGeometry
    {
    public:
        ArrayGeometry() = default;
        explicit ArrayGeometry(std::vector<Vec2> positions, double orientation = 0.0);

        // rows x cols grid with equal spacing, centered at `center`, rotated by `orientation`.
        static ArrayGeometry uniform_grid(std::size_t rows, std::size_t cols, double spacing,
                                          double orientation = 0.0, Vec2 center = Vec2::Zero());
        // 1 x count line along the array x-axis.
        static ArrayGeometry uniform_linear(std::size_t count, double spacing, double orientation = 0.0,
                                            Vec2 center = Vec2::Zero());

        std::size_t size() const { return positions_.size(); }
        const std::vector<Vec2> &positions() const { return positions_; }
        const Vec2 &position(std::size_t m) const { return positions_[m]; }
        double orientation() const { return orientation_; }
        const Vec2 &center_of_gravity() const { return center_; }
        Vec2 offset(std::size_t m) const { return positions_[m] - center_; } // p_m - p

        // For every m there is m' with p_m' - p = -(p_m - p).
        bool centro_symmetric(double tol = 1e-9) const;
        // Largest element-to-element distance in meters (0 for a single element).
        double span() const;

    private:
        std::vector<Vec2> positions_;
        double orientation_ = 0.0;
        Vec2 center_ = Vec2::Zero();
    };

    // Sampled transmit spectrum S(n*delta) with n = k - (N-1)/2, k = 0..N-1.
    // For even N the indices are half-integers, which keeps the frequency aperture centro-symmetric.
    class PulseSpectrum
    {
    public:
        PulseSpectrum() = default;
        PulseSpectrum(CVec samples, double delta, double center_frequency);

        // Root-raised-cosine magnitude response occupying `bandwidth` = (1 + rolloff) * symbol rate,
        // normalized to sum |S|^2 = 1.
        static PulseSpectrum root_raised_cosine(double rolloff, double bandwidth, double center_frequency,
                                                std::size_t num_samples);
        // Constant spectrum over the band, normalized to sum |S|^2 = 1.
        static PulseSpectrum flat(double bandwidth, double center_frequency, std::size_t num_samples);

        std::size_t size() const { return static_cast<std::size_t>(samples_.size()); }
        const CVec &samples() const { return samples_; }
        cplx sample(std::size_t k) const { return samples_[static_cast<Eigen::Index>(k)]; }
        double delta() const { return delta_; }
        double bandwidth() const { return delta_ * static_cast<double>(samples_.size()); }
        double center_frequency() const { return center_frequency_; }
        // n for storage position k (may be a half-integer).
        double index(std::size_t k) const { return static_cast<double>(k) - 0.5 * (static_cast<double>(size()) - 1.0); }
        double frequency(std::size_t k) const { return index(k) * delta_; }
        double energy() const { return samples_.squaredNorm(); }
        // Unambiguous delay range 1/delta.
        double alias_period() const { return 1.0 / delta_; }

        // J s = conj(s) with J the exchange matrix.
        bool conjugate_symmetric(double tol = 1e-12) const;

    private:
        CVec samples_;
        double delta_ = 0.0;
        double center_frequency_ = 0.0;
    };

    // psi = [tau, phi]; phi is wrapped into [-pi, pi) on construction.
    struct DispersionVector
    {
        double tau = 0.0; // s
        double phi = 0.0; // rad

        DispersionVector() = default;
        DispersionVector(double tau_s, double phi_rad) : tau(tau_s), phi(wrap_angle(phi_rad)) {}
    };

    // Psi = [0, T) x [-pi, pi).
    class DispersionDomain
    {
    public:
        DispersionDomain() = default;
        // Throws std::invalid_argument unless 0 < T <= 1/delta.
        DispersionDomain(double max_delay, const PulseSpectrum &spectrum);
        // T = 1/delta.
        static DispersionDomain unambiguous(const PulseSpectrum &spectrum);

        double max_delay() const { return max_delay_; }
        bool contains(const DispersionVector &psi) const { return psi.tau >= 0.0 && psi.tau < max_delay_; }
        // True if T equals the aliasing period, in which case delays wrap around.
        bool periodic() const { return periodic_; }
        double period() const { return period_; }
        // Maps tau back into [0, T): wraps when periodic, clamps otherwise.
        double normalize_delay(double tau) const;

    private:
        double max_delay_ = 0.0;
        double period_ = 0.0;
        bool periodic_ = false;
    };

    // g(phi, p_m) = [cos phi, sin phi] . (p_m - p) / c, in seconds. m is zero-based.
    double relative_delay(double phi, const ArrayGeometry &geometry, std::size_t m);
    // d_m(phi) = dg/dphi, in seconds per radian.
    double relative_delay_derivative(double phi, const ArrayGeometry &geometry, std::size_t m);

    // Entry (m, n) at position m * N + n:
    //   e^{j2 pi fc g_m} S(n delta) e^{-j2 pi n delta (tau - g_m)}      (wideband)
    //   e^{j2 pi fc g_m} S(n delta) e^{-j2 pi n delta tau}              (narrowband)
    CVec steering_vector(const DispersionVector &psi, const ArrayGeometry &geometry, const PulseSpectrum &spectrum,
                         bool wideband = true);

    struct SteeringJacobian
    {
        CVec d_tau;
        CVec d_phi;
    };

    SteeringJacobian steering_jacobian(const DispersionVector &psi, const ArrayGeometry &geometry,
                                       const PulseSpectrum &spectrum, bool wideband = true);

    // Single-antenna delay steering s_f(tau) = [S(n delta) e^{-j2 pi n delta tau}]_n and its tau-derivative.
    CVec delay_steering(double tau, const PulseSpectrum &spectrum);
    CVec delay_steering_derivative(double tau, const PulseSpectrum &spectrum);
}

#endif
