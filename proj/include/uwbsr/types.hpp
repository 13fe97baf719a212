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

#ifndef UWBSR_TYPES_HPP
#define UWBSR_TYPES_HPP

#include <Eigen/Dense>

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace uwbsr
{
    using cplx = std::complex<double>;
    using CVec = Eigen::VectorXcd;
    using CMat = Eigen::MatrixXcd;
    using RVec = Eigen::VectorXd;
    using RMat = Eigen::MatrixXd;
    using Vec2 = Eigen::Vector2d;

    inline constexpr double speed_of_light = 299792458.0; // m/s, exact
    inline constexpr double pi = std::numbers::pi;
    inline constexpr double two_pi = 2.0 * std::numbers::pi;

    // Failure categories surfaced to callers. The CLI maps NumericalError to exit code 3.
    class NumericalError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class QuadratureNotConverged : public NumericalError
    {
    public:
        using NumericalError::NumericalError;
    };

    class SingularInnerMatrix : public NumericalError
    {
    public:
        using NumericalError::NumericalError;
    };

    class SingularFIM : public NumericalError
    {
    public:
        using NumericalError::NumericalError;
    };

    class DimensionTooLarge : public NumericalError
    {
    public:
        using NumericalError::NumericalError;
    };

    class DomainError : public std::domain_error
    {
    public:
        using std::domain_error::domain_error;
    };

    class EpsilonOutOfRange : public std::domain_error
    {
    public:
        using std::domain_error::domain_error;
    };

    class SpacingOutOfDomain : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    // Wraps an angle into [-pi, pi).
    inline double wrap_angle(double phi)
    {
        double w = std::fmod(phi + pi, two_pi);
        if (w < 0.0)
            w += two_pi;
        double r = w - pi;
        return r >= pi ? -pi : r;
    }

    // Wraps x into [-period/2, period/2).
    inline double wrap_symmetric(double x, double period)
    {
        double w = std::fmod(x + 0.5 * period, period);
        if (w < 0.0)
            w += period;
        return w - 0.5 * period;
    }
}

#endif
