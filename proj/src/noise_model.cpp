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

#include "uwbsr/noise_model.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace uwbsr
{
    GammaDps::GammaDps(double beta, double theta, double xi, double max_delay)
        : beta_(beta), theta_(theta), xi_(xi), max_delay_(max_delay)
    {
        if (!(beta_ > 0.0) || !(theta_ > 0.0) || !(xi_ > 0.0))
            throw std::invalid_argument("GammaDps requires beta, theta, xi > 0.");
        if (!(max_delay_ > beta_))
            throw std::invalid_argument("GammaDps onset beta must lie below the maximum delay T.");
        const double mass = boost::math::gamma_p(xi_, (max_delay_ - beta_) / theta_);
        if (!(mass > 0.0))
            throw std::invalid_argument("GammaDps has no mass inside [beta, T).");
        a_ = 1.0 / mass;
        log_scale_ = std::log(a_) - xi_ * std::log(theta_) - std::lgamma(xi_);
    }

    double GammaDps::operator()(double tau) const
    {
        if (tau < beta_ || tau >= max_delay_ || tau < 0.0)
            return 0.0;
        const double x = tau - beta_;
        if (x == 0.0)
        {
            if (xi_ < 1.0)
                return std::numeric_limits<double>::infinity();
            return xi_ == 1.0 ? std::exp(log_scale_) : 0.0;
        }
        return std::exp(log_scale_ + (xi_ - 1.0) * std::log(x) - x / theta_);
    }

    double gamma_dps_eval(double tau, const GammaDps &dps) { return dps(tau); }

    namespace
    {
        struct Panel
        {
            double lo, hi;
        };

        void append_gauss8(double lo, double hi, QuadratureRule &rule)
        {
            using gauss8 = boost::math::quadrature::gauss<double, 8>;
            const auto &x = gauss8::abscissa();
            const auto &w = gauss8::weights();
            const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
            for (std::size_t i = 0; i < x.size(); ++i)
            {
                rule.nodes.push_back(mid - half * x[i]);
                rule.weights.push_back(half * w[i]);
                rule.nodes.push_back(mid + half * x[i]);
                rule.weights.push_back(half * w[i]);
            }
        }
    }

    QuadratureRule delay_quadrature_rule(const GammaDps &dps, double bandwidth, int refinement)
    {
        const double lo = dps.beta(), hi = dps.max_delay();
        const double length = hi - lo;
        const auto uniform_count = static_cast<std::size_t>(std::max(1.0, std::ceil(length * bandwidth)));
        const double width = length / static_cast<double>(uniform_count);

        // Geometric grading of the first panel towards the onset; the innermost panel is small enough
        // that the neglected mass (eps/theta)^min(xi,1) stays below ~1e-14.
        constexpr double ratio = 0.15;
        const double innermost = std::min(dps.theta(), width) * std::pow(10.0, -14.0 / std::min(dps.xi(), 1.0));
        const int levels = std::clamp(static_cast<int>(std::ceil(std::log(innermost / width) / std::log(ratio))), 1, 200);

        std::vector<Panel> panels;
        panels.push_back({lo, lo + width * std::pow(ratio, levels)});
        for (int j = levels - 1; j >= 0; --j)
            panels.push_back({lo + width * std::pow(ratio, j + 1), lo + width * std::pow(ratio, j)});
        for (std::size_t i = 1; i < uniform_count; ++i)
            panels.push_back({lo + width * static_cast<double>(i), lo + width * static_cast<double>(i + 1)});
        panels.back().hi = hi;

        QuadratureRule rule;
        const int splits = 1 << std::max(0, refinement);
        for (const auto &p : panels)
        {
            const double step = (p.hi - p.lo) / splits;
            for (int s = 0; s < splits; ++s)
                append_gauss8(p.lo + step * s, s + 1 == splits ? p.hi : p.lo + step * (s + 1), rule);
        }
        return rule;
    }

    std::vector<cplx> dps_characteristic(const GammaDps &dps, double delta, std::size_t count, const QuadratureRule &rule)
    {
        std::vector<cplx> phi(count, cplx(0.0, 0.0));
        for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        {
            const double value = rule.weights[i] * dps(rule.nodes[i]);
            if (value == 0.0 || !std::isfinite(value))
                continue;
            const cplx step = std::polar(1.0, -two_pi * delta * rule.nodes[i]);
            cplx term(value, 0.0);
            for (std::size_t k = 0; k < count; ++k)
            {
                phi[k] += term;
                term *= step;
            }
        }
        const double mass = phi.empty() ? 1.0 : phi[0].real();
        if (!(mass > 0.0))
            throw QuadratureNotConverged("Delay quadrature captured no DPS mass.");
        for (auto &v : phi)
            v /= mass;
        return phi;
    }

    namespace
    {
        CMat assemble_q_f(const PulseSpectrum &spectrum, const std::vector<cplx> &phi)
        {
            const auto N = static_cast<Eigen::Index>(spectrum.size());
            CMat q(N, N);
            for (Eigen::Index r = 0; r < N; ++r)
                for (Eigen::Index c = 0; c < N; ++c)
                {
                    const Eigen::Index k = r - c;
                    const cplx ph = k >= 0 ? phi[static_cast<std::size_t>(k)] : std::conj(phi[static_cast<std::size_t>(-k)]);
                    q(r, c) = spectrum.samples()[r] * std::conj(spectrum.samples()[c]) * ph;
                }
            return q;
        }

        // Characteristic function refined until the resulting Q_f stops changing.
        std::vector<cplx> converged_characteristic(const PulseSpectrum &spectrum, const GammaDps &dps,
                                                   const DelayCorrelationOptions &options)
        {
            const std::size_t N = spectrum.size();
            const double B = spectrum.bandwidth(), delta = spectrum.delta();
            if (!options.check_convergence)
                return dps_characteristic(dps, delta, N, delay_quadrature_rule(dps, B, options.base_refinement));

            auto coarse = dps_characteristic(dps, delta, N, delay_quadrature_rule(dps, B, options.base_refinement));
            double change = 0.0;
            for (int level = options.base_refinement + 1; level <= options.base_refinement + options.max_refinements; ++level)
            {
                auto fine = dps_characteristic(dps, delta, N, delay_quadrature_rule(dps, B, level));
                change = (assemble_q_f(spectrum, fine) - assemble_q_f(spectrum, coarse)).norm();
                if (change <= options.tolerance)
                    return fine;
                coarse = std::move(fine);
            }
            throw QuadratureNotConverged("Delay correlation did not converge (Frobenius change " + std::to_string(change) + ").");
        }
    }

    CMat delay_correlation(const PulseSpectrum &spectrum, const GammaDps &dps, const DispersionDomain &domain,
                           const DelayCorrelationOptions &options)
    {
        if (dps.max_delay() > domain.max_delay() * (1.0 + 1e-12))
            throw std::invalid_argument("DPS support exceeds the dispersion domain.");
        return assemble_q_f(spectrum, converged_characteristic(spectrum, dps, options));
    }

    AngularDensity uniform_aps()
    {
        return [](double) { return 1.0 / two_pi; };
    }

    namespace
    {
        CMat spatial_correlation_nodes(const ArrayGeometry &geometry, double fc, const AngularDensity &aps,
                                       std::size_t nodes, std::size_t stride)
        {
            const auto M = static_cast<Eigen::Index>(geometry.size());
            CMat q = CMat::Zero(M, M);
            const double w = two_pi / static_cast<double>(nodes) * static_cast<double>(stride);
            CVec a(M);
            for (std::size_t i = 0; i < nodes; i += stride)
            {
                const double phi = -pi + two_pi * static_cast<double>(i) / static_cast<double>(nodes);
                for (Eigen::Index m = 0; m < M; ++m)
                    a[m] = std::polar(1.0, two_pi * fc * relative_delay(phi, geometry, static_cast<std::size_t>(m)));
                q.noalias() += (w * aps(phi)) * a * a.adjoint();
            }
            return q;
        }
    }

    CMat spatial_correlation(const ArrayGeometry &geometry, double center_frequency, const AngularDensity &aps,
                             std::size_t angle_nodes)
    {
        if (angle_nodes < 4 || angle_nodes % 2 != 0)
            throw std::invalid_argument("Angle node count must be even and >= 4.");
        CMat fine = spatial_correlation_nodes(geometry, center_frequency, aps, angle_nodes, 1);
        CMat coarse = spatial_correlation_nodes(geometry, center_frequency, aps, angle_nodes, 2);
        const double change = (fine - coarse).norm();
        if (change > 1e-9 * std::max(1.0, fine.norm()))
            throw QuadratureNotConverged("Spatial correlation did not converge (change " + std::to_string(change) + ").");
        return fine;
    }

    StructuredCovariance::StructuredCovariance(CMat q_tilde, std::size_t num_antennas)
        : q_tilde_(std::move(q_tilde)), M_(num_antennas)
    {
        if (M_ == 0 || q_tilde_.rows() == 0 || q_tilde_.rows() != q_tilde_.cols())
            throw std::invalid_argument("StructuredCovariance needs a square block and M >= 1.");
        llt_.compute(q_tilde_);
        if (llt_.info() != Eigen::Success)
            throw NumericalError("Block covariance Q~ is not positive definite.");
        const auto &L = llt_.matrixLLT();
        logdet_block_ = 0.0;
        for (Eigen::Index i = 0; i < L.rows(); ++i)
            logdet_block_ += 2.0 * std::log(L(i, i).real());
        q_tilde_inv_ = llt_.solve(CMat::Identity(q_tilde_.rows(), q_tilde_.cols()));
        q_tilde_inv_ = 0.5 * (q_tilde_inv_ + q_tilde_inv_.adjoint()).eval();
    }

    CVec StructuredCovariance::solve(const CVec &x) const
    {
        const auto N = q_tilde_.rows();
        const auto M = static_cast<Eigen::Index>(M_);
        if (x.size() != N * M)
            throw std::invalid_argument("solve: dimension mismatch.");
        CVec out(x.size());
        Eigen::Map<const CMat> xb(x.data(), N, M);
        Eigen::Map<CMat> ob(out.data(), N, M);
        ob = llt_.solve(xb);
        return out;
    }

    CMat StructuredCovariance::solve(const CMat &x) const
    {
        CMat out(x.rows(), x.cols());
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            out.col(c) = solve(CVec(x.col(c)));
        return out;
    }

    CVec StructuredCovariance::apply(const CVec &x) const
    {
        const auto N = q_tilde_.rows();
        const auto M = static_cast<Eigen::Index>(M_);
        if (x.size() != N * M)
            throw std::invalid_argument("apply: dimension mismatch.");
        CVec out(x.size());
        Eigen::Map<const CMat> xb(x.data(), N, M);
        Eigen::Map<CMat> ob(out.data(), N, M);
        ob.noalias() = q_tilde_ * xb;
        return out;
    }

    double StructuredCovariance::quadratic(const CVec &x) const
    {
        return x.dot(solve(x)).real();
    }

    CMat StructuredCovariance::dense() const
    {
        const auto N = q_tilde_.rows();
        const auto M = static_cast<Eigen::Index>(M_);
        CMat q = CMat::Zero(N * M, N * M);
        for (Eigen::Index m = 0; m < M; ++m)
            q.block(m * N, m * N, N, N) = q_tilde_;
        return q;
    }

    StructuredCovariance build_structured_covariance(const CMat &q_f, double dmc_power, double sigma2,
                                                     std::size_t num_antennas)
    {
        if (!(sigma2 > 0.0) || dmc_power < 0.0)
            throw std::invalid_argument("DmcParams require sigma2 > 0 and P >= 0.");
        CMat q = dmc_power * q_f;
        q.diagonal().array() += sigma2;
        q = 0.5 * (q + q.adjoint()).eval();
        return StructuredCovariance(std::move(q), num_antennas);
    }

    StructuredCovariance build_structured_covariance(const DmcParams &params, const PulseSpectrum &spectrum,
                                                     const DispersionDomain &domain, std::size_t num_antennas,
                                                     const DelayCorrelationOptions &options)
    {
        if (!(params.sigma2 > 0.0) || params.dmc_power < 0.0)
            throw std::invalid_argument("DmcParams require sigma2 > 0 and P >= 0.");
        const auto N = static_cast<Eigen::Index>(spectrum.size());
        if (params.dmc_power == 0.0)
            return StructuredCovariance(CMat::Identity(N, N) * params.sigma2, num_antennas);
        return build_structured_covariance(delay_correlation(spectrum, params.dps, domain, options), params.dmc_power,
                                           params.sigma2, num_antennas);
    }

    CMat build_full_dmc_covariance(const ArrayGeometry &geometry, const PulseSpectrum &spectrum, const GammaDps &dps,
                                   const AngularDensity &aps, double dmc_power, double sigma2,
                                   const DispersionDomain &domain, const FullDmcOptions &options)
    {
        const std::size_t M = geometry.size(), N = spectrum.size();
        const std::size_t dim = M * N;
        if (dim > options.max_dimension)
            throw DimensionTooLarge("Full DMC covariance of dimension " + std::to_string(dim) + " exceeds the cap " +
                                    std::to_string(options.max_dimension) + ".");
        if (options.angle_nodes < 4 || options.angle_nodes % 2 != 0)
            throw std::invalid_argument("Angle node count must be even and >= 4.");
        if (dps.max_delay() > domain.max_delay() * (1.0 + 1e-12))
            throw std::invalid_argument("DPS support exceeds the dispersion domain.");

        const auto D = static_cast<Eigen::Index>(dim);
        const std::vector<cplx> phi = converged_characteristic(spectrum, dps, options.delay);
        const double fc = spectrum.center_frequency();

        // Angle integral A = int p(phi) e(phi) e(phi)^H with e_{mn} = e^{j2 pi (fc + f_n) g_m(phi)}, assembled as E E^H.
        const std::size_t nodes = options.angle_nodes;
        CMat E(D, static_cast<Eigen::Index>(nodes));
        for (std::size_t i = 0; i < nodes; ++i)
        {
            const double ang = -pi + two_pi * static_cast<double>(i) / static_cast<double>(nodes);
            const double weight = two_pi / static_cast<double>(nodes) * aps(ang);
            if (weight < 0.0)
                throw std::invalid_argument("Angular density must be non-negative.");
            const double scale = std::sqrt(weight);
            for (std::size_t m = 0; m < M; ++m)
            {
                const double g = relative_delay(ang, geometry, m);
                for (std::size_t k = 0; k < N; ++k)
                {
                    const double freq = fc + (options.wideband ? spectrum.frequency(k) : 0.0);
                    E(static_cast<Eigen::Index>(m * N + k), static_cast<Eigen::Index>(i)) = scale * std::polar(1.0, two_pi * freq * g);
                }
            }
        }
        CMat A = E * E.adjoint();

        // Convergence of the angle rule: every other node with doubled weight.
        {
            const auto half = static_cast<Eigen::Index>(nodes / 2);
            CMat Ec(D, half);
            for (Eigen::Index i = 0; i < half; ++i)
                Ec.col(i) = std::sqrt(2.0) * E.col(2 * i);
            const double change = (Ec * Ec.adjoint() - A).norm();
            if (change > options.tolerance * std::max(1.0, A.norm()))
                throw QuadratureNotConverged("Angle quadrature of the full DMC covariance did not converge (change " +
                                             std::to_string(change) + ").");
        }

        CMat q(D, D);
        for (Eigen::Index r = 0; r < D; ++r)
            for (Eigen::Index c = 0; c < D; ++c)
            {
                const auto nr = static_cast<std::size_t>(r) % N, nc = static_cast<std::size_t>(c) % N;
                const long k = static_cast<long>(nr) - static_cast<long>(nc);
                const cplx ph = k >= 0 ? phi[static_cast<std::size_t>(k)] : std::conj(phi[static_cast<std::size_t>(-k)]);
                q(r, c) = dmc_power * spectrum.sample(nr) * std::conj(spectrum.sample(nc)) * ph * A(r, c);
            }
        q = 0.5 * (q + q.adjoint()).eval();
        q.diagonal().array() += sigma2;
        return q;
    }
}
