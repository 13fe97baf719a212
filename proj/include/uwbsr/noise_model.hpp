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

#ifndef UWBSR_NOISE_MODEL_HPP
#define UWBSR_NOISE_MODEL_HPP

#include "uwbsr/core_model.hpp"

#include <Eigen/Cholesky>

#include <functional>
#include <vector>

namespace uwbsr
{
    // Truncated, normalized gamma delay power spectrum
    //   p(tau) = a / (theta^xi Gamma(xi)) (tau - beta)^(xi-1) e^{-(tau-beta)/theta},  beta <= tau < T.
    class GammaDps
    {
    public:
        GammaDps() = default;
        GammaDps(double beta, double theta, double xi, double max_delay);

        double beta() const { return beta_; }
        double theta() const { return theta_; }
        double xi() const { return xi_; }
        double max_delay() const { return max_delay_; }
        double normalizer() const { return a_; }
        // |a - 1| <= tol, i.e. the truncated tail is negligible.
        bool normalizer_near_unity(double tol = 1e-3) const { return std::abs(a_ - 1.0) <= tol; }

        double operator()(double tau) const;

    private:
        double beta_ = 0.0, theta_ = 0.0, xi_ = 0.0, max_delay_ = 0.0;
        double a_ = 1.0;
        double log_scale_ = 0.0; // log(a / (theta^xi Gamma(xi)))
    };

    double gamma_dps_eval(double tau, const GammaDps &dps);

    // eta = [sigma^2, P, beta, theta, xi]
    struct DmcParams
    {
        double sigma2 = 1.0;
        double dmc_power = 0.0;
        GammaDps dps;
    };

    // Panelled Gauss-Legendre rule on [beta, T] for integrals against the DPS: uniform panels of width ~1/B
    // (8 nodes each) plus geometric grading towards the onset, where (tau - beta)^(xi-1) is not smooth.
    struct QuadratureRule
    {
        std::vector<double> nodes;
        std::vector<double> weights;
    };

    QuadratureRule delay_quadrature_rule(const GammaDps &dps, double bandwidth, int refinement = 0);

    // Phi(k delta) = int p(tau) e^{-j2 pi k delta tau} dtau for k = 0..count-1, normalized so Phi(0) = 1.
    std::vector<cplx> dps_characteristic(const GammaDps &dps, double delta, std::size_t count, const QuadratureRule &rule);

    struct DelayCorrelationOptions
    {
        double tolerance = 1e-9; // Frobenius change between successive panel doublings
        int max_refinements = 6;
        bool check_convergence = true;
        int base_refinement = 0; // used directly when check_convergence is false
    };

    // Q_f = int p(tau) s_f(tau) s_f(tau)^H dtau, entry (n, n') = S_n conj(S_n') Phi((n - n') delta).
    CMat delay_correlation(const PulseSpectrum &spectrum, const GammaDps &dps, const DispersionDomain &domain,
                           const DelayCorrelationOptions &options = {});

    using AngularDensity = std::function<double(double)>;
    AngularDensity uniform_aps();

    // Q_s = int p(phi) s_s(phi) s_s(phi)^H dphi with [s_s]_m = e^{j2 pi fc g(phi, p_m)}; 720-node periodic rule.
    CMat spatial_correlation(const ArrayGeometry &geometry, double center_frequency, const AngularDensity &aps,
                             std::size_t angle_nodes = 720);

    // Q = I_M kron Q~ with Q~ = P Q_f + sigma^2 I_N. Never materializes the NM x NM matrix except in dense().
    class StructuredCovariance
    {
    public:
        StructuredCovariance() = default;
        StructuredCovariance(CMat q_tilde, std::size_t num_antennas);

        std::size_t num_antennas() const { return M_; }
        std::size_t block_size() const { return static_cast<std::size_t>(q_tilde_.rows()); }
        std::size_t dimension() const { return M_ * block_size(); }
        const CMat &q_tilde() const { return q_tilde_; }
        const Eigen::LLT<CMat> &block_factor() const { return llt_; }
        const CMat &q_tilde_inverse() const { return q_tilde_inv_; }

        double logdet_block() const { return logdet_block_; }
        double logdet() const { return static_cast<double>(M_) * logdet_block_; }

        CVec solve(const CVec &x) const;
        CMat solve(const CMat &x) const;
        CVec apply(const CVec &x) const;
        // x^H Q^{-1} x
        double quadratic(const CVec &x) const;
        CMat dense() const;

    private:
        CMat q_tilde_;
        CMat q_tilde_inv_;
        Eigen::LLT<CMat> llt_;
        double logdet_block_ = 0.0;
        std::size_t M_ = 0;
    };

    StructuredCovariance build_structured_covariance(const DmcParams &params, const PulseSpectrum &spectrum,
                                                     const DispersionDomain &domain, std::size_t num_antennas,
                                                     const DelayCorrelationOptions &options = {});
    // Same, from a precomputed Q_f.
    StructuredCovariance build_structured_covariance(const CMat &q_f, double dmc_power, double sigma2,
                                                     std::size_t num_antennas);

    struct FullDmcOptions
    {
        bool wideband = true;
        std::size_t angle_nodes = 720;
        std::size_t max_dimension = 4096;
        double tolerance = 1e-9;
        DelayCorrelationOptions delay;
    };

    // General DMC covariance [Q_v]_{m,m'} = P int int p(tau) p(phi) s_m s_m'^H dtau dphi, plus sigma^2 I.
    CMat build_full_dmc_covariance(const ArrayGeometry &geometry, const PulseSpectrum &spectrum, const GammaDps &dps,
                                   const AngularDensity &aps, double dmc_power, double sigma2,
                                   const DispersionDomain &domain, const FullDmcOptions &options = {});
}

#endif
