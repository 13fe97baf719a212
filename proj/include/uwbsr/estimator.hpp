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

#ifndef UWBSR_ESTIMATOR_HPP
#define UWBSR_ESTIMATOR_HPP

#include "uwbsr/core_model.hpp"
#include "uwbsr/noise_model.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace uwbsr
{
    inline constexpr double pruned = std::numeric_limits<double>::infinity();

    // Everything about the measurement setup the estimator needs besides the noise parameters.
    struct ModelContext
    {
        ArrayGeometry geometry;
        PulseSpectrum spectrum;
        DispersionDomain domain;
        bool wideband = true;

        std::size_t dimension() const { return geometry.size() * spectrum.size(); }
        CVec steering(const DispersionVector &psi) const { return steering_vector(psi, geometry, spectrum, wideband); }
        SteeringJacobian jacobian(const DispersionVector &psi) const
        {
            return steering_jacobian(psi, geometry, spectrum, wideband);
        }
        // Intrinsic resolution: 1/B in delay and c/(fc * span) in angle (2 pi for a single element).
        double delay_resolution() const { return 1.0 / spectrum.bandwidth(); }
        double angle_resolution() const;
    };

    // L hypothetical components. A slot is active iff its gamma is finite; pruned slots hold no psi.
    struct ComponentSet
    {
        struct Slot
        {
            std::optional<DispersionVector> psi;
            double gamma = pruned;
            bool active() const { return psi.has_value() && std::isfinite(gamma); }
        };

        std::vector<Slot> slots;

        ComponentSet() = default;
        explicit ComponentSet(std::size_t budget) : slots(budget) {}

        std::size_t budget() const { return slots.size(); }
        std::size_t active_count() const;
        std::vector<std::size_t> active_indices() const;
        std::optional<std::size_t> free_slot() const;
        void activate(std::size_t l, const DispersionVector &psi, double gamma);
        void prune(std::size_t l);
    };

    struct EtaBounds
    {
        double sigma2_lo = 0.0, sigma2_hi = 0.0;
        double power_lo = 0.0, power_hi = 0.0;
        double beta_lo = 0.0, beta_hi = 0.0;
        double theta_lo = 0.0, theta_hi = 0.0;
        double xi_lo = 0.5, xi_hi = 20.0;

        // sigma2 in [1e-12, 1e6] * |y|^2/(MN), P in [1e-12, 1e6] * |y|^2/M, theta in [0.1/B, T],
        // xi in [0.5, 20], beta in [1e-3/B, T/2].
        static EtaBounds defaults(const CVec &y, const ModelContext &ctx);
    };

    struct EstimatorConfig
    {
        std::size_t max_components = 10; // L
        double kappa = 1.0;              // pruning / activation threshold
        std::size_t max_outer_iterations = 200;
        double tolerance = 1e-6; // relative change of the marginal NLL
        double delay_oversampling = 4.0; // candidate grid delay step = 1/(oversampling * B)
        std::size_t angle_points = 72;   // candidate grid angle count (raised to >= 8 * span / lambda)
        std::size_t refine_candidates = 3;
        std::size_t max_refine_iterations = 50;
        double refine_tolerance = 1e-6;
        double duplicate_fraction = 1e-3; // of the resolution in both coordinates
        bool eta_known = true;
        DmcParams eta; // known value, or initial guess when estimated
        // When estimating eta, start from sigma2 = P = half the per-sample / per-antenna input power.
        bool eta_init_from_data = true;
        std::optional<EtaBounds> eta_bounds;
        std::size_t max_eta_evaluations = 400;
    };

    struct TraceEntry
    {
        std::size_t iteration = 0;
        std::string step; // init, birth, update, prune, merge, eta, final
        long component = -1;
        double nll = 0.0;
        double objective = 0.0; // nll + (kappa - 1 - ln kappa) * active
        std::size_t active = 0;
    };

    struct EstimationResult
    {
        std::vector<DispersionVector> components;
        std::vector<double> gammas;
        CVec mu;
        CMat sigma;
        DmcParams eta_hat;
        double nll = 0.0;
        std::size_t iterations = 0;
        bool converged = false;
        std::vector<TraceEntry> trace;
        std::vector<std::string> log;
    };

    // log det C + y^H C^{-1} y with C = Q + S Gamma^{-1} S^H, via the determinant lemma and Woodbury on the
    // K x K inner matrix. Entries with infinite gamma are ignored.
    double marginal_nll(const CVec &y, const std::vector<DispersionVector> &psi, const std::vector<double> &gamma,
                        const StructuredCovariance &q, const ModelContext &ctx);
    double marginal_nll(const CVec &y, const CMat &columns, const std::vector<double> &gamma,
                        const StructuredCovariance &q);
    double marginal_nll(const CVec &y, const ComponentSet &set, const StructuredCovariance &q, const ModelContext &ctx);

    // Penalty per active component that makes the thresholded updates monotone: kappa - 1 - ln kappa.
    double activation_penalty(double kappa);

    struct ResidualStats
    {
        double zeta = 0.0;
        cplx rho = 0.0;
        double statistic() const { return std::norm(rho) / zeta; }
    };

    // zeta_l and rho_l of slot l at its current psi (or at `at` if given), with all other active slots as l-bar.
    ResidualStats residual_stats(std::size_t l, const CVec &y, const ComponentSet &set, const StructuredCovariance &q,
                                 const ModelContext &ctx, std::optional<DispersionVector> at = std::nullopt);

    // (|rho|^2 - zeta)^{-1} when |rho|^2 / zeta > kappa, otherwise `pruned`.
    double update_gamma(double zeta, cplx rho, double kappa);
    inline double update_gamma(const ResidualStats &stats, double kappa) { return update_gamma(stats.zeta, stats.rho, kappa); }

    // Local maximizer of |rho_l(psi)|^2 / zeta_l(psi) around the current psi_l; returns psi_l if nothing improves.
    DispersionVector update_psi(std::size_t l, const CVec &y, const ComponentSet &set, const StructuredCovariance &q,
                                const ModelContext &ctx, const EstimatorConfig &config = {});

    struct EtaUpdate
    {
        DmcParams eta;
        double nll = 0.0;
        std::size_t evaluations = 0;
        bool stalled = false;
    };

    // Bounded Nelder-Mead over (log sigma2, log P, beta, log theta, log xi); never returns a worse NLL.
    EtaUpdate update_eta(const CVec &y, const ComponentSet &set, const DmcParams &eta_init, const EtaBounds &bounds,
                         const ModelContext &ctx, std::size_t max_evaluations = 400);

    struct CandidateGrid
    {
        std::size_t delay_points = 0;
        std::size_t angle_points = 0;

        static CandidateGrid for_context(const ModelContext &ctx, const EstimatorConfig &config);
        double delay_step(const ModelContext &ctx) const;
        double angle_step() const;
    };

    struct Candidate
    {
        DispersionVector psi;
        double statistic = 0.0;
        ResidualStats stats;
    };

    // Grid argmax of |rho(psi)|^2/zeta(psi) against all active slots, refined locally.
    Candidate candidate_search(const CVec &y, const ComponentSet &set, const StructuredCovariance &q,
                               const ModelContext &ctx, const CandidateGrid &grid, const EstimatorConfig &config = {});

    // Same statistic evaluated over the whole grid (row = delay index, column = angle index).
    RMat statistic_map(const CVec &y, const ComponentSet &set, const StructuredCovariance &q, const ModelContext &ctx,
                       const CandidateGrid &grid);

    // Birth-first, then cyclic psi/gamma refinement, then eta; repeats until the NLL settles.
    EstimationResult run_estimation(const CVec &y, const EstimatorConfig &config, const ModelContext &ctx);

    // Amplitude posterior for fixed components: Sigma = (S^H Q^-1 S + Gamma)^-1, mu = Sigma S^H Q^-1 y.
    struct AmplitudePosterior
    {
        CVec mu;
        CMat sigma;
    };
    AmplitudePosterior amplitude_posterior(const CVec &y, const CMat &columns, const std::vector<double> &gamma,
                                           const StructuredCovariance &q);
}

#endif
