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

#ifndef UWBSR_SIMULATOR_HPP
#define UWBSR_SIMULATOR_HPP

#include "uwbsr/core_model.hpp"
#include "uwbsr/noise_model.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace uwbsr
{
    enum class GenerationMode
    {
        kronecker,     // v_m ~ CN(0, P Q_f) independently per antenna
        full_wideband, // v ~ CN(0, Q_v) from the general wideband DMC covariance
        awgn_only      // P = 0
    };

    std::string to_string(GenerationMode mode);
    GenerationMode generation_mode_from_string(const std::string &name);

    struct SpecularComponent
    {
        cplx alpha{1.0, 0.0};
        DispersionVector psi;
    };

    struct PlacementRule
    {
        enum class Kind
        {
            fixed,
            uniform,
            pair_distance, // psi_2 = psi_1 + [d / c, 0]
            pair_angle     // psi_2 = psi_1 + [0, dphi]
        };

        Kind kind = Kind::uniform;
        std::vector<SpecularComponent> fixed;
        std::size_t count = 1;              // uniform rule
        std::optional<double> fixed_delay;  // uniform/pair rules: keep tau_1 at this value, draw only angles
        double magnitude = 1.0;             // |alpha| for drawn components
        bool random_phase = true;
        double spacing = 0.0; // meters (pair_distance) or radians (pair_angle)
        std::size_t max_attempts = 100;
    };

    struct ScenarioSpec
    {
        ArrayGeometry geometry;
        PulseSpectrum spectrum;
        DispersionDomain domain;
        GammaDps dps;
        AngularDensity aps = uniform_aps();
        PlacementRule placement;
        double snr_db = 20.0;
        double sdr_db = 0.0;
        GenerationMode mode = GenerationMode::kronecker;
        std::optional<double> dmc_power;   // explicit P, overrides the SDR
        std::optional<double> sigma2;      // explicit sigma^2, overrides the SNR
        std::uint64_t seed = 1;
        bool wideband_signal = true;       // the specular part is always generated with this steering model
    };

    struct PowerLevels
    {
        double sigma2 = 0.0;
        double dmc_power = 0.0;
    };

    // Specular energy E_s = (1/M) |sum_k alpha_k s(psi_k)|^2.
    double specular_energy(const std::vector<SpecularComponent> &components, const ScenarioSpec &spec);

    // Solves SDR = E_s / (P tr Q_f) and SNR = (E_s + P tr Q_f) / sigma^2 (both in dB) for P and sigma^2.
    // With no specular energy the DMC power must be given explicitly.
    PowerLevels resolve_powers(const ScenarioSpec &spec, double specular_energy, double trace_qf = 1.0);

    // Realized SDR/SNR in dB for given powers; inverse of resolve_powers.
    std::pair<double, double> realized_ratios_db(double specular_energy, const PowerLevels &powers, double trace_qf = 1.0);

    std::vector<SpecularComponent> place_components(const PlacementRule &rule, const DispersionDomain &domain,
                                                    std::mt19937_64 &rng);

    struct GroundTruth
    {
        std::vector<SpecularComponent> components;
        double sigma2 = 0.0;
        double dmc_power = 0.0;
        double specular_energy = 0.0;
    };

    struct SyntheticObservation
    {
        CVec y;
        GroundTruth truth;
        std::uint64_t seed = 0;
        std::uint64_t trial = 0;
    };

    // Independent stream per (seed, trial); results do not depend on the order trials run in.
    std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial);

    // Holds the factorized DMC covariance so repeated draws only cost a triangular product.
    class ObservationGenerator
    {
    public:
        explicit ObservationGenerator(ScenarioSpec spec);

        const ScenarioSpec &spec() const { return spec_; }
        // Unit-power delay correlation Q_f (trace 1 for a normalized spectrum).
        const CMat &delay_correlation_matrix() const { return qf_; }
        double trace_qf() const { return trace_qf_; }
        const std::vector<std::string> &log() const { return log_; }

        SyntheticObservation draw(std::uint64_t trial) const;

    private:
        ScenarioSpec spec_;
        CMat qf_;
        double trace_qf_ = 0.0;
        CMat chol_;        // lower factor of Q_f (kronecker) or of the unit-power Q_v (full_wideband)
        std::vector<std::string> log_;
    };

    SyntheticObservation draw_observation(const ScenarioSpec &spec, std::uint64_t trial);

    // Lower Cholesky factor; on failure adds jitter 1e-12 * trace / n (growing tenfold) until it succeeds.
    CMat robust_cholesky(const CMat &a, std::vector<std::string> *log = nullptr);
}

#endif
