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

#include "uwbsr/simulator.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace uwbsr
{
    std::string to_string(GenerationMode mode)
    {
        switch (mode)
        {
        case GenerationMode::kronecker:
            return "kronecker";
        case GenerationMode::full_wideband:
            return "full_wideband";
        case GenerationMode::awgn_only:
            return "awgn_only";
        }
        return "kronecker";
    }

    GenerationMode generation_mode_from_string(const std::string &name)
    {
        if (name == "kronecker")
            return GenerationMode::kronecker;
        if (name == "full_wideband")
            return GenerationMode::full_wideband;
        if (name == "awgn_only")
            return GenerationMode::awgn_only;
        throw std::invalid_argument("Unknown generation mode '" + name + "'.");
    }

    double specular_energy(const std::vector<SpecularComponent> &components, const ScenarioSpec &spec)
    {
        CVec sum = CVec::Zero(static_cast<Eigen::Index>(spec.geometry.size() * spec.spectrum.size()));
        for (const auto &c : components)
            sum += c.alpha * steering_vector(c.psi, spec.geometry, spec.spectrum, spec.wideband_signal);
        return sum.squaredNorm() / static_cast<double>(spec.geometry.size());
    }

    PowerLevels resolve_powers(const ScenarioSpec &spec, double es, double trace_qf)
    {
        PowerLevels p;
        const double snr = std::pow(10.0, spec.snr_db / 10.0);

        if (spec.mode == GenerationMode::awgn_only)
            p.dmc_power = 0.0;
        else if (spec.dmc_power)
            p.dmc_power = *spec.dmc_power;
        else if (std::isinf(spec.sdr_db) && spec.sdr_db > 0.0)
            p.dmc_power = 0.0;
        else
        {
            if (!(es > 0.0))
                throw std::invalid_argument("Without specular components the DMC power must be set explicitly.");
            p.dmc_power = es / (trace_qf * std::pow(10.0, spec.sdr_db / 10.0));
        }
        if (p.dmc_power < 0.0)
            throw std::invalid_argument("DMC power must be non-negative.");

        if (spec.sigma2)
            p.sigma2 = *spec.sigma2;
        else
        {
            const double total = es + p.dmc_power * trace_qf;
            if (!(total > 0.0))
                throw std::invalid_argument("Without signal or DMC energy the white-noise variance must be set explicitly.");
            p.sigma2 = total / snr;
        }
        if (!(p.sigma2 > 0.0))
            throw std::invalid_argument("White-noise variance must be positive.");
        return p;
    }

    std::pair<double, double> realized_ratios_db(double es, const PowerLevels &powers, double trace_qf)
    {
        const double dense = powers.dmc_power * trace_qf;
        const double sdr = dense > 0.0 ? 10.0 * std::log10(es / dense) : std::numeric_limits<double>::infinity();
        const double snr = 10.0 * std::log10((es + dense) / powers.sigma2);
        return {sdr, snr};
    }

    std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial)
    {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32), 0x75776273u};
        return std::mt19937_64(seq);
    }

    namespace
    {
        double uniform(std::mt19937_64 &rng, double lo, double hi)
        {
            return std::uniform_real_distribution<double>(lo, hi)(rng);
        }

        cplx amplitude(const PlacementRule &rule, std::mt19937_64 &rng)
        {
            const double phase = rule.random_phase ? uniform(rng, -pi, pi) : 0.0;
            return std::polar(rule.magnitude, phase);
        }

        DispersionVector uniform_psi(const PlacementRule &rule, const DispersionDomain &domain, std::mt19937_64 &rng)
        {
            const double tau = rule.fixed_delay ? *rule.fixed_delay : uniform(rng, 0.0, domain.max_delay());
            const double phi = uniform(rng, -pi, pi);
            return DispersionVector(tau, phi);
        }

        void fill_normal(std::mt19937_64 &rng, CVec &z)
        {
            // CN(0, 1): real and imaginary parts N(0, 1/2)
            std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
            for (Eigen::Index i = 0; i < z.size(); ++i)
            {
                const double re = nd(rng);
                const double im = nd(rng);
                z[i] = cplx(re, im);
            }
        }
    }

    std::vector<SpecularComponent> place_components(const PlacementRule &rule, const DispersionDomain &domain,
                                                    std::mt19937_64 &rng)
    {
        std::vector<SpecularComponent> out;
        switch (rule.kind)
        {
        case PlacementRule::Kind::fixed:
            return rule.fixed;
        case PlacementRule::Kind::uniform:
            for (std::size_t k = 0; k < rule.count; ++k)
            {
                SpecularComponent c;
                c.psi = uniform_psi(rule, domain, rng);
                c.alpha = amplitude(rule, rng);
                out.push_back(c);
            }
            return out;
        case PlacementRule::Kind::pair_distance:
        case PlacementRule::Kind::pair_angle:
            for (std::size_t attempt = 0; attempt < rule.max_attempts; ++attempt)
            {
                const DispersionVector first = uniform_psi(rule, domain, rng);
                DispersionVector second = first;
                if (rule.kind == PlacementRule::Kind::pair_distance)
                    second = DispersionVector(first.tau + rule.spacing / speed_of_light, first.phi);
                else
                    second = DispersionVector(first.tau, first.phi + rule.spacing);
                if (!domain.contains(second))
                    continue;
                SpecularComponent a, b;
                a.psi = first;
                b.psi = second;
                a.alpha = amplitude(rule, rng);
                b.alpha = amplitude(rule, rng);
                return {a, b};
            }
            throw SpacingOutOfDomain("Second component left the dispersion domain in every placement attempt.");
        }
        return out;
    }

    CMat robust_cholesky(const CMat &a, std::vector<std::string> *log)
    {
        Eigen::LLT<CMat> llt(a);
        if (llt.info() == Eigen::Success)
            return llt.matrixL();
        const double n = static_cast<double>(a.rows());
        double jitter = 1e-12 * a.trace().real() / n;
        for (int attempt = 0; attempt < 12; ++attempt, jitter *= 10.0)
        {
            CMat b = a;
            b.diagonal().array() += jitter;
            llt.compute(b);
            if (llt.info() == Eigen::Success)
            {
                if (log)
                    log->push_back("Cholesky needed diagonal jitter " + std::to_string(jitter) + ".");
                return llt.matrixL();
            }
        }
        throw NumericalError("Cholesky factorization failed even with diagonal jitter.");
    }

    ObservationGenerator::ObservationGenerator(ScenarioSpec spec) : spec_(std::move(spec))
    {
        if (spec_.mode == GenerationMode::awgn_only)
        {
            trace_qf_ = spec_.spectrum.energy();
            return;
        }
        qf_ = delay_correlation(spec_.spectrum, spec_.dps, spec_.domain);
        trace_qf_ = qf_.trace().real();
        if (spec_.mode == GenerationMode::kronecker)
            chol_ = robust_cholesky(qf_, &log_);
        else
        {
            FullDmcOptions opts;
            opts.wideband = true;
            const CMat qv = build_full_dmc_covariance(spec_.geometry, spec_.spectrum, spec_.dps, spec_.aps, 1.0, 0.0,
                                                      spec_.domain, opts);
            chol_ = robust_cholesky(qv, &log_);
        }
    }

    SyntheticObservation ObservationGenerator::draw(std::uint64_t trial) const
    {
        std::mt19937_64 rng = trial_rng(spec_.seed, trial);
        SyntheticObservation obs;
        obs.seed = spec_.seed;
        obs.trial = trial;
        obs.truth.components = place_components(spec_.placement, spec_.domain, rng);
        obs.truth.specular_energy = specular_energy(obs.truth.components, spec_);
        const PowerLevels p = resolve_powers(spec_, obs.truth.specular_energy, trace_qf_);
        obs.truth.sigma2 = p.sigma2;
        obs.truth.dmc_power = p.dmc_power;

        const std::size_t M = spec_.geometry.size(), N = spec_.spectrum.size();
        const auto D = static_cast<Eigen::Index>(M * N);
        obs.y = CVec::Zero(D);
        for (const auto &c : obs.truth.components)
            obs.y += c.alpha * steering_vector(c.psi, spec_.geometry, spec_.spectrum, spec_.wideband_signal);

        // Draw order is fixed: DMC first (always, so streams line up across modes), then white noise.
        CVec z(D);
        fill_normal(rng, z);
        if (spec_.mode != GenerationMode::awgn_only && p.dmc_power > 0.0)
        {
            const double scale = std::sqrt(p.dmc_power);
            if (spec_.mode == GenerationMode::kronecker)
            {
                const auto Ni = static_cast<Eigen::Index>(N);
                for (std::size_t m = 0; m < M; ++m)
                {
                    const CVec v = chol_.triangularView<Eigen::Lower>() * z.segment(static_cast<Eigen::Index>(m) * Ni, Ni);
                    obs.y.segment(static_cast<Eigen::Index>(m) * Ni, Ni) += scale * v;
                }
            }
            else
            {
                const CVec v = chol_.triangularView<Eigen::Lower>() * z;
                obs.y += scale * v;
            }
        }
        CVec w(D);
        fill_normal(rng, w);
        obs.y += std::sqrt(p.sigma2) * w;
        return obs;
    }

    SyntheticObservation draw_observation(const ScenarioSpec &spec, std::uint64_t trial)
    {
        return ObservationGenerator(spec).draw(trial);
    }
}
