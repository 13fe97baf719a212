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

#ifndef UWBSR_HARNESS_HPP
#define UWBSR_HARNESS_HPP

#include "uwbsr/estimator.hpp"
#include "uwbsr/simulator.hpp"
#include "uwbsr/threshold.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace uwbsr
{
    struct MetricSettings
    {
        double region_multiplier = 5.0;
        double ospa_cutoff = 2.0; // in resolution-normalized units
        double ospa_order = 2.0;
        double rrl_distance = 0.3;            // m
        double rrl_angle = 56.0 * pi / 180.0; // rad
    };

    struct CrbResult
    {
        RVec tau_var; // s^2, per component
        RVec phi_var; // rad^2
        RVec alpha_var; // var(Re) + var(Im), per component
        RMat fim;     // ordering (tau_k, phi_k, Re alpha_k, Im alpha_k) per component
    };

    // F = 2 Re{J^H Q^-1 J} for mu = S(psi) alpha; CRB = diag(F^-1). Throws SingularFIM when F is rank deficient.
    CrbResult crb(const std::vector<SpecularComponent> &truth, const StructuredCovariance &q, const ModelContext &ctx);

    struct Detection
    {
        DispersionVector psi;
        cplx alpha{0.0, 0.0};
    };

    struct EventFlags
    {
        bool false_detection = false;
        bool missed_detection = false;
    };

    // Rectangular region around psi_true with half-sides multiplier * sqrt(CRB). delay_period > 0 wraps delays.
    EventFlags classify_events(const std::vector<Detection> &detections, const DispersionVector &truth, double crb_tau,
                               double crb_phi, double multiplier, double delay_period = 0.0);

    struct PairError
    {
        std::size_t detection = 0;
        std::size_t truth = 0;
        double distance_error = 0.0; // m, c * (tau_hat - tau)
        double angle_error = 0.0;    // rad, wrapped
        double amplitude_error = 0.0; // |alpha_hat| - |alpha|
        double cost = 0.0;            // cut-off normalized distance
    };

    struct OspaResult
    {
        double distance = 0.0;
        std::vector<PairError> pairs; // matched pairs with cost below the cutoff
    };

    OspaResult ospa_associate(const std::vector<Detection> &detections, const std::vector<SpecularComponent> &truth,
                              const MetricSettings &metrics, double delay_period = 0.0);

    // Minimum-cost assignment for an r x c cost matrix (r <= c or r > c); returns column per row or -1.
    std::vector<long> hungarian(const RMat &cost);

    // Central 95% acceptance region [lo, hi] of Binomial(n, p).
    std::pair<std::size_t, std::size_t> binomial_acceptance(std::size_t n, double p, double level = 0.95);
    // Clopper-Pearson interval for k successes in n.
    std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double level = 0.95);

    struct ExperimentConfig
    {
        ScenarioSpec scenario;
        EstimatorConfig estimator;
        bool estimator_wideband = true;
        std::optional<double> epsilon; // when set, kappa = kappa*(epsilon)
        std::size_t trials = 100;
        std::uint64_t first_trial = 0;
        MetricSettings metrics;
        std::size_t threads = 0; // 0 = hardware concurrency
        bool compute_crb = true;
    };

    struct TrialRecord
    {
        std::uint64_t trial = 0;
        std::string status = "ok";
        std::vector<Detection> detections;
        std::vector<SpecularComponent> truth;
        double sigma2 = 0.0, dmc_power = 0.0;
        double sigma2_hat = 0.0, dmc_power_hat = 0.0;
        EventFlags events;
        bool events_valid = false; // single-component truth only
        double ospa = 0.0;
        std::vector<PairError> pairs;
        double crb_tau = 0.0, crb_phi = 0.0; // first component (NaN when unavailable)
        std::vector<double> crb_tau_all, crb_phi_all;
        double deflection = 0.0;             // first component
        double nll = 0.0;
        std::size_t iterations = 0;
        double runtime_s = 0.0;
    };

    struct RateSummary
    {
        std::size_t count = 0, trials = 0;
        double frequency = 0.0;
        double theory = 0.0;
        std::pair<double, double> ci{0.0, 0.0};          // Clopper-Pearson on the empirical frequency
        std::pair<std::size_t, std::size_t> theory_region{0, 0}; // binomial acceptance region of the theory
        bool within = false;
    };

    struct ExperimentSummary
    {
        std::size_t trials = 0, failures = 0;
        double kappa = 1.0;
        double q = 0.0;
        double mean_detected = 0.0;
        double frequency_exact_k = 0.0;
        std::size_t exact_k_trials = 0;
        RateSummary false_rate, miss_rate;
        double rmse_distance = 0.0, rmse_angle = 0.0;         // over exactly-K trials
        double root_crb_distance = 0.0, root_crb_angle = 0.0; // sqrt of the mean CRB over the same trials
        double amplitude_mean = 0.0, amplitude_rmse = 0.0;
        double mean_ospa = 0.0;
        double mean_deflection = 0.0;
        double runtime_s = 0.0;
    };

    struct ExperimentResult
    {
        ExperimentSummary summary;
        std::vector<TrialRecord> records;
    };

    // Draw, estimate, classify and associate every trial on a worker pool; reduction follows trial order.
    ExperimentResult run_experiment(const ExperimentConfig &config);

    // q from the nominal structured covariance of the scenario (K components of magnitude |alpha| at the
    // scenario powers), used when the threshold is specified through epsilon.
    double nominal_excursion_constant(const ExperimentConfig &config);

    // trials.csv, summary.json and schema.json under `dir`.
    void write_experiment_outputs(const ExperimentResult &result, const ExperimentConfig &config,
                                  const std::filesystem::path &dir);
}

#endif
