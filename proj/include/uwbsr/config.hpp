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

#ifndef UWBSR_CONFIG_HPP
#define UWBSR_CONFIG_HPP

#include "uwbsr/harness.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace uwbsr
{
    // Malformed or inconsistent configuration (CLI exit code 2).
    class ConfigError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    // Parsed JSON document with sections {geometry, spectrum, dmc, scenario, estimator, metrics}.
    // Angles are degrees in the file and radians here.
    struct AppConfig
    {
        ExperimentConfig experiment;

        ModelContext estimator_context() const;
    };

    AppConfig parse_config(const std::string &json_text);
    AppConfig load_config(const std::filesystem::path &path);

    // Components as {tau_s, phi_rad, amp_re, amp_im, gamma}, plus eta_hat, nll and the iteration trace.
    std::string estimation_result_json(const EstimationResult &result);
    void write_trace_csv(const EstimationResult &result, const std::filesystem::path &path);

    std::string truth_json(const SyntheticObservation &obs, std::size_t rows, std::size_t cols);
    // Reads sigma2 / dmc_power back from a truth sidecar; false if the file is missing.
    bool read_truth_powers(const std::filesystem::path &path, double &sigma2, double &dmc_power);
}

#endif
