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

// uwbsr command line: simulate | estimate | threshold | evaluate
// Exit codes: 0 ok, 2 config error, 3 numerical failure.

#include "uwbsr/binary_io.hpp"
#include "uwbsr/config.hpp"
#include "uwbsr/harness.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>

using namespace uwbsr;

namespace
{
    constexpr int exit_config = 2;
    constexpr int exit_numerical = 3;

    std::filesystem::path sidecar_of(const std::filesystem::path &obs)
    {
        return std::filesystem::path(obs.string() + ".json");
    }

    StructuredCovariance nominal_covariance(const ExperimentConfig &x)
    {
        const ObservationGenerator gen(x.scenario);
        const SyntheticObservation obs = gen.draw(x.first_trial);
        if (obs.truth.dmc_power <= 0.0)
        {
            const auto N = static_cast<Eigen::Index>(x.scenario.spectrum.size());
            return StructuredCovariance(obs.truth.sigma2 * CMat::Identity(N, N), x.scenario.geometry.size());
        }
        return build_structured_covariance(gen.delay_correlation_matrix(), obs.truth.dmc_power, obs.truth.sigma2,
                                           x.scenario.geometry.size());
    }

    int cmd_simulate(const std::string &config, const std::string &out, std::uint64_t trial)
    {
        const AppConfig cfg = load_config(config);
        const ObservationGenerator gen(cfg.experiment.scenario);
        const SyntheticObservation obs = gen.draw(trial);
        write_vector(out, obs.y);
        std::ofstream(sidecar_of(out)) << truth_json(obs, static_cast<std::size_t>(obs.y.size()), 1) << '\n';
        for (const auto &l : gen.log())
            std::cerr << l << '\n';
        std::cout << "wrote " << out << " (" << obs.y.size() << " samples) and " << sidecar_of(out).string() << '\n';
        return 0;
    }

    int cmd_estimate(const std::string &config, const std::string &obs_path, const std::string &out,
                     const std::string &trace_path)
    {
        AppConfig cfg = load_config(config);
        ExperimentConfig &x = cfg.experiment;
        const CVec y = read_vector(obs_path);
        const ModelContext ctx = cfg.estimator_context();
        if (static_cast<std::size_t>(y.size()) != ctx.dimension())
            throw ConfigError("Observation length " + std::to_string(y.size()) + " does not match M * N = " +
                              std::to_string(ctx.dimension()) + ".");

        EstimatorConfig &ec = x.estimator;
        if (ec.eta_known && ec.eta_init_from_data)
        {
            // No sigma2 in the config: take the generating powers from the truth sidecar.
            double s2 = 0.0, p = 0.0;
            if (!read_truth_powers(sidecar_of(obs_path), s2, p))
                throw ConfigError("eta_known needs estimator.sigma2 (and dmc_power) or a truth sidecar next to the observation.");
            ec.eta.sigma2 = s2;
            ec.eta.dmc_power = p;
        }
        if (x.epsilon)
        {
            const StructuredCovariance q = build_structured_covariance(ec.eta, ctx.spectrum, ctx.domain, ctx.geometry.size());
            const double qc = excursion_constant_q(ctx.geometry, ctx.spectrum, q.q_tilde(), ctx.domain);
            ec.kappa = kappa_star(*x.epsilon, qc).kappa_star;
        }
        const EstimationResult r = run_estimation(y, ec, ctx);
        std::ofstream os(out);
        if (!os)
            throw std::runtime_error("Cannot write " + out);
        os << estimation_result_json(r) << '\n';
        if (!trace_path.empty())
            write_trace_csv(r, trace_path);
        std::cout << "detected " << r.components.size() << " components (kappa " << ec.kappa << "), wrote " << out << '\n';
        return 0;
    }

    int cmd_threshold(const std::string &config, double epsilon)
    {
        const AppConfig cfg = load_config(config);
        const ExperimentConfig &x = cfg.experiment;
        const StructuredCovariance q = nominal_covariance(x);
        const double qc = excursion_constant_q(x.scenario.geometry, x.scenario.spectrum, q.q_tilde(), x.scenario.domain);
        const ThresholdSpec t = kappa_star(epsilon, qc);

        // Deflection of a unit-magnitude component at the first placement delay (or mid-range).
        double defl = std::numeric_limits<double>::quiet_NaN();
        {
            const ModelContext ctx{x.scenario.geometry, x.scenario.spectrum, x.scenario.domain, true};
            DispersionVector psi(x.scenario.placement.fixed_delay.value_or(0.5 * x.scenario.domain.max_delay()), 0.0);
            double mag = x.scenario.placement.magnitude;
            if (!x.scenario.placement.fixed.empty())
            {
                psi = x.scenario.placement.fixed.front().psi;
                mag = std::abs(x.scenario.placement.fixed.front().alpha);
            }
            defl = mag * mag * q.quadratic(ctx.steering(psi));
        }

        std::cout << std::setprecision(10);
        std::cout << "q," << qc << "\nepsilon," << epsilon << "\nkappa_star," << t.kappa_star << "\nkappa_log_approx,"
                  << t.kappa_log_approx << "\ndeflection," << defl << "\n\n";
        std::cout << "kappa,p_false,p_miss\n";
        const double top = std::max(2.0 * t.kappa_star, 10.0);
        for (double k = 1.0; k <= top + 1e-12; k += 0.5)
            std::cout << k << ',' << p_false(k, qc) << ',' << p_miss(k, defl) << '\n';
        return 0;
    }

    int cmd_evaluate(const std::string &config, std::size_t trials, const std::string &out, std::size_t threads)
    {
        AppConfig cfg = load_config(config);
        if (trials > 0)
            cfg.experiment.trials = trials;
        if (threads > 0)
            cfg.experiment.threads = threads;
        const ExperimentResult r = run_experiment(cfg.experiment);
        write_experiment_outputs(r, cfg.experiment, out);
        const auto &s = r.summary;
        std::cout << std::setprecision(6) << "trials " << s.trials << ", failures " << s.failures << ", kappa " << s.kappa
                  << ", mean detected " << s.mean_detected << ", exact-K " << s.frequency_exact_k << '\n';
        if (s.false_rate.trials > 0)
            std::cout << "false detection " << s.false_rate.frequency << " (theory " << s.false_rate.theory << ")\n"
                      << "missed detection " << s.miss_rate.frequency << " (theory " << s.miss_rate.theory << ")\n";
        std::cout << "results in " << out << '\n';
        return 0;
    }
}

int main(int argc, char **argv)
{
    CLI::App app{"Joint detection and estimation of specular multipath components"};
    app.require_subcommand(1);

    std::string config, out, obs, trace;
    std::uint64_t trial = 0;
    double epsilon = 0.01;
    std::size_t trials = 0, threads = 0;

    auto *sim = app.add_subcommand("simulate", "Draw one synthetic observation");
    sim->add_option("--config", config, "JSON config")->required();
    sim->add_option("--out", out, "binary observation file")->required();
    sim->add_option("--trial", trial, "trial index (RNG stream)");

    auto *est = app.add_subcommand("estimate", "Estimate components from an observation");
    est->add_option("--config", config, "JSON config")->required();
    est->add_option("--obs", obs, "binary observation file")->required();
    est->add_option("--out", out, "result JSON")->required();
    est->add_option("--trace", trace, "optional iteration trace CSV");

    auto *thr = app.add_subcommand("threshold", "Excursion constant, kappa* and P_f / P_m table");
    thr->add_option("--config", config, "JSON config")->required();
    thr->add_option("--epsilon", epsilon, "target spurious-detection probability");

    auto *ev = app.add_subcommand("evaluate", "Monte-Carlo experiment");
    ev->add_option("--config", config, "JSON config")->required();
    ev->add_option("--trials", trials, "trial count (overrides metrics.trials)");
    ev->add_option("--out", out, "output directory")->required();
    ev->add_option("--threads", threads, "worker threads (0 = all cores)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }

    try
    {
        if (sim->parsed())
            return cmd_simulate(config, out, trial);
        if (est->parsed())
            return cmd_estimate(config, obs, out, trace);
        if (thr->parsed())
            return cmd_threshold(config, epsilon);
        if (ev->parsed())
            return cmd_evaluate(config, trials, out, threads);
    }
    catch (const ConfigError &e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    }
    catch (const NumericalError &e)
    {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    }
    catch (const std::invalid_argument &e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    }
    catch (const std::domain_error &e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
