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

#include "uwbsr/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace uwbsr
{
    using nlohmann::json;

    namespace
    {
        constexpr double deg = pi / 180.0;

        void check_keys(const json &section, const std::string &name, const std::set<std::string> &allowed)
        {
            if (!section.is_object())
                throw ConfigError("Section '" + name + "' must be an object.");
            for (auto it = section.begin(); it != section.end(); ++it)
                if (!allowed.count(it.key()))
                    throw ConfigError("Unknown key '" + it.key() + "' in section '" + name + "'.");
        }

        template <class T>
        T value(const json &section, const std::string &name, const std::string &key, const T &fallback)
        {
            if (!section.contains(key) || section.at(key).is_null())
                return fallback;
            try
            {
                return section.at(key).get<T>();
            }
            catch (const json::exception &)
            {
                throw ConfigError("Key '" + name + "." + key + "' has the wrong type.");
            }
        }

        template <class T>
        T required(const json &section, const std::string &name, const std::string &key)
        {
            if (!section.contains(key))
                throw ConfigError("Missing key '" + name + "." + key + "'.");
            return value<T>(section, name, key, T{});
        }

        template <class T>
        std::optional<T> optional_value(const json &section, const std::string &name, const std::string &key)
        {
            if (!section.contains(key) || section.at(key).is_null())
                return std::nullopt;
            return value<T>(section, name, key, T{});
        }

        const json &section_of(const json &doc, const std::string &name)
        {
            static const json empty = json::object();
            return doc.contains(name) ? doc.at(name) : empty;
        }

        ArrayGeometry parse_geometry(const json &g)
        {
            check_keys(g, "geometry", {"type", "rows", "cols", "count", "spacing_m", "orientation_deg", "positions_m"});
            const std::string type = value<std::string>(g, "geometry", "type", "grid");
            const double orientation = value<double>(g, "geometry", "orientation_deg", 0.0) * deg;
            if (type == "grid")
            {
                const auto rows = value<std::size_t>(g, "geometry", "rows", 3);
                const auto cols = value<std::size_t>(g, "geometry", "cols", 3);
                const double spacing = value<double>(g, "geometry", "spacing_m", 0.02);
                if (rows < 1 || cols < 1 || !(spacing > 0.0))
                    throw ConfigError("geometry: rows, cols must be >= 1 and spacing_m > 0.");
                return ArrayGeometry::uniform_grid(rows, cols, spacing, orientation);
            }
            if (type == "linear")
            {
                const auto count = value<std::size_t>(g, "geometry", "count", 3);
                const double spacing = value<double>(g, "geometry", "spacing_m", 0.02);
                if (count < 1 || !(spacing > 0.0))
                    throw ConfigError("geometry: count must be >= 1 and spacing_m > 0.");
                return ArrayGeometry::uniform_linear(count, spacing, orientation);
            }
            if (type == "positions")
            {
                const auto pts = required<std::vector<std::vector<double>>>(g, "geometry", "positions_m");
                std::vector<Vec2> pos;
                for (const auto &p : pts)
                {
                    if (p.size() != 2)
                        throw ConfigError("geometry.positions_m entries must be [x, y].");
                    pos.emplace_back(p[0], p[1]);
                }
                if (pos.empty())
                    throw ConfigError("geometry.positions_m must not be empty.");
                return ArrayGeometry(pos, orientation);
            }
            throw ConfigError("geometry.type must be grid, linear or positions.");
        }

        PulseSpectrum parse_spectrum(const json &s)
        {
            check_keys(s, "spectrum", {"shape", "rolloff", "bandwidth_hz", "center_frequency_hz", "samples"});
            const std::string shape = value<std::string>(s, "spectrum", "shape", "rrc");
            const double B = value<double>(s, "spectrum", "bandwidth_hz", 1.6e9);
            const double fc = value<double>(s, "spectrum", "center_frequency_hz", 6e9);
            const auto N = value<std::size_t>(s, "spectrum", "samples", 54);
            if (!(B > 0.0) || !(fc > 0.0) || N < 2)
                throw ConfigError("spectrum: bandwidth_hz, center_frequency_hz must be positive and samples >= 2.");
            if (shape == "rrc")
            {
                const double r = value<double>(s, "spectrum", "rolloff", 0.6);
                if (!(r >= 0.0 && r <= 1.0))
                    throw ConfigError("spectrum.rolloff must lie in [0, 1].");
                return PulseSpectrum::root_raised_cosine(r, B, fc, N);
            }
            if (shape == "flat")
                return PulseSpectrum::flat(B, fc, N);
            throw ConfigError("spectrum.shape must be rrc or flat.");
        }

        PlacementRule parse_placement(const json &p)
        {
            check_keys(p, "scenario.placement",
                       {"rule", "count", "delay_s", "magnitude", "random_phase", "spacing_m", "spacing_deg", "components",
                        "max_attempts"});
            PlacementRule r;
            const std::string rule = value<std::string>(p, "placement", "rule", "uniform");
            r.magnitude = value<double>(p, "placement", "magnitude", 1.0);
            r.random_phase = value<bool>(p, "placement", "random_phase", true);
            r.fixed_delay = optional_value<double>(p, "placement", "delay_s");
            r.max_attempts = value<std::size_t>(p, "placement", "max_attempts", 100);
            if (rule == "uniform")
            {
                r.kind = PlacementRule::Kind::uniform;
                r.count = value<std::size_t>(p, "placement", "count", 1);
            }
            else if (rule == "pair")
            {
                const bool has_d = p.contains("spacing_m"), has_a = p.contains("spacing_deg");
                if (has_d == has_a)
                    throw ConfigError("scenario.placement: pair rule needs exactly one of spacing_m, spacing_deg.");
                if (has_d)
                {
                    r.kind = PlacementRule::Kind::pair_distance;
                    r.spacing = value<double>(p, "placement", "spacing_m", 0.0);
                }
                else
                {
                    r.kind = PlacementRule::Kind::pair_angle;
                    r.spacing = value<double>(p, "placement", "spacing_deg", 0.0) * deg;
                }
            }
            else if (rule == "fixed")
            {
                r.kind = PlacementRule::Kind::fixed;
                const json comps = p.contains("components") ? p.at("components") : json::array();
                if (!comps.is_array())
                    throw ConfigError("scenario.placement.components must be an array.");
                for (const auto &c : comps)
                {
                    check_keys(c, "scenario.placement.components[]", {"tau_s", "phi_deg", "amp_re", "amp_im"});
                    SpecularComponent sc;
                    sc.psi = DispersionVector(required<double>(c, "component", "tau_s"),
                                              required<double>(c, "component", "phi_deg") * deg);
                    sc.alpha = cplx(value<double>(c, "component", "amp_re", 1.0), value<double>(c, "component", "amp_im", 0.0));
                    r.fixed.push_back(sc);
                }
            }
            else
                throw ConfigError("scenario.placement.rule must be uniform, pair or fixed.");
            return r;
        }

        json component_json(const DispersionVector &psi, cplx alpha)
        {
            return {{"tau_s", psi.tau}, {"phi_rad", psi.phi}, {"amp_re", alpha.real()}, {"amp_im", alpha.imag()}};
        }
    }

    ModelContext AppConfig::estimator_context() const
    {
        return ModelContext{experiment.scenario.geometry, experiment.scenario.spectrum, experiment.scenario.domain,
                            experiment.estimator_wideband};
    }

    AppConfig parse_config(const std::string &text)
    {
        json doc;
        try
        {
            doc = json::parse(text);
        }
        catch (const json::parse_error &e)
        {
            throw ConfigError(std::string("Config is not valid JSON: ") + e.what());
        }
        check_keys(doc, "<root>", {"geometry", "spectrum", "dmc", "scenario", "estimator", "metrics"});

        AppConfig cfg;
        ExperimentConfig &x = cfg.experiment;
        ScenarioSpec &sc = x.scenario;

        try
        {
            sc.geometry = parse_geometry(section_of(doc, "geometry"));
            sc.spectrum = parse_spectrum(section_of(doc, "spectrum"));

            const json &d = section_of(doc, "dmc");
            check_keys(d, "dmc", {"beta_s", "theta_s", "xi", "max_delay_s"});
            const auto T = optional_value<double>(d, "dmc", "max_delay_s");
            try
            {
                sc.domain = T ? DispersionDomain(*T, sc.spectrum) : DispersionDomain::unambiguous(sc.spectrum);
                sc.dps = GammaDps(value<double>(d, "dmc", "beta_s", 1.0 / speed_of_light),
                                  value<double>(d, "dmc", "theta_s", 5e-9), value<double>(d, "dmc", "xi", 1.8),
                                  sc.domain.max_delay());
            }
            catch (const std::invalid_argument &e)
            {
                throw ConfigError(std::string("dmc: ") + e.what());
            }

            const json &s = section_of(doc, "scenario");
            check_keys(s, "scenario", {"mode", "snr_db", "sdr_db", "seed", "dmc_power", "sigma2", "placement", "wideband"});
            try
            {
                sc.mode = generation_mode_from_string(value<std::string>(s, "scenario", "mode", "kronecker"));
            }
            catch (const std::invalid_argument &e)
            {
                throw ConfigError(std::string("scenario.mode: ") + e.what());
            }
            sc.snr_db = value<double>(s, "scenario", "snr_db", 20.0);
            if (!std::isfinite(sc.snr_db))
                throw ConfigError("scenario.snr_db must be finite.");
            // Missing / null sdr_db means no DMC.
            sc.sdr_db = value<double>(s, "scenario", "sdr_db", std::numeric_limits<double>::infinity());
            sc.seed = value<std::uint64_t>(s, "scenario", "seed", 1);
            sc.dmc_power = optional_value<double>(s, "scenario", "dmc_power");
            sc.sigma2 = optional_value<double>(s, "scenario", "sigma2");
            sc.wideband_signal = value<bool>(s, "scenario", "wideband", true);
            sc.placement = parse_placement(s.contains("placement") ? s.at("placement") : json::object());
            if (sc.placement.kind == PlacementRule::Kind::fixed)
                for (const auto &c : sc.placement.fixed)
                    if (!sc.domain.contains(c.psi))
                        throw ConfigError("scenario.placement: fixed component outside the dispersion domain.");
            if (sc.placement.fixed_delay && !(*sc.placement.fixed_delay >= 0.0 && *sc.placement.fixed_delay < sc.domain.max_delay()))
                throw ConfigError("scenario.placement.delay_s outside [0, T).");

            const json &e = section_of(doc, "estimator");
            check_keys(e, "estimator",
                       {"max_components", "kappa", "epsilon", "eta_known", "wideband", "max_outer_iterations", "tolerance",
                        "delay_oversampling", "angle_points", "refine_candidates", "sigma2", "dmc_power",
                        "max_eta_evaluations"});
            EstimatorConfig &ec = x.estimator;
            ec.max_components = value<std::size_t>(e, "estimator", "max_components", 10);
            ec.kappa = value<double>(e, "estimator", "kappa", 1.0);
            x.epsilon = optional_value<double>(e, "estimator", "epsilon");
            ec.eta_known = value<bool>(e, "estimator", "eta_known", true);
            x.estimator_wideband = value<bool>(e, "estimator", "wideband", true);
            ec.max_outer_iterations = value<std::size_t>(e, "estimator", "max_outer_iterations", 200);
            ec.tolerance = value<double>(e, "estimator", "tolerance", 1e-6);
            ec.delay_oversampling = value<double>(e, "estimator", "delay_oversampling", 4.0);
            ec.angle_points = value<std::size_t>(e, "estimator", "angle_points", 72);
            ec.refine_candidates = value<std::size_t>(e, "estimator", "refine_candidates", 3);
            ec.max_eta_evaluations = value<std::size_t>(e, "estimator", "max_eta_evaluations", 400);
            ec.eta.dps = sc.dps;
            const auto s2 = optional_value<double>(e, "estimator", "sigma2");
            const auto pw = optional_value<double>(e, "estimator", "dmc_power");
            if (s2)
            {
                ec.eta.sigma2 = *s2;
                ec.eta_init_from_data = false;
            }
            if (pw)
                ec.eta.dmc_power = *pw;
            if (ec.max_components < 1)
                throw ConfigError("estimator.max_components must be >= 1.");
            if (!(ec.kappa >= 1.0))
                throw ConfigError("estimator.kappa must be >= 1.");
            if (x.epsilon && !(*x.epsilon > 0.0))
                throw ConfigError("estimator.epsilon must be positive.");
            if (ec.delay_oversampling < 2.0)
                throw ConfigError("estimator.delay_oversampling must be >= 2 (delay step <= 1/(2B)).");

            const json &m = section_of(doc, "metrics");
            check_keys(m, "metrics",
                       {"trials", "first_trial", "region_multiplier", "ospa_cutoff", "ospa_order", "rrl_distance_m",
                        "rrl_angle_deg", "threads", "compute_crb"});
            x.trials = value<std::size_t>(m, "metrics", "trials", 100);
            x.first_trial = value<std::uint64_t>(m, "metrics", "first_trial", 0);
            x.metrics.region_multiplier = value<double>(m, "metrics", "region_multiplier", 5.0);
            x.metrics.ospa_cutoff = value<double>(m, "metrics", "ospa_cutoff", 2.0);
            x.metrics.ospa_order = value<double>(m, "metrics", "ospa_order", 2.0);
            x.metrics.rrl_distance = value<double>(m, "metrics", "rrl_distance_m", 0.3);
            x.metrics.rrl_angle = value<double>(m, "metrics", "rrl_angle_deg", 56.0) * deg;
            x.threads = value<std::size_t>(m, "metrics", "threads", 0);
            x.compute_crb = value<bool>(m, "metrics", "compute_crb", true);
            if (x.trials < 1)
                throw ConfigError("metrics.trials must be >= 1.");
            if (!(x.metrics.region_multiplier > 0.0))
                throw ConfigError("metrics.region_multiplier must be positive.");
            if (!(x.metrics.ospa_cutoff > 0.0) || !(x.metrics.ospa_order >= 1.0))
                throw ConfigError("metrics: ospa_cutoff must be positive and ospa_order >= 1.");
        }
        catch (const json::exception &e)
        {
            throw ConfigError(std::string("Config error: ") + e.what());
        }
        return cfg;
    }

    AppConfig load_config(const std::filesystem::path &path)
    {
        std::ifstream is(path);
        if (!is)
            throw ConfigError("Cannot read config file " + path.string() + ".");
        std::stringstream ss;
        ss << is.rdbuf();
        return parse_config(ss.str());
    }

    std::string estimation_result_json(const EstimationResult &r)
    {
        json j;
        j["components"] = json::array();
        for (std::size_t k = 0; k < r.components.size(); ++k)
        {
            const cplx a = static_cast<Eigen::Index>(k) < r.mu.size() ? r.mu[static_cast<Eigen::Index>(k)] : cplx(0.0, 0.0);
            json c = component_json(r.components[k], a);
            c["gamma"] = r.gammas[k];
            j["components"].push_back(c);
        }
        j["eta_hat"] = {{"sigma2", r.eta_hat.sigma2},
                        {"dmc_power", r.eta_hat.dmc_power},
                        {"beta_s", r.eta_hat.dps.beta()},
                        {"theta_s", r.eta_hat.dps.theta()},
                        {"xi", r.eta_hat.dps.xi()}};
        json sigma = json::array();
        for (Eigen::Index a = 0; a < r.sigma.rows(); ++a)
        {
            json row = json::array();
            for (Eigen::Index b = 0; b < r.sigma.cols(); ++b)
                row.push_back({r.sigma(a, b).real(), r.sigma(a, b).imag()});
            sigma.push_back(row);
        }
        j["sigma"] = sigma;
        j["nll"] = r.nll;
        j["iterations"] = r.iterations;
        j["converged"] = r.converged;
        j["log"] = r.log;
        json trace = json::array();
        for (const auto &t : r.trace)
            trace.push_back({{"iteration", t.iteration},
                             {"step", t.step},
                             {"component", t.component},
                             {"nll", t.nll},
                             {"objective", t.objective},
                             {"active", t.active}});
        j["trace"] = trace;
        return j.dump(2);
    }

    void write_trace_csv(const EstimationResult &r, const std::filesystem::path &path)
    {
        std::ofstream os(path);
        if (!os)
            throw std::runtime_error("Cannot write " + path.string());
        os << std::setprecision(15) << "iteration,step,component,nll,objective,active\n";
        for (const auto &t : r.trace)
            os << t.iteration << ',' << t.step << ',' << t.component << ',' << t.nll << ',' << t.objective << ','
               << t.active << '\n';
    }

    std::string truth_json(const SyntheticObservation &obs, std::size_t rows, std::size_t cols)
    {
        json j;
        j["seed"] = obs.seed;
        j["trial"] = obs.trial;
        j["rows"] = rows;
        j["cols"] = cols;
        j["sigma2"] = obs.truth.sigma2;
        j["dmc_power"] = obs.truth.dmc_power;
        j["specular_energy"] = obs.truth.specular_energy;
        j["components"] = json::array();
        for (const auto &c : obs.truth.components)
            j["components"].push_back(component_json(c.psi, c.alpha));
        return j.dump(2);
    }

    bool read_truth_powers(const std::filesystem::path &path, double &sigma2, double &dmc_power)
    {
        std::ifstream is(path);
        if (!is)
            return false;
        try
        {
            const json j = json::parse(is);
            sigma2 = j.at("sigma2").get<double>();
            dmc_power = j.at("dmc_power").get<double>();
            return true;
        }
        catch (const json::exception &e)
        {
            throw ConfigError("Malformed truth sidecar " + path.string() + ": " + e.what());
        }
    }
}
