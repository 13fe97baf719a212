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

// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance [--criteria 1,2,...] [--trials-scale s] [--threads n]

#include "test_support.hpp"

#include <CLI11.hpp>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <chrono>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

using namespace uwbsr;
using namespace uwbsr::testing;

namespace
{
    struct Outcome
    {
        bool pass = false;
        std::string detail;
    };

    struct Options
    {
        double trials_scale = 1.0;
        std::size_t threads = 0;
    };

    using Clock = std::chrono::steady_clock;

    double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

    std::size_t scaled(std::size_t n, const Options &o)
    {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * o.trials_scale)));
    }

    std::string fmt(double v, int prec = 4)
    {
        std::ostringstream os;
        os << std::setprecision(prec) << v;
        return os.str();
    }

    ExperimentConfig base_experiment(ArrayGeometry g, std::size_t n, double snr_db, double sdr_db, const Options &o)
    {
        ExperimentConfig x;
        ScenarioSpec &sc = x.scenario;
        sc.geometry = std::move(g);
        sc.spectrum = rrc(n);
        sc.domain = DispersionDomain::unambiguous(sc.spectrum);
        sc.dps = reference_dps(sc.spectrum);
        sc.snr_db = snr_db;
        sc.sdr_db = sdr_db;
        sc.mode = GenerationMode::kronecker;
        sc.seed = 20240601;
        x.estimator.eta_known = true;
        x.threads = o.threads;
        return x;
    }

    // 1. Closed-form excursion constants for flat spectrum and white noise.
    Outcome criterion1(const Options &)
    {
        const auto t0 = Clock::now();
        const PulseSpectrum s = PulseSpectrum::flat(1.6e9, 6e9, 27);
        const DispersionDomain dom = DispersionDomain::unambiguous(s);
        const CMat white = CMat::Identity(27, 27);
        const double n = 27.0, fc = 6e9, w = 0.02;

        double worst = 0.0;
        for (const ArrayGeometry &g : {ArrayGeometry::uniform_linear(5, 0.02), ArrayGeometry::uniform_grid(5, 2, 0.02, 0.4),
                                       ArrayGeometry::uniform_grid(3, 3, 0.02)})
        {
            // fc int sqrt((1/M) sum d_m^2) dphi by a dense periodic trapezoid
            const std::size_t nodes = 20000;
            double integral = 0.0;
            for (std::size_t i = 0; i < nodes; ++i)
            {
                const double phi = two_pi * static_cast<double>(i) / nodes;
                double acc = 0.0;
                for (std::size_t m = 0; m < g.size(); ++m)
                    acc += std::pow(relative_delay_derivative(phi, g, m), 2);
                integral += std::sqrt(acc / static_cast<double>(g.size()));
            }
            integral *= fc * two_pi / nodes;
            const double closed = 4.0 * pi * std::sqrt((n * n - 1.0) / 12.0) * integral;
            const double numeric = excursion_constant_q(g, s, white, dom);
            worst = std::max(worst, std::abs(numeric / closed - 1.0));
        }
        const double M = 9.0;
        const double square = 8.0 * pi * pi * std::sqrt((n * n - 1.0) / 12.0) *
                              std::sqrt(fc * fc * w * w / (speed_of_light * speed_of_light) * (M - 1.0) / 12.0);
        const double numeric = excursion_constant_q(ArrayGeometry::uniform_grid(3, 3, 0.02), s, white, dom);
        const double sq_err = std::abs(numeric / square - 1.0);
        const double rt = seconds_since(t0);
        return {worst <= 1e-6 && sq_err <= 1e-6 && rt < 1.0,
                "general rel err " + fmt(worst, 3) + ", square q " + fmt(numeric, 10) + " vs " + fmt(square, 10) +
                    " (rel " + fmt(sq_err, 3) + "), " + fmt(rt, 3) + " s"};
    }

    // 2. Lambert-W threshold identities.
    Outcome criterion2(const Options &)
    {
        const auto t0 = Clock::now();
        double worst = 0.0;
        double at_e = 0.0;
        for (double q : {10.0, 200.99, 378.5, 5000.0})
        {
            at_e = std::max(at_e, std::abs(kappa_star(q / std::exp(1.0), q).kappa_star - 1.0));
            for (double r = 1e-1; r >= 1e-8 * 0.999; r /= 10.0)
            {
                const double k = kappa_star(r * q, q).kappa_star;
                worst = std::max(worst, std::abs(q * k * std::exp(-k) / (r * q) - 1.0));
            }
        }
        const double rt = seconds_since(t0);
        return {at_e <= 1e-9 && worst <= 1e-9 && rt < 1.0,
                "|kappa*(q/e) - 1| = " + fmt(at_e, 3) + ", max rel identity err " + fmt(worst, 3) + ", " + fmt(rt, 3) + " s"};
    }

    // Single-component calibration study shared by criteria 3 and 4.
    ExperimentConfig calibration_setup(double snr_db, const Options &o)
    {
        ExperimentConfig x = base_experiment(ArrayGeometry::uniform_grid(5, 2, 0.02), 54, snr_db, -5.0, o);
        x.scenario.placement.kind = PlacementRule::Kind::uniform;
        x.scenario.placement.count = 1;
        x.scenario.placement.fixed_delay = 10e-9;
        x.estimator.max_components = 10;
        x.trials = scaled(500, o);
        return x;
    }

    const std::vector<double> calibration_targets = {0.3, 0.15, 0.08, 0.04, 0.02};

    Outcome criterion3(const Options &o)
    {
        const auto t0 = Clock::now();
        ExperimentConfig x = calibration_setup(20.0, o);
        const double q = nominal_excursion_constant(x);
        std::size_t inside = 0;
        std::ostringstream os;
        os << "q " << fmt(q, 6) << ";";
        for (std::size_t i = 0; i < calibration_targets.size(); ++i)
        {
            x.estimator.kappa = kappa_star(calibration_targets[i], q).kappa_star;
            x.first_trial = 100000 * (i + 1);
            const ExperimentResult r = run_experiment(x);
            const RateSummary &f = r.summary.false_rate;
            inside += f.within ? 1 : 0;
            os << " kappa " << fmt(x.estimator.kappa) << ": " << f.count << "/" << f.trials << " vs theory "
               << fmt(f.theory, 3) << " [" << f.theory_region.first << "," << f.theory_region.second << "]"
               << (f.within ? "" : " OUT") << ";";
        }
        os << " " << inside << "/5 inside, " << fmt(seconds_since(t0), 4) << " s";
        return {inside >= 4, os.str()};
    }

    Outcome criterion4(const Options &o)
    {
        const auto t0 = Clock::now();
        ExperimentConfig x = calibration_setup(10.0, o);
        const double q = nominal_excursion_constant(x);
        std::size_t inside = 0;
        double deflection = 0.0;
        std::ostringstream os;
        os << "q " << fmt(q, 6) << ";";
        for (std::size_t i = 0; i < calibration_targets.size(); ++i)
        {
            x.estimator.kappa = kappa_star(calibration_targets[i], q).kappa_star;
            x.first_trial = 100000 * (i + 1);
            const ExperimentResult r = run_experiment(x);
            deflection = r.summary.mean_deflection;
            const RateSummary &m = r.summary.miss_rate;
            inside += m.within ? 1 : 0;
            os << " kappa " << fmt(x.estimator.kappa) << ": " << m.count << "/" << m.trials << " vs theory "
               << fmt(m.theory, 3) << " [" << m.theory_region.first << "," << m.theory_region.second << "]"
               << (m.within ? "" : " OUT") << ";";
        }
        os << " mean deflection " << fmt(10.0 * std::log10(deflection), 3) << " dB, " << inside
           << "/5 inside, " << fmt(seconds_since(t0), 4) << " s";
        return {inside >= 4, os.str()};
    }

    ExperimentConfig two_component_setup(double snr_db, PlacementRule::Kind kind, double spacing, const Options &o)
    {
        ExperimentConfig x = base_experiment(ArrayGeometry::uniform_grid(3, 3, 0.02), 54, snr_db, 6.0, o);
        x.scenario.placement.kind = kind;
        x.scenario.placement.spacing = spacing;
        x.estimator.max_components = 10;
        x.epsilon = 1e-3;
        x.trials = scaled(100, o);
        return x;
    }

    Outcome criterion5(const Options &o)
    {
        const auto t0 = Clock::now();
        const ExperimentResult d =
            run_experiment(two_component_setup(50.0, PlacementRule::Kind::pair_distance, 0.15, o));
        const ExperimentResult a =
            run_experiment(two_component_setup(50.0, PlacementRule::Kind::pair_angle, 20.0 * pi / 180.0, o));
        const double fd = d.summary.frequency_exact_k, fa = a.summary.frequency_exact_k;
        return {fd >= 0.8 && fa >= 0.8,
                "exactly-2 frequency " + fmt(fd, 3) + " at 0.15 m (mean count " + fmt(d.summary.mean_detected, 3) + "), " +
                    fmt(fa, 3) + " at 20 deg (mean count " + fmt(a.summary.mean_detected, 3) + "), kappa " +
                    fmt(d.summary.kappa) + ", " + fmt(seconds_since(t0), 4) + " s"};
    }

    Outcome criterion6(const Options &o)
    {
        const auto t0 = Clock::now();
        const MetricSettings m;
        const ExperimentResult d =
            run_experiment(two_component_setup(30.0, PlacementRule::Kind::pair_distance, 0.8 * m.rrl_distance, o));
        const ExperimentResult a =
            run_experiment(two_component_setup(30.0, PlacementRule::Kind::pair_angle, 0.8 * m.rrl_angle, o));
        const double rd = d.summary.rmse_distance / d.summary.root_crb_distance;
        const double ra = a.summary.rmse_angle / a.summary.root_crb_angle;
        // the other coordinate of each study as additional information
        const double rd2 = a.summary.rmse_distance / a.summary.root_crb_distance;
        const double ra2 = d.summary.rmse_angle / d.summary.root_crb_angle;
        const bool pass = rd <= 1.5 && ra <= 1.5 && rd2 <= 1.5 && ra2 <= 1.5;
        return {pass, "distance spacing: RMSE(d)/sqrtCRB " + fmt(rd, 3) + ", RMSE(phi)/sqrtCRB " + fmt(ra2, 3) + " (" +
                          std::to_string(d.summary.exact_k_trials) + " exact-2 trials); angle spacing: RMSE(d)/sqrtCRB " +
                          fmt(rd2, 3) + ", RMSE(phi)/sqrtCRB " + fmt(ra, 3) + " (" +
                          std::to_string(a.summary.exact_k_trials) + " exact-2 trials), " + fmt(seconds_since(t0), 4) + " s"};
    }

    Outcome criterion7(const Options &o)
    {
        const auto t0 = Clock::now();
        bool pass = true;
        std::ostringstream os;
        for (std::size_t m : {3u, 5u, 7u, 9u, 11u})
        {
            ExperimentConfig x = base_experiment(ArrayGeometry::uniform_linear(m, 0.02), 27, 20.0, 0.0, o);
            x.scenario.mode = GenerationMode::awgn_only;
            x.scenario.placement.kind = PlacementRule::Kind::uniform;
            x.estimator.max_components = 50;
            x.epsilon = 1e-2;
            x.trials = scaled(200, o);
            x.compute_crb = false;
            x.estimator_wideband = true;
            const double wb = run_experiment(x).summary.mean_detected;
            x.estimator_wideband = false;
            const double nb = run_experiment(x).summary.mean_detected;
            const bool ok_wb = wb >= 0.9 && wb <= 1.3;
            const bool ok_nb = m < 7 || nb > wb;
            pass = pass && ok_wb && ok_nb;
            os << "M=" << m << " WB " << fmt(wb, 3) << " NB " << fmt(nb, 3) << (ok_wb && ok_nb ? "" : " FAIL") << "; ";
        }
        os << fmt(seconds_since(t0), 4) << " s";
        return {pass, os.str()};
    }

    // 8. Property suites.
    Outcome criterion8(const Options &)
    {
        const auto t0 = Clock::now();
        std::vector<std::string> failed;
        auto expect = [&](bool ok, const std::string &what) {
            if (!ok)
                failed.push_back(what);
        };
        std::mt19937_64 rng(8);

        // Woodbury vs dense marginal NLL
        double nll_err = 0.0;
        for (int t = 0; t < 20; ++t)
        {
            const ModelContext ctx = context(ArrayGeometry::uniform_grid(3, 3, 0.02), rrc(t % 2 ? 27 : 54));
            const DmcParams eta{uniform(rng, 0.01, 1.0), uniform(rng, 0.0, 2.0), reference_dps(ctx.spectrum)};
            const StructuredCovariance q = build_structured_covariance(eta, ctx.spectrum, ctx.domain, 9);
            std::vector<DispersionVector> psi;
            std::vector<double> gamma;
            CMat c = q.dense();
            CVec y = random_cvec(rng, static_cast<Eigen::Index>(ctx.dimension()));
            for (int k = 0; k < 3; ++k)
            {
                psi.emplace_back(uniform(rng, 0.0, ctx.domain.max_delay()), uniform(rng, -pi, pi));
                gamma.push_back(std::exp(uniform(rng, -2.0, 2.0)));
                const CVec s = ctx.steering(psi.back());
                c += s * s.adjoint() / gamma.back();
                y += s;
            }
            nll_err = std::max(nll_err, std::abs(marginal_nll(y, psi, gamma, q, ctx) / dense_nll(y, c) - 1.0));
            expect(hermitian_psd(q.dense()) && hermitian_psd(c), "PSD (structured covariance)");
        }
        expect(nll_err <= 1e-8, "Woodbury NLL");

        // monotone objective trace and determinism
        double worst_rise = 0.0;
        bool deterministic = true;
        for (int t = 0; t < 50; ++t)
        {
            const ModelContext ctx = context(ArrayGeometry::uniform_grid(2, 2, 0.02), rrc(16));
            const DmcParams eta{uniform(rng, 0.005, 0.1), t % 3 ? 0.0 : uniform(rng, 0.1, 1.0), reference_dps(ctx.spectrum)};
            const StructuredCovariance q = build_structured_covariance(eta, ctx.spectrum, ctx.domain, 4);
            CVec y = Eigen::LLT<CMat>(q.dense()).matrixL() * random_cvec(rng, 64);
            for (int k = 0; k < t % 4; ++k)
                y += std::polar(1.0, uniform(rng, -pi, pi)) *
                     ctx.steering(DispersionVector(uniform(rng, 0.0, ctx.domain.max_delay()), uniform(rng, -pi, pi)));
            EstimatorConfig cfg;
            cfg.max_components = 5;
            cfg.kappa = 1.0 + (t % 5) * 2.0;
            cfg.eta = eta;
            cfg.eta_known = t % 10 != 0;
            cfg.max_eta_evaluations = 150;
            const EstimationResult r = run_estimation(y, cfg, ctx);
            for (std::size_t i = 1; i < r.trace.size(); ++i)
                if (r.trace[i].step != "merge")
                    worst_rise = std::max(worst_rise, (r.trace[i].objective - r.trace[i - 1].objective) /
                                                          std::max(1.0, std::abs(r.trace[i - 1].objective)));
            if (t < 5)
            {
                const EstimationResult r2 = run_estimation(y, cfg, ctx);
                deterministic = deterministic && r2.nll == r.nll && r2.components.size() == r.components.size();
                for (std::size_t i = 0; deterministic && i < r.components.size(); ++i)
                    deterministic = r.components[i].tau == r2.components[i].tau && r.components[i].phi == r2.components[i].phi;
            }
        }
        expect(worst_rise <= 1e-9, "monotone objective (rise " + fmt(worst_rise, 3) + ")");
        expect(deterministic, "bit-identical rerun");

        // gamma DPS normalization by an independent midpoint sum on a fine grid
        double dps_err = 0.0;
        for (double xi : {0.8, 1.8, 3.0})
        {
            const PulseSpectrum s = rrc(54);
            const GammaDps p(1.0 / speed_of_light, 5e-9, xi, s.alias_period());
            boost::math::quadrature::tanh_sinh<double> ts;
            const double integral =
                ts.integrate([&](double t) { return 1e-9 * p(1e-9 * t); }, p.beta() * 1e9, p.max_delay() * 1e9);
            dps_err = std::max(dps_err, std::abs(integral - 1.0));
        }
        expect(dps_err <= 1e-6, "gamma DPS normalization");

        // Jacobian vs central differences
        double jac_err = 0.0;
        {
            const PulseSpectrum s = rrc(27);
            const ArrayGeometry g = ArrayGeometry::uniform_grid(3, 3, 0.02);
            for (int t = 0; t < 100; ++t)
            {
                const DispersionVector psi(uniform(rng, 0.0, s.alias_period()), uniform(rng, -pi, pi));
                const SteeringJacobian j = steering_jacobian(psi, g, s);
                const CVec ft = (steering_vector(DispersionVector(psi.tau + 1e-14, psi.phi), g, s) -
                                 steering_vector(DispersionVector(psi.tau - 1e-14, psi.phi), g, s)) / 2e-14;
                const CVec fp = (steering_vector(DispersionVector(psi.tau, psi.phi + 1e-6), g, s) -
                                 steering_vector(DispersionVector(psi.tau, psi.phi - 1e-6), g, s)) / 2e-6;
                jac_err = std::max({jac_err, (ft - j.d_tau).norm() / j.d_tau.norm(), (fp - j.d_phi).norm() / j.d_phi.norm()});
            }
        }
        expect(jac_err <= 1e-4, "Jacobian finite differences");

        // PSD of the other covariance builders
        {
            const PulseSpectrum s = rrc(27);
            const GammaDps p = reference_dps(s);
            const DispersionDomain dom = DispersionDomain::unambiguous(s);
            expect(hermitian_psd(delay_correlation(s, p, dom)), "PSD (Q_f)");
            expect(hermitian_psd(spatial_correlation(ArrayGeometry::uniform_grid(3, 3, 0.02), 6e9, uniform_aps())),
                   "PSD (Q_s)");
            expect(hermitian_psd(build_full_dmc_covariance(ArrayGeometry::uniform_linear(4, 0.02), s, p, uniform_aps(),
                                                           1.0, 0.0, dom)),
                   "PSD (full DMC)");
        }

        // p_miss limits
        bool pm = p_miss(0.0, 7.0) == 0.0;
        for (double k : {0.5, 3.0, 10.0})
            pm = pm && std::abs(p_miss(k, 0.0) - (1.0 - std::exp(-k))) <= 1e-12;
        expect(pm, "p_miss limits");

        const double rt = seconds_since(t0);
        expect(rt < 120.0, "runtime");
        std::string detail = "NLL rel err " + fmt(nll_err, 3) + ", max objective rise " + fmt(worst_rise, 3) +
                             ", DPS err " + fmt(dps_err, 3) + ", Jacobian err " + fmt(jac_err, 3) + ", " + fmt(rt, 3) + " s";
        for (const auto &f : failed)
            detail += "; failed: " + f;
        return {failed.empty(), detail};
    }
}

int main(int argc, char **argv)
{
    CLI::App app{"Acceptance criteria"};
    std::string which = "1,2,3,4,5,6,7,8";
    Options o;
    app.add_option("--criteria", which, "comma-separated criterion numbers");
    app.add_option("--trials-scale", o.trials_scale, "multiplier on the Monte-Carlo trial counts");
    app.add_option("--threads", o.threads, "worker threads (0 = all cores)");
    CLI11_PARSE(app, argc, argv);

    const std::map<int, std::function<Outcome(const Options &)>> all = {
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},
        {5, criterion5}, {6, criterion6}, {7, criterion7}, {8, criterion8}};

    bool ok = true;
    std::stringstream ss(which);
    for (std::string tok; std::getline(ss, tok, ',');)
    {
        const int id = std::stoi(tok);
        const auto it = all.find(id);
        if (it == all.end())
        {
            std::cerr << "unknown criterion " << tok << '\n';
            return 2;
        }
        Outcome r;
        try
        {
            r = it->second(o);
        }
        catch (const std::exception &e)
        {
            r = {false, std::string("exception: ") + e.what()};
        }
        std::cout << "criterion " << id << ": " << (r.pass ? "PASS" : "FAIL") << "  " << r.detail << std::endl;
        ok = ok && r.pass;
    }
    return ok ? 0 : 1;
}
