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

#include "uwbsr/harness.hpp"

#include <json.hpp>

#include <boost/math/distributions/binomial.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace uwbsr
{
    CrbResult crb(const std::vector<SpecularComponent> &truth, const StructuredCovariance &q, const ModelContext &ctx)
    {
        const auto K = static_cast<Eigen::Index>(truth.size());
        const auto D = static_cast<Eigen::Index>(ctx.dimension());
        CMat J(D, 4 * K);
        for (Eigen::Index k = 0; k < K; ++k)
        {
            const auto &c = truth[static_cast<std::size_t>(k)];
            const CVec s = ctx.steering(c.psi);
            const SteeringJacobian jac = ctx.jacobian(c.psi);
            J.col(4 * k) = c.alpha * jac.d_tau;
            J.col(4 * k + 1) = c.alpha * jac.d_phi;
            J.col(4 * k + 2) = s;
            J.col(4 * k + 3) = cplx(0.0, 1.0) * s;
        }
        const RMat F = 2.0 * (J.adjoint() * q.solve(J)).real();

        // Normalize by the diagonal before judging rank; delays in seconds make F badly scaled.
        const RVec diag = F.diagonal();
        if ((diag.array() <= 0.0).any())
            throw SingularFIM("Fisher information has a zero diagonal entry (unidentifiable parameter).");
        const RVec scale = diag.cwiseSqrt().cwiseInverse();
        RMat Fn = scale.asDiagonal() * F * scale.asDiagonal();
        Fn = 0.5 * (Fn + Fn.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<RMat> es(Fn);
        const double lmin = es.eigenvalues().minCoeff(), lmax = es.eigenvalues().maxCoeff();
        if (!(lmin > 1e-12 * lmax))
            throw SingularFIM("Fisher information matrix is singular.");
        const RMat Finv = scale.asDiagonal() *
                          (es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose()) *
                          scale.asDiagonal();

        CrbResult out;
        out.fim = F;
        out.tau_var.resize(K);
        out.phi_var.resize(K);
        out.alpha_var.resize(K);
        for (Eigen::Index k = 0; k < K; ++k)
        {
            out.tau_var[k] = Finv(4 * k, 4 * k);
            out.phi_var[k] = Finv(4 * k + 1, 4 * k + 1);
            out.alpha_var[k] = Finv(4 * k + 2, 4 * k + 2) + Finv(4 * k + 3, 4 * k + 3);
        }
        return out;
    }

    namespace
    {
        double delay_difference(double a, double b, double period)
        {
            const double d = a - b;
            return period > 0.0 ? wrap_symmetric(d, period) : d;
        }
    }

    EventFlags classify_events(const std::vector<Detection> &detections, const DispersionVector &truth, double crb_tau,
                               double crb_phi, double multiplier, double delay_period)
    {
        EventFlags f;
        if (detections.empty())
        {
            f.missed_detection = true;
            return f;
        }
        const double ht = multiplier * std::sqrt(crb_tau), hp = multiplier * std::sqrt(crb_phi);
        std::size_t inside = 0;
        for (const auto &d : detections)
        {
            const bool in = std::abs(delay_difference(d.psi.tau, truth.tau, delay_period)) <= ht &&
                            std::abs(wrap_angle(d.psi.phi - truth.phi)) <= hp;
            if (in)
                ++inside;
        }
        f.false_detection = inside < detections.size();
        f.missed_detection = inside == 0;
        return f;
    }

    std::vector<long> hungarian(const RMat &cost)
    {
        const bool transposed = cost.rows() > cost.cols();
        const RMat a = transposed ? RMat(cost.transpose()) : cost;
        const auto n = static_cast<std::size_t>(a.rows()), m = static_cast<std::size_t>(a.cols());
        std::vector<long> result(static_cast<std::size_t>(cost.rows()), -1);
        if (n == 0)
            return result;

        // Potentials method, 1-based with a virtual column 0.
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
        std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
        for (std::size_t i = 1; i <= n; ++i)
        {
            p[0] = i;
            std::size_t j0 = 0;
            std::vector<double> minv(m + 1, inf);
            std::vector<bool> used(m + 1, false);
            do
            {
                used[j0] = true;
                const std::size_t i0 = p[j0];
                double delta = inf;
                std::size_t j1 = 0;
                for (std::size_t j = 1; j <= m; ++j)
                    if (!used[j])
                    {
                        const double cur = a(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
                        if (cur < minv[j])
                        {
                            minv[j] = cur;
                            way[j] = j0;
                        }
                        if (minv[j] < delta)
                        {
                            delta = minv[j];
                            j1 = j;
                        }
                    }
                for (std::size_t j = 0; j <= m; ++j)
                    if (used[j])
                    {
                        u[p[j]] += delta;
                        v[j] -= delta;
                    }
                    else
                        minv[j] -= delta;
                j0 = j1;
            } while (p[j0] != 0);
            do
            {
                const std::size_t j1 = way[j0];
                p[j0] = p[j1];
                j0 = j1;
            } while (j0 != 0);
        }

        for (std::size_t j = 1; j <= m; ++j)
            if (p[j] != 0)
            {
                if (transposed)
                    result[j - 1] = static_cast<long>(p[j] - 1);
                else
                    result[p[j] - 1] = static_cast<long>(j - 1);
            }
        return result;
    }

    OspaResult ospa_associate(const std::vector<Detection> &detections, const std::vector<SpecularComponent> &truth,
                              const MetricSettings &metrics, double delay_period)
    {
        OspaResult out;
        const std::size_t nd = detections.size(), nt = truth.size();
        if (nd == 0 && nt == 0)
            return out;
        const double c = metrics.ospa_cutoff, p = metrics.ospa_order;
        const std::size_t n = std::max(nd, nt);
        if (nd == 0 || nt == 0)
        {
            out.distance = c;
            return out;
        }

        RMat dist(static_cast<Eigen::Index>(nd), static_cast<Eigen::Index>(nt));
        RMat cost(dist.rows(), dist.cols());
        for (std::size_t i = 0; i < nd; ++i)
            for (std::size_t j = 0; j < nt; ++j)
            {
                const double dd = speed_of_light * delay_difference(detections[i].psi.tau, truth[j].psi.tau, delay_period) /
                                  metrics.rrl_distance;
                const double da = wrap_angle(detections[i].psi.phi - truth[j].psi.phi) / metrics.rrl_angle;
                const double d = std::min(c, std::hypot(dd, da));
                dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
                cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::pow(d, p);
            }
        const std::vector<long> assign = hungarian(cost);
        double total = 0.0;
        for (std::size_t i = 0; i < nd; ++i)
        {
            if (assign[i] < 0)
                continue;
            const auto j = static_cast<std::size_t>(assign[i]);
            total += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            PairError e;
            e.detection = i;
            e.truth = j;
            e.distance_error = speed_of_light * delay_difference(detections[i].psi.tau, truth[j].psi.tau, delay_period);
            e.angle_error = wrap_angle(detections[i].psi.phi - truth[j].psi.phi);
            e.amplitude_error = std::abs(detections[i].alpha) - std::abs(truth[j].alpha);
            e.cost = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            out.pairs.push_back(e);
        }
        total += std::pow(c, p) * static_cast<double>(n - std::min(nd, nt));
        out.distance = std::pow(total / static_cast<double>(n), 1.0 / p);
        return out;
    }

    std::pair<std::size_t, std::size_t> binomial_acceptance(std::size_t n, double p, double level)
    {
        const double tail = 0.5 * (1.0 - level);
        p = std::clamp(p, 0.0, 1.0);
        if (p <= 0.0)
            return {0, 0};
        if (p >= 1.0)
            return {n, n};
        const boost::math::binomial_distribution<double> dist(static_cast<double>(n), p);
        std::size_t lo = 0;
        // P(X < lo) <= tail
        while (lo < n && boost::math::cdf(dist, static_cast<double>(lo)) <= tail)
            ++lo;
        std::size_t hi = n;
        // P(X > hi) <= tail
        while (hi > 0 && boost::math::cdf(boost::math::complement(dist, static_cast<double>(hi - 1))) <= tail)
            --hi;
        return {lo, hi};
    }

    std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double level)
    {
        if (n == 0)
            return {0.0, 1.0};
        const double tail = 0.5 * (1.0 - level);
        using bd = boost::math::binomial_distribution<double>;
        const double lo = k == 0 ? 0.0 : bd::find_lower_bound_on_p(static_cast<double>(n), static_cast<double>(k), tail);
        const double hi = k == n ? 1.0 : bd::find_upper_bound_on_p(static_cast<double>(n), static_cast<double>(k), tail);
        return {lo, hi};
    }

    namespace
    {
        ModelContext estimator_context(const ExperimentConfig &config)
        {
            return ModelContext{config.scenario.geometry, config.scenario.spectrum, config.scenario.domain,
                                config.estimator_wideband};
        }

        ModelContext truth_context(const ExperimentConfig &config)
        {
            return ModelContext{config.scenario.geometry, config.scenario.spectrum, config.scenario.domain,
                                config.scenario.wideband_signal};
        }

        StructuredCovariance truth_covariance(const ObservationGenerator &gen, const GroundTruth &truth)
        {
            const ScenarioSpec &spec = gen.spec();
            if (truth.dmc_power <= 0.0 || spec.mode == GenerationMode::awgn_only)
            {
                const auto N = static_cast<Eigen::Index>(spec.spectrum.size());
                return StructuredCovariance(truth.sigma2 * CMat::Identity(N, N), spec.geometry.size());
            }
            return build_structured_covariance(gen.delay_correlation_matrix(), truth.dmc_power, truth.sigma2,
                                               spec.geometry.size());
        }

        double period_of(const DispersionDomain &domain)
        {
            return domain.periodic() ? domain.period() : 0.0;
        }
    }

    double nominal_excursion_constant(const ExperimentConfig &config)
    {
        const ObservationGenerator gen(config.scenario);
        const SyntheticObservation obs = gen.draw(config.first_trial);
        const StructuredCovariance q = truth_covariance(gen, obs.truth);
        return excursion_constant_q(config.scenario.geometry, config.scenario.spectrum, q.q_tilde(), config.scenario.domain);
    }

    ExperimentResult run_experiment(const ExperimentConfig &config)
    {
        if (config.trials < 1)
            throw std::invalid_argument("run_experiment: at least one trial is required.");
        if (!(config.metrics.region_multiplier > 0.0))
            throw std::invalid_argument("run_experiment: the region multiplier must be positive.");
        const auto t_start = std::chrono::steady_clock::now();

        const ObservationGenerator gen(config.scenario);
        const ModelContext ectx = estimator_context(config);
        const ModelContext tctx = truth_context(config);
        const double period = period_of(config.scenario.domain);

        ExperimentResult result;
        ExperimentSummary &sum = result.summary;

        // Threshold and the excursion constant from the nominal (first-trial) covariance.
        {
            const SyntheticObservation first = gen.draw(config.first_trial);
            const StructuredCovariance q = truth_covariance(gen, first.truth);
            try
            {
                sum.q = excursion_constant_q(config.scenario.geometry, config.scenario.spectrum, q.q_tilde(),
                                             config.scenario.domain);
            }
            catch (const NumericalError &)
            {
                sum.q = std::numeric_limits<double>::quiet_NaN();
            }
        }
        EstimatorConfig est = config.estimator;
        if (config.epsilon)
        {
            if (!std::isfinite(sum.q))
                throw NumericalError("Excursion constant unavailable; cannot derive the threshold from epsilon.");
            est.kappa = kappa_star(*config.epsilon, sum.q).kappa_star;
        }
        sum.kappa = est.kappa;

        result.records.resize(config.trials);
        std::atomic<std::size_t> next{0};
        auto worker = [&]()
        {
            for (;;)
            {
                const std::size_t idx = next.fetch_add(1);
                if (idx >= config.trials)
                    return;
                TrialRecord &rec = result.records[idx];
                rec.trial = config.first_trial + idx;
                const auto t0 = std::chrono::steady_clock::now();
                try
                {
                    const SyntheticObservation obs = gen.draw(rec.trial);
                    rec.truth = obs.truth.components;
                    rec.sigma2 = obs.truth.sigma2;
                    rec.dmc_power = obs.truth.dmc_power;

                    EstimatorConfig cfg = est;
                    if (cfg.eta_known)
                    {
                        cfg.eta.sigma2 = obs.truth.sigma2;
                        cfg.eta.dmc_power = obs.truth.dmc_power;
                        cfg.eta.dps = config.scenario.dps;
                    }
                    const EstimationResult er = run_estimation(obs.y, cfg, ectx);
                    for (std::size_t k = 0; k < er.components.size(); ++k)
                        rec.detections.push_back({er.components[k], er.mu.size() > static_cast<Eigen::Index>(k)
                                                                         ? er.mu[static_cast<Eigen::Index>(k)]
                                                                         : cplx(0.0, 0.0)});
                    rec.sigma2_hat = er.eta_hat.sigma2;
                    rec.dmc_power_hat = er.eta_hat.dmc_power;
                    rec.nll = er.nll;
                    rec.iterations = er.iterations;

                    const StructuredCovariance qt = truth_covariance(gen, obs.truth);
                    rec.crb_tau = rec.crb_phi = std::numeric_limits<double>::quiet_NaN();
                    if (!rec.truth.empty())
                    {
                        rec.deflection = std::norm(rec.truth[0].alpha) * qt.quadratic(tctx.steering(rec.truth[0].psi));
                        if (config.compute_crb)
                        {
                            try
                            {
                                const CrbResult cr = crb(rec.truth, qt, tctx);
                                rec.crb_tau = cr.tau_var[0];
                                rec.crb_phi = cr.phi_var[0];
                                rec.crb_tau_all.assign(cr.tau_var.data(), cr.tau_var.data() + cr.tau_var.size());
                                rec.crb_phi_all.assign(cr.phi_var.data(), cr.phi_var.data() + cr.phi_var.size());
                            }
                            catch (const SingularFIM &e)
                            {
                                rec.status = std::string("crb_singular");
                            }
                        }
                    }
                    if (rec.truth.size() == 1 && std::isfinite(rec.crb_tau))
                    {
                        rec.events = classify_events(rec.detections, rec.truth[0].psi, rec.crb_tau, rec.crb_phi,
                                                     config.metrics.region_multiplier, period);
                        rec.events_valid = true;
                    }
                    const OspaResult o = ospa_associate(rec.detections, rec.truth, config.metrics, period);
                    rec.ospa = o.distance;
                    rec.pairs = o.pairs;
                }
                catch (const std::exception &e)
                {
                    rec.status = std::string("error: ") + e.what();
                }
                rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            }
        };

        std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
        threads = std::min(threads, config.trials);
        if (threads <= 1)
            worker();
        else
        {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < threads; ++t)
                pool.emplace_back(worker);
            for (auto &t : pool)
                t.join();
        }

        // Reduction in trial order.
        sum.trials = config.trials;
        std::size_t ok = 0, detected = 0, exact = 0, fa = 0, miss = 0, event_trials = 0;
        double se_d = 0.0, se_a = 0.0, crb_d = 0.0, crb_a = 0.0, amp_sum = 0.0, amp_se = 0.0, ospa_sum = 0.0;
        double pm_theory = 0.0, defl_sum = 0.0;
        std::size_t pair_count = 0, crb_count = 0;
        for (const auto &rec : result.records)
        {
            if (rec.status.rfind("error", 0) == 0)
            {
                ++sum.failures;
                continue;
            }
            ++ok;
            detected += rec.detections.size();
            ospa_sum += rec.ospa;
            defl_sum += rec.deflection;
            if (rec.events_valid)
            {
                ++event_trials;
                fa += rec.events.false_detection ? 1 : 0;
                miss += rec.events.missed_detection ? 1 : 0;
                pm_theory += p_miss(sum.kappa, rec.deflection);
            }
            if (rec.detections.size() == rec.truth.size() && !rec.truth.empty())
            {
                ++exact;
                for (const auto &pe : rec.pairs)
                {
                    se_d += pe.distance_error * pe.distance_error;
                    se_a += pe.angle_error * pe.angle_error;
                    amp_sum += std::abs(rec.detections[pe.detection].alpha);
                    amp_se += pe.amplitude_error * pe.amplitude_error;
                    ++pair_count;
                    if (pe.truth < rec.crb_tau_all.size())
                    {
                        crb_d += speed_of_light * speed_of_light * rec.crb_tau_all[pe.truth];
                        crb_a += rec.crb_phi_all[pe.truth];
                        ++crb_count;
                    }
                }
            }
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        sum.mean_detected = ok ? static_cast<double>(detected) / static_cast<double>(ok) : nan;
        sum.exact_k_trials = exact;
        sum.frequency_exact_k = ok ? static_cast<double>(exact) / static_cast<double>(ok) : nan;
        sum.mean_ospa = ok ? ospa_sum / static_cast<double>(ok) : nan;
        sum.mean_deflection = ok ? defl_sum / static_cast<double>(ok) : nan;
        sum.rmse_distance = pair_count ? std::sqrt(se_d / static_cast<double>(pair_count)) : nan;
        sum.rmse_angle = pair_count ? std::sqrt(se_a / static_cast<double>(pair_count)) : nan;
        sum.amplitude_mean = pair_count ? amp_sum / static_cast<double>(pair_count) : nan;
        sum.amplitude_rmse = pair_count ? std::sqrt(amp_se / static_cast<double>(pair_count)) : nan;
        sum.root_crb_distance = crb_count ? std::sqrt(crb_d / static_cast<double>(crb_count)) : nan;
        sum.root_crb_angle = crb_count ? std::sqrt(crb_a / static_cast<double>(crb_count)) : nan;

        auto fill_rate = [&](RateSummary &r, std::size_t count, double theory)
        {
            r.count = count;
            r.trials = event_trials;
            r.theory = theory;
            if (event_trials == 0)
            {
                r.frequency = nan;
                return;
            }
            r.frequency = static_cast<double>(count) / static_cast<double>(event_trials);
            r.ci = clopper_pearson(count, event_trials);
            r.theory_region = binomial_acceptance(event_trials, theory);
            r.within = count >= r.theory_region.first && count <= r.theory_region.second;
        };
        fill_rate(sum.false_rate, fa, std::isfinite(sum.q) ? p_false(sum.kappa, sum.q) : nan);
        fill_rate(sum.miss_rate, miss, event_trials ? pm_theory / static_cast<double>(event_trials) : nan);
        sum.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return result;
    }

    namespace
    {
        std::string join_components(const std::vector<Detection> &d)
        {
            std::ostringstream os;
            os << std::setprecision(12);
            for (std::size_t i = 0; i < d.size(); ++i)
                os << (i ? ";" : "") << d[i].psi.tau << ':' << d[i].psi.phi << ':' << d[i].alpha.real() << ':'
                   << d[i].alpha.imag();
            return os.str();
        }

        std::string join_truth(const std::vector<SpecularComponent> &t)
        {
            std::ostringstream os;
            os << std::setprecision(12);
            for (std::size_t i = 0; i < t.size(); ++i)
                os << (i ? ";" : "") << t[i].psi.tau << ':' << t[i].psi.phi << ':' << t[i].alpha.real() << ':'
                   << t[i].alpha.imag();
            return os.str();
        }

        std::string join_pairs(const std::vector<PairError> &p)
        {
            std::ostringstream os;
            os << std::setprecision(12);
            for (std::size_t i = 0; i < p.size(); ++i)
                os << (i ? ";" : "") << p[i].detection << ':' << p[i].truth << ':' << p[i].distance_error << ':'
                   << p[i].angle_error << ':' << p[i].amplitude_error;
            return os.str();
        }

        std::string csv_quote(const std::string &s)
        {
            std::string out = "\"";
            for (char ch : s)
            {
                if (ch == '"')
                    out += '"';
                out += ch;
            }
            return out + "\"";
        }

        nlohmann::json number_or_null(double v)
        {
            return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
        }

        nlohmann::json rate_json(const RateSummary &r)
        {
            return {{"count", r.count},
                    {"trials", r.trials},
                    {"frequency", number_or_null(r.frequency)},
                    {"theory", number_or_null(r.theory)},
                    {"ci95", {number_or_null(r.ci.first), number_or_null(r.ci.second)}},
                    {"theory_acceptance_counts", {r.theory_region.first, r.theory_region.second}},
                    {"within_theory_region", r.within}};
        }

        struct Column
        {
            const char *name, *type, *unit, *description;
        };

        const Column trial_columns[] = {
            {"trial", "integer", "", "trial index (RNG stream)"},
            {"status", "string", "", "ok, crb_singular, or error: <message>"},
            {"detected", "integer", "", "number of detected components"},
            {"false_detection", "integer", "", "1 if a detection lies outside the CRB region (single-component truth)"},
            {"missed_detection", "integer", "", "1 if no detection lies inside the CRB region (single-component truth)"},
            {"ospa", "real", "", "OSPA distance in resolution-normalized units"},
            {"sigma2", "real", "signal power units", "true white-noise variance"},
            {"dmc_power", "real", "signal power units", "true DMC power P"},
            {"sigma2_hat", "real", "signal power units", "estimated white-noise variance"},
            {"dmc_power_hat", "real", "signal power units", "estimated DMC power"},
            {"crb_tau", "real", "s^2", "delay CRB of the first true component"},
            {"crb_phi", "real", "rad^2", "angle CRB of the first true component"},
            {"deflection", "real", "", "|alpha|^2 s^H Q^-1 s of the first true component"},
            {"nll", "real", "", "final marginal negative log-likelihood"},
            {"iterations", "integer", "", "outer iterations"},
            {"runtime_s", "real", "s", "wall time of the trial"},
            {"detections", "string", "s:rad:1:1", "semicolon list of tau_s:phi_rad:amp_re:amp_im"},
            {"truth", "string", "s:rad:1:1", "semicolon list of tau_s:phi_rad:amp_re:amp_im"},
            {"pairs", "string", ":m:rad:1", "semicolon list of detection:truth:distance_error_m:angle_error_rad:abs_amplitude_error"},
        };
    }

    void write_experiment_outputs(const ExperimentResult &result, const ExperimentConfig &config,
                                  const std::filesystem::path &dir)
    {
        std::filesystem::create_directories(dir);
        {
            std::ofstream csv(dir / "trials.csv");
            if (!csv)
                throw std::runtime_error("Cannot write " + (dir / "trials.csv").string());
            csv << std::setprecision(12);
            for (std::size_t i = 0; i < std::size(trial_columns); ++i)
                csv << (i ? "," : "") << trial_columns[i].name;
            csv << '\n';
            for (const auto &r : result.records)
            {
                csv << r.trial << ',' << csv_quote(r.status) << ',' << r.detections.size() << ','
                    << (r.events_valid ? std::to_string(r.events.false_detection ? 1 : 0) : std::string()) << ','
                    << (r.events_valid ? std::to_string(r.events.missed_detection ? 1 : 0) : std::string()) << ','
                    << r.ospa << ',' << r.sigma2 << ',' << r.dmc_power << ',' << r.sigma2_hat << ',' << r.dmc_power_hat
                    << ',' << r.crb_tau << ',' << r.crb_phi << ',' << r.deflection << ',' << r.nll << ','
                    << r.iterations << ',' << r.runtime_s << ',' << csv_quote(join_components(r.detections)) << ','
                    << csv_quote(join_truth(r.truth)) << ',' << csv_quote(join_pairs(r.pairs)) << '\n';
            }
        }
        {
            nlohmann::json schema;
            schema["file"] = "trials.csv";
            schema["rows"] = "one per trial, failures included";
            for (const auto &c : trial_columns)
                schema["columns"].push_back({{"name", c.name}, {"type", c.type}, {"unit", c.unit}, {"description", c.description}});
            std::ofstream(dir / "schema.json") << schema.dump(2) << '\n';
        }
        {
            const ExperimentSummary &s = result.summary;
            nlohmann::json j;
            j["trials"] = s.trials;
            j["failures"] = s.failures;
            j["kappa"] = s.kappa;
            j["q"] = number_or_null(s.q);
            if (config.epsilon)
                j["epsilon"] = *config.epsilon;
            j["mean_detected"] = number_or_null(s.mean_detected);
            j["frequency_exact_k"] = number_or_null(s.frequency_exact_k);
            j["exact_k_trials"] = s.exact_k_trials;
            j["false_detection"] = rate_json(s.false_rate);
            j["missed_detection"] = rate_json(s.miss_rate);
            j["rmse_distance_m"] = number_or_null(s.rmse_distance);
            j["rmse_angle_rad"] = number_or_null(s.rmse_angle);
            j["root_crb_distance_m"] = number_or_null(s.root_crb_distance);
            j["root_crb_angle_rad"] = number_or_null(s.root_crb_angle);
            j["amplitude_mean"] = number_or_null(s.amplitude_mean);
            j["amplitude_rmse"] = number_or_null(s.amplitude_rmse);
            j["mean_ospa"] = number_or_null(s.mean_ospa);
            j["mean_deflection"] = number_or_null(s.mean_deflection);
            j["runtime_s"] = s.runtime_s;
            // Theory overlays for plotting.
            nlohmann::json curve = nlohmann::json::array();
            if (std::isfinite(s.q))
                for (double k = 1.0; k <= std::max(2.0 * s.kappa, 20.0); k += 0.25)
                    curve.push_back({{"kappa", k},
                                     {"p_false", p_false(k, s.q)},
                                     {"p_miss", number_or_null(std::isfinite(s.mean_deflection) ? p_miss(k, s.mean_deflection) : NAN)}});
            j["theory"] = curve;
            std::ofstream(dir / "summary.json") << j.dump(2) << '\n';
        }
    }
}
