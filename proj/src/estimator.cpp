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

#include "uwbsr/estimator.hpp"

#include <boost/math/tools/minima.hpp>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

namespace uwbsr
{
    double ModelContext::angle_resolution() const
    {
        const double span = geometry.span();
        if (span <= 0.0)
            return two_pi;
        return std::min(two_pi, speed_of_light / (spectrum.center_frequency() * span));
    }

    std::size_t ComponentSet::active_count() const
    {
        return static_cast<std::size_t>(std::count_if(slots.begin(), slots.end(), [](const Slot &s) { return s.active(); }));
    }

    std::vector<std::size_t> ComponentSet::active_indices() const
    {
        std::vector<std::size_t> out;
        for (std::size_t l = 0; l < slots.size(); ++l)
            if (slots[l].active())
                out.push_back(l);
        return out;
    }

    std::optional<std::size_t> ComponentSet::free_slot() const
    {
        for (std::size_t l = 0; l < slots.size(); ++l)
            if (!slots[l].active())
                return l;
        return std::nullopt;
    }

    void ComponentSet::activate(std::size_t l, const DispersionVector &psi, double gamma)
    {
        slots.at(l).psi = psi;
        slots.at(l).gamma = gamma;
        if (!std::isfinite(gamma))
            slots.at(l).psi.reset();
    }

    void ComponentSet::prune(std::size_t l)
    {
        slots.at(l).psi.reset();
        slots.at(l).gamma = pruned;
    }

    EtaBounds EtaBounds::defaults(const CVec &y, const ModelContext &ctx)
    {
        const double M = static_cast<double>(ctx.geometry.size());
        const double N = static_cast<double>(ctx.spectrum.size());
        const double power = std::max(y.squaredNorm(), 1e-300);
        const double T = ctx.domain.max_delay();
        const double B = ctx.spectrum.bandwidth();
        EtaBounds b;
        b.sigma2_lo = 1e-12 * power / (M * N);
        b.sigma2_hi = 1e6 * power / (M * N);
        b.power_lo = 1e-12 * power / M;
        b.power_hi = 1e6 * power / M;
        b.beta_lo = std::min(1e-3 / B, 0.25 * T);
        b.beta_hi = 0.5 * T;
        b.theta_lo = std::min(0.1 / B, T);
        b.theta_hi = T;
        return b;
    }

    double activation_penalty(double kappa)
    {
        return kappa - 1.0 - std::log(kappa);
    }

    double update_gamma(double zeta, cplx rho, double kappa)
    {
        const double r2 = std::norm(rho);
        if (!(zeta > 0.0) || !(r2 / zeta > kappa))
            return pruned;
        const double excess = r2 - zeta;
        return excess > 0.0 ? 1.0 / excess : pruned;
    }

    namespace
    {
        constexpr double inner_rcond_floor = 1e-14;

        // Inner matrix I + D G D with D = Gamma^{-1/2}; its conditioning is bounded below by 1 on the small end,
        // so the factorization stays stable as some gamma grow without bound.
        struct InnerSystem
        {
            RVec d;        // gamma^{-1/2}
            Eigen::LLT<CMat> llt;
            double logdet = 0.0;

            InnerSystem(const CMat &gram, const std::vector<double> &gamma)
            {
                const auto K = static_cast<Eigen::Index>(gamma.size());
                d.resize(K);
                for (Eigen::Index k = 0; k < K; ++k)
                    d[k] = 1.0 / std::sqrt(gamma[static_cast<std::size_t>(k)]);
                CMat a = d.asDiagonal() * gram * d.asDiagonal();
                a = 0.5 * (a + a.adjoint().eval());
                a.diagonal().array() += 1.0;
                llt.compute(a);
                if (llt.info() != Eigen::Success || !(llt.rcond() >= inner_rcond_floor))
                    throw SingularInnerMatrix("Inner matrix S^H Q^-1 S + Gamma is numerically singular.");
                for (Eigen::Index k = 0; k < K; ++k)
                    logdet += 2.0 * std::log(std::real(llt.matrixL()(k, k)));
            }

            // (G + Gamma)^{-1} x
            CVec solve(const CVec &x) const { return d.asDiagonal() * llt.solve(d.asDiagonal() * x); }
            CMat inverse() const
            {
                const auto K = d.size();
                CMat inv = llt.solve(CMat::Identity(K, K));
                return d.asDiagonal() * inv * d.asDiagonal();
            }
        };

        CMat gram_of(const CMat &columns, const CMat &whitened)
        {
            CMat g = columns.adjoint() * whitened;
            return 0.5 * (g + g.adjoint().eval());
        }

        // Quantities that depend only on (context, Q): the trigonometric polynomial
        //   h(tau) = s_f(tau)^H Q~^{-1} s_f(tau) = Re sum_k c_k e^{j2 pi k delta tau}
        class InferenceModel
        {
        public:
            InferenceModel(const ModelContext &ctx, const StructuredCovariance &q) : ctx_(ctx), q_(q)
            {
                const auto N = static_cast<Eigen::Index>(ctx.spectrum.size());
                const CVec &S = ctx.spectrum.samples();
                const CMat &R = q.q_tilde_inverse();
                coeff_.assign(static_cast<std::size_t>(2 * N - 1), cplx(0.0, 0.0));
                for (Eigen::Index n = 0; n < N; ++n)
                    for (Eigen::Index np = 0; np < N; ++np)
                        coeff_[static_cast<std::size_t>(n - np + N - 1)] += std::conj(S[n]) * R(n, np) * S[np];
                const std::size_t M = ctx.geometry.size();
                single_antenna_ = M == 1;
            }

            const ModelContext &context() const { return ctx_; }
            const StructuredCovariance &covariance() const { return q_; }
            const std::vector<cplx> &coefficients() const { return coeff_; }
            double wb() const { return ctx_.wideband ? 1.0 : 0.0; }

            // h, dh/dtau
            std::array<double, 2> delay_form(double tau) const
            {
                const auto N = static_cast<long>(ctx_.spectrum.size());
                const double w0 = two_pi * ctx_.spectrum.delta();
                const cplx step = std::polar(1.0, w0 * tau);
                // start at k = -(N-1)
                cplx e = std::polar(1.0, -w0 * static_cast<double>(N - 1) * tau);
                double h = 0.0, dh = 0.0;
                for (long i = 0; i < 2 * N - 1; ++i)
                {
                    const double k = static_cast<double>(i - (N - 1));
                    const cplx t = coeff_[static_cast<std::size_t>(i)] * e;
                    h += t.real();
                    dh -= w0 * k * t.imag();
                    e *= step;
                    if ((i & 31) == 31)
                        e = std::polar(1.0, w0 * (k + 1.0) * tau);
                }
                return {h, dh};
            }

            // s^H Q^{-1} s
            double steering_form(const DispersionVector &psi) const
            {
                if (!ctx_.wideband || single_antenna_)
                {
                    // tau_m = tau for every antenna (g_m = 0 for a single element at its own centroid)
                    return static_cast<double>(ctx_.geometry.size()) * delay_form(psi.tau)[0];
                }
                double sum = 0.0;
                for (std::size_t m = 0; m < ctx_.geometry.size(); ++m)
                    sum += delay_form(psi.tau - relative_delay(psi.phi, ctx_.geometry, m))[0];
                return sum;
            }

            // d(s^H Q^{-1} s)/d(tau, phi)
            Eigen::Vector2d steering_form_gradient(const DispersionVector &psi) const
            {
                Eigen::Vector2d g = Eigen::Vector2d::Zero();
                if (!ctx_.wideband || single_antenna_)
                {
                    g[0] = static_cast<double>(ctx_.geometry.size()) * delay_form(psi.tau)[1];
                    return g;
                }
                for (std::size_t m = 0; m < ctx_.geometry.size(); ++m)
                {
                    const double dh = delay_form(psi.tau - relative_delay(psi.phi, ctx_.geometry, m))[1];
                    g[0] += dh;
                    g[1] -= dh * relative_delay_derivative(psi.phi, ctx_.geometry, m);
                }
                return g;
            }

        private:
            const ModelContext &ctx_;
            const StructuredCovariance &q_;
            std::vector<cplx> coeff_;
            bool single_antenna_ = false;
        };

        struct FieldValue
        {
            double statistic = 0.0;
            ResidualStats stats;
        };

        // The single-component statistic x(psi) = |rho(psi)|^2 / zeta(psi) against a fixed set of other components.
        class ResidualField
        {
        public:
            // columns: steering vectors of the other active components, whitened = Q^{-1} columns.
            ResidualField(const InferenceModel &model, const CVec &qy, const CMat &columns, const CMat &whitened,
                          const std::vector<double> &gamma)
                : model_(model), w_(whitened)
            {
                if (columns.cols() == 0)
                {
                    z_ = qy;
                    sigma_.resize(0, 0);
                    return;
                }
                const InnerSystem inner(gram_of(columns, whitened), gamma);
                sigma_ = inner.inverse();
                const CVec b = columns.adjoint() * qy; // S^H Q^{-1} y
                z_ = qy - whitened * inner.solve(b);
            }

            const CVec &z() const { return z_; }
            const CMat &w() const { return w_; }
            const CMat &sigma() const { return sigma_; }
            const InferenceModel &model() const { return model_; }

            FieldValue evaluate(const DispersionVector &psi) const
            {
                const CVec s = model_.context().steering(psi);
                return evaluate(s, model_.steering_form(psi));
            }

            FieldValue evaluate(const CVec &s, double h) const
            {
                const cplx u = s.dot(z_);
                double d = h;
                if (w_.cols() > 0)
                {
                    const CVec v = w_.adjoint() * s;
                    d -= v.dot(sigma_ * v).real();
                }
                d = std::max(d, 1e-14 * h);
                FieldValue out;
                out.stats.zeta = 1.0 / d;
                out.stats.rho = out.stats.zeta * u;
                out.statistic = std::norm(u) / d;
                return out;
            }

            // d x / d(tau, phi)
            Eigen::Vector2d gradient(const DispersionVector &psi) const
            {
                const ModelContext &ctx = model_.context();
                const CVec s = ctx.steering(psi);
                const SteeringJacobian jac = ctx.jacobian(psi);
                const double h = model_.steering_form(psi);
                const Eigen::Vector2d dh = model_.steering_form_gradient(psi);
                const cplx u = s.dot(z_);
                double d = h;
                CVec sv;
                if (w_.cols() > 0)
                {
                    const CVec v = w_.adjoint() * s;
                    sv = sigma_ * v;
                    d -= v.dot(sv).real();
                }
                d = std::max(d, 1e-14 * h);
                const double u2 = std::norm(u);
                Eigen::Vector2d g;
                for (int i = 0; i < 2; ++i)
                {
                    const CVec &ds = i == 0 ? jac.d_tau : jac.d_phi;
                    const cplx du = ds.dot(z_);
                    double dd = dh[i];
                    if (w_.cols() > 0)
                    {
                        const CVec dv = w_.adjoint() * ds;
                        dd -= 2.0 * sv.dot(dv).real();
                    }
                    const double du2 = 2.0 * std::real(std::conj(u) * du);
                    g[i] = (du2 * d - u2 * dd) / (d * d);
                }
                return g;
            }

        private:
            const InferenceModel &model_;
            CMat w_;
            CMat sigma_;
            CVec z_;
        };

        DispersionVector normalized(const ModelContext &ctx, double tau, double phi)
        {
            return DispersionVector(ctx.domain.normalize_delay(tau), phi);
        }

        struct RefineSettings
        {
            double delay_halfwidth = 0.0;
            double angle_halfwidth = 0.0;
            std::size_t max_iterations = 50;
            double tolerance = 1e-6;
        };

        // Coordinate line searches followed by Newton steps on the 2-D statistic; never returns a worse point.
        DispersionVector refine(const ResidualField &field, const DispersionVector &start, const RefineSettings &rs,
                                double *best_value = nullptr)
        {
            const ModelContext &ctx = field.model().context();
            const bool has_angle = ctx.geometry.size() > 1 && ctx.geometry.span() > 0.0;
            const double B = ctx.spectrum.bandwidth();

            DispersionVector best = start;
            double fbest = field.evaluate(start).statistic;
            const double f0 = fbest;

            auto consider = [&](const DispersionVector &p)
            {
                const double f = field.evaluate(p).statistic;
                if (f > fbest)
                {
                    fbest = f;
                    best = p;
                    return true;
                }
                return false;
            };

            // Line searches; the brackets shrink after the first sweep.
            double htau = rs.delay_halfwidth, hphi = rs.angle_halfwidth;
            for (int sweep = 0; sweep < 2; ++sweep)
            {
                {
                    const DispersionVector c = best;
                    auto r = boost::math::tools::brent_find_minima(
                        [&](double t) { return -field.evaluate(normalized(ctx, t, c.phi)).statistic; }, c.tau - htau,
                        c.tau + htau, 40);
                    consider(normalized(ctx, r.first, c.phi));
                }
                if (has_angle)
                {
                    const DispersionVector c = best;
                    auto r = boost::math::tools::brent_find_minima(
                        [&](double p) { return -field.evaluate(normalized(ctx, c.tau, p)).statistic; }, c.phi - hphi,
                        c.phi + hphi, 40);
                    consider(normalized(ctx, c.tau, r.first));
                }
                htau *= 0.25;
                hphi *= 0.25;
            }

            // Newton in scaled coordinates (tau * B, phi) with a central-difference Hessian of the analytic gradient.
            auto scaled_gradient = [&](const DispersionVector &p)
            {
                Eigen::Vector2d g = field.gradient(p);
                g[0] /= B;
                if (!has_angle)
                    g[1] = 0.0;
                return g;
            };
            const double hs = 1e-5;
            for (std::size_t it = 0; it < rs.max_iterations; ++it)
            {
                const Eigen::Vector2d g = scaled_gradient(best);
                Eigen::Matrix2d H = Eigen::Matrix2d::Zero();
                for (int i = 0; i < (has_angle ? 2 : 1); ++i)
                {
                    const double dt = i == 0 ? hs / B : 0.0, dp = i == 1 ? hs : 0.0;
                    const Eigen::Vector2d gp = scaled_gradient(normalized(ctx, best.tau + dt, best.phi + dp));
                    const Eigen::Vector2d gm = scaled_gradient(normalized(ctx, best.tau - dt, best.phi - dp));
                    H.col(i) = (gp - gm) / (2.0 * hs);
                }
                H = 0.5 * (H + H.transpose()).eval();

                // Use only negative-curvature directions; a maximum has H negative definite.
                Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(H);
                Eigen::Vector2d step = Eigen::Vector2d::Zero();
                for (int i = 0; i < 2; ++i)
                {
                    const double lam = es.eigenvalues()[i];
                    const Eigen::Vector2d v = es.eigenvectors().col(i);
                    if (lam < -1e-12 * std::max(1.0, std::abs(fbest)))
                        step -= (v.dot(g) / lam) * v;
                }
                if (!has_angle)
                    step[1] = 0.0;
                if (step.norm() < 1e-12)
                    break;
                // keep steps within the local cell
                const double cap = 0.5;
                if (step.norm() > cap)
                    step *= cap / step.norm();

                bool improved = false;
                const double before = fbest;
                for (int bt = 0; bt < 30 && !improved; ++bt)
                {
                    improved = consider(normalized(ctx, best.tau + step[0] / B, best.phi + step[1]));
                    step *= 0.5;
                }
                if (!improved || (fbest - before) <= rs.tolerance * 1e-6 * std::abs(fbest))
                    break;
            }

            if (best_value)
                *best_value = std::max(fbest, f0);
            return best;
        }

        RefineSettings refine_settings(const ModelContext &ctx, const EstimatorConfig &config, const CandidateGrid &grid)
        {
            RefineSettings rs;
            rs.delay_halfwidth = grid.delay_step(ctx);
            rs.angle_halfwidth = grid.angle_step();
            rs.max_iterations = config.max_refine_iterations;
            rs.tolerance = config.refine_tolerance;
            return rs;
        }

        // Steering columns of the active slots (optionally without one slot).
        struct ActiveColumns
        {
            std::vector<std::size_t> slots;
            CMat s;
            CMat qs;
            std::vector<double> gamma;
        };

        ActiveColumns active_columns(const ComponentSet &set, const StructuredCovariance &q, const ModelContext &ctx,
                                     std::optional<std::size_t> exclude = std::nullopt)
        {
            ActiveColumns out;
            for (std::size_t l : set.active_indices())
                if (!exclude || *exclude != l)
                    out.slots.push_back(l);
            const auto K = static_cast<Eigen::Index>(out.slots.size());
            out.s.resize(static_cast<Eigen::Index>(ctx.dimension()), K);
            for (Eigen::Index k = 0; k < K; ++k)
            {
                const auto &slot = set.slots[out.slots[static_cast<std::size_t>(k)]];
                out.s.col(k) = ctx.steering(*slot.psi);
                out.gamma.push_back(slot.gamma);
            }
            out.qs = K > 0 ? q.solve(out.s) : CMat(out.s.rows(), 0);
            return out;
        }

    }

    double marginal_nll(const CVec &y, const CMat &columns, const std::vector<double> &gamma,
                        const StructuredCovariance &q)
    {
        std::vector<Eigen::Index> keep;
        for (std::size_t k = 0; k < gamma.size(); ++k)
            if (std::isfinite(gamma[k]))
                keep.push_back(static_cast<Eigen::Index>(k));

        const CVec qy = q.solve(y);
        const double base = q.logdet() + y.dot(qy).real();
        if (keep.empty())
            return base;

        CMat s(columns.rows(), static_cast<Eigen::Index>(keep.size()));
        std::vector<double> g;
        for (std::size_t k = 0; k < keep.size(); ++k)
        {
            s.col(static_cast<Eigen::Index>(k)) = columns.col(keep[k]);
            g.push_back(gamma[static_cast<std::size_t>(keep[k])]);
        }
        const CMat qs = q.solve(s);
        const InnerSystem inner(gram_of(s, qs), g);
        const CVec b = qs.adjoint() * y;
        const CVec db = inner.d.asDiagonal() * b;
        const double quad = y.dot(qy).real() - db.dot(inner.llt.solve(db)).real();
        return q.logdet() + inner.logdet + quad;
    }

    double marginal_nll(const CVec &y, const std::vector<DispersionVector> &psi, const std::vector<double> &gamma,
                        const StructuredCovariance &q, const ModelContext &ctx)
    {
        if (psi.size() != gamma.size())
            throw std::invalid_argument("marginal_nll: psi and gamma lengths differ.");
        CMat s(static_cast<Eigen::Index>(ctx.dimension()), static_cast<Eigen::Index>(psi.size()));
        for (std::size_t k = 0; k < psi.size(); ++k)
            s.col(static_cast<Eigen::Index>(k)) = ctx.steering(psi[k]);
        return marginal_nll(y, s, gamma, q);
    }

    double marginal_nll(const CVec &y, const ComponentSet &set, const StructuredCovariance &q, const ModelContext &ctx)
    {
        const ActiveColumns a = active_columns(set, q, ctx);
        return marginal_nll(y, a.s, a.gamma, q);
    }

    AmplitudePosterior amplitude_posterior(const CVec &y, const CMat &columns, const std::vector<double> &gamma,
                                           const StructuredCovariance &q)
    {
        AmplitudePosterior out;
        if (columns.cols() == 0)
        {
            out.mu.resize(0);
            out.sigma.resize(0, 0);
            return out;
        }
        const CMat qs = q.solve(columns);
        const InnerSystem inner(gram_of(columns, qs), gamma);
        out.sigma = inner.inverse();
        out.sigma = 0.5 * (out.sigma + out.sigma.adjoint().eval());
        out.mu = inner.solve(qs.adjoint() * y);
        return out;
    }

    ResidualStats residual_stats(std::size_t l, const CVec &y, const ComponentSet &set, const StructuredCovariance &q,
                                 const ModelContext &ctx, std::optional<DispersionVector> at)
    {
        const DispersionVector psi = at ? *at : set.slots.at(l).psi.value();
        const InferenceModel model(ctx, q);
        const ActiveColumns others = active_columns(set, q, ctx, l);
        const ResidualField field(model, q.solve(y), others.s, others.qs, others.gamma);
        const CVec s = ctx.steering(psi);
        // Direct quadratic form here; the trigonometric shortcut is reserved for the search loops.
        return field.evaluate(s, q.quadratic(s)).stats;
    }

    DispersionVector update_psi(std::size_t l, const CVec &y, const ComponentSet &set, const StructuredCovariance &q,
                                const ModelContext &ctx, const EstimatorConfig &config)
    {
        const DispersionVector start = set.slots.at(l).psi.value();
        const InferenceModel model(ctx, q);
        const ActiveColumns others = active_columns(set, q, ctx, l);
        const ResidualField field(model, q.solve(y), others.s, others.qs, others.gamma);
        const CandidateGrid grid = CandidateGrid::for_context(ctx, config);
        return refine(field, start, refine_settings(ctx, config, grid));
    }

    CandidateGrid CandidateGrid::for_context(const ModelContext &ctx, const EstimatorConfig &config)
    {
        CandidateGrid g;
        const double T = ctx.domain.max_delay();
        const double B = ctx.spectrum.bandwidth();
        g.delay_points = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(T * B * config.delay_oversampling - 1e-9)));
        if (ctx.geometry.size() <= 1 || ctx.geometry.span() <= 0.0)
            g.angle_points = 1;
        else
        {
            const double span_wl = ctx.geometry.span() * ctx.spectrum.center_frequency() / speed_of_light;
            g.angle_points = std::max<std::size_t>(config.angle_points, static_cast<std::size_t>(std::ceil(8.0 * span_wl)));
        }
        return g;
    }

    double CandidateGrid::delay_step(const ModelContext &ctx) const
    {
        return ctx.domain.max_delay() / static_cast<double>(delay_points);
    }

    double CandidateGrid::angle_step() const
    {
        return two_pi / static_cast<double>(angle_points);
    }

    namespace
    {
        // x on the whole grid, factorized per angle: s^H v = sum_n e^{j2 pi f_n tau} u_n(phi).
        double grid_statistic_scan(const ResidualField &field, const CandidateGrid &grid, RMat &values)
        {
            const InferenceModel &model = field.model();
            const ModelContext &ctx = model.context();
            const auto N = static_cast<Eigen::Index>(ctx.spectrum.size());
            const std::size_t M = ctx.geometry.size();
            const auto nt = static_cast<Eigen::Index>(grid.delay_points);
            const auto np = static_cast<Eigen::Index>(grid.angle_points);
            const double dtau = grid.delay_step(ctx);
            const double delta = ctx.spectrum.delta();
            const double fc = ctx.spectrum.center_frequency();
            const double wb = model.wb();
            const CVec &S = ctx.spectrum.samples();
            const Eigen::Index K = field.w().cols();

            CMat E(nt, N);
            for (Eigen::Index i = 0; i < nt; ++i)
                for (Eigen::Index n = 0; n < N; ++n)
                    E(i, n) = std::polar(1.0, two_pi * ctx.spectrum.frequency(static_cast<std::size_t>(n)) * dtau * static_cast<double>(i));
            CMat E2(nt, 2 * N - 1);
            for (Eigen::Index i = 0; i < nt; ++i)
                for (Eigen::Index k = 0; k < 2 * N - 1; ++k)
                    E2(i, k) = std::polar(1.0, two_pi * static_cast<double>(k - (N - 1)) * delta * dtau * static_cast<double>(i));
            const std::vector<cplx> &c = model.coefficients();

            // Right-hand vectors: z and the columns of W.
            CMat V(static_cast<Eigen::Index>(M) * N, K + 1);
            V.col(0) = field.z();
            if (K > 0)
                V.rightCols(K) = field.w();

            values.resize(nt, np);
            double best = -1.0;
            CMat U(N, K + 1);
            CVec d(2 * N - 1);
            for (Eigen::Index j = 0; j < np; ++j)
            {
                const double phi = -pi + two_pi * static_cast<double>(j) / static_cast<double>(np);
                U.setZero();
                d.setZero();
                for (std::size_t m = 0; m < M; ++m)
                {
                    const double g = relative_delay(phi, ctx.geometry, m);
                    for (Eigen::Index n = 0; n < N; ++n)
                    {
                        const double f = ctx.spectrum.frequency(static_cast<std::size_t>(n));
                        const cplx ph = std::conj(S[n]) * std::polar(1.0, -two_pi * (fc + wb * f) * g);
                        U.row(n) += ph * V.row(static_cast<Eigen::Index>(m) * N + n);
                    }
                    for (Eigen::Index k = 0; k < 2 * N - 1; ++k)
                        d[k] += c[static_cast<std::size_t>(k)] *
                                std::polar(1.0, -two_pi * static_cast<double>(k - (N - 1)) * delta * wb * g);
                }
                const CMat P = E * U; // row i: s^H [z, W] at (tau_i, phi_j)
                const RVec H = (E2 * d).real();
                for (Eigen::Index i = 0; i < nt; ++i)
                {
                    double den = H[i];
                    if (K > 0)
                    {
                        const CVec v = P.row(i).tail(K).adjoint(); // W^H s
                        den -= v.dot(field.sigma() * v).real();
                    }
                    den = std::max(den, 1e-14 * H[i]);
                    const double x = std::norm(P(i, 0)) / den;
                    values(i, j) = x;
                    best = std::max(best, x);
                }
            }
            return best;
        }

        Candidate search_field(const ResidualField &field, const ModelContext &ctx, const CandidateGrid &grid,
                               const EstimatorConfig &config)
        {
            RMat values;
            grid_statistic_scan(field, grid, values);
            const auto nt = values.rows(), np = values.cols();
            const bool wrap_tau = ctx.domain.periodic();

            struct Peak
            {
                double value;
                Eigen::Index i, j;
            };
            std::vector<Peak> peaks;
            for (Eigen::Index j = 0; j < np; ++j)
                for (Eigen::Index i = 0; i < nt; ++i)
                {
                    const double v = values(i, j);
                    bool is_max = true;
                    for (int di = -1; di <= 1 && is_max; ++di)
                        for (int dj = -1; dj <= 1 && is_max; ++dj)
                        {
                            if (di == 0 && dj == 0)
                                continue;
                            Eigen::Index ii = i + di, jj = (j + dj + np) % np;
                            if (ii < 0 || ii >= nt)
                            {
                                if (!wrap_tau)
                                    continue;
                                ii = (ii + nt) % nt;
                            }
                            if (values(ii, jj) > v)
                                is_max = false;
                        }
                    if (is_max)
                        peaks.push_back({v, i, j});
                }
            // Highest first; ties go to the smaller delay, then the smaller angle.
            std::stable_sort(peaks.begin(), peaks.end(), [](const Peak &a, const Peak &b)
                             {
                                 if (a.value != b.value)
                                     return a.value > b.value;
                                 if (a.i != b.i)
                                     return a.i < b.i;
                                 return a.j < b.j;
                             });

            const RefineSettings rs = refine_settings(ctx, config, grid);
            Candidate best;
            best.statistic = -1.0;
            const std::size_t count = std::min<std::size_t>(std::max<std::size_t>(config.refine_candidates, 1), peaks.size());
            for (std::size_t p = 0; p < count; ++p)
            {
                const DispersionVector start(grid.delay_step(ctx) * static_cast<double>(peaks[p].i),
                                             -pi + grid.angle_step() * static_cast<double>(peaks[p].j));
                double value = 0.0;
                const DispersionVector psi = refine(field, start, rs, &value);
                if (value > best.statistic || (value == best.statistic && psi.tau < best.psi.tau))
                {
                    best.statistic = value;
                    best.psi = psi;
                }
            }
            const CVec s = ctx.steering(best.psi);
            const FieldValue fv = field.evaluate(s, field.model().covariance().quadratic(s));
            best.stats = fv.stats;
            best.statistic = fv.statistic;
            return best;
        }
    }

    Candidate candidate_search(const CVec &y, const ComponentSet &set, const StructuredCovariance &q,
                               const ModelContext &ctx, const CandidateGrid &grid, const EstimatorConfig &config)
    {
        const InferenceModel model(ctx, q);
        const ActiveColumns others = active_columns(set, q, ctx);
        const ResidualField field(model, q.solve(y), others.s, others.qs, others.gamma);
        return search_field(field, ctx, grid, config);
    }

    RMat statistic_map(const CVec &y, const ComponentSet &set, const StructuredCovariance &q, const ModelContext &ctx,
                       const CandidateGrid &grid)
    {
        const InferenceModel model(ctx, q);
        const ActiveColumns others = active_columns(set, q, ctx);
        const ResidualField field(model, q.solve(y), others.s, others.qs, others.gamma);
        RMat values;
        grid_statistic_scan(field, grid, values);
        return values;
    }

    namespace
    {
        constexpr double bad_objective = 1e300;

        struct EtaProblem
        {
            const CVec *y;
            const CMat *columns;
            const std::vector<double> *gamma;
            const ModelContext *ctx;
            EtaBounds bounds;
            std::size_t evaluations = 0;
            double best = bad_objective;
            DmcParams best_eta;
            bool fixed_dps = false;

            static double clamp_log(double v, double lo, double hi)
            {
                return std::clamp(v, std::log(lo), std::log(hi));
            }

            DmcParams decode(const gsl_vector *x) const
            {
                DmcParams eta;
                eta.sigma2 = std::exp(clamp_log(gsl_vector_get(x, 0), bounds.sigma2_lo, bounds.sigma2_hi));
                eta.dmc_power = std::exp(clamp_log(gsl_vector_get(x, 1), bounds.power_lo, bounds.power_hi));
                const double B = ctx->spectrum.bandwidth();
                const double beta = std::clamp(gsl_vector_get(x, 2) / B, bounds.beta_lo, bounds.beta_hi);
                const double theta = std::exp(clamp_log(gsl_vector_get(x, 3), bounds.theta_lo, bounds.theta_hi));
                const double xi = std::exp(clamp_log(gsl_vector_get(x, 4), bounds.xi_lo, bounds.xi_hi));
                eta.dps = GammaDps(beta, theta, xi, ctx->domain.max_delay());
                return eta;
            }

            double evaluate(const DmcParams &eta)
            {
                ++evaluations;
                try
                {
                    DelayCorrelationOptions opts;
                    opts.check_convergence = false;
                    opts.base_refinement = 1;
                    const CMat qf = delay_correlation(ctx->spectrum, eta.dps, ctx->domain, opts);
                    const StructuredCovariance q =
                        build_structured_covariance(qf, eta.dmc_power, eta.sigma2, ctx->geometry.size());
                    const double v = marginal_nll(*y, *columns, *gamma, q);
                    if (!std::isfinite(v))
                        return bad_objective;
                    if (v < best)
                    {
                        best = v;
                        best_eta = eta;
                    }
                    return v;
                }
                catch (const std::exception &)
                {
                    return bad_objective;
                }
            }

            static double gsl_objective(const gsl_vector *x, void *params)
            {
                auto *self = static_cast<EtaProblem *>(params);
                try
                {
                    return self->evaluate(self->decode(x));
                }
                catch (const std::exception &)
                {
                    return bad_objective;
                }
            }
        };
    }

    EtaUpdate update_eta(const CVec &y, const ComponentSet &set, const DmcParams &eta_init, const EtaBounds &bounds,
                         const ModelContext &ctx, std::size_t max_evaluations)
    {
        // The NLL depends on psi only through the steering columns, which stay fixed here.
        ActiveColumns a;
        {
            const auto idx = set.active_indices();
            a.s.resize(static_cast<Eigen::Index>(ctx.dimension()), static_cast<Eigen::Index>(idx.size()));
            for (std::size_t k = 0; k < idx.size(); ++k)
            {
                a.s.col(static_cast<Eigen::Index>(k)) = ctx.steering(*set.slots[idx[k]].psi);
                a.gamma.push_back(set.slots[idx[k]].gamma);
            }
        }

        EtaProblem problem{&y, &a.s, &a.gamma, &ctx, bounds, 0, bad_objective, DmcParams{}, false};
        const double start_value = problem.evaluate(eta_init);
        problem.best = start_value;
        problem.best_eta = eta_init;

        const double B = ctx.spectrum.bandwidth();
        gsl_vector *x = gsl_vector_alloc(5);
        gsl_vector *step = gsl_vector_alloc(5);
        gsl_vector_set(x, 0, std::log(std::clamp(eta_init.sigma2, bounds.sigma2_lo, bounds.sigma2_hi)));
        gsl_vector_set(x, 1, std::log(std::clamp(eta_init.dmc_power, bounds.power_lo, bounds.power_hi)));
        gsl_vector_set(x, 2, std::clamp(eta_init.dps.beta(), bounds.beta_lo, bounds.beta_hi) * B);
        gsl_vector_set(x, 3, std::log(std::clamp(eta_init.dps.theta(), bounds.theta_lo, bounds.theta_hi)));
        gsl_vector_set(x, 4, std::log(std::clamp(eta_init.dps.xi(), bounds.xi_lo, bounds.xi_hi)));
        gsl_vector_set(step, 0, 0.7);
        gsl_vector_set(step, 1, 0.7);
        gsl_vector_set(step, 2, 0.5);
        gsl_vector_set(step, 3, 0.4);
        gsl_vector_set(step, 4, 0.3);

        gsl_multimin_function fn;
        fn.n = 5;
        fn.f = &EtaProblem::gsl_objective;
        fn.params = &problem;

        gsl_error_handler_t *old_handler = gsl_set_error_handler_off();
        gsl_multimin_fminimizer *solver = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 5);
        bool stalled = true;
        if (gsl_multimin_fminimizer_set(solver, &fn, x, step) == GSL_SUCCESS)
        {
            while (problem.evaluations < max_evaluations)
            {
                if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS)
                    break;
                const double size = gsl_multimin_fminimizer_size(solver);
                if (gsl_multimin_test_size(size, 1e-4) == GSL_SUCCESS)
                {
                    stalled = false;
                    break;
                }
            }
        }
        gsl_multimin_fminimizer_free(solver);
        gsl_vector_free(x);
        gsl_vector_free(step);
        gsl_set_error_handler(old_handler);

        EtaUpdate out;
        out.evaluations = problem.evaluations;
        out.stalled = stalled;
        if (problem.best < start_value)
        {
            out.eta = problem.best_eta;
            out.nll = problem.best;
        }
        else
        {
            out.eta = eta_init;
            out.nll = start_value;
        }
        return out;
    }

    namespace
    {
        // Mutable estimator state with cached steering columns.
        class Session
        {
        public:
            Session(const CVec &y, const EstimatorConfig &config, const ModelContext &ctx, EstimationResult &result)
                : y_(y), config_(config), ctx_(ctx), result_(result), set_(config.max_components),
                  grid_(CandidateGrid::for_context(ctx, config))
            {
                eta_ = config.eta;
                if (!config.eta_known && config.eta_init_from_data)
                {
                    const double M = static_cast<double>(ctx.geometry.size());
                    const double N = static_cast<double>(ctx.spectrum.size());
                    eta_.sigma2 = 0.5 * y.squaredNorm() / (M * N);
                    eta_.dmc_power = 0.5 * y.squaredNorm() / M;
                }
                bounds_ = config.eta_bounds ? *config.eta_bounds : EtaBounds::defaults(y, ctx);
                rebuild_covariance();
            }

            void rebuild_covariance()
            {
                q_ = std::make_unique<StructuredCovariance>(
                    build_structured_covariance(eta_, ctx_.spectrum, ctx_.domain, ctx_.geometry.size()));
                model_ = std::make_unique<InferenceModel>(ctx_, *q_);
                qy_ = q_->solve(y_);
            }

            double nll() const { return marginal_nll(y_, set_, *q_, ctx_); }
            double objective(double nll) const
            {
                return nll + activation_penalty(config_.kappa) * static_cast<double>(set_.active_count());
            }

            void record(std::size_t iteration, const std::string &step, long component)
            {
                TraceEntry e;
                e.iteration = iteration;
                e.step = step;
                e.component = component;
                e.nll = nll();
                e.objective = objective(e.nll);
                e.active = set_.active_count();
                result_.trace.push_back(e);
                last_nll_ = e.nll;
            }

            ResidualField field_without(std::optional<std::size_t> exclude) const
            {
                const ActiveColumns others = active_columns(set_, *q_, ctx_, exclude);
                return ResidualField(*model_, qy_, others.s, others.qs, others.gamma);
            }

            // Births until the best candidate fails the threshold or the budget is full.
            std::size_t births(std::size_t iteration)
            {
                std::size_t count = 0;
                while (true)
                {
                    const auto slot = set_.free_slot();
                    if (!slot)
                        break;
                    const ResidualField field = field_without(std::nullopt);
                    const Candidate c = search_field(field, ctx_, grid_, config_);
                    const double gamma = update_gamma(c.stats, config_.kappa);
                    if (!std::isfinite(gamma))
                        break;
                    set_.activate(*slot, c.psi, gamma);
                    ++count;
                    record(iteration, "birth", static_cast<long>(*slot));
                }
                return count;
            }

            std::size_t refine_all(std::size_t iteration)
            {
                std::size_t deaths = 0;
                const RefineSettings rs = refine_settings(ctx_, config_, grid_);
                for (std::size_t l : set_.active_indices())
                {
                    if (!set_.slots[l].active())
                        continue;
                    const ResidualField field = field_without(l);
                    const DispersionVector psi = refine(field, *set_.slots[l].psi, rs);
                    const CVec s = ctx_.steering(psi);
                    const FieldValue fv = field.evaluate(s, q_->quadratic(s));
                    const double gamma = update_gamma(fv.stats, config_.kappa);
                    if (std::isfinite(gamma))
                    {
                        set_.activate(l, psi, gamma);
                        record(iteration, "update", static_cast<long>(l));
                    }
                    else
                    {
                        set_.prune(l);
                        ++deaths;
                        record(iteration, "prune", static_cast<long>(l));
                    }
                }
                return deaths;
            }

            std::size_t merge_duplicates(std::size_t iteration)
            {
                std::size_t merged = 0;
                const double tol_tau = config_.duplicate_fraction * ctx_.delay_resolution();
                const double tol_phi = config_.duplicate_fraction * ctx_.angle_resolution();
                const bool has_angle = ctx_.geometry.size() > 1 && ctx_.geometry.span() > 0.0;
                bool again = true;
                while (again)
                {
                    again = false;
                    const auto idx = set_.active_indices();
                    for (std::size_t a = 0; a < idx.size() && !again; ++a)
                        for (std::size_t b = a + 1; b < idx.size() && !again; ++b)
                        {
                            const DispersionVector &pa = *set_.slots[idx[a]].psi, &pb = *set_.slots[idx[b]].psi;
                            double dt = pa.tau - pb.tau;
                            if (ctx_.domain.periodic())
                                dt = wrap_symmetric(dt, ctx_.domain.period());
                            const double dp = has_angle ? wrap_angle(pa.phi - pb.phi) : 0.0;
                            if (std::abs(dt) < tol_tau && std::abs(dp) < tol_phi)
                            {
                                const double xa = residual_stats(idx[a], y_, set_, *q_, ctx_).statistic();
                                const double xb = residual_stats(idx[b], y_, set_, *q_, ctx_).statistic();
                                const std::size_t drop = xa < xb ? idx[a] : idx[b];
                                set_.prune(drop);
                                ++merged;
                                record(iteration, "merge", static_cast<long>(drop));
                                again = true;
                            }
                        }
                }
                return merged;
            }

            void estimate_eta(std::size_t iteration)
            {
                const EtaUpdate u = update_eta(y_, set_, eta_, bounds_, ctx_, config_.max_eta_evaluations);
                if (u.stalled)
                    result_.log.push_back("iteration " + std::to_string(iteration) + ": eta optimizer stalled after " +
                                          std::to_string(u.evaluations) + " evaluations; kept best-so-far.");
                eta_ = u.eta;
                rebuild_covariance();
                // Gammas stay; re-check the thresholds under the new noise model on the next refinement pass.
                record(iteration, "eta", -1);
            }

            void finish()
            {
                const ActiveColumns a = active_columns(set_, *q_, ctx_);
                const AmplitudePosterior post = amplitude_posterior(y_, a.s, a.gamma, *q_);
                result_.components.clear();
                result_.gammas.clear();
                for (std::size_t k = 0; k < a.slots.size(); ++k)
                {
                    result_.components.push_back(*set_.slots[a.slots[k]].psi);
                    result_.gammas.push_back(a.gamma[k]);
                }
                result_.mu = post.mu;
                result_.sigma = post.sigma;
                result_.eta_hat = eta_;
                result_.nll = marginal_nll(y_, a.s, a.gamma, *q_);
            }

            double last_nll() const { return last_nll_; }

        private:
            const CVec &y_;
            const EstimatorConfig &config_;
            const ModelContext &ctx_;
            EstimationResult &result_;
            ComponentSet set_;
            CandidateGrid grid_;
            DmcParams eta_;
            EtaBounds bounds_;
            std::unique_ptr<StructuredCovariance> q_;
            std::unique_ptr<InferenceModel> model_;
            CVec qy_;
            double last_nll_ = 0.0;
        };
    }

    EstimationResult run_estimation(const CVec &y, const EstimatorConfig &config, const ModelContext &ctx)
    {
        if (static_cast<std::size_t>(y.size()) != ctx.dimension())
            throw std::invalid_argument("run_estimation: observation length does not match M * N.");
        if (!(config.kappa >= 1.0))
            throw std::invalid_argument("run_estimation: kappa must be at least 1.");
        if (config.max_components < 1)
            throw std::invalid_argument("run_estimation: the component budget L must be at least 1.");

        EstimationResult result;
        Session session(y, config, ctx, result);
        session.record(0, "init", -1);

        try
        {
            if (!config.eta_known)
                session.estimate_eta(0);
            double previous = session.last_nll();
            for (std::size_t it = 1; it <= config.max_outer_iterations; ++it)
            {
                result.iterations = it;
                std::size_t changes = session.births(it);
                changes += session.refine_all(it);
                changes += session.merge_duplicates(it);
                if (!config.eta_known)
                    session.estimate_eta(it);
                const double current = session.last_nll();
                const double rel = std::abs(current - previous) / std::max(std::abs(current), 1.0);
                previous = current;
                if (changes == 0 && rel < config.tolerance)
                {
                    result.converged = true;
                    break;
                }
            }
        }
        catch (const NumericalError &e)
        {
            result.log.push_back(std::string("numerical failure, stopping early: ") + e.what());
        }

        try
        {
            session.finish();
        }
        catch (const NumericalError &e)
        {
            result.log.push_back(std::string("amplitude posterior failed: ") + e.what());
        }
        return result;
    }
}
