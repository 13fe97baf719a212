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

#ifndef UWBSR_TEST_SUPPORT_HPP
#define UWBSR_TEST_SUPPORT_HPP

#include "uwbsr/harness.hpp"

#include <random>

#ifdef DOCTEST_VERSION_STR
// Purely relative comparison (doctest's default also adds an absolute scale of 1).
inline doctest::Approx rel(double v) { return doctest::Approx(v).scale(0.0); }
#endif

namespace uwbsr::testing
{
    // Root-raised-cosine pulse used throughout the synthetic studies.
    inline PulseSpectrum rrc(std::size_t n) { return PulseSpectrum::root_raised_cosine(0.6, 1.6e9, 6e9, n); }

    // beta = 1 m / c, theta = 5 ns, xi = 1.8 over the unambiguous range.
    inline GammaDps reference_dps(const PulseSpectrum &s)
    {
        return GammaDps(1.0 / speed_of_light, 5e-9, 1.8, s.alias_period());
    }

    inline CVec random_cvec(std::mt19937_64 &rng, Eigen::Index n)
    {
        std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
        CVec v(n);
        for (Eigen::Index i = 0; i < n; ++i)
        {
            const double re = nd(rng);
            v[i] = cplx(re, nd(rng));
        }
        return v;
    }

    inline double uniform(std::mt19937_64 &rng, double lo, double hi)
    {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    }

    // Hermitian and min eigenvalue >= -rel * max eigenvalue.
    inline bool hermitian_psd(const CMat &a, double rel = 1e-10)
    {
        if ((a - a.adjoint()).norm() > 1e-12 * a.norm())
            return false;
        const Eigen::SelfAdjointEigenSolver<CMat> es(a, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff() >= -rel * std::abs(es.eigenvalues().maxCoeff());
    }

    // log det C + y^H C^-1 y through a dense factorization.
    inline double dense_nll(const CVec &y, const CMat &c)
    {
        const Eigen::LLT<CMat> llt(c);
        const CMat l = llt.matrixL();
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < l.rows(); ++i)
            logdet += 2.0 * std::log(l(i, i).real());
        return logdet + y.dot(llt.solve(y)).real();
    }

    inline ModelContext context(const ArrayGeometry &g, const PulseSpectrum &s, bool wideband = true)
    {
        return ModelContext{g, s, DispersionDomain::unambiguous(s), wideband};
    }
}

#endif
