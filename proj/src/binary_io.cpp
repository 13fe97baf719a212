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

#include "uwbsr/binary_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace uwbsr
{
    namespace
    {
        template <class T>
        T to_little(T v)
        {
            if constexpr (std::endian::native == std::endian::little)
                return v;
            else
            {
                unsigned char b[sizeof(T)];
                std::memcpy(b, &v, sizeof(T));
                for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
                    std::swap(b[i], b[sizeof(T) - 1 - i]);
                std::memcpy(&v, b, sizeof(T));
                return v;
            }
        }

        template <class T>
        void put(std::ostream &os, T v)
        {
            v = to_little(v);
            os.write(reinterpret_cast<const char *>(&v), sizeof(T));
        }

        template <class T>
        T get(std::istream &is)
        {
            T v;
            if (!is.read(reinterpret_cast<char *>(&v), sizeof(T)))
                throw std::runtime_error("Truncated binary dump.");
            return to_little(v);
        }
    }

    void write_matrix(const std::filesystem::path &path, const CMat &m)
    {
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw std::runtime_error("Cannot open " + path.string() + " for writing.");
        put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
        put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
            {
                put<double>(os, m(r, c).real());
                put<double>(os, m(r, c).imag());
            }
        if (!os)
            throw std::runtime_error("Write to " + path.string() + " failed.");
    }

    CMat read_matrix(const std::filesystem::path &path)
    {
        std::ifstream is(path, std::ios::binary);
        if (!is)
            throw std::runtime_error("Cannot open " + path.string() + ".");
        const auto rows = get<std::uint64_t>(is);
        const auto cols = get<std::uint64_t>(is);
        const auto expected = std::filesystem::file_size(path);
        if (rows > (1ull << 31) || cols > (1ull << 31) || expected != 16 + rows * cols * 16)
            throw std::runtime_error("Binary dump " + path.string() + " has an inconsistent size.");
        CMat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
            {
                const double re = get<double>(is);
                const double im = get<double>(is);
                m(r, c) = cplx(re, im);
            }
        return m;
    }

    CVec read_vector(const std::filesystem::path &path)
    {
        const CMat m = read_matrix(path);
        if (m.cols() != 1)
            throw std::runtime_error("Expected a column vector in " + path.string() + ".");
        return m.col(0);
    }
}
