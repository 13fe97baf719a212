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

#ifndef UWBSR_BINARY_IO_HPP
#define UWBSR_BINARY_IO_HPP

#include "uwbsr/types.hpp"

#include <filesystem>

namespace uwbsr
{
    // 16-byte header (uint64 rows, uint64 cols, little-endian) followed by row-major complex128 (re, im) pairs.
    void write_matrix(const std::filesystem::path &path, const CMat &m);
    CMat read_matrix(const std::filesystem::path &path);

    // Vectors are stored as rows x 1.
    inline void write_vector(const std::filesystem::path &path, const CVec &v) { write_matrix(path, CMat(v)); }
    CVec read_vector(const std::filesystem::path &path);
}

#endif
