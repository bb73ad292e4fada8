// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Weight checkpoint format (.vsp):
//   bytes 0..3   magic "VSP1"
//   bytes 4..11  rows, u64 little endian
//   bytes 12..19 cols, u64 little endian
//   then rows*cols f32 little endian, row-major.
// Vectors are stored as rows = len, cols = 1.

#pragma once

#include <filesystem>

#include "vspec/tensor.hpp"

namespace vspec {

void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

void save_vector(const std::filesystem::path& path, const Vector& v);
Vector load_vector(const std::filesystem::path& path);

}  // namespace vspec
