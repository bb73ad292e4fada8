// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/tensor_io.hpp"

#include <fstream>

#include "le_io.hpp"

namespace vspec {
namespace {

constexpr char kMagic[4] = {'V', 'S', 'P', '1'};

}  // namespace

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.size(); ++i) detail::write_le<float>(os, m.data()[i]);
  if (!os) throw DataError("write failed: " + path.string());
}

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kMagic, 4))
    throw DataError(path.string() + ": bad magic, expected VSP1");
  std::uint64_t rows = 0, cols = 0;
  if (!detail::read_le(is, rows) || !detail::read_le(is, cols))
    throw DataError(path.string() + ": truncated header");
  const auto bytes = std::filesystem::file_size(path);
  if (rows != 0 && cols > (bytes - 20) / 4 / rows)
    throw DataError(path.string() + ": header claims more data than the file holds");
  if (bytes != 20 + rows * cols * 4) throw DataError(path.string() + ": size mismatch with header");
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (Index i = 0; i < m.size(); ++i)
    if (!detail::read_le(is, m.data()[i])) throw DataError(path.string() + ": truncated payload");
  return m;
}

void save_vector(const std::filesystem::path& path, const Vector& v) {
  save_matrix(path, Matrix(Eigen::Map<const Matrix>(v.data(), v.size(), 1)));
}

Vector load_vector(const std::filesystem::path& path) {
  Matrix m = load_matrix(path);
  if (m.cols() != 1) throw DataError(path.string() + ": expected a column vector");
  return Eigen::Map<const Vector>(m.data(), m.rows());
}

}  // namespace vspec
