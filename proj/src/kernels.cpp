// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/kernels.hpp"

#include <algorithm>
#include <thread>

namespace vspec {
namespace {

using ConstRow = Eigen::Map<const Eigen::VectorXf>;

// Candidate rows per tile in the batched kernel: 16 rows of d=1024 floats is 64 KiB,
// which stays resident in L2 while every hidden state in the batch streams past it.
constexpr Index kTileRows = 16;

inline float reference_dot(const float* a, const float* b, Index n) noexcept {
  float acc = 0.0f;
  for (Index j = 0; j < n; ++j) acc += a[j] * b[j];
  return acc;
}

inline float row_dot(const float* row, const float* h, Index d, Accumulation acc) noexcept {
  if (acc == Accumulation::kReference) return reference_dot(row, h, d);
  return ConstRow(row, d).dot(ConstRow(h, d));
}

void check_head(const Matrix& u, Index hidden) {
  VSPEC_REQUIRE(u.cols() == hidden, "embedding dim " + std::to_string(u.cols()) +
                                        " != hidden size " + std::to_string(hidden));
}

std::uint64_t row_bytes(const Matrix& u, std::size_t rows) {
  return static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(u.cols()) * sizeof(float);
}

void fused_tiles(const Matrix& u, std::span<const TokenId> idx, const Matrix& h_batch,
                 Matrix& out, Accumulation acc, Index tile_begin, Index tile_end) noexcept {
  const Index d = u.cols();
  const Index k = static_cast<Index>(idx.size());
  for (Index tile = tile_begin; tile < tile_end; ++tile) {
    const Index r0 = tile * kTileRows;
    const Index r1 = std::min(k, r0 + kTileRows);
    for (Index b = 0; b < h_batch.rows(); ++b) {
      const float* h = h_batch.data() + b * d;
      float* dst = out.data() + b * k;
      for (Index r = r0; r < r1; ++r) dst[r] = row_dot(u.data() + idx[r] * d, h, d, acc);
    }
  }
}

}  // namespace

void validate_index_list(std::span<const TokenId> idx, Index vocab) {
  std::vector<bool> seen(static_cast<std::size_t>(vocab), false);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const TokenId t = idx[j];
    VSPEC_REQUIRE(t >= 0 && t < vocab, "index " + std::to_string(t) + " at position " +
                                           std::to_string(j) + " outside [0, " +
                                           std::to_string(vocab) + ")");
    VSPEC_REQUIRE(!seen[static_cast<std::size_t>(t)],
                  "duplicate index " + std::to_string(t) + " at position " + std::to_string(j));
    seen[static_cast<std::size_t>(t)] = true;
  }
}

Vector full_logits(const Matrix& u, const Vector& h, KernelStats* stats) {
  check_head(u, h.size());
  Vector z = matvec(u, h);
  if (stats) {
    stats->flops += 2ULL * static_cast<std::uint64_t>(u.rows()) * static_cast<std::uint64_t>(u.cols());
    stats->bytes_read += row_bytes(u, static_cast<std::size_t>(u.rows()));
  }
  return z;
}

Vector indexed_logits_naive(const Matrix& u, std::span<const TokenId> idx, const Vector& h,
                            KernelStats* stats) {
  check_head(u, h.size());
  validate_index_list(idx, u.rows());
  Matrix gathered(static_cast<Index>(idx.size()), u.cols());
  for (std::size_t j = 0; j < idx.size(); ++j) gathered.row(static_cast<Index>(j)) = u.row(idx[j]);
  Vector z = matvec(gathered, h);
  if (stats) {
    stats->flops += 2ULL * idx.size() * static_cast<std::uint64_t>(u.cols());
    stats->bytes_read += row_bytes(u, idx.size());
    stats->intermediate_bytes_allocated += row_bytes(u, idx.size());
  }
  return z;
}

void fused_gather_dot(const Matrix& u, std::span<const TokenId> idx, std::span<const float> h,
                      std::span<float> out, Accumulation acc) noexcept {
  const Index d = u.cols();
  for (std::size_t j = 0; j < idx.size(); ++j)
    out[j] = row_dot(u.data() + static_cast<Index>(idx[j]) * d, h.data(), d, acc);
}

Vector indexed_logits_fused(const Matrix& u, std::span<const TokenId> idx, const Vector& h,
                            Accumulation acc, KernelStats* stats) {
  check_head(u, h.size());
  validate_index_list(idx, u.rows());
  Vector z(static_cast<Index>(idx.size()));
  fused_gather_dot(u, idx, std::span<const float>(h.data(), static_cast<std::size_t>(h.size())),
                   std::span<float>(z.data(), static_cast<std::size_t>(z.size())), acc);
  if (stats) {
    stats->flops += 2ULL * idx.size() * static_cast<std::uint64_t>(u.cols());
    stats->bytes_read += row_bytes(u, idx.size());
  }
  return z;
}

Matrix indexed_logits_fused_batch(const Matrix& u, std::span<const TokenId> idx,
                                  const Matrix& h_batch, Accumulation acc, int threads,
                                  KernelStats* stats) {
  check_head(u, h_batch.cols());
  VSPEC_REQUIRE(h_batch.rows() >= 1, "empty batch");
  validate_index_list(idx, u.rows());
  const Index k = static_cast<Index>(idx.size());
  Matrix out(h_batch.rows(), k);
  const Index tiles = (k + kTileRows - 1) / kTileRows;
  const Index workers = std::clamp<Index>(threads, 1, std::max<Index>(tiles, 1));
  if (workers == 1) {
    fused_tiles(u, idx, h_batch, out, acc, 0, tiles);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (Index w = 0; w < workers; ++w) {
      const Index t0 = tiles * w / workers;
      const Index t1 = tiles * (w + 1) / workers;
      pool.emplace_back([&, t0, t1] { fused_tiles(u, idx, h_batch, out, acc, t0, t1); });
    }
  }
  if (stats) {
    stats->flops += 2ULL * idx.size() * static_cast<std::uint64_t>(u.cols()) *
                    static_cast<std::uint64_t>(h_batch.rows());
    stats->bytes_read += row_bytes(u, idx.size());
  }
  return out;
}

Matrix indexed_logits_naive_batch(const Matrix& u, std::span<const TokenId> idx,
                                  const Matrix& h_batch, KernelStats* stats) {
  check_head(u, h_batch.cols());
  VSPEC_REQUIRE(h_batch.rows() >= 1, "empty batch");
  validate_index_list(idx, u.rows());
  const Index k = static_cast<Index>(idx.size());
  Matrix gathered(k, u.cols());
  for (Index j = 0; j < k; ++j) gathered.row(j) = u.row(idx[static_cast<std::size_t>(j)]);
  Matrix out(h_batch.rows(), k);
  for (Index b = 0; b < h_batch.rows(); ++b) out.row(b) = matvec<float>(gathered, h_batch.row(b).transpose()).transpose();
  if (stats) {
    stats->flops += 2ULL * idx.size() * static_cast<std::uint64_t>(u.cols()) *
                    static_cast<std::uint64_t>(h_batch.rows());
    stats->bytes_read += row_bytes(u, idx.size());
    stats->intermediate_bytes_allocated += row_bytes(u, idx.size());
  }
  return out;
}

}  // namespace vspec
