// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0
//
// LM-head logit kernels: the full-vocabulary product, the naive indexed head that
// materializes the gathered rows U[idx, :] before multiplying, and the fused indexed
// head that reads each selected row of U exactly once with no intermediate copy.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vspec/tensor.hpp"

namespace vspec {

/// Ordered candidate token ids. Output logits follow this order.
using IndexList = std::vector<TokenId>;

struct KernelStats {
  std::uint64_t flops = 0;                         // 2 per multiply-add
  std::uint64_t bytes_read = 0;                    // weight bytes fetched from U
  std::uint64_t intermediate_bytes_allocated = 0;  // gathered-embedding scratch

  KernelStats& operator+=(const KernelStats& o) {
    flops += o.flops;
    bytes_read += o.bytes_read;
    intermediate_bytes_allocated += o.intermediate_bytes_allocated;
    return *this;
  }
  friend bool operator==(const KernelStats&, const KernelStats&) = default;
};

/// kReference accumulates each dot product left to right (bit-identical to matvec);
/// kBlocked uses wide SIMD lanes and matches the reference within 1e-5 relative.
enum class Accumulation { kReference, kBlocked };

/// Throws PreconditionError on an out-of-range or repeated index.
void validate_index_list(std::span<const TokenId> idx, Index vocab);

Vector full_logits(const Matrix& u, const Vector& h, KernelStats* stats = nullptr);

Vector indexed_logits_naive(const Matrix& u, std::span<const TokenId> idx, const Vector& h,
                            KernelStats* stats = nullptr);

Vector indexed_logits_fused(const Matrix& u, std::span<const TokenId> idx, const Vector& h,
                            Accumulation acc = Accumulation::kBlocked,
                            KernelStats* stats = nullptr);

/// Unchecked hot loop behind indexed_logits_fused: out[j] = <u[idx[j]], h>.
/// Performs no heap allocation. Indices must already be validated.
void fused_gather_dot(const Matrix& u, std::span<const TokenId> idx, std::span<const float> h,
                      std::span<float> out, Accumulation acc) noexcept;

/// Row b of the result is the fused indexed head applied to row b of h_batch. Selected
/// rows of U are loaded once per tile and reused across the whole batch. `threads` > 1
/// splits candidate tiles across workers; each output entry is computed identically
/// regardless of the split.
Matrix indexed_logits_fused_batch(const Matrix& u, std::span<const TokenId> idx,
                                  const Matrix& h_batch,
                                  Accumulation acc = Accumulation::kBlocked, int threads = 1,
                                  KernelStats* stats = nullptr);

/// Baseline: gather once, then a reference matvec per hidden state.
Matrix indexed_logits_naive_batch(const Matrix& u, std::span<const TokenId> idx,
                                  const Matrix& h_batch, KernelStats* stats = nullptr);

}  // namespace vspec
