// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vspec/kernels.hpp"
#include "vspec/tensor.hpp"

namespace vspec {

/// k highest-scoring entries ordered by (score descending, index ascending).
struct ScoredCandidates {
  IndexList indices;
  Vector scores;
};

/// Exact top-k over `scores` under the (score desc, index asc) total order.
/// Partial selection: O(n + k log k).
ScoredCandidates top_k(const Vector& scores, Index k);

}  // namespace vspec
