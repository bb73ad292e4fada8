// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/topk.hpp"

#include <algorithm>
#include <numeric>

namespace vspec {

ScoredCandidates top_k(const Vector& scores, Index k) {
  const Index n = scores.size();
  VSPEC_REQUIRE(k >= 1 && k <= n, "k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  VSPEC_REQUIRE(scores.allFinite(), "non-finite score");

  const auto before = [&scores](TokenId a, TokenId b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  IndexList order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), TokenId{0});
  if (k < n) std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), before);
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end(), before);

  ScoredCandidates out;
  out.scores.resize(k);
  for (Index j = 0; j < k; ++j) out.scores[j] = scores[order[static_cast<std::size_t>(j)]];
  out.indices = std::move(order);
  return out;
}

}  // namespace vspec
