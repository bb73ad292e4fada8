// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/tensor.hpp"

#include <cmath>
#include <numbers>

#include "vspec/rng.hpp"

namespace vspec {

ProbDist softmax(const Vector& z) { return ProbDist{softmax_values(z), std::nullopt}; }

ProbDist softmax(const Vector& z, std::vector<TokenId> domain) {
  VSPEC_REQUIRE(static_cast<Index>(domain.size()) == z.size(), "domain/logit length mismatch");
  return ProbDist{softmax_values(z), std::move(domain)};
}

bool all_finite(const Vector& v) { return v.allFinite(); }
bool all_finite(const Matrix& m) { return m.allFinite(); }

double RngStream::normal() noexcept {
  // 1 - uniform() lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace vspec
