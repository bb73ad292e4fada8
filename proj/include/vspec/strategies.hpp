// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Vocabulary-selection strategies for the draft LM head:
//   full     - exact logits over the whole vocabulary;
//   static   - exact logits over a fixed frequency-pruned subset;
//   dynamic  - low-rank scores s = W_vocab (W_down h) rank the vocabulary, the top-k
//              candidates get exact logits through the fused indexed head.

#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <variant>

#include "vspec/kernels.hpp"
#include "vspec/rng.hpp"
#include "vspec/tensor.hpp"

namespace vspec {

/// Low-rank vocabulary ranker: w_down is d' x d, w_vocab is |V| x d'.
template <typename Scalar>
struct SpeculatorParams {
  DenseMatrix<Scalar> w_down;
  DenseMatrix<Scalar> w_vocab;

  Index vocab() const { return w_vocab.rows(); }
  Index hidden() const { return w_down.cols(); }
  Index reduced() const { return w_down.rows(); }

  template <typename Other>
  SpeculatorParams<Other> cast() const {
    return {w_down.template cast<Other>(), w_vocab.template cast<Other>()};
  }
};
using SpeculatorWeights = SpeculatorParams<float>;

/// Throws PreconditionError unless the shapes agree with (vocab, hidden) and d' <= d.
template <typename Scalar>
void validate(const SpeculatorParams<Scalar>& spec, Index vocab, Index hidden) {
  VSPEC_REQUIRE(spec.w_down.cols() == hidden, "w_down has " + std::to_string(spec.w_down.cols()) +
                                                  " cols, draft hidden is " + std::to_string(hidden));
  VSPEC_REQUIRE(spec.w_vocab.rows() == vocab, "w_vocab has " + std::to_string(spec.w_vocab.rows()) +
                                                  " rows, vocab is " + std::to_string(vocab));
  VSPEC_REQUIRE(spec.w_vocab.cols() == spec.w_down.rows(), "w_vocab cols != w_down rows");
  VSPEC_REQUIRE(spec.w_down.rows() >= 1 && spec.w_down.rows() <= hidden, "need 1 <= d' <= d");
}

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), per matrix.
SpeculatorWeights init_speculator(Index vocab, Index hidden, Index reduced, RngStream rng);

/// d' = ceil(d * ratio), clamped to [1, d].
Index reduced_dim(Index hidden, double ratio);

/// Fixed subset of the vocabulary; kept ascending, reverse_map[t] is the subset position of
/// token t or -1 when t is not kept.
struct StaticSubset {
  IndexList kept;
  std::vector<TokenId> reverse_map;

  Index size() const { return static_cast<Index>(kept.size()); }
  bool contains(TokenId t) const { return reverse_map[static_cast<std::size_t>(t)] >= 0; }
};

/// Sorts `kept`, validates it against `vocab` and builds the reverse map.
StaticSubset make_static_subset(IndexList kept, Index vocab);

struct StepSelection {
  IndexList candidates;
  Vector exact_logits;
  ProbDist restricted;
  KernelStats cost;
};

StepSelection select_full(const Matrix& u, const Vector& h);

StepSelection select_static(const Matrix& u, const StaticSubset& subset, const Vector& h,
                            Accumulation acc = Accumulation::kReference);

StepSelection select_dynamic(const Matrix& u, const SpeculatorWeights& spec, const Vector& h,
                             Index k, Accumulation acc = Accumulation::kReference);

/// Closed-form FLOP counts of each strategy (2 per multiply-add).
constexpr std::uint64_t full_flops(std::uint64_t vocab, std::uint64_t d) { return 2 * vocab * d; }
constexpr std::uint64_t static_flops(std::uint64_t subset, std::uint64_t d) { return 2 * subset * d; }
constexpr std::uint64_t dynamic_flops(std::uint64_t vocab, std::uint64_t d, std::uint64_t reduced,
                                      std::uint64_t k) {
  return 2 * (reduced * d + vocab * reduced + k * d);
}

// ---------------------------------------------------------------------------
// Frequency tables and static subsets.

struct FrequencyTable {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  Index vocab() const { return static_cast<Index>(counts.size()); }
};

/// Throws DataError naming the position of the first out-of-range token.
FrequencyTable build_freq_table(std::span<const TokenId> tokens, Index vocab);

/// The `size` most frequent tokens (ties to the lower id), stored ascending.
StaticSubset build_static_subset(const FrequencyTable& freq, Index size);

/// Fraction of rows of eval_states whose full-vocabulary argmax lies in the dynamic
/// candidate set.
double recall_at_k(const SpeculatorWeights& spec, const Matrix& u, const Matrix& eval_states, Index k);

// ---------------------------------------------------------------------------
// Pluggable strategy used by the decoder.

struct FullVocab {};
struct StaticVocab {
  StaticSubset subset;
};
struct DynamicVocab {
  SpeculatorWeights weights;
  Index k = 1;
  /// Optional per-step k. Unset means the fixed k above.
  std::function<Index(std::size_t step)> k_schedule;
};

class VocabStrategy {
 public:
  using Variant = std::variant<FullVocab, StaticVocab, DynamicVocab>;

  VocabStrategy() = default;
  VocabStrategy(Variant v, Accumulation acc = Accumulation::kReference) : v_(std::move(v)), acc_(acc) {}

  StepSelection select(const Matrix& u, const Vector& h, std::size_t step = 0) const;
  std::string name() const;
  const Variant& variant() const { return v_; }

 private:
  Variant v_ = FullVocab{};
  Accumulation acc_ = Accumulation::kReference;
};

// ---------------------------------------------------------------------------
// Persistence.

/// CSV `token_id,count`, one row per vocabulary entry.
void save_freq_table(const std::filesystem::path& path, const FrequencyTable& freq);
FrequencyTable load_freq_table(const std::filesystem::path& path);

/// Newline-delimited token ids.
void save_static_subset(const std::filesystem::path& path, const StaticSubset& subset);
StaticSubset load_static_subset(const std::filesystem::path& path, Index vocab);

/// Writes `w_down.vsp` and `w_vocab.vsp` into `dir`.
void save_speculator(const std::filesystem::path& dir, const SpeculatorWeights& spec);
SpeculatorWeights load_speculator(const std::filesystem::path& dir);

}  // namespace vspec
