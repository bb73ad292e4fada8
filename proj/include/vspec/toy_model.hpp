// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale n-gram MLP language model used for both target and draft:
//
//   x      = concat(embed[c_1], ..., embed[c_n])        (n * hidden)
//   h      = squash(mix * x)                             (hidden)
//   logits = head * h                                    (|V|)
//
// The context is the last n tokens, left-padded with the reserved pad id.
// Reserved ids: pad = |V| - 1, eos = |V| - 2.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "vspec/rng.hpp"
#include "vspec/tensor.hpp"

namespace vspec {

inline TokenId pad_token(Index vocab) { return static_cast<TokenId>(vocab - 1); }
inline TokenId eos_token(Index vocab) { return static_cast<TokenId>(vocab - 2); }
/// Tokens [0, regular_vocab) are ordinary; the top two ids are reserved.
inline Index regular_vocab(Index vocab) { return vocab - 2; }

/// tanh-shaped rational squashing function, exact in any IEEE arithmetic:
///   |x| >= 3 : sign(x)
///   else     : x (27 + x^2) / (27 + 9 x^2)
/// Both the value and the first two derivatives are continuous at |x| = 3.
template <typename Scalar>
inline Scalar squash(Scalar x) {
  if (x >= Scalar(3)) return Scalar(1);
  if (x <= Scalar(-3)) return Scalar(-1);
  const Scalar x2 = x * x;
  return x * (Scalar(27) + x2) / (Scalar(27) + Scalar(9) * x2);
}

/// d squash / dx = (x^2 - 9)^2 / (9 (3 + x^2)^2) inside (-3, 3), 0 outside.
template <typename Scalar>
inline Scalar squash_derivative(Scalar x) {
  if (x >= Scalar(3) || x <= Scalar(-3)) return Scalar(0);
  const Scalar x2 = x * x;
  const Scalar num = (x2 - Scalar(9)) * (x2 - Scalar(9));
  const Scalar den = Scalar(9) * (Scalar(3) + x2) * (Scalar(3) + x2);
  return num / den;
}

template <typename Scalar>
struct BasicToyLM {
  Index vocab = 0;
  Index hidden = 0;
  Index context = 0;
  DenseMatrix<Scalar> embed;  // |V| x hidden
  DenseMatrix<Scalar> mix;    // hidden x (context * hidden)
  DenseMatrix<Scalar> head;   // |V| x hidden
  std::uint64_t seed = 0;

  template <typename Other>
  BasicToyLM<Other> cast() const {
    return {vocab, hidden, context, embed.template cast<Other>(), mix.template cast<Other>(),
            head.template cast<Other>(), seed};
  }
};
using ToyLM = BasicToyLM<float>;

/// Zero-initialized model of the given shape.
ToyLM make_toy_lm(Index vocab, Index hidden, Index context, std::uint64_t seed = 0);

/// Throws PreconditionError when the weight shapes disagree with the dimensions.
template <typename Scalar>
void validate(const BasicToyLM<Scalar>& m) {
  VSPEC_REQUIRE(m.vocab >= 3 && m.hidden >= 1 && m.context >= 1, "degenerate model dims");
  VSPEC_REQUIRE(m.embed.rows() == m.vocab && m.embed.cols() == m.hidden, "embed shape");
  VSPEC_REQUIRE(m.mix.rows() == m.hidden && m.mix.cols() == m.context * m.hidden, "mix shape");
  VSPEC_REQUIRE(m.head.rows() == m.vocab && m.head.cols() == m.hidden, "head shape");
}

/// The last `n` tokens of `seq`, left-padded with `pad`.
std::vector<TokenId> context_window(std::span<const TokenId> seq, Index n, TokenId pad);

/// Intermediate values of one forward pass, kept for backpropagation.
template <typename Scalar>
struct ForwardTrace {
  DenseVector<Scalar> input;   // concatenated embeddings
  DenseVector<Scalar> pre;     // mix * input
  DenseVector<Scalar> hidden;  // squash(pre)
};

/// Backbone only: context (exactly model.context tokens) -> hidden state.
template <typename Scalar>
ForwardTrace<Scalar> forward_backbone(const BasicToyLM<Scalar>& m, std::span<const TokenId> ctx) {
  VSPEC_REQUIRE(static_cast<Index>(ctx.size()) == m.context,
                "context has " + std::to_string(ctx.size()) + " tokens, model expects " +
                    std::to_string(m.context));
  ForwardTrace<Scalar> t;
  t.input.resize(m.context * m.hidden);
  for (Index s = 0; s < m.context; ++s) {
    const TokenId tok = ctx[static_cast<std::size_t>(s)];
    if (tok < 0 || tok >= m.vocab)
      throw DataError("token " + std::to_string(tok) + " outside vocabulary of size " +
                      std::to_string(m.vocab));
    t.input.segment(s * m.hidden, m.hidden) = m.embed.row(tok).transpose();
  }
  t.pre = matvec(m.mix, t.input);
  t.hidden = t.pre.unaryExpr([](Scalar x) { return squash(x); });
  return t;
}

struct ForwardResult {
  Vector hidden;
  Vector logits;
};

ForwardResult forward(const ToyLM& m, std::span<const TokenId> ctx);

/// FLOPs of the backbone (mix product) and of the full head.
std::uint64_t backbone_flops(const ToyLM& m);
std::uint64_t forward_flops(const ToyLM& m);

// ---------------------------------------------------------------------------
// Sequences and generation.

enum class Provenance { kCorpus, kTargetGenerated };

struct TokenSequence {
  std::vector<TokenId> tokens;
  Provenance provenance = Provenance::kCorpus;
};

struct Greedy {};
struct Sampled {
  double temperature = 1.0;
  RngStream* rng = nullptr;
};
using GenerateMode = std::variant<Greedy, Sampled>;

/// Draws an index from `probs` by inverse CDF on one uniform draw.
Index sample_categorical(const Vector& probs, RngStream& rng);

/// softmax(logits / temperature); temperature <= 0 gives a one-hot at the argmax.
Vector tempered_softmax(const Vector& logits, double temperature);

/// Autoregressive continuation of `prompt` (continuation only). Stops after max_len
/// tokens or after emitting eos.
TokenSequence generate(const ToyLM& m, const TokenSequence& prompt, Index max_len, GenerateMode mode);

// ---------------------------------------------------------------------------
// Synthetic data and models.

/// i.i.d. Zipf(alpha) draws over the regular vocabulary; rank r (1-based) has probability
/// proportional to r^-alpha and is mapped to a token id through a seeded permutation.
TokenSequence make_zipf_corpus(Index vocab, double alpha, Index length, std::uint64_t seed);

/// The rank -> token permutation make_zipf_corpus uses for `seed` (rank 0 is most frequent).
std::vector<TokenId> zipf_rank_to_token(Index vocab, std::uint64_t seed);

/// The 0-based rank sequence make_zipf_corpus maps through zipf_rank_to_token.
std::vector<Index> zipf_ranks(Index vocab, double alpha, Index length, std::uint64_t seed);

struct TargetSpec {
  Index vocab = 2048;
  Index hidden = 128;
  Index context = 4;
  std::uint64_t seed = 0;
  double structure = 0.7;   // blend weight of the planted successor structure, in [0, 1]
  double sharpness = 16.0;  // planted logit of the successor token
};

/// Seeded random weights blended with a planted successor map: with structure = 1 the
/// hidden state depends only on the last token t and the head scores successor(t) at
/// `sharpness` while other tokens sit near zero.
ToyLM synthesize_target(const TargetSpec& spec);

/// Planted successor of each regular token (a permutation of the regular vocabulary).
std::vector<TokenId> planted_successors(Index vocab, std::uint64_t seed);

/// Randomly initialized draft model (Xavier-style uniform weights).
ToyLM init_draft(Index vocab, Index hidden, Index context, RngStream rng);

// ---------------------------------------------------------------------------
// Persistence.

/// Directory with embed.vsp, mix.vsp, head.vsp and meta.txt (vocab, hidden, n, seed).
void save_model(const std::filesystem::path& dir, const ToyLM& m);
ToyLM load_model(const std::filesystem::path& dir);

/// Binary token stream: "VSC1", vocab u64, length u64, then u32 tokens (little endian).
void save_corpus(const std::filesystem::path& path, const TokenSequence& seq, Index vocab);
TokenSequence load_corpus(const std::filesystem::path& path, Index* vocab = nullptr);

}  // namespace vspec
