// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "vspec/decode.hpp"

namespace vspec {
namespace {

TokenSequence prompt_of(std::vector<TokenId> t) { return {std::move(t), Provenance::kCorpus}; }

StaticSubset all_but(Index vocab, TokenId excluded) {
  IndexList kept;
  for (TokenId t = 0; t < vocab; ++t)
    if (t != excluded) kept.push_back(t);
  return make_static_subset(kept, vocab);
}

TEST(Autoregressive, OneForwardPerTokenAndMatchesGenerate) {
  const ToyLM target = synthesize_target({128, 16, 3, 100, 0.7, 8.0});
  DecodeConfig cfg;
  cfg.max_new_tokens = 1;
  const auto one = decode_autoregressive(target, prompt_of({4, 5}), cfg);
  ASSERT_EQ(one.trace.cycles.size(), 1u);
  EXPECT_EQ(one.trace.target_flops, forward_flops(target));
  EXPECT_EQ(acceptance_length(one.trace), 1.0);

  cfg.max_new_tokens = 40;
  const auto a = decode_autoregressive(target, prompt_of({4, 5}), cfg);
  const auto b = decode_autoregressive(target, prompt_of({4, 5}), cfg);
  EXPECT_EQ(a.output.tokens, b.output.tokens);
  EXPECT_EQ(a.output.tokens, generate(target, prompt_of({4, 5}), 40, Greedy{}).tokens);
  EXPECT_EQ(acceptance_length(a.trace), 1.0);
  EXPECT_EQ(a.trace.target_flops, a.trace.cycles.size() * forward_flops(target));
}

TEST(Speculative, PerfectDraftAcceptsEverything) {
  const ToyLM target = synthesize_target({128, 16, 3, 101, 0.7, 8.0});
  for (Index gamma : {1, 4, 5}) {
    DecodeConfig cfg;
    cfg.gamma = gamma;
    cfg.max_new_tokens = 60;
    const auto res = decode_speculative(target, Drafter{&target, VocabStrategy{FullVocab{}}}, prompt_of({1}), cfg);
    for (const auto& c : res.trace.cycles) EXPECT_EQ(c.accepted, gamma);
    EXPECT_EQ(acceptance_length(res.trace), static_cast<double>(gamma + 1));
    EXPECT_EQ(res.output.tokens, decode_autoregressive(target, prompt_of({1}), cfg).output.tokens);
  }
}

TEST(Speculative, AdversarialStaticSubsetStopsAcceptanceButStaysLossless) {
  const TargetSpec spec{128, 16, 3, 102, 1.0, 8.0};
  const ToyLM target = synthesize_target(spec);
  DecodeConfig cfg;
  cfg.gamma = 4;
  cfg.max_new_tokens = 40;
  const auto ar = decode_autoregressive(target, prompt_of({7}), cfg);
  const TokenId banned = ar.output.tokens[5];
  const auto res = decode_speculative(target, Drafter{&target, VocabStrategy{StaticVocab{all_but(128, banned)}}},
                                      prompt_of({7}), cfg);
  EXPECT_EQ(res.output.tokens, ar.output.tokens);
  // The banned token is never proposed and so only ever arrives as a bonus token.
  std::size_t pos = 0;
  int banned_seen = 0;
  for (const auto& c : res.trace.cycles) {
    for (Index i = 0; i < c.accepted; ++i) EXPECT_NE(c.proposed[static_cast<std::size_t>(i)], banned);
    for (TokenId p : c.proposed) EXPECT_NE(p, banned);
    pos += static_cast<std::size_t>(c.accepted) + 1;
    if (c.bonus == banned && pos <= res.output.tokens.size()) ++banned_seen;
  }
  EXPECT_EQ(banned_seen, std::count(ar.output.tokens.begin(), ar.output.tokens.end(), banned));
  EXPECT_LT(acceptance_length(res.trace), static_cast<double>(cfg.gamma + 1));
}

TEST(Speculative, GreedyLosslessAcrossStrategies) {
  RngStream root(103);
  for (std::uint64_t c = 0; c < 30; ++c) {
    auto rng = root.split(c);
    const Index vocab = 16 + static_cast<Index>(rng.below(200));
    const ToyLM target = synthesize_target({vocab, 12, 3, c, rng.uniform(), 8.0});
    const ToyLM draft = init_draft(vocab, 8, 3, rng.split(1));
    const auto subset = make_static_subset(oracle::random_indices(vocab, vocab / 3, rng.split(2)), vocab);
    const VocabStrategy strategies[] = {VocabStrategy{FullVocab{}}, VocabStrategy{StaticVocab{subset}},
                                        VocabStrategy{DynamicVocab{init_speculator(vocab, 8, 2, rng.split(3)), vocab / 8, {}}}};
    DecodeConfig cfg;
    cfg.gamma = 1 + static_cast<Index>(rng.below(6));
    cfg.max_new_tokens = 30;
    const auto want = decode_autoregressive(target, prompt_of({0, 1}), cfg).output.tokens;
    for (const auto& s : strategies)
      ASSERT_EQ(decode_speculative(target, Drafter{&draft, s}, prompt_of({0, 1}), cfg).output.tokens, want)
          << "case " << c << " " << s.name();
  }
}

TEST(Speculative, SamplingMatchesTargetDistribution) {
  const Index vocab = 16;
  const ToyLM target = synthesize_target({vocab, 6, 2, 104, 0.3, 3.0});
  const ToyLM draft = init_draft(vocab, 4, 2, RngStream(5));
  const auto prompt = prompt_of({3, 4});
  const Vector p = softmax(forward(target, context_window(prompt.tokens, 2, pad_token(vocab))).logits).probs;
  const std::vector<double> want(p.data(), p.data() + vocab);
  const IndexList half{0, 2, 4, 6, 8, 10, 12, 14};
  const VocabStrategy strategies[] = {VocabStrategy{FullVocab{}}, VocabStrategy{StaticVocab{make_static_subset(half, vocab)}},
                                      VocabStrategy{DynamicVocab{init_speculator(vocab, 4, 2, RngStream(6)), 5, {}}}};
  for (const auto& s : strategies) {
    DecodeConfig cfg;
    cfg.gamma = 1;
    cfg.mode = DecodeMode::kSampling;
    cfg.max_new_tokens = 1;
    std::vector<double> freq(static_cast<std::size_t>(vocab), 0.0);
    constexpr int trials = 20000;
    for (int t = 0; t < trials; ++t) {
      cfg.seed = static_cast<std::uint64_t>(t);
      const auto out = decode_speculative(target, Drafter{&draft, s}, prompt, cfg).output.tokens;
      freq[static_cast<std::size_t>(out[0])] += 1.0 / trials;
    }
    EXPECT_LE(oracle::total_variation(freq, want), 0.02) << s.name();
  }
}

TEST(VerifyToken, ResidualAndFallback) {
  RngStream rng(7);
  bool ok = false;
  const Vector p = (Vector(3) << 0.0f, 1.0f, 0.0f).finished();
  const Vector q = (Vector(3) << 1.0f, 0.0f, 0.0f).finished();
  EXPECT_EQ(verify_token(p, q, 0, rng, ok), 1);
  EXPECT_FALSE(ok);
  EXPECT_EQ(verify_token(p, p, 1, rng, ok), 1);
  EXPECT_TRUE(ok);
}

TEST(AcceptanceLength, Examples) {
  DecodeTrace t;
  for (Index a : {2, 0, 3}) t.cycles.push_back(CycleRecord{{}, a, 0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(acceptance_length(t), 8.0 / 3.0);  // (3 + 1 + 4) / 3
  DecodeTrace u;
  for (Index a : {2, 1, 3}) u.cycles.push_back(CycleRecord{{}, a, 0, 0, 0, 0});
  EXPECT_EQ(acceptance_length(u), 3.0);
  DecodeTrace perfect;
  for (int i = 0; i < 7; ++i) perfect.cycles.push_back(CycleRecord{{}, 5, 0, 0, 0, 0});
  EXPECT_EQ(acceptance_length(perfect), 6.0);
  EXPECT_THROW(acceptance_length(DecodeTrace{}), PreconditionError);
}

TEST(Throughput, RatiosAndAbsence) {
  DecodeTrace t;
  t.tokens_emitted = 100;
  t.wall_ns = 2'000'000'000;
  t.draft_flops = 1'000'000'000;
  t.target_flops = 1'000'000'000;
  const auto a = throughput_proxy(t);
  EXPECT_DOUBLE_EQ(*a.tokens_per_sec, 50.0);
  EXPECT_DOUBLE_EQ(*a.tokens_per_gigaflop, 50.0);
  t.wall_ns *= 2;
  const auto b = throughput_proxy(t);
  EXPECT_DOUBLE_EQ(*b.tokens_per_sec, 25.0);
  EXPECT_DOUBLE_EQ(*b.tokens_per_gigaflop, 50.0);
  const auto none = throughput_proxy(DecodeTrace{});
  EXPECT_FALSE(none.tokens_per_sec);
  EXPECT_FALSE(none.tokens_per_gigaflop);
}

TEST(FlopAccounting, TotalsDecomposeExactly) {
  const ToyLM target = synthesize_target({256, 16, 3, 105, 0.7, 8.0});
  const ToyLM draft = init_draft(256, 8, 3, RngStream(8));
  const auto spec = init_speculator(256, 8, 2, RngStream(9));
  const auto subset = make_static_subset(oracle::random_indices(256, 64, RngStream(10)), 256);
  DecodeConfig cfg;
  cfg.gamma = 3;
  cfg.max_new_tokens = 50;
  const std::pair<VocabStrategy, std::uint64_t> cases[] = {
      {VocabStrategy{FullVocab{}}, full_flops(256, 8)},
      {VocabStrategy{StaticVocab{subset}}, static_flops(64, 8)},
      {VocabStrategy{DynamicVocab{spec, 16, {}}}, dynamic_flops(256, 8, 2, 16)}};
  for (const auto& [s, per_step] : cases) {
    const auto res = decode_speculative(target, Drafter{&draft, s}, prompt_of({2}), cfg);
    const auto cycles = static_cast<std::uint64_t>(res.trace.cycles.size());
    EXPECT_EQ(res.trace.target_flops, cycles * 4 * forward_flops(target));
    EXPECT_EQ(res.trace.draft_flops, cycles * 3 * (backbone_flops(draft) + per_step)) << s.name();
    Index emitted = 0;
    for (const auto& c : res.trace.cycles) {
      EXPECT_GE(c.accepted, 0);
      EXPECT_LE(c.accepted, cfg.gamma);
      emitted += c.accepted + 1;
    }
    EXPECT_EQ(res.trace.tokens_emitted, std::min<Index>(emitted, static_cast<Index>(res.output.tokens.size())));
    EXPECT_LE(static_cast<Index>(res.output.tokens.size()), emitted);
  }
}

TEST(Coverage, SupersetNeverLosesPerStepAcceptance) {
  const ToyLM target = synthesize_target({256, 16, 3, 106, 1.0, 8.0});
  DecodeConfig cfg;
  cfg.max_new_tokens = 80;
  std::vector<TokenId> seq{9};
  const auto ar = decode_autoregressive(target, prompt_of(seq), cfg).output.tokens;
  IndexList order(254);
  std::iota(order.begin(), order.end(), 0);
  auto rng = RngStream(11);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  std::vector<int> prev(ar.size(), 0);
  for (std::size_t size : {16u, 64u, 128u, 200u, 254u}) {
    const auto subset = make_static_subset(IndexList(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size)), 256);
    std::vector<TokenId> ctx = seq;
    std::vector<int> hit(ar.size(), 0);
    for (std::size_t i = 0; i < ar.size(); ++i) {
      const auto h = forward(target, context_window(ctx, 3, pad_token(256))).hidden;
      const auto sel = select_static(target.head, subset, h);
      hit[i] = sel.candidates[static_cast<std::size_t>(argmax(sel.exact_logits))] == ar[i];
      EXPECT_GE(hit[i], prev[i]) << "position " << i << " size " << size;
      ctx.push_back(ar[i]);
    }
    prev = hit;
  }
}

TEST(Decode, ConfigErrors) {
  const ToyLM target = synthesize_target({64, 8, 2, 107, 0.5, 8.0});
  const ToyLM other = init_draft(32, 8, 2, RngStream(1));
  DecodeConfig cfg;
  EXPECT_THROW(decode_speculative(target, Drafter{&other, VocabStrategy{}}, prompt_of({1}), cfg), ConfigError);
  cfg.gamma = 0;
  EXPECT_THROW(decode_speculative(target, Drafter{&target, VocabStrategy{}}, prompt_of({1}), cfg), ConfigError);
  cfg = {};
  cfg.max_new_tokens = 0;
  EXPECT_THROW(decode_autoregressive(target, prompt_of({1}), cfg), ConfigError);
}

TEST(TraceIo, CsvRoundTripAndSummary) {
  const ToyLM target = synthesize_target({64, 8, 2, 108, 0.7, 8.0});
  const ToyLM draft = init_draft(64, 4, 2, RngStream(2));
  DecodeConfig cfg;
  cfg.max_new_tokens = 30;
  const auto res = decode_speculative(target, Drafter{&draft, VocabStrategy{}}, prompt_of({1}), cfg);
  std::stringstream ss;
  write_trace_csv(ss, res.trace);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), kTraceCsvHeader);
  const auto back = read_trace_csv(ss);
  ASSERT_EQ(back.cycles.size(), res.trace.cycles.size());
  for (std::size_t i = 0; i < back.cycles.size(); ++i) {
    EXPECT_EQ(back.cycles[i].proposed, res.trace.cycles[i].proposed);
    EXPECT_EQ(back.cycles[i].accepted, res.trace.cycles[i].accepted);
    EXPECT_EQ(back.cycles[i].wall_ns, res.trace.cycles[i].wall_ns);
  }
  EXPECT_EQ(back.draft_flops, res.trace.draft_flops);
  EXPECT_EQ(acceptance_length(back), acceptance_length(res.trace));
  const auto j = summary_json(res.trace, {{"gamma", 4}});
  EXPECT_EQ(j["config"]["gamma"], 4);
  EXPECT_DOUBLE_EQ(j["acceptance_length"].get<double>(), acceptance_length(res.trace));
  EXPECT_TRUE(j.contains("tokens_per_sec"));
  EXPECT_TRUE(j["tokens_per_gigaflop"].is_number());
}

}  // namespace
}  // namespace vspec
