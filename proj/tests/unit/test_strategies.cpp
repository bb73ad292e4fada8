// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "oracles.hpp"
#include "vspec/strategies.hpp"
#include "vspec/toy_model.hpp"

namespace vspec {
namespace {

SpeculatorWeights lossless(const Matrix& u) { return {Matrix::Identity(u.cols(), u.cols()), u}; }

bool contains(const IndexList& c, TokenId t) { return std::find(c.begin(), c.end(), t) != c.end(); }

TEST(SelectFull, IdentityPaddedHead) {
  Matrix u = Matrix::Zero(4, 2);
  u(0, 0) = 1;
  u(1, 1) = 1;
  const Vector h = (Vector(2) << 3, -2).finished();
  const auto sel = select_full(u, h);
  EXPECT_EQ(sel.exact_logits, (Vector(4) << 3, -2, 0, 0).finished());
  EXPECT_EQ(sel.candidates, (IndexList{0, 1, 2, 3}));
}

TEST(SelectFull, RestrictedIsSoftmaxAndCostIsClosedForm) {
  const Matrix u = oracle::random_matrix(1000, 50, RngStream(40));
  const Vector h = oracle::random_vector(50, RngStream(41));
  const auto sel = select_full(u, h);
  EXPECT_EQ(sel.restricted.probs, softmax(sel.exact_logits).probs);
  EXPECT_EQ(sel.cost.flops, 100000u);
  EXPECT_EQ(*sel.restricted.domain, sel.candidates);
}

TEST(SelectStatic, FullSubsetMatchesSelectFull) {
  const Matrix u = oracle::random_matrix(40, 8, RngStream(42));
  const Vector h = oracle::random_vector(8, RngStream(43));
  IndexList all(40);
  std::iota(all.begin(), all.end(), 0);
  const auto st = select_static(u, make_static_subset(all, 40), h);
  const auto fu = select_full(u, h);
  EXPECT_EQ(st.exact_logits, fu.exact_logits);
  EXPECT_EQ(st.candidates, fu.candidates);
  EXPECT_EQ(st.cost.flops, fu.cost.flops);
}

TEST(SelectStatic, SingletonIsPointMass) {
  const Matrix u = oracle::random_matrix(10, 4, RngStream(44));
  const auto sel = select_static(u, make_static_subset({7}, 10), oracle::random_vector(4, RngStream(45)));
  ASSERT_EQ(sel.restricted.size(), 1);
  EXPECT_EQ(sel.restricted.probs[0], 1.0f);
  EXPECT_EQ(sel.restricted.token(0), 7);
}

TEST(SelectStatic, GatherOracle) {
  RngStream rng(46);
  const Matrix u = oracle::random_matrix(512, 24, rng.split(0));
  const Vector h = oracle::random_vector(24, rng.split(1));
  const auto subset = make_static_subset(oracle::random_indices(512, 64, rng.split(2)), 512);
  const auto sel = select_static(u, subset, h);
  EXPECT_TRUE(sel.exact_logits == oracle::gather(oracle::scalar_matvec(u, h), subset.kept));
  EXPECT_EQ(sel.cost.flops, static_flops(64, 24));
  EXPECT_TRUE(std::is_sorted(subset.kept.begin(), subset.kept.end()));
  for (std::size_t j = 0; j < subset.kept.size(); ++j)
    EXPECT_EQ(subset.reverse_map[static_cast<std::size_t>(subset.kept[j])], static_cast<TokenId>(j));
}

TEST(SelectStatic, EmptySubsetIsConfigError) {
  EXPECT_THROW(make_static_subset({}, 10), ConfigError);
  EXPECT_THROW(select_static(Matrix::Zero(4, 2), StaticSubset{}, Vector::Zero(2)), ConfigError);
}

TEST(SelectDynamic, LosslessFullKReordersFullLogits) {
  RngStream rng(47);
  const Matrix u = oracle::random_matrix(64, 16, rng.split(0));
  const Vector h = oracle::random_vector(16, rng.split(1));
  const auto sel = select_dynamic(u, lossless(u), h, 64);
  const Vector full = full_logits(u, h);
  EXPECT_EQ(sel.candidates, oracle::sort_topk(full, 64));
  EXPECT_TRUE(sel.exact_logits == oracle::gather(full, sel.candidates));
}

TEST(SelectDynamic, LosslessAlwaysContainsArgmax) {
  RngStream root(48);
  for (std::uint64_t c = 0; c < 500; ++c) {
    auto rng = root.split(c);
    const Index vocab = 2 + static_cast<Index>(rng.below(300));
    const Index d = 1 + static_cast<Index>(rng.below(48));
    const Index k = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(vocab)));
    const Matrix u = oracle::random_matrix(vocab, d, rng.split(0));
    const Vector h = oracle::random_vector(d, rng.split(1));
    const auto full = select_full(u, h);
    const auto dyn = select_dynamic(u, lossless(u), h, k);
    const auto best = static_cast<TokenId>(argmax(full.exact_logits));
    ASSERT_TRUE(contains(dyn.candidates, best)) << "case " << c;
    ASSERT_EQ(dyn.candidates[static_cast<std::size_t>(argmax(dyn.exact_logits))], best) << "case " << c;
  }
}

TEST(SelectDynamic, TwoMatvecOracle) {
  RngStream rng(49);
  const Matrix u = oracle::random_matrix(512, 32, rng.split(0));
  const auto spec = init_speculator(512, 32, 4, rng.split(1));
  const Vector h = oracle::random_vector(32, rng.split(2));
  const Vector s = oracle::scalar_matvec(spec.w_vocab, oracle::scalar_matvec(spec.w_down, h));
  const auto sel = select_dynamic(u, spec, h, 16);
  EXPECT_EQ(sel.candidates, oracle::sort_topk(s, 16));
  EXPECT_TRUE(sel.exact_logits == oracle::gather(oracle::scalar_matvec(u, h), sel.candidates));
  EXPECT_EQ(sel.cost.flops, dynamic_flops(512, 32, 4, 16));
  EXPECT_EQ(sel.cost.flops, 2u * (4 * 32 + 512 * 4 + 16 * 32));
}

TEST(SelectDynamic, KOutOfRange) {
  const Matrix u = Matrix::Zero(8, 4);
  const auto spec = init_speculator(8, 4, 2, RngStream(1));
  EXPECT_THROW(select_dynamic(u, spec, Vector::Zero(4), 0), PreconditionError);
  EXPECT_THROW(select_dynamic(u, spec, Vector::Zero(4), 9), PreconditionError);
  EXPECT_THROW(select_dynamic(u, init_speculator(8, 5, 2, RngStream(1)), Vector::Zero(4), 2), PreconditionError);
}

TEST(Strategies, RestrictedEqualsRenormalizedFullSoftmax) {
  RngStream rng(50);
  const Matrix u = oracle::random_matrix(300, 20, rng.split(0), 2.0);
  const auto spec = init_speculator(300, 20, 5, rng.split(1));
  const auto subset = make_static_subset(oracle::random_indices(300, 70, rng.split(2)), 300);
  for (std::uint64_t t = 0; t < 50; ++t) {
    const Vector h = oracle::random_vector(20, rng.split(100 + t));
    const Vector p = softmax(full_logits(u, h)).probs;
    for (const auto& sel : {select_full(u, h), select_static(u, subset, h), select_dynamic(u, spec, h, 25)}) {
      double mass = 0.0;
      for (TokenId c : sel.candidates) mass += p[c];
      for (Index j = 0; j < sel.restricted.size(); ++j)
        ASSERT_NEAR(sel.restricted.probs[j], p[sel.restricted.token(j)] / mass, 1e-6);
    }
  }
}

TEST(Strategies, InterchangeableThroughVocabStrategy) {
  RngStream rng(51);
  const Matrix u = oracle::random_matrix(50, 10, rng.split(0));
  const Vector h = oracle::random_vector(10, rng.split(1));
  const VocabStrategy full{FullVocab{}};
  const VocabStrategy dyn{DynamicVocab{lossless(u), 50, {}}};
  const auto a = full.select(u, h), b = dyn.select(u, h);
  EXPECT_EQ(argmax(a.exact_logits), b.candidates[static_cast<std::size_t>(argmax(b.exact_logits))]);
  EXPECT_EQ(full.name(), "full");
  EXPECT_EQ(dyn.name(), "dynamic");
  const VocabStrategy sched{DynamicVocab{lossless(u), 5, [](std::size_t step) { return Index(1 + step); }}};
  EXPECT_EQ(sched.select(u, h, 0).candidates.size(), 1u);
  EXPECT_EQ(sched.select(u, h, 3).candidates.size(), 4u);
}

TEST(CostAccounting, CrossoverMatchesCounterInequality) {
  RngStream root(52);
  for (std::uint64_t c = 0; c < 100; ++c) {
    auto rng = root.split(c);
    const Index vocab = 16 + static_cast<Index>(rng.below(2000));
    const Index d = 4 + static_cast<Index>(rng.below(60));
    const Index dp = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(d)));
    const Index k = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(vocab)));
    const Index vs = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(vocab)));
    const Matrix u = oracle::random_matrix(vocab, d, rng.split(0));
    const Vector h = oracle::random_vector(d, rng.split(1));
    const auto spec = init_speculator(vocab, d, dp, rng.split(2));
    const auto subset = make_static_subset(oracle::random_indices(vocab, vs, rng.split(3)), vocab);
    const auto fu = select_full(u, h).cost.flops;
    const auto st = select_static(u, subset, h).cost.flops;
    const auto dy = select_dynamic(u, spec, h, k).cost.flops;
    const std::uint64_t V = static_cast<std::uint64_t>(vocab), D = static_cast<std::uint64_t>(d),
                        DP = static_cast<std::uint64_t>(dp), K = static_cast<std::uint64_t>(k),
                        VS = static_cast<std::uint64_t>(vs);
    ASSERT_EQ(fu, 2 * V * D);
    ASSERT_EQ(st, 2 * VS * D);
    ASSERT_EQ(dy, 2 * (DP * D + V * DP + K * D));
    ASSERT_EQ(dy < st, DP * D + V * DP + K * D < VS * D);
  }
}

TEST(FreqTable, CountsAndErrors) {
  const IndexList s{0, 0, 1};
  const auto t = build_freq_table(s, 3);
  EXPECT_EQ(t.counts, (std::vector<std::uint64_t>{2, 1, 0}));
  EXPECT_EQ(t.total, 3u);
  const auto e = build_freq_table({}, 4);
  EXPECT_EQ(e.counts, (std::vector<std::uint64_t>(4, 0)));
  EXPECT_EQ(e.total, 0u);
  const IndexList bad{0, 1, 3, 0};
  try {
    build_freq_table(bad, 3);
    FAIL() << "expected DataError";
  } catch (const DataError& err) {
    EXPECT_NE(std::string(err.what()).find("position 2"), std::string::npos);
  }
}

TEST(FreqTable, ZipfRankingRecoversGeneratorOrder) {
  const Index vocab = 1024;
  const auto corpus = make_zipf_corpus(vocab, 1.0, 100000, 53);
  const auto t = build_freq_table(corpus.tokens, vocab);
  const auto rank_to_token = zipf_rank_to_token(vocab, 53);
  IndexList order(static_cast<std::size_t>(vocab));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    return t.counts[static_cast<std::size_t>(a)] > t.counts[static_cast<std::size_t>(b)];
  });
  for (std::size_t r = 0; r < 10; ++r) EXPECT_EQ(order[r], rank_to_token[r]) << "rank " << r;
}

TEST(StaticSubsetBuild, Examples) {
  const FrequencyTable t{{5, 9, 1}, 15};
  EXPECT_EQ(build_static_subset(t, 2).kept, (IndexList{0, 1}));
  EXPECT_EQ(build_static_subset(t, 3).kept, (IndexList{0, 1, 2}));
  EXPECT_THROW(build_static_subset(t, 0), ConfigError);
  EXPECT_THROW(build_static_subset(t, 4), ConfigError);
  const FrequencyTable ties{{2, 3, 3, 2}, 10};
  EXPECT_EQ(build_static_subset(ties, 3).kept, (IndexList{0, 1, 2}));
}

TEST(StaticSubsetBuild, ZipfCoverage) {
  const Index vocab = 2048;
  const double alpha = 1.0;
  const auto corpus = make_zipf_corpus(vocab, alpha, 200000, 54);
  const auto t = build_freq_table(corpus.tokens, vocab);
  const Index size = vocab / 16;
  const auto subset = build_static_subset(t, size);
  std::uint64_t covered = 0;
  for (TokenId k : subset.kept) covered += t.counts[static_cast<std::size_t>(k)];
  const double empirical = static_cast<double>(covered) / static_cast<double>(t.total);
  double top = 0.0, all = 0.0;
  for (Index r = 1; r <= regular_vocab(vocab); ++r) {
    const double w = std::pow(static_cast<double>(r), -alpha);
    all += w;
    if (r <= size) top += w;
  }
  EXPECT_GE(empirical, top / all - 0.02);
}

TEST(Recall, LosslessAndFullK) {
  RngStream rng(55);
  const Matrix u = oracle::random_matrix(128, 16, rng.split(0));
  const Matrix states = oracle::random_matrix(100, 16, rng.split(1));
  EXPECT_EQ(recall_at_k(lossless(u), u, states, 1), 1.0);
  EXPECT_EQ(recall_at_k(init_speculator(128, 16, 2, rng.split(2)), u, states, 128), 1.0);
}

TEST(Recall, UntrainedSpeculatorMatchesNullModel) {
  RngStream rng(56);
  const Matrix u = oracle::random_matrix(512, 32, rng.split(0));
  const Matrix states = oracle::random_matrix(2000, 32, rng.split(1));
  const auto spec = init_speculator(512, 32, 2, rng.split(2));
  EXPECT_NEAR(recall_at_k(spec, u, states, 64), 0.125, 0.03);
}

TEST(Recall, MonotoneInK) {
  RngStream rng(57);
  const Matrix u = oracle::random_matrix(256, 16, rng.split(0));
  const Matrix states = oracle::random_matrix(300, 16, rng.split(1));
  const auto spec = init_speculator(256, 16, 2, rng.split(2));
  double prev = 0.0;
  for (Index k = 1; k <= 256; k += 5) {
    const double r = recall_at_k(spec, u, states, k);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(ReducedDim, CeilAndClamp) {
  EXPECT_EQ(reduced_dim(64, 1.0 / 16), 4);
  EXPECT_EQ(reduced_dim(64, 1.0 / 8), 8);
  EXPECT_EQ(reduced_dim(10, 1.0 / 16), 1);
  EXPECT_THROW(reduced_dim(10, 0.0), PreconditionError);
}

class StrategyIo : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "vspec_strategy_io";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(StrategyIo, RoundTrips) {
  const FrequencyTable t{{4, 0, 7, 1}, 12};
  save_freq_table(dir / "freq.csv", t);
  const auto t2 = load_freq_table(dir / "freq.csv");
  EXPECT_EQ(t2.counts, t.counts);
  EXPECT_EQ(t2.total, t.total);

  const auto subset = build_static_subset(t, 2);
  save_static_subset(dir / "subset.txt", subset);
  EXPECT_EQ(load_static_subset(dir / "subset.txt", 4).kept, subset.kept);
  EXPECT_THROW(load_static_subset(dir / "subset.txt", 2), DataError);

  const auto spec = init_speculator(30, 8, 2, RngStream(3));
  save_speculator(dir / "spec", spec);
  const auto spec2 = load_speculator(dir / "spec");
  EXPECT_EQ(spec2.w_down, spec.w_down);
  EXPECT_EQ(spec2.w_vocab, spec.w_vocab);
}

}  // namespace
}  // namespace vspec
