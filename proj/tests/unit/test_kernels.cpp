// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "alloc_counter.hpp"
#include "oracles.hpp"
#include "vspec/bench.hpp"
#include "vspec/kernels.hpp"

namespace vspec {
namespace {

double abs_mass(const Matrix& u, TokenId row, const Vector& h) {
  return (u.row(row).transpose().cast<double>().cwiseProduct(h.cast<double>())).cwiseAbs().sum();
}

TEST(FullLogits, IdentityHead) {
  const Vector h = (Vector(4) << 1, 2, 3, 4).finished();
  EXPECT_EQ(full_logits(Matrix::Identity(4, 4), h), h);
}

TEST(FullLogits, MatchesScalarOracleExactly) {
  RngStream rng(11);
  const Matrix u = oracle::random_matrix(8, 3, rng.split(0));
  const Vector h = oracle::random_vector(3, rng.split(1));
  EXPECT_TRUE(full_logits(u, h) == oracle::scalar_matvec(u, h));
}

TEST(FullLogits, FlopCount) {
  KernelStats st;
  full_logits(Matrix::Zero(100, 10), Vector::Zero(10), &st);
  EXPECT_EQ(st.flops, 2000u);
  EXPECT_EQ(st.bytes_read, 100u * 10 * 4);
  EXPECT_EQ(st.intermediate_bytes_allocated, 0u);
}

TEST(FullLogits, DimensionMismatchThrows) {
  EXPECT_THROW(full_logits(Matrix::Zero(3, 2), Vector::Zero(3)), PreconditionError);
}

TEST(IndexedNaive, FullIndexEqualsFullLogits) {
  RngStream rng(12);
  const Matrix u = oracle::random_matrix(20, 6, rng.split(0));
  const Vector h = oracle::random_vector(6, rng.split(1));
  IndexList all(20);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_TRUE(indexed_logits_naive(u, all, h) == full_logits(u, h));
}

TEST(IndexedNaive, UnitRowDot) {
  Matrix u = Matrix::Zero(8, 4);
  u(5, 2) = 1.0f;
  const Vector h = (Vector(4) << 7, 8, 9, 10).finished();
  const IndexList idx{5};
  const Vector z = indexed_logits_naive(u, idx, h);
  ASSERT_EQ(z.size(), 1);
  EXPECT_EQ(z[0], 9.0f);
}

TEST(IndexedNaive, GatherFromFullOracle) {
  RngStream rng(13);
  const Matrix u = oracle::random_matrix(64, 8, rng.split(0));
  const Vector h = oracle::random_vector(8, rng.split(1));
  const auto idx = oracle::random_indices(64, 16, rng.split(2));
  KernelStats st;
  EXPECT_TRUE(indexed_logits_naive(u, idx, h, &st) == oracle::gather(oracle::scalar_matvec(u, h), idx));
  EXPECT_EQ(st.intermediate_bytes_allocated, 16u * 8 * 4);
  EXPECT_EQ(st.flops, 2u * 16 * 8);
}

TEST(IndexedNaive, RejectsBadIndices) {
  const Matrix u = Matrix::Zero(4, 2);
  const Vector h = Vector::Zero(2);
  EXPECT_THROW(indexed_logits_naive(u, IndexList{4}, h), PreconditionError);
  EXPECT_THROW(indexed_logits_naive(u, IndexList{-1}, h), PreconditionError);
  EXPECT_THROW(indexed_logits_naive(u, IndexList{1, 2, 1}, h), PreconditionError);
  EXPECT_THROW(indexed_logits_fused(u, IndexList{1, 1}, h), PreconditionError);
  EXPECT_THROW(indexed_logits_fused_batch(u, IndexList{9}, Matrix::Zero(2, 2)), PreconditionError);
}

TEST(IndexedFused, SingleIndexIsDot) {
  RngStream rng(14);
  const Matrix u = oracle::random_matrix(30, 17, rng.split(0));
  const Vector h = oracle::random_vector(17, rng.split(1));
  for (auto acc : {Accumulation::kReference, Accumulation::kBlocked}) {
    const Vector z = indexed_logits_fused(u, IndexList{21}, h, acc);
    EXPECT_NEAR(z[0], u.row(21).dot(h.transpose()), 1e-6);
  }
}

TEST(IndexedFused, LargeSeededCaseWithinTolerance) {
  RngStream rng(15);
  const Matrix u = oracle::random_matrix(4096, 256, rng.split(0));
  const Vector h = oracle::random_vector(256, rng.split(1));
  const auto idx = oracle::random_indices(4096, 128, rng.split(2));
  const Vector naive = indexed_logits_naive(u, idx, h);
  const Vector fused = indexed_logits_fused(u, idx, h, Accumulation::kBlocked);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto i = static_cast<Index>(j);
    EXPECT_LE(oracle::dot_relative_error(fused[i], naive[i], abs_mass(u, idx[j], h)), 1e-5);
  }
  EXPECT_TRUE(indexed_logits_fused(u, idx, h, Accumulation::kReference) == naive);
}

TEST(IndexedFused, InstrumentedContract) {
  const Matrix u = oracle::random_matrix(500, 64, RngStream(16));
  const Vector h = oracle::random_vector(64, RngStream(17));
  const auto idx = oracle::random_indices(500, 100, RngStream(18));
  KernelStats st;
  indexed_logits_fused(u, idx, h, Accumulation::kBlocked, &st);
  EXPECT_EQ(st.bytes_read, 100u * 64 * 4);
  EXPECT_EQ(st.intermediate_bytes_allocated, 0u);
  EXPECT_EQ(st.flops, 2u * 100 * 64);
}

TEST(IndexedFused, HotLoopDoesNotAllocate) {
  const Matrix u = oracle::random_matrix(300, 48, RngStream(19));
  const Vector h = oracle::random_vector(48, RngStream(20));
  const auto idx = oracle::random_indices(300, 77, RngStream(21));
  std::vector<float> out(idx.size());
  for (auto acc : {Accumulation::kReference, Accumulation::kBlocked}) {
    test::AllocationScope scope;
    fused_gather_dot(u, idx, std::span<const float>(h.data(), 48), out, acc);
    EXPECT_EQ(scope.count(), 0);
  }
}

TEST(IndexedFused, PermutingIndicesPermutesOutput) {
  RngStream rng(22);
  const Matrix u = oracle::random_matrix(200, 32, rng.split(0));
  const Vector h = oracle::random_vector(32, rng.split(1));
  auto idx = oracle::random_indices(200, 40, rng.split(2));
  const Vector z = indexed_logits_fused(u, idx, h);
  IndexList rev(idx.rbegin(), idx.rend());
  const Vector zr = indexed_logits_fused(u, rev, h);
  for (Index j = 0; j < 40; ++j) EXPECT_EQ(zr[j], z[39 - j]);
}

TEST(IndexedFused, ThousandSeededCasesMatchOracles) {
  RngStream root(23);
  for (std::uint64_t c = 0; c < 1000; ++c) {
    auto rng = root.split(c);
    const Index vocab = 1 + static_cast<Index>(rng.below(4096));
    const Index d = 1 + static_cast<Index>(rng.below(256));
    const Index k = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(std::min<Index>(vocab, 256))));
    const Matrix u = oracle::random_matrix(vocab, d, rng.split(0));
    const Vector h = oracle::random_vector(d, rng.split(1));
    const auto idx = oracle::random_indices(vocab, k, rng.split(2));
    const Vector want = oracle::gather(oracle::scalar_matvec(u, h), idx);
    const Vector naive = indexed_logits_naive(u, idx, h);
    ASSERT_TRUE(naive == want) << "case " << c;
    ASSERT_TRUE(indexed_logits_fused(u, idx, h, Accumulation::kReference) == want) << "case " << c;
    const Vector blocked = indexed_logits_fused(u, idx, h, Accumulation::kBlocked);
    for (Index j = 0; j < k; ++j)
      ASSERT_LE(oracle::dot_relative_error(blocked[j], want[j], abs_mass(u, idx[static_cast<std::size_t>(j)], h)), 1e-5)
          << "case " << c << " entry " << j;
  }
}

TEST(FusedBatch, BatchOfOneMatchesUnbatched) {
  RngStream rng(24);
  const Matrix u = oracle::random_matrix(128, 40, rng.split(0));
  const Vector h = oracle::random_vector(40, rng.split(1));
  const auto idx = oracle::random_indices(128, 33, rng.split(2));
  const Matrix out = indexed_logits_fused_batch(u, idx, Matrix(h.transpose()));
  for (auto acc : {Accumulation::kReference, Accumulation::kBlocked}) {
    const Matrix o = indexed_logits_fused_batch(u, idx, Matrix(h.transpose()), acc);
    EXPECT_TRUE(Vector(o.row(0).transpose()) == indexed_logits_fused(u, idx, h, acc));
  }
  EXPECT_EQ(out.rows(), 1);
}

TEST(FusedBatch, IdenticalStatesGiveIdenticalRows) {
  RngStream rng(25);
  const Matrix u = oracle::random_matrix(64, 16, rng.split(0));
  const Vector h = oracle::random_vector(16, rng.split(1));
  const auto idx = oracle::random_indices(64, 10, rng.split(2));
  const Matrix hb = h.transpose().replicate(4, 1);
  const Matrix out = indexed_logits_fused_batch(u, idx, hb);
  for (Index b = 1; b < 4; ++b) EXPECT_TRUE(out.row(b) == out.row(0));
}

TEST(FusedBatch, SeededRowsMatchOracleAcrossThreadCounts) {
  RngStream rng(26);
  const Matrix u = oracle::random_matrix(1024, 64, rng.split(0));
  const Matrix hb = oracle::random_matrix(8, 64, rng.split(1));
  const auto idx = oracle::random_indices(1024, 64, rng.split(2));
  const Matrix single = indexed_logits_fused_batch(u, idx, hb, Accumulation::kBlocked, 1);
  for (int threads : {1, 2, 3, 8}) {
    KernelStats st;
    const Matrix out = indexed_logits_fused_batch(u, idx, hb, Accumulation::kBlocked, threads, &st);
    EXPECT_TRUE(out == single) << threads << " threads";
    EXPECT_EQ(st.bytes_read, 64u * 64 * 4);
    EXPECT_EQ(st.intermediate_bytes_allocated, 0u);
    EXPECT_EQ(st.flops, 8u * 2 * 64 * 64);
  }
  for (Index b = 0; b < 8; ++b) {
    const Vector h = hb.row(b).transpose();
    const Vector want = oracle::gather(oracle::scalar_matvec(u, h), idx);
    for (Index j = 0; j < 64; ++j)
      EXPECT_LE(oracle::dot_relative_error(single(b, j), want[j], abs_mass(u, idx[static_cast<std::size_t>(j)], h)), 1e-5);
  }
  EXPECT_TRUE(indexed_logits_fused_batch(u, idx, hb, Accumulation::kReference) ==
              indexed_logits_naive_batch(u, idx, hb));
}

TEST(Bench, RejectsInfeasibleConfigs) {
  BenchConfig cfg;
  cfg.vocab = 64;
  cfg.dim = 8;
  cfg.ks = {16};
  cfg.batch = 2;
  cfg.repetitions = 0;
  EXPECT_THROW(bench_kernels(cfg), ConfigError);
  cfg.repetitions = 2;
  cfg.ks = {65};
  EXPECT_THROW(bench_kernels(cfg), ConfigError);
}

TEST(Bench, SmallSweepPopulatesRows) {
  BenchConfig cfg;
  cfg.vocab = 2048;
  cfg.dim = 64;
  cfg.ks = {32, 128, 512};
  cfg.batch = 4;
  cfg.repetitions = 3;
  cfg.warmup = 1;
  const BenchReport rep = bench_kernels(cfg);
  ASSERT_EQ(rep.rows.size(), 6u);
  for (const auto& r : rep.rows) {
    EXPECT_GT(r.median_ns, 0);
    EXPECT_LE(r.p10_ns, r.median_ns);
    EXPECT_LE(r.median_ns, r.p90_ns);
    EXPECT_EQ(r.stats.bytes_read, static_cast<std::uint64_t>(r.k) * 64 * 4);
  }
  std::ostringstream os;
  rep.write_csv(os);
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kBenchCsvHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

}  // namespace
}  // namespace vspec
