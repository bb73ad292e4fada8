// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "vspec/csv.hpp"
#include "vspec/rng.hpp"

namespace vspec {
namespace {

Matrix random_matrix(Index rows, Index cols, RngStream rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return m;
}

IndexList random_distinct(Index vocab, Index k, RngStream rng) {
  // Partial Fisher-Yates over [0, vocab).
  IndexList pool(static_cast<std::size_t>(vocab));
  for (Index i = 0; i < vocab; ++i) pool[static_cast<std::size_t>(i)] = static_cast<TokenId>(i);
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(vocab - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

template <typename Fn>
BenchRow time_kernel(const BenchConfig& cfg, Index k, const char* name, Fn&& fn) {
  for (int i = 0; i < cfg.warmup; ++i) fn(nullptr);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(cfg.repetitions));
  BenchRow row{cfg.vocab, cfg.dim, k, cfg.batch, name, 0, 0, 0, {}};
  for (int i = 0; i < cfg.repetitions; ++i) {
    KernelStats stats;
    const auto t0 = std::chrono::steady_clock::now();
    fn(&stats);
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    row.stats = stats;
  }
  row.median_ns = percentile(samples, 0.5);
  row.p10_ns = percentile(samples, 0.1);
  row.p90_ns = percentile(samples, 0.9);
  return row;
}

}  // namespace

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const auto n = samples.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return samples[rank - 1];
}

void validate(const BenchConfig& cfg) {
  if (cfg.vocab < 1 || cfg.dim < 1) throw ConfigError("bench: vocab and dim must be >= 1");
  if (cfg.ks.empty()) throw ConfigError("bench: empty k sweep");
  for (Index k : cfg.ks)
    if (k < 1 || k > cfg.vocab)
      throw ConfigError("bench: k=" + std::to_string(k) + " infeasible for vocab " + std::to_string(cfg.vocab));
  if (cfg.batch < 1) throw ConfigError("bench: batch must be >= 1");
  if (cfg.repetitions < 1) throw ConfigError("bench: repetitions must be >= 1");
  if (cfg.warmup < 0) throw ConfigError("bench: warmup must be >= 0");
  if (cfg.threads < 1) throw ConfigError("bench: threads must be >= 1");
}

BenchReport bench_kernels(const BenchConfig& cfg) {
  validate(cfg);
  RngStream root(cfg.seed);
  const Matrix u = random_matrix(cfg.vocab, cfg.dim, root.split(0));
  const Matrix h = random_matrix(cfg.batch, cfg.dim, root.split(1));

  BenchReport report;
  for (std::size_t i = 0; i < cfg.ks.size(); ++i) {
    const Index k = cfg.ks[i];
    const IndexList idx = random_distinct(cfg.vocab, k, root.split(2 + i));
    report.rows.push_back(time_kernel(cfg, k, "naive", [&](KernelStats* s) {
      auto out = indexed_logits_naive_batch(u, idx, h, s);
      asm volatile("" : : "r"(out.data()) : "memory");
    }));
    report.rows.push_back(time_kernel(cfg, k, "fused", [&](KernelStats* s) {
      auto out = indexed_logits_fused_batch(u, idx, h, Accumulation::kBlocked, cfg.threads, s);
      asm volatile("" : : "r"(out.data()) : "memory");
    }));
  }
  return report;
}

double BenchReport::speedup(Index k) const {
  double naive = 0, fused = 0;
  for (const auto& r : rows) {
    if (r.k != k) continue;
    (r.kernel == "naive" ? naive : fused) = r.median_ns;
  }
  return (naive > 0 && fused > 0) ? naive / fused : 0.0;
}

void BenchReport::write_csv(std::ostream& os) const {
  os << kBenchCsvHeader << '\n';
  for (const auto& r : rows)
    write_csv_row(os, {std::to_string(r.vocab), std::to_string(r.dim), std::to_string(r.k),
                       std::to_string(r.batch), r.kernel, format_float(r.median_ns),
                       format_float(r.p10_ns), format_float(r.p90_ns), std::to_string(r.stats.flops),
                       std::to_string(r.stats.bytes_read),
                       std::to_string(r.stats.intermediate_bytes_allocated)});
}

}  // namespace vspec
