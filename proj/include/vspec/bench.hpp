// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmark of the naive vs fused indexed LM head over a sweep of k.

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "vspec/kernels.hpp"

namespace vspec {

struct BenchConfig {
  Index vocab = 131072;
  Index dim = 1024;
  std::vector<Index> ks = {512, 2048, 8192};
  Index batch = 16;
  int repetitions = 10;
  int warmup = 2;
  std::uint64_t seed = 0;
  int threads = 1;  // >1 enables the parallel fused kernel
};

struct BenchRow {
  Index vocab = 0, dim = 0, k = 0, batch = 0;
  std::string kernel;  // "naive" or "fused"
  double median_ns = 0, p10_ns = 0, p90_ns = 0;
  KernelStats stats;
};

struct BenchReport {
  std::vector<BenchRow> rows;

  /// naive median / fused median at the given k, or 0 when k was not benchmarked.
  double speedup(Index k) const;
  void write_csv(std::ostream& os) const;
};

inline constexpr const char* kBenchCsvHeader =
    "vocab,dim,k,batch,kernel,median_ns,p10_ns,p90_ns,flops,bytes_read,alloc_bytes";

/// Nearest-rank percentile of unsorted samples, q in [0, 1].
double percentile(std::vector<double> samples, double q);

/// Throws ConfigError on an infeasible configuration (k > vocab, repetitions < 1, ...).
void validate(const BenchConfig& cfg);

BenchReport bench_kernels(const BenchConfig& cfg);

}  // namespace vspec
