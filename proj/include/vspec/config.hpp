// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: an INI-style text file with [section] headers, `key = value`
// lines and full-line comments starting with '#' or ';'. Every key is optional; unknown
// sections or keys, duplicate keys and malformed values raise ConfigError.

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "vspec/bench.hpp"
#include "vspec/decode.hpp"
#include "vspec/toy_model.hpp"
#include "vspec/training.hpp"

namespace vspec {

enum class StrategyKind { kFull, kStatic, kDynamic };
/// Where a static subset's frequencies come from: an external corpus or target samples.
enum class SubsetSource { kCorpus, kTarget };
enum class SpeculatorSource { kTrained, kRandom };
enum class SweepAxis { kK, kDPrimeRatio, kLambda, kSubsetSize };

std::string to_string(StrategyKind k);
std::string to_string(SubsetSource s);
std::string to_string(SweepAxis a);

struct ExperimentConfig {
  struct Run {
    std::uint64_t seed = 0;
    std::filesystem::path out = "runs/default";
    /// Directory written by `train`; when set, decode loads target, draft and speculator
    /// from it instead of training in-process.
    std::optional<std::filesystem::path> artifacts;
  } run;

  TargetSpec target{2048, 128, 4, 0, 0.7, 16.0};
  /// Pins the target seed across run seeds; unset means the target follows the run seed.
  std::optional<std::uint64_t> target_seed;

  struct Data {
    Index tokens = 100000;       // target-generated training tokens
    double temperature = 1.0;
    Index segment = 64;          // tokens sampled per prompt before reseeding the context
  } data;

  TrainConfig train;
  double d_prime_ratio = 1.0 / 16.0;  // d' = ceil(d * ratio); overrides train.d_prime

  struct Strategy {
    StrategyKind kind = StrategyKind::kDynamic;
    Index k = 0;             // 0: |V| / 64
    Index subset_size = 0;   // 0: |V| / 4
    SubsetSource subset_source = SubsetSource::kTarget;
    SpeculatorSource speculator = SpeculatorSource::kTrained;
  } strategy;

  struct Corpus {
    double alpha = 1.0;
    Index tokens = 100000;
    std::optional<std::filesystem::path> path;  // VSC1 file; otherwise a Zipf corpus
  } corpus;

  DecodeConfig decode;
  Index prompts = 20;
  Index prompt_len = 4;

  struct Eval {
    Index recall_k = 0;  // 0: same as strategy k
    Index states = 2000;
  } eval;

  BenchConfig bench;

  struct Sweep {
    SweepAxis axis = SweepAxis::kK;
    std::vector<double> values;  // empty: the default grid for the axis
    Index seeds = 5;
    bool wall_clock = true;      // false leaves tokens_per_sec empty for byte-stable output
  } sweep;

  Index k() const { return strategy.k > 0 ? strategy.k : std::max<Index>(1, target.vocab / 64); }
  Index subset_size() const {
    return strategy.subset_size > 0 ? strategy.subset_size : std::max<Index>(1, target.vocab / 4);
  }
  Index recall_k() const { return eval.recall_k > 0 ? eval.recall_k : k(); }
  Index d_prime() const;

  /// Run seed, propagated to the training, decode and bench seeds.
  void set_seed(std::uint64_t seed);

  /// Cross-field checks. Throws ConfigError.
  void validate() const;
  /// The sweep axis must apply to the strategy: subset_size to static, k and d_prime_ratio to
  /// dynamic; lambda applies to every strategy since it shapes the trained draft.
  void validate_sweep() const;
  /// Configured sweep values, or the default grid for the axis.
  std::vector<double> sweep_values() const;
};

/// Parses and validates. `source` names the input in error messages.
ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// The grid used when [sweep] values is empty.
std::vector<double> default_sweep_values(SweepAxis axis, Index vocab);

/// Applies one sweep value to a copy of `base`.
ExperimentConfig with_axis_value(const ExperimentConfig& base, SweepAxis axis, double value);

}  // namespace vspec
