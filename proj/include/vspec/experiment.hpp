// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end toy pipeline: synthesize a target, sample training data from it, train the
// draft and speculator jointly, then decode held-out prompts under a vocabulary strategy.
// Sweeps repeat this per (axis value, seed) and write CSV/JSON reports.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vspec/config.hpp"
#include "vspec/decode.hpp"
#include "vspec/strategies.hpp"
#include "vspec/toy_model.hpp"
#include "vspec/training.hpp"

namespace vspec {

/// Worker count: VOCAB_SPEC_THREADS when set to a positive integer, else the hardware
/// concurrency, never more than `jobs`.
int worker_count(std::size_t jobs);

/// Runs fn(0..n-1) on worker_count(n) threads. The first exception (by index) is rethrown
/// after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

ToyLM build_target(const ExperimentConfig& cfg);

/// Samples `count` tokens from the target, restarting from a random regular token after
/// each eos and every `segment` tokens.
TokenSequence sample_target_tokens(const ToyLM& target, Index count, double temperature, Index segment,
                                   std::uint64_t seed);

/// The configured corpus file, or a Zipf corpus seeded from the run seed.
TokenSequence corpus_tokens(const ExperimentConfig& cfg);

struct Pipeline {
  ToyLM target;
  TokenSequence data;  // target-generated; [heldout_begin, size) is held out
  ToyLM draft;
  SpeculatorWeights speculator;
  Index heldout_begin = 0;
  std::vector<TrainLogRow> log;
  double heldout_initial_draft_loss = 0;
  double heldout_final_draft_loss = 0;
  double grad_check_max_rel_error = -1;
};

/// Target and sampled data only; the draft is left empty.
Pipeline prepare_data(const ExperimentConfig& cfg);

/// Trains a draft and speculator on the target and data of `base`.
Pipeline retrain(const Pipeline& base, const ExperimentConfig& cfg);

/// prepare_data followed by retrain: everything that does not depend on the strategy.
Pipeline run_pipeline(const ExperimentConfig& cfg);

/// Writes target/, draft/, speculator/, data.vsc, train_log.csv and train_summary.json.
void save_pipeline(const std::filesystem::path& dir, const Pipeline& p);
Pipeline load_pipeline(const std::filesystem::path& dir);

/// Uniformly initialized speculator of the configured shape, independent of training.
SpeculatorWeights random_speculator(const ExperimentConfig& cfg);

/// Static subset from the corpus (external frequencies) or from the training portion of
/// the target-generated data.
StaticSubset static_subset(const ExperimentConfig& cfg, const Pipeline& p, SubsetSource source);

VocabStrategy make_strategy(const ExperimentConfig& cfg, const Pipeline& p);

/// `count` prompts of `length` tokens ending at evenly spaced held-out positions.
std::vector<TokenSequence> heldout_prompts(const Pipeline& p, Index count, Index length);

struct Evaluation {
  std::vector<DecodeTrace> runs;  // one per prompt
  DecodeTrace merged;
  double acceptance_length = 0;
  std::optional<double> tokens_per_sec;
  double tokens_per_gigaflop = 0;
  /// Fraction of held-out draft states whose full-head argmax is a strategy candidate.
  double recall = 0;
};

/// Decodes every prompt speculatively; prompt i uses a decode seed derived from (seed, i).
Evaluation evaluate(const ExperimentConfig& cfg, const Pipeline& p, const VocabStrategy& strategy);

/// Candidate recall of `strategy` on up to `states` held-out draft hidden states.
double strategy_recall(const Pipeline& p, const VocabStrategy& strategy, Index states);

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
double spearman(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b);

struct SubsetOverlap {
  Index corpus_size = 0;
  Index target_size = 0;
  Index intersection = 0;
  double jaccard = 0;
  double frequency_spearman = 0;  // between the two full frequency tables
};

SubsetOverlap subset_overlap(const ExperimentConfig& cfg, const Pipeline& p);

inline constexpr const char* kSweepCsvHeader =
    "axis,value,seed,acceptance_length,acceptance_length_std,tokens_per_sec,tokens_per_sec_std,"
    "tokens_per_gigaflop,tokens_per_gigaflop_std,recall_at_k,recall_at_k_std";
inline constexpr const char* kBaselineCsvHeader =
    "strategy,seed,acceptance_length,acceptance_length_std,tokens_per_sec,tokens_per_sec_std,"
    "tokens_per_gigaflop,tokens_per_gigaflop_std,recall,recall_std";

struct PointMetrics {
  double acceptance_length = 0;
  std::optional<double> tokens_per_sec;
  double tokens_per_gigaflop = 0;
  double recall = 0;
};

struct SweepPoint {
  double value = 0;
  std::vector<PointMetrics> seeds;  // ordered by seed index
};

struct BaselineRow {
  std::string strategy;  // full, static_corpus, static_target, dynamic
  std::vector<PointMetrics> seeds;
};

struct SweepReport {
  SweepAxis axis = SweepAxis::kK;
  std::vector<std::uint64_t> seeds;
  std::vector<SweepPoint> points;
  std::vector<BaselineRow> baselines;
  std::vector<SubsetOverlap> overlap;  // one per seed

  void write_sweep_csv(std::ostream& os) const;
  void write_baselines_csv(std::ostream& os) const;
  nlohmann::json overlap_json() const;
};

/// Seeds are run.seed, run.seed + 1, ... Each seed is one job on the worker pool; the
/// report order depends only on (value, seed).
SweepReport run_sweep(const ExperimentConfig& cfg);

/// Writes sweep.csv, baselines.csv and subset_overlap.json into `dir`.
void write_sweep_report(const std::filesystem::path& dir, const SweepReport& report);

}  // namespace vspec
