// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Chain speculative decoding. Each cycle the draft proposes gamma tokens through its
// vocabulary strategy, the target scores all gamma + 1 positions, the longest verified
// prefix is kept and one bonus token is always emitted from the target.

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "vspec/strategies.hpp"
#include "vspec/toy_model.hpp"

namespace vspec {

enum class DecodeMode { kGreedy, kSampling };

struct DecodeConfig {
  Index gamma = 4;
  DecodeMode mode = DecodeMode::kGreedy;
  double temperature = 1.0;  // sampling mode only
  Index max_new_tokens = 64;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an out-of-range field.
  void validate() const;
};

struct CycleRecord {
  std::vector<TokenId> proposed;
  Index accepted = 0;
  TokenId bonus = 0;
  std::uint64_t draft_flops = 0;
  std::uint64_t target_flops = 0;
  std::int64_t wall_ns = 0;
};

struct DecodeTrace {
  std::vector<CycleRecord> cycles;
  Index tokens_emitted = 0;
  std::uint64_t draft_flops = 0;
  std::uint64_t target_flops = 0;
  std::int64_t wall_ns = 0;
};

struct DecodeResult {
  TokenSequence output;  // continuation only
  DecodeTrace trace;
};

/// The draft side of speculative decoding: backbone plus LM-head strategy.
struct Drafter {
  const ToyLM* model = nullptr;
  VocabStrategy strategy;
};

/// One target forward per emitted token; every cycle has accepted = 0.
DecodeResult decode_autoregressive(const ToyLM& target, const TokenSequence& prompt, const DecodeConfig& cfg);

/// Throws ConfigError when draft and target vocabularies differ.
DecodeResult decode_speculative(const ToyLM& target, const Drafter& draft, const TokenSequence& prompt,
                                const DecodeConfig& cfg);

/// Mean over cycles of accepted + 1. Throws PreconditionError on an empty trace.
double acceptance_length(const DecodeTrace& trace);

struct Throughput {
  std::optional<double> tokens_per_sec;
  std::optional<double> tokens_per_gigaflop;
};

/// Absent fields mean zero elapsed time or zero counted FLOPs.
Throughput throughput_proxy(const DecodeTrace& trace);

/// One accept/reject step of lossless verification. `draft` is the draft distribution over
/// the full vocabulary (zero outside its support), `x` the proposed token. Returns the
/// proposal when accepted, otherwise a sample from normalize(max(0, target - draft)),
/// falling back to `target` when that residual has no mass. `accepted` reports which.
TokenId verify_token(const Vector& target, const Vector& draft, TokenId x, RngStream& rng, bool& accepted);

inline constexpr const char* kTraceCsvHeader = "cycle,proposed,accepted,bonus,draft_flops,target_flops,wall_ns";

/// `proposed` is written as space-separated token ids.
void write_trace_csv(std::ostream& os, const DecodeTrace& trace);
DecodeTrace read_trace_csv(std::istream& is);

/// {"config": ..., "acceptance_length": ..., "tokens_per_sec": ..., "tokens_per_gigaflop": ...}
nlohmann::json summary_json(const DecodeTrace& trace, const nlohmann::json& config);

}  // namespace vspec
