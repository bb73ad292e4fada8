// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/decode.hpp"

#include <chrono>
#include <sstream>

#include "vspec/csv.hpp"

namespace vspec {
namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

std::vector<TokenId> window(const std::vector<TokenId>& seq, const ToyLM& m) {
  return context_window(seq, m.context, pad_token(m.vocab));
}

// Appends `tok` to the output unless the run is already over. Returns false once the run
// has ended (max_new_tokens reached or eos emitted).
bool emit(TokenSequence& out, std::vector<TokenId>& seq, TokenId tok, const DecodeConfig& cfg, TokenId eos) {
  out.tokens.push_back(tok);
  seq.push_back(tok);
  return tok != eos && static_cast<Index>(out.tokens.size()) < cfg.max_new_tokens;
}

// The draft's proposal distribution scattered back onto the full vocabulary.
Vector scatter(const StepSelection& sel, const Vector& restricted_probs, Index vocab) {
  Vector full = Vector::Zero(vocab);
  for (std::size_t j = 0; j < sel.candidates.size(); ++j) full[sel.candidates[j]] = restricted_probs[static_cast<Index>(j)];
  return full;
}

void warm_up(const ToyLM& target, const ToyLM* draft, const TokenSequence& prompt) {
  // Untimed pass so first-touch page faults do not land in cycle 0.
  const auto tctx = window(prompt.tokens, target);
  volatile float sink = forward(target, tctx).logits[0];
  if (draft) sink = forward(*draft, window(prompt.tokens, *draft)).logits[0];
  (void)sink;
}

void accumulate(DecodeTrace& trace, CycleRecord rec) {
  trace.draft_flops += rec.draft_flops;
  trace.target_flops += rec.target_flops;
  trace.wall_ns += rec.wall_ns;
  trace.cycles.push_back(std::move(rec));
}

}  // namespace

void DecodeConfig::validate() const {
  if (gamma < 1) throw ConfigError("decode: gamma must be >= 1");
  if (max_new_tokens < 1) throw ConfigError("decode: max_new_tokens must be >= 1");
  if (mode == DecodeMode::kSampling && !(temperature > 0.0))
    throw ConfigError("decode: sampling temperature must be > 0");
}

DecodeResult decode_autoregressive(const ToyLM& target, const TokenSequence& prompt, const DecodeConfig& cfg) {
  cfg.validate();
  validate(target);
  RngStream rng(cfg.seed, 11);
  warm_up(target, nullptr, prompt);

  DecodeResult res;
  res.output.provenance = Provenance::kTargetGenerated;
  std::vector<TokenId> seq = prompt.tokens;
  const TokenId eos = eos_token(target.vocab);
  bool running = true;
  while (running) {
    const auto t0 = Clock::now();
    const auto fwd = forward(target, window(seq, target));
    const TokenId tok = cfg.mode == DecodeMode::kGreedy
                            ? static_cast<TokenId>(argmax(fwd.logits))
                            : static_cast<TokenId>(sample_categorical(tempered_softmax(fwd.logits, cfg.temperature), rng));
    running = emit(res.output, seq, tok, cfg, eos);
    accumulate(res.trace, CycleRecord{{}, 0, tok, 0, forward_flops(target), elapsed_ns(t0)});
  }
  res.trace.tokens_emitted = static_cast<Index>(res.output.tokens.size());
  return res;
}

TokenId verify_token(const Vector& target, const Vector& draft, TokenId x, RngStream& rng, bool& accepted) {
  VSPEC_REQUIRE(target.size() == draft.size(), "distribution sizes differ");
  const double p = target[x];
  const double q = draft[x];
  // q > 0 for any token the draft can actually propose.
  const double ratio = q > 0.0 ? p / q : 1.0;
  if (rng.uniform() < ratio) {
    accepted = true;
    return x;
  }
  accepted = false;
  Vector residual = (target - draft).cwiseMax(0.0f);
  if (!(residual.sum() > 0.0f)) return static_cast<TokenId>(sample_categorical(target, rng));
  return static_cast<TokenId>(sample_categorical(residual, rng));
}

DecodeResult decode_speculative(const ToyLM& target, const Drafter& drafter, const TokenSequence& prompt,
                                const DecodeConfig& cfg) {
  cfg.validate();
  validate(target);
  VSPEC_REQUIRE(drafter.model != nullptr, "no draft model");
  const ToyLM& draft = *drafter.model;
  validate(draft);
  if (draft.vocab != target.vocab)
    throw ConfigError("draft vocabulary (" + std::to_string(draft.vocab) + ") != target vocabulary (" +
                      std::to_string(target.vocab) + ")");

  RngStream root(cfg.seed, 13);
  RngStream draft_rng = root.split(0);
  RngStream verify_rng = root.split(1);
  warm_up(target, &draft, prompt);

  const bool greedy = cfg.mode == DecodeMode::kGreedy;
  const TokenId eos = eos_token(target.vocab);
  const auto gamma = static_cast<std::size_t>(cfg.gamma);

  DecodeResult res;
  res.output.provenance = Provenance::kTargetGenerated;
  std::vector<TokenId> seq = prompt.tokens;
  std::size_t draft_step = 0;
  bool running = true;

  while (running) {
    const auto t0 = Clock::now();
    CycleRecord rec;
    std::vector<Vector> draft_dists;  // sampling mode: proposal distribution per position

    std::vector<TokenId> ext = seq;
    for (std::size_t i = 0; i < gamma; ++i) {
      const auto h = forward_backbone(draft, window(ext, draft)).hidden;
      const StepSelection sel = drafter.strategy.select(draft.head, h, draft_step++);
      rec.draft_flops += backbone_flops(draft) + sel.cost.flops;
      TokenId x = 0;
      if (greedy) {
        x = sel.candidates[static_cast<std::size_t>(argmax(sel.exact_logits))];
      } else {
        const Vector q = tempered_softmax(sel.exact_logits, cfg.temperature);
        x = sel.candidates[static_cast<std::size_t>(sample_categorical(q, draft_rng))];
        draft_dists.push_back(scatter(sel, q, target.vocab));
      }
      rec.proposed.push_back(x);
      ext.push_back(x);
    }

    // Target scores every prefix of the proposal, as one batched forward would.
    std::vector<Vector> target_logits;
    target_logits.reserve(gamma + 1);
    for (std::size_t i = 0; i <= gamma; ++i) {
      const std::vector<TokenId> prefix(ext.begin(), ext.begin() + static_cast<std::ptrdiff_t>(seq.size() + i));
      target_logits.push_back(forward(target, window(prefix, target)).logits);
    }
    rec.target_flops = static_cast<std::uint64_t>(gamma + 1) * forward_flops(target);

    std::size_t accepted = 0;
    TokenId bonus = 0;
    bool rejected = false;
    for (; accepted < gamma; ++accepted) {
      const TokenId x = rec.proposed[accepted];
      if (greedy) {
        const auto t = static_cast<TokenId>(argmax(target_logits[accepted]));
        if (t != x) {
          bonus = t;
          rejected = true;
          break;
        }
      } else {
        bool ok = false;
        const Vector p = tempered_softmax(target_logits[accepted], cfg.temperature);
        const TokenId y = verify_token(p, draft_dists[accepted], x, verify_rng, ok);
        if (!ok) {
          bonus = y;
          rejected = true;
          break;
        }
      }
    }
    if (!rejected) {
      bonus = greedy ? static_cast<TokenId>(argmax(target_logits[gamma]))
                     : static_cast<TokenId>(sample_categorical(tempered_softmax(target_logits[gamma], cfg.temperature), verify_rng));
    }
    rec.accepted = static_cast<Index>(accepted);
    rec.bonus = bonus;

    for (std::size_t i = 0; i < accepted && running; ++i) running = emit(res.output, seq, rec.proposed[i], cfg, eos);
    if (running) running = emit(res.output, seq, bonus, cfg, eos);

    rec.wall_ns = elapsed_ns(t0);
    accumulate(res.trace, std::move(rec));
  }
  res.trace.tokens_emitted = static_cast<Index>(res.output.tokens.size());
  return res;
}

double acceptance_length(const DecodeTrace& trace) {
  VSPEC_REQUIRE(!trace.cycles.empty(), "empty trace");
  double sum = 0.0;
  for (const auto& c : trace.cycles) sum += static_cast<double>(c.accepted + 1);
  return sum / static_cast<double>(trace.cycles.size());
}

Throughput throughput_proxy(const DecodeTrace& trace) {
  Throughput t;
  const auto tokens = static_cast<double>(trace.tokens_emitted);
  if (trace.wall_ns > 0) t.tokens_per_sec = tokens / (static_cast<double>(trace.wall_ns) * 1e-9);
  const std::uint64_t flops = trace.draft_flops + trace.target_flops;
  if (flops > 0) t.tokens_per_gigaflop = tokens / (static_cast<double>(flops) * 1e-9);
  return t;
}

void write_trace_csv(std::ostream& os, const DecodeTrace& trace) {
  os << kTraceCsvHeader << '\n';
  for (std::size_t i = 0; i < trace.cycles.size(); ++i) {
    const auto& c = trace.cycles[i];
    std::string proposed;
    for (std::size_t j = 0; j < c.proposed.size(); ++j) {
      if (j) proposed += ' ';
      proposed += std::to_string(c.proposed[j]);
    }
    write_csv_row(os, {std::to_string(i), proposed, std::to_string(c.accepted), std::to_string(c.bonus),
                       std::to_string(c.draft_flops), std::to_string(c.target_flops), std::to_string(c.wall_ns)});
  }
}

DecodeTrace read_trace_csv(std::istream& is) {
  const CsvTable csv = read_csv(is);
  const auto proposed = csv.column("proposed"), accepted = csv.column("accepted"), bonus = csv.column("bonus"),
             dflops = csv.column("draft_flops"), tflops = csv.column("target_flops"), wall = csv.column("wall_ns");
  DecodeTrace trace;
  for (const auto& row : csv.rows) {
    CycleRecord c;
    std::istringstream ids(row[proposed]);
    for (TokenId t; ids >> t;) c.proposed.push_back(t);
    const auto a = parse_int(row[accepted]), b = parse_int(row[bonus]), d = parse_int(row[dflops]),
               t = parse_int(row[tflops]), w = parse_int(row[wall]);
    if (!a || !b || !d || !t || !w) throw DataError("trace csv: malformed row");
    c.accepted = *a;
    c.bonus = static_cast<TokenId>(*b);
    c.draft_flops = static_cast<std::uint64_t>(*d);
    c.target_flops = static_cast<std::uint64_t>(*t);
    c.wall_ns = *w;
    trace.tokens_emitted += c.accepted + 1;
    accumulate(trace, std::move(c));
  }
  return trace;
}

nlohmann::json summary_json(const DecodeTrace& trace, const nlohmann::json& config) {
  const auto tp = throughput_proxy(trace);
  nlohmann::json j;
  j["config"] = config;
  j["acceptance_length"] = acceptance_length(trace);
  j["tokens_per_sec"] = tp.tokens_per_sec ? nlohmann::json(*tp.tokens_per_sec) : nlohmann::json(nullptr);
  j["tokens_per_gigaflop"] = tp.tokens_per_gigaflop ? nlohmann::json(*tp.tokens_per_gigaflop) : nlohmann::json(nullptr);
  return j;
}

}  // namespace vspec
