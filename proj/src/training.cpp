// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/training.hpp"

#include <algorithm>
#include <cmath>

#include "vspec/csv.hpp"

namespace vspec {
namespace {

struct AdamSlot {
  Matrix m, v;

  explicit AdamSlot(const Matrix& like)
      : m(Matrix::Zero(like.rows(), like.cols())), v(Matrix::Zero(like.rows(), like.cols())) {}

  void step(Matrix& w, const Matrix& g, const TrainConfig& cfg, double lr, Index t) {
    const auto b1 = static_cast<float>(cfg.beta1);
    const auto b2 = static_cast<float>(cfg.beta2);
    m.array() = b1 * m.array() + (1.0f - b1) * g.array();
    v.array() = b2 * v.array() + (1.0f - b2) * g.array().square();
    const auto c1 = static_cast<float>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
    const auto c2 = static_cast<float>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
    const auto eps = static_cast<float>(cfg.eps);
    w.array() -= static_cast<float>(lr) * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

std::vector<Index> evenly_spaced(Index begin, Index end, Index max_count) {
  std::vector<Index> out;
  const Index n = end - begin;
  if (n <= 0) return out;
  const Index count = std::min(n, max_count);
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) out.push_back(begin + i * n / count);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train: Adam betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train: eps must be > 0");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (steps < 1) throw ConfigError("train: steps must be >= 1");
  if (draft_hidden < 1) throw ConfigError("train: draft_hidden must be >= 1");
  if (d_prime < 1 || d_prime > draft_hidden) throw ConfigError("train: need 1 <= d_prime <= draft_hidden");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("train: warmup_fraction must be in [0, 1]");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ConfigError("train: holdout_fraction must be in (0, 1)");
}

LossBreakdown joint_loss(const ProbDist& p, const Vector& q_logits, const Vector& s_logits, double lambda) {
  VSPEC_REQUIRE(p.probs.size() == q_logits.size() && p.probs.size() == s_logits.size(),
                "distribution lengths differ");
  VSPEC_REQUIRE(!p.domain, "joint loss needs full-vocabulary distributions");
  LossBreakdown out;
  out.draft_loss = cross_entropy_with_logits(p.probs, q_logits);
  out.aux_loss = cross_entropy_with_logits(p.probs, s_logits);
  out.total = out.draft_loss + lambda * out.aux_loss;
  return out;
}

TrainingExample<float> make_example(const ToyLM& target, std::span<const TokenId> tokens, Index position) {
  VSPEC_REQUIRE(position >= 0 && position < static_cast<Index>(tokens.size()), "position out of range");
  TrainingExample<float> ex;
  ex.context = context_window(tokens.first(static_cast<std::size_t>(position)), target.context, pad_token(target.vocab));
  ex.target_probs = softmax_values(forward(target, ex.context).logits);
  return ex;
}

Matrix collect_hidden_states(const ToyLM& draft, std::span<const TokenId> tokens, Index begin, Index end,
                             Index max_states) {
  const auto positions = evenly_spaced(begin, end, max_states);
  VSPEC_REQUIRE(!positions.empty(), "no positions to collect");
  Matrix states(static_cast<Index>(positions.size()), draft.hidden);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto ctx = context_window(tokens.first(static_cast<std::size_t>(positions[i])), draft.context, pad_token(draft.vocab));
    states.row(static_cast<Index>(i)) = forward_backbone(draft, ctx).hidden.transpose();
  }
  return states;
}

double mean_draft_loss(const ToyLM& target, const ToyLM& draft, std::span<const TokenId> tokens, Index begin,
                       Index end, Index max_examples) {
  const auto positions = evenly_spaced(begin, end, max_examples);
  VSPEC_REQUIRE(!positions.empty(), "no positions to evaluate");
  double sum = 0.0;
  for (Index pos : positions) {
    const auto ex = make_example(target, tokens, pos);
    sum += cross_entropy_with_logits(ex.target_probs, forward(draft, ex.context).logits);
  }
  return sum / static_cast<double>(positions.size());
}

double gradient_check(const BasicToyLM<double>& model, const SpeculatorParams<double>& spec,
                      std::span<const TrainingExample<double>> batch, double lambda, double step, double floor) {
  const auto analytic = backward(model, spec, batch, lambda).grads;
  BasicToyLM<double> m = model;
  SpeculatorParams<double> s = spec;
  const std::pair<DenseMatrix<double>*, const DenseMatrix<double>*> weights[] = {
      {&m.embed, &analytic.embed}, {&m.mix, &analytic.mix},         {&m.head, &analytic.head},
      {&s.w_down, &analytic.w_down}, {&s.w_vocab, &analytic.w_vocab}};
  double worst = 0.0;
  for (const auto& [w, g] : weights) {
    for (Index i = 0; i < w->size(); ++i) {
      double& x = w->data()[i];
      const double saved = x;
      auto loss_at = [&](double offset) {
        x = saved + offset;
        return batch_loss(m, s, batch, lambda).total;
      };
      // Fourth-order central stencil: truncation error O(step^4).
      const double numeric =
          (8.0 * (loss_at(step) - loss_at(-step)) - (loss_at(2.0 * step) - loss_at(-2.0 * step))) / (12.0 * step);
      x = saved;
      const double a = g->data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

TrainResult train(const ToyLM& target, const TokenSequence& data, const TrainConfig& cfg) {
  cfg.validate();
  validate(target);
  const auto n = static_cast<Index>(data.tokens.size());
  VSPEC_REQUIRE(n >= target.context, "data shorter than the context window");
  for (std::size_t i = 0; i < data.tokens.size(); ++i)
    if (data.tokens[i] < 0 || data.tokens[i] >= target.vocab)
      throw DataError("training token at position " + std::to_string(i) + " outside vocabulary");

  TrainResult result;
  const Index holdout = std::max<Index>(1, static_cast<Index>(std::floor(static_cast<double>(n) * cfg.holdout_fraction)));
  result.heldout_begin = n - holdout;
  VSPEC_REQUIRE(result.heldout_begin >= 1, "no training positions left after the hold-out split");
  const std::span<const TokenId> tokens(data.tokens);

  RngStream root(cfg.seed);
  result.draft = init_draft(target.vocab, cfg.draft_hidden, target.context, root.split(0));
  result.draft.seed = cfg.seed;
  result.speculator = init_speculator(target.vocab, cfg.draft_hidden, cfg.d_prime, root.split(1));
  RngStream batch_rng = root.split(2);

  constexpr Index kEvalExamples = 1000;
  result.heldout_initial_draft_loss = mean_draft_loss(target, result.draft, tokens, result.heldout_begin, n, kEvalExamples);

  ToyLM& draft = result.draft;
  SpeculatorWeights& spec = result.speculator;
  AdamSlot embed_opt(draft.embed), mix_opt(draft.mix), head_opt(draft.head);
  AdamSlot down_opt(spec.w_down), vocab_opt(spec.w_vocab);

  const Index warmup = static_cast<Index>(std::ceil(cfg.warmup_fraction * static_cast<double>(cfg.steps)));
  std::vector<TrainingExample<float>> batch(static_cast<std::size_t>(cfg.batch));
  result.log.reserve(static_cast<std::size_t>(cfg.steps));

  for (Index step = 1; step <= cfg.steps; ++step) {
    for (auto& ex : batch)
      ex = make_example(target, tokens, static_cast<Index>(batch_rng.below(static_cast<std::uint64_t>(result.heldout_begin))));

    if (cfg.grad_check && step == 1) {
      std::vector<TrainingExample<double>> dbatch;
      for (const auto& ex : batch) dbatch.push_back({ex.context, ex.target_probs.cast<double>()});
      result.grad_check_max_rel_error = gradient_check(draft.cast<double>(), spec.cast<double>(), dbatch, cfg.lambda);
    }

    BackwardResult<float> bw;
    try {
      bw = backward<float>(draft, spec, batch, cfg.lambda, cfg.detach_aux);
    } catch (const PreconditionError& e) {
      // Shapes are fixed for the whole run, so a failure here is overflowed logits.
      throw TrainingError(step, e.what());
    }
    if (!std::isfinite(bw.loss.total)) throw TrainingError(step, "non-finite loss");

    const double lr = (warmup > 0 && step <= warmup)
                          ? cfg.lr * static_cast<double>(step) / static_cast<double>(warmup)
                          : cfg.lr;
    embed_opt.step(draft.embed, bw.grads.embed, cfg, lr, step);
    mix_opt.step(draft.mix, bw.grads.mix, cfg, lr, step);
    head_opt.step(draft.head, bw.grads.head, cfg, lr, step);
    down_opt.step(spec.w_down, bw.grads.w_down, cfg, lr, step);
    vocab_opt.step(spec.w_vocab, bw.grads.w_vocab, cfg, lr, step);
    result.log.push_back({step, bw.loss, lr});
  }

  result.heldout_final_draft_loss = mean_draft_loss(target, draft, tokens, result.heldout_begin, n, kEvalExamples);
  if (!std::isfinite(result.heldout_final_draft_loss)) throw TrainingError(cfg.steps, "non-finite held-out loss");
  return result;
}

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& log) {
  os << kTrainLogHeader << '\n';
  for (const auto& r : log)
    write_csv_row(os, {std::to_string(r.step), format_float(r.loss.draft_loss), format_float(r.loss.aux_loss),
                       format_float(r.loss.total), format_float(r.lr)});
}

}  // namespace vspec
