// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Distillation of a draft model plus vocabulary speculator from a target model.
//
// Per example with target distribution p over the full vocabulary:
//   h      = draft backbone(context)
//   q      = softmax(U h)                     draft head
//   q_aux  = softmax(W_vocab W_down h)        speculator, full vocabulary
//   loss   = CE(p, q) + lambda * CE(p, q_aux)
//
// The aux gradient reaches the backbone through h unless `detach_aux` is set; it never
// reaches U.

#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "vspec/strategies.hpp"
#include "vspec/toy_model.hpp"

namespace vspec {

struct TrainConfig {
  double lambda = 0.1;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  Index batch = 32;
  Index steps = 2000;
  std::uint64_t seed = 0;
  Index d_prime = 4;
  bool grad_check = false;          // run a finite-difference check on the first batch
  bool detach_aux = false;          // stop the aux gradient at h
  double warmup_fraction = 0.015;   // linear warmup over this fraction of steps
  Index draft_hidden = 64;
  double holdout_fraction = 0.1;    // tail of the data kept for evaluation

  /// Throws ConfigError on an out-of-range field.
  void validate() const;
};

struct LossBreakdown {
  double draft_loss = 0;
  double aux_loss = 0;
  double total = 0;
};

/// draft = CE(p, softmax(q_logits)), aux = CE(p, softmax(s_logits)), total = draft + lambda aux.
LossBreakdown joint_loss(const ProbDist& p, const Vector& q_logits, const Vector& s_logits, double lambda);

template <typename Scalar>
struct TrainingExample {
  std::vector<TokenId> context;
  DenseVector<Scalar> target_probs;
};

template <typename Scalar>
struct DraftGradients {
  DenseMatrix<Scalar> embed, mix, head, w_down, w_vocab;

  static DraftGradients zeros_like(const BasicToyLM<Scalar>& m, const SpeculatorParams<Scalar>& s) {
    return {DenseMatrix<Scalar>::Zero(m.embed.rows(), m.embed.cols()),
            DenseMatrix<Scalar>::Zero(m.mix.rows(), m.mix.cols()),
            DenseMatrix<Scalar>::Zero(m.head.rows(), m.head.cols()),
            DenseMatrix<Scalar>::Zero(s.w_down.rows(), s.w_down.cols()),
            DenseMatrix<Scalar>::Zero(s.w_vocab.rows(), s.w_vocab.cols())};
  }
};

template <typename Scalar>
struct BackwardResult {
  LossBreakdown loss;  // mean over the batch
  DraftGradients<Scalar> grads;
};

namespace detail {

template <typename Scalar>
struct ExampleForward {
  DenseVector<Scalar> input, pre, hidden, reduced, q_logits, s_logits;
};

template <typename Scalar>
ExampleForward<Scalar> example_forward(const BasicToyLM<Scalar>& m, const SpeculatorParams<Scalar>& s,
                                       std::span<const TokenId> ctx) {
  ExampleForward<Scalar> f;
  f.input.resize(m.context * m.hidden);
  for (Index slot = 0; slot < m.context; ++slot)
    f.input.segment(slot * m.hidden, m.hidden) = m.embed.row(ctx[static_cast<std::size_t>(slot)]).transpose();
  f.pre.noalias() = m.mix * f.input;
  f.hidden = f.pre.unaryExpr([](Scalar x) { return squash(x); });
  f.q_logits.noalias() = m.head * f.hidden;
  f.reduced.noalias() = s.w_down * f.hidden;
  f.s_logits.noalias() = s.w_vocab * f.reduced;
  return f;
}

template <typename Scalar>
DenseVector<Scalar> softmax_of(const DenseVector<Scalar>& z) {
  return softmax_values<Scalar>(z);
}

}  // namespace detail

/// Mean joint loss over a batch, forward only.
template <typename Scalar>
LossBreakdown batch_loss(const BasicToyLM<Scalar>& m, const SpeculatorParams<Scalar>& s,
                         std::span<const TrainingExample<Scalar>> batch, double lambda) {
  VSPEC_REQUIRE(!batch.empty(), "empty batch");
  LossBreakdown sum;
  for (const auto& ex : batch) {
    const auto f = detail::example_forward(m, s, ex.context);
    sum.draft_loss += cross_entropy_with_logits(ex.target_probs, f.q_logits);
    sum.aux_loss += cross_entropy_with_logits(ex.target_probs, f.s_logits);
  }
  const auto n = static_cast<double>(batch.size());
  sum.draft_loss /= n;
  sum.aux_loss /= n;
  sum.total = sum.draft_loss + lambda * sum.aux_loss;
  return sum;
}

/// Analytic gradients of the mean joint loss with respect to every trainable weight.
template <typename Scalar>
BackwardResult<Scalar> backward(const BasicToyLM<Scalar>& m, const SpeculatorParams<Scalar>& s,
                                std::span<const TrainingExample<Scalar>> batch, double lambda,
                                bool detach_aux = false) {
  VSPEC_REQUIRE(!batch.empty(), "empty batch");
  validate(m);
  validate(s, m.vocab, m.hidden);
  BackwardResult<Scalar> out{{}, DraftGradients<Scalar>::zeros_like(m, s)};
  auto& g = out.grads;
  const Scalar lam = static_cast<Scalar>(lambda);

  for (const auto& ex : batch) {
    VSPEC_REQUIRE(ex.target_probs.size() == m.vocab, "target distribution length != vocab");
    const auto f = detail::example_forward(m, s, ex.context);
    out.loss.draft_loss += cross_entropy_with_logits(ex.target_probs, f.q_logits);
    out.loss.aux_loss += cross_entropy_with_logits(ex.target_probs, f.s_logits);

    // d CE(p, softmax(z)) / dz = softmax(z) - p
    const DenseVector<Scalar> dz = detail::softmax_of(f.q_logits) - ex.target_probs;
    const DenseVector<Scalar> ds = lam * (detail::softmax_of(f.s_logits) - ex.target_probs);

    g.head.noalias() += dz * f.hidden.transpose();
    DenseVector<Scalar> dh = m.head.transpose() * dz;

    g.w_vocab.noalias() += ds * f.reduced.transpose();
    const DenseVector<Scalar> dreduced = s.w_vocab.transpose() * ds;
    g.w_down.noalias() += dreduced * f.hidden.transpose();
    if (!detach_aux) dh.noalias() += s.w_down.transpose() * dreduced;

    const DenseVector<Scalar> dpre =
        dh.cwiseProduct(f.pre.unaryExpr([](Scalar x) { return squash_derivative(x); }));
    g.mix.noalias() += dpre * f.input.transpose();
    const DenseVector<Scalar> dinput = m.mix.transpose() * dpre;
    for (Index slot = 0; slot < m.context; ++slot)
      g.embed.row(ex.context[static_cast<std::size_t>(slot)]) += dinput.segment(slot * m.hidden, m.hidden).transpose();
  }

  const auto n = static_cast<double>(batch.size());
  const Scalar inv = static_cast<Scalar>(1.0 / n);
  g.embed *= inv;
  g.mix *= inv;
  g.head *= inv;
  g.w_down *= inv;
  g.w_vocab *= inv;
  out.loss.draft_loss /= n;
  out.loss.aux_loss /= n;
  out.loss.total = out.loss.draft_loss + lambda * out.loss.aux_loss;
  return out;
}

/// Distillation example at `position` of `tokens`: the window before the position and the
/// target's full next-token distribution there.
TrainingExample<float> make_example(const ToyLM& target, std::span<const TokenId> tokens, Index position);

struct TrainLogRow {
  Index step = 0;
  LossBreakdown loss;
  double lr = 0;
};

struct TrainResult {
  ToyLM draft;
  SpeculatorWeights speculator;
  std::vector<TrainLogRow> log;
  Index heldout_begin = 0;           // first held-out position in the data
  double heldout_initial_draft_loss = 0;
  double heldout_final_draft_loss = 0;
  double grad_check_max_rel_error = -1;  // set when cfg.grad_check
};

/// Adam (no weight decay) with linear warmup then constant lr. Deterministic given cfg.seed.
/// Throws TrainingError naming the step on a non-finite loss.
TrainResult train(const ToyLM& target, const TokenSequence& data, const TrainConfig& cfg);

/// Hidden states of `draft` at positions [begin, end) of `tokens`, one per row,
/// taking at most `max_states` evenly spaced positions.
Matrix collect_hidden_states(const ToyLM& draft, std::span<const TokenId> tokens, Index begin, Index end,
                             Index max_states);

/// Mean CE(p, q_draft) over positions [begin, end), at most `max_examples` evenly spaced.
double mean_draft_loss(const ToyLM& target, const ToyLM& draft, std::span<const TokenId> tokens, Index begin,
                       Index end, Index max_examples);

/// Largest relative error between analytic and central-difference gradients over every
/// weight, using relative error |a - n| / max(|a|, |n|, floor). The numeric derivative uses
/// the fourth-order stencil (8(f(x+s) - f(x-s)) - (f(x+2s) - f(x-2s))) / 12s.
double gradient_check(const BasicToyLM<double>& m, const SpeculatorParams<double>& s,
                      std::span<const TrainingExample<double>> batch, double lambda, double step = 1e-3,
                      double floor = 1e-6);

inline constexpr const char* kTrainLogHeader = "step,draft_loss,aux_loss,total,lr";
void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& log);

}  // namespace vspec
