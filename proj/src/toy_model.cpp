// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/toy_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "le_io.hpp"
#include "vspec/csv.hpp"
#include "vspec/tensor_io.hpp"

namespace vspec {
namespace {

Matrix uniform_matrix(Index rows, Index cols, double a, RngStream rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.uniform(-a, a));
  return m;
}

std::vector<TokenId> shuffled_regular(Index vocab, RngStream rng) {
  const Index n = regular_vocab(vocab);
  std::vector<TokenId> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = static_cast<TokenId>(i);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[j]);
  }
  return perm;
}

// Gain on the last-token slot of the planted mixing matrix.
constexpr double kPlantedGain = 1.5;

}  // namespace

ToyLM make_toy_lm(Index vocab, Index hidden, Index context, std::uint64_t seed) {
  ToyLM m;
  m.vocab = vocab;
  m.hidden = hidden;
  m.context = context;
  m.embed = Matrix::Zero(vocab, hidden);
  m.mix = Matrix::Zero(hidden, context * hidden);
  m.head = Matrix::Zero(vocab, hidden);
  m.seed = seed;
  validate(m);
  return m;
}

std::vector<TokenId> context_window(std::span<const TokenId> seq, Index n, TokenId pad) {
  std::vector<TokenId> ctx(static_cast<std::size_t>(n), pad);
  const auto take = std::min<std::size_t>(seq.size(), static_cast<std::size_t>(n));
  std::copy(seq.end() - static_cast<std::ptrdiff_t>(take), seq.end(), ctx.end() - static_cast<std::ptrdiff_t>(take));
  return ctx;
}

ForwardResult forward(const ToyLM& m, std::span<const TokenId> ctx) {
  auto t = forward_backbone(m, ctx);
  Vector logits = matvec(m.head, t.hidden);
  return {std::move(t.hidden), std::move(logits)};
}

std::uint64_t backbone_flops(const ToyLM& m) {
  return 2ULL * static_cast<std::uint64_t>(m.mix.rows()) * static_cast<std::uint64_t>(m.mix.cols());
}

std::uint64_t forward_flops(const ToyLM& m) {
  return backbone_flops(m) + 2ULL * static_cast<std::uint64_t>(m.vocab) * static_cast<std::uint64_t>(m.hidden);
}

Index sample_categorical(const Vector& probs, RngStream& rng) {
  VSPEC_REQUIRE(probs.size() > 0, "empty distribution");
  double total = 0.0;
  for (Index i = 0; i < probs.size(); ++i) total += static_cast<double>(probs[i]);
  VSPEC_REQUIRE(total > 0.0, "distribution has no mass");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  Index last_nonzero = 0;
  for (Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0) continue;
    acc += static_cast<double>(probs[i]);
    last_nonzero = i;
    if (u < acc) return i;
  }
  return last_nonzero;
}

Vector tempered_softmax(const Vector& logits, double temperature) {
  if (temperature <= 0.0) {
    Vector p = Vector::Zero(logits.size());
    p[argmax(logits)] = 1.0f;
    return p;
  }
  const Eigen::VectorXd scaled = logits.cast<double>() / temperature;
  return softmax_values<double>(scaled).cast<float>();
}

TokenSequence generate(const ToyLM& m, const TokenSequence& prompt, Index max_len, GenerateMode mode) {
  VSPEC_REQUIRE(max_len >= 1, "max_len must be >= 1");
  std::vector<TokenId> seq = prompt.tokens;
  TokenSequence out{{}, Provenance::kTargetGenerated};
  const TokenId eos = eos_token(m.vocab);
  while (static_cast<Index>(out.tokens.size()) < max_len) {
    const auto ctx = context_window(seq, m.context, pad_token(m.vocab));
    const auto fwd = forward(m, ctx);
    TokenId next = 0;
    if (const auto* s = std::get_if<Sampled>(&mode)) {
      VSPEC_REQUIRE(s->rng != nullptr, "sampling mode needs an rng");
      next = static_cast<TokenId>(sample_categorical(tempered_softmax(fwd.logits, s->temperature), *s->rng));
    } else {
      next = static_cast<TokenId>(argmax(fwd.logits));
    }
    seq.push_back(next);
    out.tokens.push_back(next);
    if (next == eos) break;
  }
  return out;
}

std::vector<TokenId> zipf_rank_to_token(Index vocab, std::uint64_t seed) {
  VSPEC_REQUIRE(vocab >= 3, "vocab must leave at least one regular token");
  return shuffled_regular(vocab, RngStream(seed, 1));
}

std::vector<Index> zipf_ranks(Index vocab, double alpha, Index length, std::uint64_t seed) {
  VSPEC_REQUIRE(alpha > 0.0, "alpha must be > 0");
  VSPEC_REQUIRE(vocab >= 3, "vocab must leave at least one regular token");
  VSPEC_REQUIRE(length >= 0, "negative length");
  const Index n = regular_vocab(vocab);
  // Cumulative weights r^-alpha in log space so huge alpha does not underflow to 0/0.
  std::vector<double> cdf(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Index r = 0; r < n; ++r) {
    acc += std::exp(-alpha * std::log(static_cast<double>(r + 1)));
    cdf[static_cast<std::size_t>(r)] = acc;
  }
  RngStream rng(seed, 2);
  std::vector<Index> ranks(static_cast<std::size_t>(length));
  for (auto& r : ranks) {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    r = std::min<Index>(static_cast<Index>(it - cdf.begin()), n - 1);
  }
  return ranks;
}

TokenSequence make_zipf_corpus(Index vocab, double alpha, Index length, std::uint64_t seed) {
  const auto perm = zipf_rank_to_token(vocab, seed);
  const auto ranks = zipf_ranks(vocab, alpha, length, seed);
  TokenSequence seq{{}, Provenance::kCorpus};
  seq.tokens.reserve(ranks.size());
  for (Index r : ranks) seq.tokens.push_back(perm[static_cast<std::size_t>(r)]);
  return seq;
}

std::vector<TokenId> planted_successors(Index vocab, std::uint64_t seed) {
  VSPEC_REQUIRE(vocab >= 3, "vocab must leave at least one regular token");
  return shuffled_regular(vocab, RngStream(seed, 7));
}

ToyLM synthesize_target(const TargetSpec& spec) {
  VSPEC_REQUIRE(spec.structure >= 0.0 && spec.structure <= 1.0, "structure weight must be in [0, 1]");
  ToyLM m = make_toy_lm(spec.vocab, spec.hidden, spec.context, spec.seed);
  RngStream rng(spec.seed, 3);
  const auto fan = static_cast<double>(spec.context * spec.hidden);
  const auto hidden = static_cast<double>(spec.hidden);

  // Random part: unit-variance pre-activations and logits with std around 2.
  m.embed = uniform_matrix(spec.vocab, spec.hidden, 1.0, rng.split(0));
  const Matrix mix_random = uniform_matrix(spec.hidden, spec.context * spec.hidden, 3.0 / std::sqrt(fan), rng.split(1));
  const Matrix head_random = uniform_matrix(spec.vocab, spec.hidden, std::sqrt(30.0 / hidden), rng.split(2));

  // Planted part: the last context slot passes straight through, and the head row of
  // successor(t) points along the hidden state that t alone produces.
  Matrix mix_planted = Matrix::Zero(spec.hidden, spec.context * spec.hidden);
  mix_planted.rightCols(spec.hidden) = Matrix::Identity(spec.hidden, spec.hidden) * static_cast<float>(kPlantedGain);
  Matrix head_planted = Matrix::Zero(spec.vocab, spec.hidden);
  const auto succ = planted_successors(spec.vocab, spec.seed);
  for (Index t = 0; t < regular_vocab(spec.vocab); ++t) {
    const Vector h = (m.embed.row(t).transpose() * static_cast<float>(kPlantedGain)).unaryExpr([](float x) { return squash(x); });
    const float norm2 = h.squaredNorm();
    if (norm2 > 0) head_planted.row(succ[static_cast<std::size_t>(t)]) = h.transpose() * static_cast<float>(spec.sharpness / norm2);
  }

  const auto w = static_cast<float>(spec.structure);
  m.mix = (1.0f - w) * mix_random + w * mix_planted;
  m.head = (1.0f - w) * head_random + w * head_planted;
  return m;
}

ToyLM init_draft(Index vocab, Index hidden, Index context, RngStream rng) {
  ToyLM m = make_toy_lm(vocab, hidden, context);
  m.embed = uniform_matrix(vocab, hidden, 1.0, rng.split(0));
  m.mix = uniform_matrix(hidden, context * hidden, std::sqrt(6.0 / static_cast<double>(hidden + context * hidden)), rng.split(1));
  m.head = uniform_matrix(vocab, hidden, std::sqrt(6.0 / static_cast<double>(vocab + hidden)), rng.split(2));
  return m;
}

void save_model(const std::filesystem::path& dir, const ToyLM& m) {
  validate(m);
  std::filesystem::create_directories(dir);
  save_matrix(dir / "embed.vsp", m.embed);
  save_matrix(dir / "mix.vsp", m.mix);
  save_matrix(dir / "head.vsp", m.head);
  std::ofstream meta(dir / "meta.txt", std::ios::trunc);
  meta << "vocab " << m.vocab << "\nhidden " << m.hidden << "\nn " << m.context << "\nseed " << m.seed << '\n';
  if (!meta) throw DataError("write failed: " + (dir / "meta.txt").string());
}

ToyLM load_model(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "meta.txt");
  if (!meta) throw DataError("missing model metadata " + (dir / "meta.txt").string());
  ToyLM m;
  std::string key;
  std::string value;
  bool have_vocab = false, have_hidden = false, have_n = false;
  while (meta >> key >> value) {
    const auto v = parse_int(value);
    if (!v || *v < 0) throw DataError("meta.txt: bad value for " + key);
    if (key == "vocab") { m.vocab = *v; have_vocab = true; }
    else if (key == "hidden") { m.hidden = *v; have_hidden = true; }
    else if (key == "n") { m.context = *v; have_n = true; }
    else if (key == "seed") m.seed = static_cast<std::uint64_t>(*v);
    else throw DataError("meta.txt: unknown key " + key);
  }
  if (!have_vocab || !have_hidden || !have_n) throw DataError("meta.txt: missing vocab/hidden/n");
  m.embed = load_matrix(dir / "embed.vsp");
  m.mix = load_matrix(dir / "mix.vsp");
  m.head = load_matrix(dir / "head.vsp");
  try {
    validate(m);
  } catch (const PreconditionError& e) {
    throw DataError(dir.string() + ": inconsistent checkpoint: " + e.what());
  }
  return m;
}

namespace {
constexpr char kCorpusMagic[4] = {'V', 'S', 'C', '1'};
}  // namespace

void save_corpus(const std::filesystem::path& path, const TokenSequence& seq, Index vocab) {
  for (std::size_t i = 0; i < seq.tokens.size(); ++i)
    if (seq.tokens[i] < 0 || seq.tokens[i] >= vocab)
      throw DataError("token at position " + std::to_string(i) + " outside vocabulary of size " + std::to_string(vocab));
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kCorpusMagic, 4);
  detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(vocab));
  detail::write_le<std::uint64_t>(os, seq.tokens.size());
  for (TokenId t : seq.tokens) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t));
  if (!os) throw DataError("write failed: " + path.string());
}

TokenSequence load_corpus(const std::filesystem::path& path, Index* vocab) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kCorpusMagic, 4))
    throw DataError(path.string() + ": bad magic, expected VSC1");
  std::uint64_t v = 0, len = 0;
  if (!detail::read_le(is, v) || !detail::read_le(is, len)) throw DataError(path.string() + ": truncated header");
  if (std::filesystem::file_size(path) != 20 + len * 4) throw DataError(path.string() + ": size mismatch with header");
  TokenSequence seq{{}, Provenance::kCorpus};
  seq.tokens.resize(len);
  for (std::uint64_t i = 0; i < len; ++i) {
    std::uint32_t t = 0;
    if (!detail::read_le(is, t)) throw DataError(path.string() + ": truncated payload");
    if (t >= v) throw DataError(path.string() + ": token " + std::to_string(t) + " at position " + std::to_string(i) + " outside vocabulary");
    seq.tokens[i] = static_cast<TokenId>(t);
  }
  if (vocab) *vocab = static_cast<Index>(v);
  return seq;
}

}  // namespace vspec
