// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vspec/csv.hpp"
#include "vspec/tensor_io.hpp"
#include "vspec/topk.hpp"

namespace vspec {
namespace {

Matrix xavier_uniform(Index rows, Index cols, RngStream rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.uniform(-a, a));
  return m;
}

StepSelection finish(IndexList candidates, Vector logits, KernelStats cost) {
  StepSelection sel;
  sel.restricted = softmax(logits, candidates);
  sel.candidates = std::move(candidates);
  sel.exact_logits = std::move(logits);
  sel.cost = cost;
  return sel;
}

}  // namespace

SpeculatorWeights init_speculator(Index vocab, Index hidden, Index reduced, RngStream rng) {
  VSPEC_REQUIRE(reduced >= 1 && reduced <= hidden, "need 1 <= d' <= d");
  return {xavier_uniform(reduced, hidden, rng.split(0)), xavier_uniform(vocab, reduced, rng.split(1))};
}

Index reduced_dim(Index hidden, double ratio) {
  VSPEC_REQUIRE(ratio > 0.0 && ratio <= 1.0, "d'/d ratio must be in (0, 1]");
  const auto d = static_cast<Index>(std::ceil(static_cast<double>(hidden) * ratio - 1e-9));
  return std::clamp<Index>(d, 1, hidden);
}

StaticSubset make_static_subset(IndexList kept, Index vocab) {
  if (kept.empty()) throw ConfigError("static subset is empty");
  std::sort(kept.begin(), kept.end());
  validate_index_list(kept, vocab);
  StaticSubset s;
  s.reverse_map.assign(static_cast<std::size_t>(vocab), -1);
  for (std::size_t j = 0; j < kept.size(); ++j)
    s.reverse_map[static_cast<std::size_t>(kept[j])] = static_cast<TokenId>(j);
  s.kept = std::move(kept);
  return s;
}

StepSelection select_full(const Matrix& u, const Vector& h) {
  KernelStats cost;
  Vector z = full_logits(u, h, &cost);
  IndexList all(static_cast<std::size_t>(u.rows()));
  std::iota(all.begin(), all.end(), TokenId{0});
  return finish(std::move(all), std::move(z), cost);
}

StepSelection select_static(const Matrix& u, const StaticSubset& subset, const Vector& h,
                            Accumulation acc) {
  if (subset.kept.empty()) throw ConfigError("static subset is empty");
  VSPEC_REQUIRE(static_cast<Index>(subset.reverse_map.size()) == u.rows(),
                "subset built for a different vocabulary size");
  KernelStats cost;
  Vector z = indexed_logits_fused(u, subset.kept, h, acc, &cost);
  return finish(subset.kept, std::move(z), cost);
}

StepSelection select_dynamic(const Matrix& u, const SpeculatorWeights& spec, const Vector& h,
                             Index k, Accumulation acc) {
  validate(spec, u.rows(), u.cols());
  VSPEC_REQUIRE(k >= 1 && k <= u.rows(), "k=" + std::to_string(k) + " outside [1, |V|]");
  const Vector reduced = matvec(spec.w_down, h);
  const Vector scores = matvec(spec.w_vocab, reduced);
  ScoredCandidates top = top_k(scores, k);
  KernelStats cost;
  cost.flops = 2ULL * static_cast<std::uint64_t>(spec.reduced() * spec.hidden() + spec.vocab() * spec.reduced());
  Vector z = indexed_logits_fused(u, top.indices, h, acc, &cost);
  return finish(std::move(top.indices), std::move(z), cost);
}

FrequencyTable build_freq_table(std::span<const TokenId> tokens, Index vocab) {
  FrequencyTable t;
  t.counts.assign(static_cast<std::size_t>(vocab), 0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenId tok = tokens[i];
    if (tok < 0 || tok >= vocab)
      throw DataError("token " + std::to_string(tok) + " at position " + std::to_string(i) +
                      " outside vocabulary of size " + std::to_string(vocab));
    ++t.counts[static_cast<std::size_t>(tok)];
  }
  t.total = tokens.size();
  return t;
}

StaticSubset build_static_subset(const FrequencyTable& freq, Index size) {
  if (size < 1 || size > freq.vocab())
    throw ConfigError("subset size " + std::to_string(size) + " outside [1, " +
                      std::to_string(freq.vocab()) + "]");
  IndexList order(freq.counts.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::partial_sort(order.begin(), order.begin() + size, order.end(), [&](TokenId a, TokenId b) {
    const auto ca = freq.counts[static_cast<std::size_t>(a)];
    const auto cb = freq.counts[static_cast<std::size_t>(b)];
    return ca > cb || (ca == cb && a < b);
  });
  order.resize(static_cast<std::size_t>(size));
  return make_static_subset(std::move(order), freq.vocab());
}

double recall_at_k(const SpeculatorWeights& spec, const Matrix& u, const Matrix& eval_states, Index k) {
  VSPEC_REQUIRE(eval_states.rows() >= 1, "no evaluation states");
  VSPEC_REQUIRE(eval_states.cols() == u.cols(), "state dim != embedding dim");
  Index hits = 0;
  for (Index r = 0; r < eval_states.rows(); ++r) {
    const Vector h = eval_states.row(r).transpose();
    const auto full = select_full(u, h);
    const auto target = static_cast<TokenId>(argmax(full.exact_logits));
    const auto dyn = select_dynamic(u, spec, h, k);
    if (std::find(dyn.candidates.begin(), dyn.candidates.end(), target) != dyn.candidates.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(eval_states.rows());
}

StepSelection VocabStrategy::select(const Matrix& u, const Vector& h, std::size_t step) const {
  return std::visit(
      [&](const auto& s) -> StepSelection {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, FullVocab>) {
          return select_full(u, h);
        } else if constexpr (std::is_same_v<T, StaticVocab>) {
          return select_static(u, s.subset, h, acc_);
        } else {
          const Index k = s.k_schedule ? s.k_schedule(step) : s.k;
          return select_dynamic(u, s.weights, h, k, acc_);
        }
      },
      v_);
}

std::string VocabStrategy::name() const {
  switch (v_.index()) {
    case 0: return "full";
    case 1: return "static";
    default: return "dynamic";
  }
}

void save_freq_table(const std::filesystem::path& path, const FrequencyTable& freq) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "token_id,count\n";
  for (std::size_t t = 0; t < freq.counts.size(); ++t) os << t << ',' << freq.counts[t] << '\n';
}

FrequencyTable load_freq_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  const CsvTable csv = read_csv(is);
  const auto id_col = csv.column("token_id");
  const auto count_col = csv.column("count");
  FrequencyTable t;
  t.counts.assign(csv.rows.size(), 0);
  for (const auto& row : csv.rows) {
    const auto id = parse_int(row[id_col]);
    const auto count = parse_int(row[count_col]);
    if (!id || !count || *id < 0 || *id >= static_cast<std::int64_t>(csv.rows.size()) || *count < 0)
      throw DataError(path.string() + ": malformed row");
    t.counts[static_cast<std::size_t>(*id)] = static_cast<std::uint64_t>(*count);
    t.total += static_cast<std::uint64_t>(*count);
  }
  return t;
}

void save_static_subset(const std::filesystem::path& path, const StaticSubset& subset) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  for (TokenId t : subset.kept) os << t << '\n';
}

StaticSubset load_static_subset(const std::filesystem::path& path, Index vocab) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  IndexList kept;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto v = parse_int(line);
    if (!v) throw DataError(path.string() + ": malformed token id '" + line + "'");
    kept.push_back(static_cast<TokenId>(*v));
  }
  try {
    return make_static_subset(std::move(kept), vocab);
  } catch (const PreconditionError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_speculator(const std::filesystem::path& dir, const SpeculatorWeights& spec) {
  std::filesystem::create_directories(dir);
  save_matrix(dir / "w_down.vsp", spec.w_down);
  save_matrix(dir / "w_vocab.vsp", spec.w_vocab);
}

SpeculatorWeights load_speculator(const std::filesystem::path& dir) {
  SpeculatorWeights spec{load_matrix(dir / "w_down.vsp"), load_matrix(dir / "w_vocab.vsp")};
  if (spec.w_vocab.cols() != spec.w_down.rows())
    throw DataError(dir.string() + ": w_vocab cols != w_down rows");
  return spec;
}

}  // namespace vspec
