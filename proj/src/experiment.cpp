// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "vspec/csv.hpp"

namespace vspec {
namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) { return RngStream(seed, tag).next_u64(); }

// Stream tags for seeds derived from the run seed.
constexpr std::uint64_t kDataTag = 1;
constexpr std::uint64_t kCorpusTag = 2;
constexpr std::uint64_t kRandomSpecTag = 3;
constexpr std::uint64_t kDecodeTag = 1000;

std::vector<Index> evenly_spaced(Index begin, Index end, Index count) {
  std::vector<Index> out;
  const Index span = end - begin;
  if (span <= 0 || count <= 0) return out;
  const Index n = std::min(span, count);
  for (Index i = 0; i < n; ++i) out.push_back(begin + i * span / n);
  return out;
}

void append(DecodeTrace& into, const DecodeTrace& t) {
  into.cycles.insert(into.cycles.end(), t.cycles.begin(), t.cycles.end());
  into.tokens_emitted += t.tokens_emitted;
  into.draft_flops += t.draft_flops;
  into.target_flops += t.target_flops;
  into.wall_ns += t.wall_ns;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  return os;
}

}  // namespace

int worker_count(std::size_t jobs) {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("VOCAB_SPEC_THREADS")) {
    const auto v = parse_int(env);
    if (v && *v > 0) n = static_cast<int>(std::min<std::int64_t>(*v, 1024));
  }
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n), std::max<std::size_t>(jobs, 1)));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int workers = worker_count(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

ToyLM build_target(const ExperimentConfig& cfg) {
  TargetSpec spec = cfg.target;
  spec.seed = cfg.target_seed.value_or(cfg.run.seed);
  return synthesize_target(spec);
}

TokenSequence sample_target_tokens(const ToyLM& target, Index count, double temperature, Index segment,
                                   std::uint64_t seed) {
  VSPEC_REQUIRE(count >= 0 && segment >= 1, "bad sampling sizes");
  RngStream rng(seed);
  const TokenId eos = eos_token(target.vocab);
  TokenSequence out;
  out.provenance = Provenance::kTargetGenerated;
  out.tokens.reserve(static_cast<std::size_t>(count));
  std::vector<TokenId> history;
  while (static_cast<Index>(out.tokens.size()) < count) {
    TokenId tok;
    if (history.empty()) {
      tok = static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(regular_vocab(target.vocab))));
    } else {
      const auto ctx = context_window(history, target.context, pad_token(target.vocab));
      tok = static_cast<TokenId>(sample_categorical(tempered_softmax(forward(target, ctx).logits, temperature), rng));
    }
    out.tokens.push_back(tok);
    history.push_back(tok);
    if (tok == eos || static_cast<Index>(history.size()) >= segment) history.clear();
  }
  return out;
}

TokenSequence corpus_tokens(const ExperimentConfig& cfg) {
  if (cfg.corpus.path) {
    Index vocab = 0;
    TokenSequence seq = load_corpus(*cfg.corpus.path, &vocab);
    if (vocab != cfg.target.vocab)
      throw DataError(cfg.corpus.path->string() + ": corpus vocabulary " + std::to_string(vocab) +
                      " differs from target vocabulary " + std::to_string(cfg.target.vocab));
    return seq;
  }
  return make_zipf_corpus(cfg.target.vocab, cfg.corpus.alpha, cfg.corpus.tokens, derive_seed(cfg.run.seed, kCorpusTag));
}

Pipeline prepare_data(const ExperimentConfig& cfg) {
  Pipeline p;
  p.target = build_target(cfg);
  p.data = sample_target_tokens(p.target, cfg.data.tokens, cfg.data.temperature, cfg.data.segment,
                                derive_seed(cfg.run.seed, kDataTag));
  return p;
}

Pipeline retrain(const Pipeline& base, const ExperimentConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.run.seed;
  t.d_prime = cfg.d_prime();
  TrainResult r = train(base.target, base.data, t);
  Pipeline p;
  p.target = base.target;
  p.data = base.data;
  p.draft = std::move(r.draft);
  p.speculator = std::move(r.speculator);
  p.heldout_begin = r.heldout_begin;
  p.log = std::move(r.log);
  p.heldout_initial_draft_loss = r.heldout_initial_draft_loss;
  p.heldout_final_draft_loss = r.heldout_final_draft_loss;
  p.grad_check_max_rel_error = r.grad_check_max_rel_error;
  return p;
}

Pipeline run_pipeline(const ExperimentConfig& cfg) { return retrain(prepare_data(cfg), cfg); }

void save_pipeline(const std::filesystem::path& dir, const Pipeline& p) {
  std::filesystem::create_directories(dir);
  save_model(dir / "target", p.target);
  save_model(dir / "draft", p.draft);
  save_speculator(dir / "speculator", p.speculator);
  save_corpus(dir / "data.vsc", p.data, p.target.vocab);
  {
    auto os = open_out(dir / "train_log.csv");
    write_train_log(os, p.log);
  }
  nlohmann::json j;
  j["heldout_begin"] = p.heldout_begin;
  j["heldout_initial_draft_loss"] = p.heldout_initial_draft_loss;
  j["heldout_final_draft_loss"] = p.heldout_final_draft_loss;
  j["grad_check_max_rel_error"] =
      p.grad_check_max_rel_error >= 0 ? nlohmann::json(p.grad_check_max_rel_error) : nlohmann::json(nullptr);
  auto os = open_out(dir / "train_summary.json");
  os << j.dump(2) << '\n';
}

Pipeline load_pipeline(const std::filesystem::path& dir) {
  Pipeline p;
  p.target = load_model(dir / "target");
  p.draft = load_model(dir / "draft");
  p.speculator = load_speculator(dir / "speculator");
  Index vocab = 0;
  p.data = load_corpus(dir / "data.vsc", &vocab);
  p.data.provenance = Provenance::kTargetGenerated;
  if (vocab != p.target.vocab || p.draft.vocab != p.target.vocab || p.draft.context != p.target.context)
    throw DataError(dir.string() + ": target, draft and data disagree on vocabulary or context");
  try {
    validate(p.speculator, p.draft.vocab, p.draft.hidden);
  } catch (const PreconditionError& e) {
    throw DataError(dir.string() + ": " + e.what());
  }
  std::ifstream is(dir / "train_summary.json");
  if (!is) throw DataError("cannot open " + (dir / "train_summary.json").string());
  try {
    const auto j = nlohmann::json::parse(is);
    p.heldout_begin = j.at("heldout_begin").get<Index>();
    p.heldout_initial_draft_loss = j.at("heldout_initial_draft_loss").get<double>();
    p.heldout_final_draft_loss = j.at("heldout_final_draft_loss").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "train_summary.json").string() + ": " + e.what());
  }
  if (p.heldout_begin < 1 || p.heldout_begin >= static_cast<Index>(p.data.tokens.size()))
    throw DataError(dir.string() + ": heldout_begin outside the data");
  return p;
}

SpeculatorWeights random_speculator(const ExperimentConfig& cfg) {
  return init_speculator(cfg.target.vocab, cfg.train.draft_hidden, cfg.d_prime(),
                         RngStream(derive_seed(cfg.run.seed, kRandomSpecTag)));
}

StaticSubset static_subset(const ExperimentConfig& cfg, const Pipeline& p, SubsetSource source) {
  if (source == SubsetSource::kCorpus) {
    const TokenSequence corpus = corpus_tokens(cfg);
    return build_static_subset(build_freq_table(corpus.tokens, p.target.vocab), cfg.subset_size());
  }
  const std::span<const TokenId> train_part(p.data.tokens.data(), static_cast<std::size_t>(p.heldout_begin));
  return build_static_subset(build_freq_table(train_part, p.target.vocab), cfg.subset_size());
}

VocabStrategy make_strategy(const ExperimentConfig& cfg, const Pipeline& p) {
  switch (cfg.strategy.kind) {
    case StrategyKind::kFull: return VocabStrategy(FullVocab{});
    case StrategyKind::kStatic: return VocabStrategy(StaticVocab{static_subset(cfg, p, cfg.strategy.subset_source)});
    default: {
      DynamicVocab dyn;
      dyn.weights = cfg.strategy.speculator == SpeculatorSource::kTrained ? p.speculator : random_speculator(cfg);
      dyn.k = cfg.k();
      return VocabStrategy(std::move(dyn));
    }
  }
}

std::vector<TokenSequence> heldout_prompts(const Pipeline& p, Index count, Index length) {
  const auto n = static_cast<Index>(p.data.tokens.size());
  if (n - p.heldout_begin < length)
    throw ConfigError("held-out data (" + std::to_string(n - p.heldout_begin) + " tokens) shorter than prompt_len");
  std::vector<TokenSequence> prompts;
  for (Index end : evenly_spaced(p.heldout_begin + length, n + 1, count)) {
    TokenSequence s;
    s.tokens.assign(p.data.tokens.begin() + (end - length), p.data.tokens.begin() + end);
    s.provenance = Provenance::kTargetGenerated;
    prompts.push_back(std::move(s));
  }
  return prompts;
}

double strategy_recall(const Pipeline& p, const VocabStrategy& strategy, Index states) {
  const auto n = static_cast<Index>(p.data.tokens.size());
  const Matrix h = collect_hidden_states(p.draft, p.data.tokens, p.heldout_begin, n, states);
  Index hits = 0;
  for (Index r = 0; r < h.rows(); ++r) {
    const Vector state = h.row(r).transpose();
    const auto best = static_cast<TokenId>(argmax(matvec(p.draft.head, state)));
    const auto sel = strategy.select(p.draft.head, state);
    if (std::find(sel.candidates.begin(), sel.candidates.end(), best) != sel.candidates.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(h.rows());
}

Evaluation evaluate(const ExperimentConfig& cfg, const Pipeline& p, const VocabStrategy& strategy) {
  Evaluation ev;
  const Drafter drafter{&p.draft, strategy};
  const auto prompts = heldout_prompts(p, cfg.prompts, cfg.prompt_len);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    DecodeConfig d = cfg.decode;
    d.seed = derive_seed(cfg.run.seed, kDecodeTag + i);
    ev.runs.push_back(decode_speculative(p.target, drafter, prompts[i], d).trace);
    append(ev.merged, ev.runs.back());
  }
  ev.acceptance_length = acceptance_length(ev.merged);
  const auto tp = throughput_proxy(ev.merged);
  ev.tokens_per_sec = tp.tokens_per_sec;
  ev.tokens_per_gigaflop = tp.tokens_per_gigaflop.value_or(0.0);
  ev.recall = strategy_recall(p, strategy, cfg.eval.states);
  return ev;
}

double spearman(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
  VSPEC_REQUIRE(a.size() == b.size() && !a.empty(), "spearman needs equal non-empty inputs");
  auto ranks = [](const std::vector<std::uint64_t>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j);
      for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) return 0.0;
  return cov / std::sqrt(va * vb);
}

SubsetOverlap subset_overlap(const ExperimentConfig& cfg, const Pipeline& p) {
  const TokenSequence corpus = corpus_tokens(cfg);
  const auto corpus_freq = build_freq_table(corpus.tokens, p.target.vocab);
  const std::span<const TokenId> train_part(p.data.tokens.data(), static_cast<std::size_t>(p.heldout_begin));
  const auto target_freq = build_freq_table(train_part, p.target.vocab);
  const auto a = build_static_subset(corpus_freq, cfg.subset_size());
  const auto b = build_static_subset(target_freq, cfg.subset_size());
  SubsetOverlap o;
  o.corpus_size = a.size();
  o.target_size = b.size();
  for (TokenId t : a.kept)
    if (b.contains(t)) ++o.intersection;
  o.jaccard = static_cast<double>(o.intersection) / static_cast<double>(o.corpus_size + o.target_size - o.intersection);
  o.frequency_spearman = spearman(corpus_freq.counts, target_freq.counts);
  return o;
}

namespace {

struct Stat {
  std::optional<double> mean, std;
};

Stat summarize(const std::vector<std::optional<double>>& xs) {
  std::vector<double> v;
  for (const auto& x : xs)
    if (x) v.push_back(*x);
  if (v.empty()) return {};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0};
}

std::string opt(const std::optional<double>& v) { return v ? format_float(*v) : std::string(); }

// Metric columns in header order: value then std for each metric.
void write_rows(std::ostream& os, const std::vector<std::string>& key, const std::vector<std::uint64_t>& seeds,
                const std::vector<PointMetrics>& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto row = key;
    row.push_back(std::to_string(seeds[i]));
    for (const auto& v : {std::optional<double>(m[i].acceptance_length), m[i].tokens_per_sec,
                          std::optional<double>(m[i].tokens_per_gigaflop), std::optional<double>(m[i].recall)}) {
      row.push_back(opt(v));
      row.emplace_back();
    }
    write_csv_row(os, row);
  }
  auto row = key;
  row.emplace_back("mean");
  std::vector<std::optional<double>> al, tps, tpg, rec;
  for (const auto& x : m) {
    al.emplace_back(x.acceptance_length);
    tps.push_back(x.tokens_per_sec);
    tpg.emplace_back(x.tokens_per_gigaflop);
    rec.emplace_back(x.recall);
  }
  for (const auto* col : {&al, &tps, &tpg, &rec}) {
    const Stat s = summarize(*col);
    row.push_back(opt(s.mean));
    row.push_back(opt(s.std));
  }
  write_csv_row(os, row);
}

PointMetrics metrics(const Evaluation& ev, bool wall_clock) {
  return {ev.acceptance_length, wall_clock ? ev.tokens_per_sec : std::nullopt, ev.tokens_per_gigaflop, ev.recall};
}

}  // namespace

void SweepReport::write_sweep_csv(std::ostream& os) const {
  os << kSweepCsvHeader << '\n';
  for (const auto& p : points) write_rows(os, {to_string(axis), format_float(p.value)}, seeds, p.seeds);
}

void SweepReport::write_baselines_csv(std::ostream& os) const {
  os << kBaselineCsvHeader << '\n';
  for (const auto& b : baselines) write_rows(os, {b.strategy}, seeds, b.seeds);
}

nlohmann::json SweepReport::overlap_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < overlap.size(); ++i) {
    const auto& o = overlap[i];
    arr.push_back({{"seed", seeds[i]},
                   {"corpus_subset_size", o.corpus_size},
                   {"target_subset_size", o.target_size},
                   {"intersection", o.intersection},
                   {"jaccard", o.jaccard},
                   {"frequency_spearman", o.frequency_spearman}});
  }
  return {{"subsets", arr}};
}

SweepReport run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  cfg.validate_sweep();
  const auto values = cfg.sweep_values();
  const auto n_seeds = static_cast<std::size_t>(cfg.sweep.seeds);

  SweepReport report;
  report.axis = cfg.sweep.axis;
  for (std::size_t i = 0; i < n_seeds; ++i) report.seeds.push_back(cfg.run.seed + i);
  report.points.resize(values.size());
  for (std::size_t v = 0; v < values.size(); ++v) {
    report.points[v].value = values[v];
    report.points[v].seeds.resize(n_seeds);
  }
  const char* names[] = {"full", "static_corpus", "static_target", "dynamic"};
  for (const char* name : names) report.baselines.push_back({name, std::vector<PointMetrics>(n_seeds)});
  report.overlap.resize(n_seeds);

  // One job per seed; every slot written below is owned by exactly one job.
  parallel_for(n_seeds, [&](std::size_t s) {
    ExperimentConfig base = cfg;
    base.set_seed(report.seeds[s]);
    const Pipeline data = prepare_data(base);
    std::map<std::pair<Index, double>, Pipeline> trained;
    auto pipeline_for = [&](const ExperimentConfig& c) -> const Pipeline& {
      const auto key = std::make_pair(c.d_prime(), c.train.lambda);
      auto it = trained.find(key);
      if (it == trained.end()) it = trained.emplace(key, retrain(data, c)).first;
      return it->second;
    };

    for (std::size_t v = 0; v < values.size(); ++v) {
      const ExperimentConfig c = with_axis_value(base, cfg.sweep.axis, values[v]);
      const Pipeline& p = pipeline_for(c);
      report.points[v].seeds[s] = metrics(evaluate(c, p, make_strategy(c, p)), cfg.sweep.wall_clock);
    }

    const Pipeline& p = pipeline_for(base);
    ExperimentConfig c = base;
    c.strategy.kind = StrategyKind::kFull;
    report.baselines[0].seeds[s] = metrics(evaluate(c, p, make_strategy(c, p)), cfg.sweep.wall_clock);
    c.strategy.kind = StrategyKind::kStatic;
    c.strategy.subset_source = SubsetSource::kCorpus;
    report.baselines[1].seeds[s] = metrics(evaluate(c, p, make_strategy(c, p)), cfg.sweep.wall_clock);
    c.strategy.subset_source = SubsetSource::kTarget;
    report.baselines[2].seeds[s] = metrics(evaluate(c, p, make_strategy(c, p)), cfg.sweep.wall_clock);
    c.strategy.kind = StrategyKind::kDynamic;
    report.baselines[3].seeds[s] = metrics(evaluate(c, p, make_strategy(c, p)), cfg.sweep.wall_clock);
    report.overlap[s] = subset_overlap(base, p);
  });
  return report;
}

void write_sweep_report(const std::filesystem::path& dir, const SweepReport& report) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / "sweep.csv");
    report.write_sweep_csv(os);
  }
  {
    auto os = open_out(dir / "baselines.csv");
    report.write_baselines_csv(os);
  }
  auto os = open_out(dir / "subset_overlap.json");
  os << report.overlap_json().dump(2) << '\n';
}

}  // namespace vspec
