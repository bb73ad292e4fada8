// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vspec/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "vspec/csv.hpp"

namespace vspec {
namespace {

namespace pt = boost::property_tree;

// Reads typed values out of the parsed tree and remembers which keys were consumed so
// anything left over can be reported as unknown.
class Reader {
 public:
  Reader(const pt::ptree& tree, std::string source) : tree_(tree), source_(std::move(source)) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    known_[section].insert(key);
    const auto sec = tree_.get_child_optional(pt::ptree::path_type(section, '\0'));
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  template <typename T>
  void integer(const std::string& section, const std::string& key, T& out) {
    if (const auto s = raw(section, key)) {
      const auto v = parse_int(*s);
      if (!v) fail(section, key, *s, "an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (*v < 0) fail(section, key, *s, "a non-negative integer");
      }
      out = static_cast<T>(*v);
    }
  }

  void real(const std::string& section, const std::string& key, double& out) {
    if (const auto s = raw(section, key)) {
      const auto v = parse_double(*s);
      if (!v || !std::isfinite(*v)) fail(section, key, *s, "a finite number");
      out = *v;
    }
  }

  void boolean(const std::string& section, const std::string& key, bool& out) {
    if (const auto s = raw(section, key)) {
      if (*s == "true" || *s == "1") out = true;
      else if (*s == "false" || *s == "0") out = false;
      else fail(section, key, *s, "true or false");
    }
  }

  void path(const std::string& section, const std::string& key, std::filesystem::path& out) {
    if (const auto s = raw(section, key)) out = *s;
  }

  void path(const std::string& section, const std::string& key, std::optional<std::filesystem::path>& out) {
    if (const auto s = raw(section, key); s && !s->empty()) out = *s;
  }

  template <typename E>
  void choice(const std::string& section, const std::string& key, E& out,
              std::initializer_list<std::pair<const char*, E>> options) {
    const auto s = raw(section, key);
    if (!s) return;
    std::string names;
    for (const auto& [name, value] : options) {
      if (*s == name) {
        out = value;
        return;
      }
      names += names.empty() ? name : std::string(", ") + name;
    }
    fail(section, key, *s, "one of: " + names);
  }

  void real_list(const std::string& section, const std::string& key, std::vector<double>& out) {
    const auto s = raw(section, key);
    if (!s) return;
    out.clear();
    std::stringstream ss(*s);
    for (std::string item; std::getline(ss, item, ',');) {
      const auto v = parse_double(trim(item));
      if (!v || !std::isfinite(*v)) fail(section, key, *s, "a comma-separated list of numbers");
      out.push_back(*v);
    }
    if (out.empty()) fail(section, key, *s, "a non-empty list");
  }

  void index_list(const std::string& section, const std::string& key, std::vector<Index>& out) {
    std::vector<double> tmp;
    real_list(section, key, tmp);
    if (tmp.empty()) return;
    out.clear();
    for (double v : tmp) {
      if (v != std::floor(v)) fail(section, key, *raw(section, key), "a comma-separated list of integers");
      out.push_back(static_cast<Index>(v));
    }
  }

  void reject_unknown() const {
    for (const auto& [section, keys] : tree_) {
      const auto it = known_.find(section);
      if (it == known_.end()) throw ConfigError(source_ + ": unknown section [" + section + "]");
      if (!keys.data().empty()) throw ConfigError(source_ + ": key '" + section + "' outside any section");
      for (const auto& [key, _] : keys)
        if (!it->second.count(key)) throw ConfigError(source_ + ": unknown key '" + key + "' in [" + section + "]");
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }

  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& value,
                         const std::string& expected) const {
    throw ConfigError(source_ + ": [" + section + "] " + key + " = '" + value + "' is not " + expected);
  }

  const pt::ptree& tree_;
  std::string source_;
  std::map<std::string, std::set<std::string>> known_;
};

}  // namespace

std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::kFull: return "full";
    case StrategyKind::kStatic: return "static";
    default: return "dynamic";
  }
}

std::string to_string(SubsetSource s) { return s == SubsetSource::kCorpus ? "corpus" : "target"; }

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kK: return "k";
    case SweepAxis::kDPrimeRatio: return "d_prime_ratio";
    case SweepAxis::kLambda: return "lambda";
    default: return "subset_size";
  }
}

Index ExperimentConfig::d_prime() const { return reduced_dim(train.draft_hidden, d_prime_ratio); }

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(target.vocab >= 3, "target: vocab must be >= 3");
  require(target.hidden >= 1 && target.context >= 1, "target: hidden and context must be >= 1");
  require(target.structure >= 0.0 && target.structure <= 1.0, "target: structure must be in [0, 1]");
  require(data.tokens >= target.context + 2, "data: tokens must exceed the context window");
  require(data.temperature > 0.0, "data: temperature must be > 0");
  require(data.segment >= 1, "data: segment must be >= 1");
  require(d_prime_ratio > 0.0 && d_prime_ratio <= 1.0, "train: d_prime_ratio must be in (0, 1]");
  TrainConfig t = train;
  t.d_prime = d_prime();
  t.validate();
  require(k() >= 1 && k() <= target.vocab, "strategy: k must be in [1, vocab]");
  require(subset_size() >= 1 && subset_size() <= target.vocab, "strategy: subset_size must be in [1, vocab]");
  require(recall_k() <= target.vocab, "eval: recall_k must be <= vocab");
  require(eval.states >= 1, "eval: states must be >= 1");
  require(corpus.alpha > 0.0, "corpus: alpha must be > 0");
  require(corpus.tokens >= 0, "corpus: tokens must be >= 0");
  decode.validate();
  require(prompts >= 1, "decode: prompts must be >= 1");
  require(prompt_len >= 1, "decode: prompt_len must be >= 1");
  vspec::validate(bench);
  require(sweep.seeds >= 1, "sweep: seeds must be >= 1");
  for (double v : sweep.values) {
    switch (sweep.axis) {
      case SweepAxis::kK:
        require(v == std::floor(v) && v >= 1 && v <= static_cast<double>(target.vocab), "sweep: k values must be integers in [1, vocab]");
        break;
      case SweepAxis::kDPrimeRatio: require(v > 0 && v <= 1, "sweep: d_prime_ratio values must be in (0, 1]"); break;
      case SweepAxis::kLambda: require(v >= 0, "sweep: lambda values must be >= 0"); break;
      case SweepAxis::kSubsetSize:
        require(v == std::floor(v) && v >= 1 && v <= static_cast<double>(target.vocab),
                "sweep: subset_size values must be integers in [1, vocab]");
        break;
    }
  }
}

void ExperimentConfig::validate_sweep() const {
  const bool applies = sweep.axis == SweepAxis::kLambda ||
                       (sweep.axis == SweepAxis::kSubsetSize ? strategy.kind == StrategyKind::kStatic
                                                             : strategy.kind == StrategyKind::kDynamic);
  if (!applies)
    throw ConfigError("sweep: axis '" + to_string(sweep.axis) + "' does not apply to strategy '" +
                      to_string(strategy.kind) + "'");
  if (sweep_values().empty()) throw ConfigError("sweep: empty value list");
}

std::vector<double> ExperimentConfig::sweep_values() const {
  return sweep.values.empty() ? default_sweep_values(sweep.axis, target.vocab) : sweep.values;
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
  run.seed = seed;
  train.seed = seed;
  decode.seed = seed;
  bench.seed = seed;
}

ExperimentConfig parse_config(std::istream& is, const std::string& source) {
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  Reader r(tree, source);
  ExperimentConfig c;

  r.integer("run", "seed", c.run.seed);
  r.path("run", "out", c.run.out);
  r.path("run", "artifacts", c.run.artifacts);

  r.integer("target", "vocab", c.target.vocab);
  r.integer("target", "hidden", c.target.hidden);
  r.integer("target", "context", c.target.context);
  r.real("target", "structure", c.target.structure);
  r.real("target", "sharpness", c.target.sharpness);
  if (r.raw("target", "seed")) {
    std::uint64_t s = 0;
    r.integer("target", "seed", s);
    c.target_seed = s;
  }
  // Draft defaults to half the target width unless set explicitly below.
  c.train.draft_hidden = std::max<Index>(1, c.target.hidden / 2);

  r.integer("data", "tokens", c.data.tokens);
  r.real("data", "temperature", c.data.temperature);
  r.integer("data", "segment", c.data.segment);

  r.real("train", "lambda", c.train.lambda);
  r.real("train", "lr", c.train.lr);
  r.real("train", "beta1", c.train.beta1);
  r.real("train", "beta2", c.train.beta2);
  r.real("train", "eps", c.train.eps);
  r.integer("train", "batch", c.train.batch);
  r.integer("train", "steps", c.train.steps);
  r.integer("train", "draft_hidden", c.train.draft_hidden);
  r.real("train", "d_prime_ratio", c.d_prime_ratio);
  r.real("train", "warmup_fraction", c.train.warmup_fraction);
  r.real("train", "holdout_fraction", c.train.holdout_fraction);
  r.boolean("train", "grad_check", c.train.grad_check);
  r.boolean("train", "detach_aux", c.train.detach_aux);

  r.choice("strategy", "kind", c.strategy.kind,
           {{"full", StrategyKind::kFull}, {"static", StrategyKind::kStatic}, {"dynamic", StrategyKind::kDynamic}});
  r.integer("strategy", "k", c.strategy.k);
  r.integer("strategy", "subset_size", c.strategy.subset_size);
  r.choice("strategy", "subset_source", c.strategy.subset_source,
           {{"corpus", SubsetSource::kCorpus}, {"target", SubsetSource::kTarget}});
  r.choice("strategy", "speculator", c.strategy.speculator,
           {{"trained", SpeculatorSource::kTrained}, {"random", SpeculatorSource::kRandom}});

  r.real("corpus", "alpha", c.corpus.alpha);
  r.integer("corpus", "tokens", c.corpus.tokens);
  r.path("corpus", "path", c.corpus.path);

  r.integer("decode", "gamma", c.decode.gamma);
  r.choice("decode", "mode", c.decode.mode, {{"greedy", DecodeMode::kGreedy}, {"sampling", DecodeMode::kSampling}});
  r.real("decode", "temperature", c.decode.temperature);
  r.integer("decode", "max_new_tokens", c.decode.max_new_tokens);
  r.integer("decode", "prompts", c.prompts);
  r.integer("decode", "prompt_len", c.prompt_len);

  r.integer("eval", "recall_k", c.eval.recall_k);
  r.integer("eval", "states", c.eval.states);

  r.integer("bench", "vocab", c.bench.vocab);
  r.integer("bench", "dim", c.bench.dim);
  r.index_list("bench", "ks", c.bench.ks);
  r.integer("bench", "batch", c.bench.batch);
  r.integer("bench", "repetitions", c.bench.repetitions);
  r.integer("bench", "warmup", c.bench.warmup);
  r.integer("bench", "threads", c.bench.threads);

  r.choice("sweep", "axis", c.sweep.axis,
           {{"k", SweepAxis::kK}, {"d_prime_ratio", SweepAxis::kDPrimeRatio}, {"lambda", SweepAxis::kLambda},
            {"subset_size", SweepAxis::kSubsetSize}});
  r.real_list("sweep", "values", c.sweep.values);
  r.integer("sweep", "seeds", c.sweep.seeds);
  r.boolean("sweep", "wall_clock", c.sweep.wall_clock);

  r.reject_unknown();
  c.set_seed(c.run.seed);
  c.validate();
  c.train.d_prime = c.d_prime();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  return parse_config(is, path.string());
}

std::vector<double> default_sweep_values(SweepAxis axis, Index vocab) {
  const auto v = static_cast<double>(vocab);
  switch (axis) {
    case SweepAxis::kK: return {std::max(1.0, v / 256), std::max(1.0, v / 64), std::max(1.0, v / 16), std::max(1.0, v / 4)};
    case SweepAxis::kDPrimeRatio: return {1.0 / 16, 1.0 / 8};
    case SweepAxis::kLambda: return {0.0, 0.1, 1.0};
    default: return {std::max(1.0, v / 16), std::max(1.0, v / 8), std::max(1.0, v / 4), std::max(1.0, v / 2)};
  }
}

ExperimentConfig with_axis_value(const ExperimentConfig& base, SweepAxis axis, double value) {
  ExperimentConfig c = base;
  switch (axis) {
    case SweepAxis::kK: c.strategy.k = static_cast<Index>(value); break;
    case SweepAxis::kDPrimeRatio:
      c.d_prime_ratio = value;
      c.train.d_prime = c.d_prime();
      break;
    case SweepAxis::kLambda: c.train.lambda = value; break;
    case SweepAxis::kSubsetSize: c.strategy.subset_size = static_cast<Index>(value); break;
  }
  return c;
}

}  // namespace vspec
