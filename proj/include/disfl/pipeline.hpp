// pipeline.hpp -- end-to-end orchestration: corpus preparation, channel and
// language-model training with cross-validation fold discipline, n-best
// generation, feature extraction, reranker training and evaluation.
//
// Copyright 2026  The disfl authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABILITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "disfl/channel.hpp"
#include "disfl/common.hpp"
#include "disfl/corpus.hpp"
#include "disfl/eval.hpp"
#include "disfl/features.hpp"
#include "disfl/lstm.hpp"
#include "disfl/ngram.hpp"
#include "disfl/reranker.hpp"
#include "disfl/synth.hpp"

namespace disfl {

struct PipelineConfig {
  // Data: either paths to annotated corpora or the built-in synthesizer.
  std::string train_path, dev_path, test_path;
  std::string format = "tsv";  // "tsv" or "dps"
  bool synth = false;
  std::size_t synth_count = 5000;
  double synth_rate = 0.15;
  std::uint64_t synth_seed = 1;
  std::size_t synth_max_reparandum = 6;
  double dev_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t split_seed = 3;

  // Channel search.
  int n_best = 25;
  int beam = 100;
  int max_regions = 3;
  int max_reparandum = 8;
  int max_repair = 8;

  // Language-model features.
  bool fwd_lstm = true;
  bool bwd_lstm = true;
  bool fwd_4gram = false;
  bool bwd_4gram = false;
  bool ncm_alone = false;  // skip the reranker, keep the decoder's top

  // Cross-validation for train-set feature scoring.
  int k_folds = 20;
  std::uint64_t fold_seed = 7;

  // LSTM profile.
  std::string lstm_scale = "desk";  // "desk" or "full"
  int lstm_epochs = 13;
  std::uint64_t lstm_seed = 11;

  // Reranker.
  double l2_lambda = 1e-3;
  bool tune_lambda = false;  // grid {1e-4, 1e-3, 1e-2} against dev f-score
  int reranker_iterations = 200;

  bool dump_features = false;
  std::string out_dir = "out";
  std::string cache_dir;  // defaults to out_dir + "/cache"

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["train_path"] = train_path;
    j["dev_path"] = dev_path;
    j["test_path"] = test_path;
    j["format"] = format;
    j["synth"] = synth;
    j["synth_count"] = synth_count;
    j["synth_rate"] = synth_rate;
    j["synth_seed"] = synth_seed;
    j["synth_max_reparandum"] = synth_max_reparandum;
    j["dev_fraction"] = dev_fraction;
    j["test_fraction"] = test_fraction;
    j["split_seed"] = split_seed;
    j["n_best"] = n_best;
    j["beam"] = beam;
    j["max_regions"] = max_regions;
    j["max_reparandum"] = max_reparandum;
    j["max_repair"] = max_repair;
    j["fwd_lstm"] = fwd_lstm;
    j["bwd_lstm"] = bwd_lstm;
    j["fwd_4gram"] = fwd_4gram;
    j["bwd_4gram"] = bwd_4gram;
    j["ncm_alone"] = ncm_alone;
    j["k_folds"] = k_folds;
    j["fold_seed"] = fold_seed;
    j["lstm_scale"] = lstm_scale;
    j["lstm_epochs"] = lstm_epochs;
    j["lstm_seed"] = lstm_seed;
    j["l2_lambda"] = l2_lambda;
    j["tune_lambda"] = tune_lambda;
    j["reranker_iterations"] = reranker_iterations;
    j["dump_features"] = dump_features;
    return j;
  }

  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig c;
    auto get = [&j](const char* key, auto& slot) {
      if (j.contains(key)) slot = j.at(key).template get<std::decay_t<decltype(slot)>>();
    };
    get("train_path", c.train_path);
    get("dev_path", c.dev_path);
    get("test_path", c.test_path);
    get("format", c.format);
    get("synth", c.synth);
    get("synth_count", c.synth_count);
    get("synth_rate", c.synth_rate);
    get("synth_seed", c.synth_seed);
    get("synth_max_reparandum", c.synth_max_reparandum);
    get("dev_fraction", c.dev_fraction);
    get("test_fraction", c.test_fraction);
    get("split_seed", c.split_seed);
    get("n_best", c.n_best);
    get("beam", c.beam);
    get("max_regions", c.max_regions);
    get("max_reparandum", c.max_reparandum);
    get("max_repair", c.max_repair);
    get("fwd_lstm", c.fwd_lstm);
    get("bwd_lstm", c.bwd_lstm);
    get("fwd_4gram", c.fwd_4gram);
    get("bwd_4gram", c.bwd_4gram);
    get("ncm_alone", c.ncm_alone);
    get("k_folds", c.k_folds);
    get("fold_seed", c.fold_seed);
    get("lstm_scale", c.lstm_scale);
    get("lstm_epochs", c.lstm_epochs);
    get("lstm_seed", c.lstm_seed);
    get("l2_lambda", c.l2_lambda);
    get("tune_lambda", c.tune_lambda);
    get("reranker_iterations", c.reranker_iterations);
    get("dump_features", c.dump_features);
    get("out_dir", c.out_dir);
    return c;
  }

  void validate() const {
    if (n_best < 1) throw UsageError("config: n_best must be >= 1");
    if (beam < 1) throw UsageError("config: beam must be >= 1");
    if (k_folds < 2) throw UsageError("config: k_folds must be >= 2");
    if (synth_rate < 0.0 || synth_rate > 1.0)
      throw UsageError("config: synth_rate must be in [0,1]");
    if (lstm_scale != "desk" && lstm_scale != "full")
      throw UsageError("config: lstm_scale must be desk or full");
    if (format != "tsv" && format != "dps")
      throw UsageError("config: format must be tsv or dps");
  }

  LstmConfig lstm_config(LmDirection direction,
                         std::uint64_t seed_offset) const {
    LstmConfig c = lstm_scale == "full" ? LstmConfig::full_scale()
                                        : LstmConfig::desk_scale();
    c.epochs = lstm_epochs;
    c.direction = direction;
    c.seed = lstm_seed + seed_offset;
    return c;
  }

  SearchLimits search_limits() const {
    return SearchLimits{max_regions, max_reparandum, max_repair};
  }
};

struct PipelineResult {
  EvalReport dev;
  EvalReport test;
  double chosen_lambda = 0.0;
  std::map<std::string, std::string> artifacts;  // stage name -> path
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

// ---------------------------------------------------------------------------
// Candidate-list interchange (JSON Lines).

inline std::string labels_string(const std::vector<Label>& labels) {
  std::string s;
  s.reserve(labels.size());
  for (Label l : labels) s.push_back(label_char(l));
  return s;
}

inline std::vector<Label> labels_from_string(const std::string& s) {
  std::vector<Label> out;
  out.reserve(s.size());
  for (char c : s) out.push_back(label_from_char(c, 0));
  return out;
}

// Scores are printed with 17 significant digits (no trailing-zero
// stripping) so the decimal text always parses back to the identical
// double.
inline std::string score_decimal(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", v);
  return std::string(buf);
}

inline void write_candidates_jsonl(const std::vector<CandidateList>& lists,
                                   std::ostream& os) {
  for (const auto& list : lists) {
    os << "{\"id\":" << nlohmann::json(list.utterance.id).dump()
       << ",\"tokens\":" << nlohmann::json(list.utterance.surfaces()).dump()
       << ",\"candidates\":[";
    for (std::size_t c = 0; c < list.candidates.size(); ++c) {
      const Analysis& a = list.candidates[c];
      if (c > 0) os << ",";
      os << "{\"labels\":\"" << labels_string(a.labels) << "\""
         << ",\"channel_lp\":" << score_decimal(a.channel_logprob)
         << ",\"lm_lp\":" << score_decimal(a.ncm_lm_logprob)
         << ",\"total_lp\":" << score_decimal(a.ncm_total_logprob)
         << ",\"n_edits\":" << a.n_edits << "}";
    }
    os << "]}\n";
  }
}

// Region structure is not carried by the interchange format; the fields the
// reranker consumes (labels, scores, edit counts, fluent strings) are.
inline std::vector<CandidateList> read_candidates_jsonl(std::istream& is) {
  std::vector<CandidateList> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw ParseError("candidate record is not valid JSON", lineno);
    CandidateList list;
    list.utterance.id = j.at("id").get<std::string>();
    for (const auto& t : j.at("tokens"))
      list.utterance.tokens.push_back(make_token(t.get<std::string>()));
    for (const auto& jc : j.at("candidates")) {
      Analysis a;
      a.utterance_id = list.utterance.id;
      a.labels = labels_from_string(jc.at("labels").get<std::string>());
      if (a.labels.size() != list.utterance.tokens.size())
        throw ParseError("candidate labels do not match tokens", lineno);
      a.channel_logprob = jc.at("channel_lp").get<double>();
      a.ncm_lm_logprob = jc.at("lm_lp").get<double>();
      a.ncm_total_logprob = jc.at("total_lp").get<double>();
      a.n_edits = jc.at("n_edits").get<int>();
      for (std::size_t i = 0; i < a.labels.size(); ++i)
        if (a.labels[i] == Label::Fluent)
          a.fluent.push_back(list.utterance.tokens[i].surface);
      list.candidates.push_back(std::move(a));
    }
    list.n = static_cast<int>(list.candidates.size());
    out.push_back(std::move(list));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage cache: artifacts are content-addressed by a hash chained from the
// configuration fields that affect them.

class StageCache {
 public:
  explicit StageCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::filesystem::path path_for(const std::string& stage,
                                 std::uint64_t key,
                                 const std::string& ext) const {
    return dir_ / (stage + "-" + hex64(key) + ext);
  }

  bool has(const std::filesystem::path& p) const {
    return std::filesystem::exists(p);
  }

  // Atomic publish: write to a temporary then rename into place.
  template <typename Fn>
  void write(const std::filesystem::path& p, Fn&& fn) const {
    std::filesystem::path tmp = p;
    tmp += ".tmp";
    {
      std::ofstream os(tmp, std::ios::binary);
      if (!os) throw DataError("cannot write " + tmp.string());
      fn(os);
    }
    std::filesystem::rename(tmp, p);
  }

 private:
  std::filesystem::path dir_;
};

namespace detail {

inline std::uint64_t chain_hash(std::uint64_t base, const std::string& s) {
  return fnv1a64(s, base ^ 0x51ed2701a0b4d1f5ULL);
}

inline std::string section_key(const nlohmann::json& j) { return j.dump(); }

// Sentences the external language models train on: the gold-fluent side of
// the training utterances.
inline std::vector<std::vector<std::string>> fluent_sentences(
    const std::vector<Utterance>& utts) {
  std::vector<std::vector<std::string>> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(gold_fluent(u));
  return out;
}

}  // namespace detail

// Provenance record proving fold discipline: every language-model score of
// a training utterance names the folds its model was trained on.
struct ScoreProvenance {
  std::string utterance_id;
  std::size_t utterance_fold = 0;
  std::string model_name;
  std::vector<std::size_t> model_folds;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg)
      : cfg_(std::move(cfg)),
        out_dir_(cfg_.out_dir),
        cache_(cfg_.cache_dir.empty()
                   ? out_dir_ / "cache"
                   : std::filesystem::path(cfg_.cache_dir)) {
    cfg_.validate();
    std::filesystem::create_directories(out_dir_);
  }

  PipelineResult run() {
    load_sections();
    train_channel_stage();
    train_ncm_bigram_stage();
    decode_stage();
    if (!cfg_.ncm_alone) {
      score_stage();
      if (cfg_.tune_lambda) {
        double best_f = -1.0;
        RerankerModel best_model;
        double best_lambda = cfg_.l2_lambda;
        for (double lambda : {1e-4, 1e-3, 1e-2}) {
          RerankerModel m = train_reranker_stage(lambda);
          EvalReport dev = evaluate_section(dev_, dev_lists_, &m);
          if (dev.f_score > best_f) {
            best_f = dev.f_score;
            best_model = m;
            best_lambda = lambda;
          }
        }
        reranker_ = best_model;
        result_.chosen_lambda = best_lambda;
      } else {
        reranker_ = train_reranker_stage(cfg_.l2_lambda);
        result_.chosen_lambda = cfg_.l2_lambda;
      }
      save_reranker();
    }
    const RerankerModel* model = cfg_.ncm_alone ? nullptr : &reranker_;
    result_.dev = evaluate_section(dev_, dev_lists_, model, &dev_predicted_);
    result_.test =
        evaluate_section(test_, test_lists_, model, &test_predicted_);
    write_reports();
    write_predictions();
    write_provenance();
    return result_;
  }

  const std::vector<std::vector<Label>>& test_predictions() const {
    return test_predicted_;
  }
  const std::vector<Utterance>& test_section() const { return test_; }

  const std::vector<ScoreProvenance>& provenance() const {
    return provenance_;
  }
  const CorpusSplit& split() const { return split_; }

 private:
  // ---- data ----------------------------------------------------------

  std::vector<Utterance> load_corpus_file(const std::string& path) const {
    if (!std::filesystem::exists(path))
      throw UsageError("corpus path does not exist: " + path);
    std::ifstream is(path);
    return parse_annotated(is, cfg_.format == "dps" ? CorpusFormat::DpsLike
                                                    : CorpusFormat::Tsv);
  }

  void load_sections() {
    if (cfg_.synth) {
      auto fluent = generate_fluent_corpus(cfg_.synth_count, cfg_.synth_seed);
      std::vector<std::string> vocab;
      for (const auto& u : fluent)
        for (const auto& t : u.tokens) vocab.push_back(t.surface);
      ChannelModel gen = ChannelModel::from_params(
          synth_params(), vocab, FillerLexicon::defaults(), 0.1,
          grammar_substitution_seeds());
      SynthesisOptions synth_opt;
      synth_opt.max_reparandum = cfg_.synth_max_reparandum;
      auto corpus = synthesize_corpus(fluent, gen, cfg_.synth_rate,
                                      cfg_.synth_seed + 1, synth_opt);
      // Deterministic shuffled split.
      std::vector<std::size_t> order(corpus.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(cfg_.split_seed);
      rng.shuffle(order);
      std::size_t n_test =
          static_cast<std::size_t>(cfg_.test_fraction *
                                   static_cast<double>(corpus.size()));
      std::size_t n_dev =
          static_cast<std::size_t>(cfg_.dev_fraction *
                                   static_cast<double>(corpus.size()));
      for (std::size_t i = 0; i < order.size(); ++i) {
        Utterance u = normalize(corpus[order[i]]);
        if (i < n_test)
          test_.push_back(std::move(u));
        else if (i < n_test + n_dev)
          dev_.push_back(std::move(u));
        else
          train_.push_back(std::move(u));
      }
      std::filesystem::path synth_path = out_dir_ / "synth-corpus.tsv";
      cache_.write(synth_path, [&](std::ostream& os) {
        serialize_tsv(corpus, os);
      });
      result_.artifacts["synth_corpus"] = synth_path.string();
    } else {
      if (cfg_.train_path.empty())
        throw UsageError("config requires train_path or synth=true");
      for (Utterance& u : load_corpus_file(cfg_.train_path))
        train_.push_back(normalize(u));
      if (!cfg_.dev_path.empty())
        for (Utterance& u : load_corpus_file(cfg_.dev_path))
          dev_.push_back(normalize(u));
      if (!cfg_.test_path.empty())
        for (Utterance& u : load_corpus_file(cfg_.test_path))
          test_.push_back(normalize(u));
    }
    if (train_.empty()) throw DataError("empty training corpus");
    split_ = make_folds(train_, cfg_.k_folds, cfg_.fold_seed);
    fold_of_ = fold_of(split_);
    std::filesystem::path split_path = out_dir_ / "split.json";
    cache_.write(split_path, [&](std::ostream& os) {
      nlohmann::json j;
      j["train"] = split_.train;
      j["dev_size"] = dev_.size();
      j["test_size"] = test_.size();
      j["folds"] = split_.folds;
      os << j.dump(2) << "\n";
    });
    result_.artifacts["split"] = split_path.string();
  }

  ChannelParams synth_params() const {
    // Substitution-heavy rough copies: category-preserving edits between
    // copied material, which leaves candidate disambiguation to the
    // language models rather than to exact-copy surface patterns.
    ChannelParams p;
    p.p_start = 0.15;
    p.p_stop = 0.32;
    p.p_filler = 0.5;
    double op[5][4] = {{0.28, 0.32, 0.32, 0.08},
                       {0.34, 0.28, 0.30, 0.08},
                       {0.64, 0.15, 0.17, 0.04},
                       {0.50, 0.12, 0.36, 0.02},
                       {0.68, 0.10, 0.10, 0.12}};
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 4; ++c) p.op[r][c] = op[r][c];
    return p;
  }

  // ---- channel + decoder ----------------------------------------------

  std::uint64_t corpus_stage_key() const {
    nlohmann::json j;
    j["synth"] = cfg_.synth;
    j["synth_count"] = cfg_.synth_count;
    j["synth_rate"] = cfg_.synth_rate;
    j["synth_seed"] = cfg_.synth_seed;
    j["synth_max_reparandum"] = cfg_.synth_max_reparandum;
    j["train"] = cfg_.train_path;
    j["dev"] = cfg_.dev_path;
    j["test"] = cfg_.test_path;
    j["format"] = cfg_.format;
    j["split_seed"] = cfg_.split_seed;
    j["dev_fraction"] = cfg_.dev_fraction;
    j["test_fraction"] = cfg_.test_fraction;
    j["k_folds"] = cfg_.k_folds;
    j["fold_seed"] = cfg_.fold_seed;
    return fnv1a64(j.dump());
  }

  void train_channel_stage() {
    std::uint64_t key = corpus_stage_key();
    auto path = cache_.path_for("channel", key, ".bin");
    if (cache_.has(path)) {
      std::ifstream is(path, std::ios::binary);
      channel_ = ChannelModel::load(is);
      ++result_.cache_hits;
    } else {
      channel_ = ChannelModel::train(train_);
      cache_.write(path, [&](std::ostream& os) { channel_.save(os); });
      ++result_.cache_misses;
    }
    result_.artifacts["channel_model"] = path.string();
  }

  void train_ncm_bigram_stage() {
    std::uint64_t key = corpus_stage_key();
    auto path = cache_.path_for("ncm-bigram", key, ".bin");
    if (cache_.has(path)) {
      std::ifstream is(path, std::ios::binary);
      bigram_ = NgramModel::load(is);
      ++result_.cache_hits;
    } else {
      bigram_ = NgramModel::train_on_sentences(
          detail::fluent_sentences(train_), 2, 1);
      cache_.write(path, [&](std::ostream& os) { bigram_.save(os); });
      ++result_.cache_misses;
    }
    result_.artifacts["ncm_bigram"] = path.string();
  }

  std::vector<CandidateList> decode_section(
      const std::vector<Utterance>& utts) const {
    std::vector<CandidateList> lists;
    lists.reserve(utts.size());
    for (const auto& u : utts)
      lists.push_back(nbest(u, channel_, bigram_, cfg_.n_best, cfg_.beam,
                            cfg_.search_limits()));
    return lists;
  }

  void decode_stage() {
    nlohmann::json j;
    j["n_best"] = cfg_.n_best;
    j["beam"] = cfg_.beam;
    j["max_regions"] = cfg_.max_regions;
    j["max_reparandum"] = cfg_.max_reparandum;
    j["max_repair"] = cfg_.max_repair;
    std::uint64_t key =
        detail::chain_hash(corpus_stage_key(), detail::section_key(j));
    struct Sect {
      const char* name;
      std::vector<Utterance>* utts;
      std::vector<CandidateList>* lists;
    } sections[] = {{"train", &train_, &train_lists_},
                    {"dev", &dev_, &dev_lists_},
                    {"test", &test_, &test_lists_}};
    for (auto& s : sections) {
      auto path = cache_.path_for(std::string("nbest-") + s.name, key,
                                  ".jsonl");
      if (cache_.has(path)) {
        std::ifstream is(path);
        *s.lists = read_candidates_jsonl(is);
        if (s.lists->size() != s.utts->size())
          throw DataError("stale n-best cache: size mismatch");
        for (std::size_t u = 0; u < s.lists->size(); ++u)
          if ((*s.lists)[u].utterance.id != (*s.utts)[u].id)
            throw DataError("stale n-best cache: id mismatch");
        ++result_.cache_hits;
      } else {
        *s.lists = decode_section(*s.utts);
        cache_.write(path, [&](std::ostream& os) {
          write_candidates_jsonl(*s.lists, os);
        });
        ++result_.cache_misses;
      }
      result_.artifacts[std::string("nbest_") + s.name] = path.string();
    }
  }

  // ---- external language models ---------------------------------------

  struct SectionScores {
    // Per utterance, per candidate.
    std::vector<std::vector<ScoreBundle>> bundles;
  };

  std::uint64_t lm_stage_key() const {
    nlohmann::json j;
    j["lstm_scale"] = cfg_.lstm_scale;
    j["lstm_epochs"] = cfg_.lstm_epochs;
    j["lstm_seed"] = cfg_.lstm_seed;
    return detail::chain_hash(corpus_stage_key(), detail::section_key(j));
  }

  std::vector<std::vector<std::string>> fold_complement_sentences(
      std::size_t fold) const {
    std::vector<std::vector<std::string>> out;
    for (const auto& u : train_)
      if (fold_of_.at(u.id) != fold) out.push_back(gold_fluent(u));
    return out;
  }

  LstmModel train_or_load_lstm(LmDirection dir, const std::string& tag,
                               std::uint64_t seed_offset,
                               const std::vector<std::vector<std::string>>&
                                   sentences) {
    std::string name = std::string("lstm-") +
                       (dir == LmDirection::Forward ? "fwd" : "bwd") + "-" +
                       tag;
    auto path = cache_.path_for(name, lm_stage_key(), ".bin");
    if (cache_.has(path)) {
      std::ifstream is(path, std::ios::binary);
      ++result_.cache_hits;
      return LstmModel::load(is);
    }
    LstmModel m = LstmModel::train_on_sentences(
        sentences, cfg_.lstm_config(dir, seed_offset));
    cache_.write(path, [&](std::ostream& os) { m.save(os); });
    ++result_.cache_misses;
    result_.artifacts[name] = path.string();
    return m;
  }

  NgramModel train_or_load_4gram(LmDirection dir, const std::string& tag,
                                 std::vector<std::vector<std::string>>
                                     sentences) {
    std::string name = std::string("4gram-") +
                       (dir == LmDirection::Forward ? "fwd" : "bwd") + "-" +
                       tag;
    auto path = cache_.path_for(name, corpus_stage_key(), ".bin");
    if (cache_.has(path)) {
      std::ifstream is(path, std::ios::binary);
      ++result_.cache_hits;
      return NgramModel::load(is);
    }
    if (dir == LmDirection::Backward)
      for (auto& s : sentences) std::reverse(s.begin(), s.end());
    NgramModel m = NgramModel::train_on_sentences(sentences, 4, 2);
    cache_.write(path, [&](std::ostream& os) { m.save(os); });
    ++result_.cache_misses;
    result_.artifacts[name] = path.string();
    return m;
  }

  void score_stage() {
    auto init = [](const std::vector<CandidateList>& lists,
                   SectionScores& s) {
      s.bundles.assign(lists.size(), {});
      for (std::size_t u = 0; u < lists.size(); ++u)
        s.bundles[u].assign(lists[u].candidates.size(), ScoreBundle{});
    };
    init(train_lists_, train_scores_);
    init(dev_lists_, dev_scores_);
    init(test_lists_, test_scores_);

    struct LmPlan {
      bool enabled;
      LmDirection dir;
      const char* kind;  // "lstm" or "4gram"
      std::optional<double> ScoreBundle::*slot;
    } plans[] = {
        {cfg_.fwd_lstm, LmDirection::Forward, "lstm", &ScoreBundle::fwd_lstm},
        {cfg_.bwd_lstm, LmDirection::Backward, "lstm",
         &ScoreBundle::bwd_lstm},
        {cfg_.fwd_4gram, LmDirection::Forward, "4gram",
         &ScoreBundle::fwd_4gram},
        {cfg_.bwd_4gram, LmDirection::Backward, "4gram",
         &ScoreBundle::bwd_4gram},
    };
    for (const auto& plan : plans) {
      if (!plan.enabled) continue;
      std::string dirname = plan.dir == LmDirection::Forward ? "fwd" : "bwd";
      if (std::string(plan.kind) == "lstm") {
        // Fold-complement models score the training section.
        for (std::size_t f = 0; f < split_.folds.size(); ++f) {
          LstmModel m = train_or_load_lstm(
              plan.dir, "fold" + std::to_string(f),
              1000 * (f + 1) + (plan.dir == LmDirection::Backward ? 1 : 0),
              fold_complement_sentences(f));
          score_train_fold(plan, m, f, dirname);
        }
        LstmModel all = train_or_load_lstm(
            plan.dir, "all",
            plan.dir == LmDirection::Backward ? 1 : 0,
            detail::fluent_sentences(train_));
        score_eval_sections(plan, all);
      } else {
        for (std::size_t f = 0; f < split_.folds.size(); ++f) {
          NgramModel m = train_or_load_4gram(plan.dir,
                                             "fold" + std::to_string(f),
                                             fold_complement_sentences(f));
          score_train_fold_ngram(plan, m, f, dirname);
        }
        NgramModel all = train_or_load_4gram(
            plan.dir, "all", detail::fluent_sentences(train_));
        score_eval_sections_ngram(plan, all);
      }
    }
  }

  template <typename Plan>
  void score_train_fold(const Plan& plan, const LstmModel& model,
                        std::size_t fold, const std::string& dirname) {
    for (std::size_t u = 0; u < train_lists_.size(); ++u) {
      const std::string& id = train_lists_[u].utterance.id;
      if (fold_of_.at(id) != fold) continue;
      record_provenance(id, fold, "lstm-" + dirname + "-fold" +
                                      std::to_string(fold));
      std::vector<std::vector<std::string>> fluents;
      for (const auto& c : train_lists_[u].candidates)
        fluents.push_back(c.fluent);
      std::vector<double> lps = model.logprob_batch(fluents);
      for (std::size_t c = 0; c < lps.size(); ++c)
        train_scores_.bundles[u][c].*(plan.slot) = lps[c];
    }
  }

  template <typename Plan>
  void score_train_fold_ngram(const Plan& plan, const NgramModel& model,
                              std::size_t fold, const std::string& dirname) {
    for (std::size_t u = 0; u < train_lists_.size(); ++u) {
      const std::string& id = train_lists_[u].utterance.id;
      if (fold_of_.at(id) != fold) continue;
      record_provenance(id, fold, "4gram-" + dirname + "-fold" +
                                      std::to_string(fold));
      for (std::size_t c = 0; c < train_lists_[u].candidates.size(); ++c) {
        std::vector<std::string> s = train_lists_[u].candidates[c].fluent;
        if (plan.dir == LmDirection::Backward)
          std::reverse(s.begin(), s.end());
        train_scores_.bundles[u][c].*(plan.slot) = model.logprob(s);
      }
    }
  }

  struct EvalSection {
    std::vector<CandidateList>* lists;
    SectionScores* scores;
  };

  std::array<EvalSection, 2> eval_sections() {
    return {EvalSection{&dev_lists_, &dev_scores_},
            EvalSection{&test_lists_, &test_scores_}};
  }

  template <typename Plan>
  void score_eval_sections(const Plan& plan, const LstmModel& model) {
    for (EvalSection sec : eval_sections()) {
      for (std::size_t u = 0; u < sec.lists->size(); ++u) {
        const CandidateList& list = (*sec.lists)[u];
        std::vector<std::vector<std::string>> fluents;
        for (const auto& c : list.candidates) fluents.push_back(c.fluent);
        std::vector<double> lps = model.logprob_batch(fluents);
        for (std::size_t c = 0; c < lps.size(); ++c)
          sec.scores->bundles[u][c].*(plan.slot) = lps[c];
      }
    }
  }

  template <typename Plan>
  void score_eval_sections_ngram(const Plan& plan, const NgramModel& model) {
    for (EvalSection sec : eval_sections()) {
      for (std::size_t u = 0; u < sec.lists->size(); ++u) {
        const CandidateList& list = (*sec.lists)[u];
        for (std::size_t c = 0; c < list.candidates.size(); ++c) {
          std::vector<std::string> s = list.candidates[c].fluent;
          if (plan.dir == LmDirection::Backward)
            std::reverse(s.begin(), s.end());
          sec.scores->bundles[u][c].*(plan.slot) = model.logprob(s);
        }
      }
    }
  }

  void record_provenance(const std::string& id, std::size_t fold,
                         const std::string& model_name) {
    ScoreProvenance p;
    p.utterance_id = id;
    p.utterance_fold = fold;
    p.model_name = model_name;
    for (std::size_t f = 0; f < split_.folds.size(); ++f)
      if (f != fold) p.model_folds.push_back(f);
    // The scored fold must never appear among the model's training folds.
    for (std::size_t f : p.model_folds)
      if (f == fold)
        throw NumericError("fold discipline violated for " + id);
    provenance_.push_back(std::move(p));
  }

  // ---- features + reranker --------------------------------------------

  LmFeatureRequest request() const {
    LmFeatureRequest r;
    r.fwd_lstm = cfg_.fwd_lstm;
    r.bwd_lstm = cfg_.bwd_lstm;
    r.fwd_4gram = cfg_.fwd_4gram;
    r.bwd_4gram = cfg_.bwd_4gram;
    return r;
  }

  std::vector<FeatureVector> extract_list(const CandidateList& list,
                                          const std::vector<ScoreBundle>&
                                              bundles) const {
    std::vector<FeatureVector> fvs;
    fvs.reserve(list.candidates.size());
    double top = list.candidates.empty()
                     ? 0.0
                     : list.candidates.front().ncm_total_logprob;
    for (std::size_t c = 0; c < list.candidates.size(); ++c)
      fvs.push_back(extract(list.candidates[c], list.utterance.tokens,
                            bundles[c], request(),
                            CandidateContext{static_cast<int>(c), top}));
    return fvs;
  }

  RerankerModel train_reranker_stage(double lambda) {
    space_ = FeatureSpace{};
    std::vector<TrainingInstance> instances;
    std::ofstream dump;
    if (cfg_.dump_features) {
      auto path = out_dir_ / "features-train.jsonl";
      dump.open(path);
      result_.artifacts["features_train"] = path.string();
    }
    for (std::size_t u = 0; u < train_lists_.size(); ++u) {
      const CandidateList& list = train_lists_[u];
      if (!train_[u].gold) continue;
      std::vector<FeatureVector> fvs =
          extract_list(list, train_scores_.bundles[u]);
      if (cfg_.dump_features) {
        for (std::size_t c = 0; c < fvs.size(); ++c) {
          nlohmann::json j;
          j["id"] = list.utterance.id;
          j["candidate_index"] = c;
          j["features"] = fvs[c].values;
          dump << j.dump() << "\n";
        }
      }
      instances.push_back(
          make_instance(list, fvs, *train_[u].gold, space_));
    }
    space_.freeze();
    TrainOptions opts;
    opts.max_iterations = cfg_.reranker_iterations;
    return train_reranker(std::move(instances), space_, lambda, opts);
  }

  void save_reranker() {
    auto path = out_dir_ / "reranker.bin";
    cache_.write(path, [&](std::ostream& os) { reranker_.save(os); });
    result_.artifacts["reranker"] = path.string();
  }

  EvalReport evaluate_section(const std::vector<Utterance>& utts,
                              const std::vector<CandidateList>& lists,
                              const RerankerModel* model,
                              std::vector<std::vector<Label>>* keep =
                                  nullptr) {
    std::vector<std::vector<Label>> predicted;
    predicted.reserve(lists.size());
    const SectionScores* scores = nullptr;
    if (&utts == &dev_) scores = &dev_scores_;
    if (&utts == &test_) scores = &test_scores_;
    for (std::size_t u = 0; u < lists.size(); ++u) {
      if (model == nullptr) {
        predicted.push_back(lists[u].top().labels);
        continue;
      }
      std::vector<ScoreBundle> bundles =
          scores != nullptr && !(*scores).bundles.empty()
              ? (*scores).bundles[u]
              : std::vector<ScoreBundle>(lists[u].candidates.size());
      std::vector<FeatureVector> fvs = extract_list(lists[u], bundles);
      predicted.push_back(predict(*model, lists[u], fvs).labels);
    }
    EvalReport rep = score_utterances(utts, predicted);
    if (keep != nullptr) *keep = std::move(predicted);
    return rep;
  }

  void write_predictions() {
    struct Sect {
      const char* name;
      std::vector<Utterance>* utts;
      std::vector<std::vector<Label>>* predicted;
    } sections[] = {{"dev", &dev_, &dev_predicted_},
                    {"test", &test_, &test_predicted_}};
    for (auto& s : sections) {
      if (s.predicted->empty() && !s.utts->empty()) continue;
      std::vector<Utterance> out;
      for (std::size_t u = 0; u < s.utts->size(); ++u) {
        Utterance copy = (*s.utts)[u];
        copy.gold = (*s.predicted)[u];
        copy.regions.clear();
        out.push_back(std::move(copy));
      }
      auto path = out_dir_ / (std::string("predictions-") + s.name + ".tsv");
      cache_.write(path, [&](std::ostream& os) { serialize_tsv(out, os); });
      result_.artifacts[std::string("predictions_") + s.name] = path.string();
    }
  }

  void write_reports() {
    auto write_one = [&](const char* name, const EvalReport& rep) {
      auto path = out_dir_ / (std::string("report-") + name + ".json");
      cache_.write(path, [&](std::ostream& os) {
        os << rep.to_json().dump(2) << "\n";
      });
      result_.artifacts[std::string("report_") + name] = path.string();
      auto tpath = out_dir_ / (std::string("report-") + name + ".txt");
      cache_.write(tpath, [&](std::ostream& os) { os << rep.table(); });
    };
    write_one("dev", result_.dev);
    write_one("test", result_.test);
  }

  void write_provenance() {
    auto path = out_dir_ / "provenance.json";
    cache_.write(path, [&](std::ostream& os) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& p : provenance_) {
        nlohmann::json j;
        j["utterance"] = p.utterance_id;
        j["fold"] = p.utterance_fold;
        j["model"] = p.model_name;
        j["model_folds"] = p.model_folds;
        arr.push_back(j);
      }
      os << arr.dump(2) << "\n";
    });
    result_.artifacts["provenance"] = path.string();
  }

  PipelineConfig cfg_;
  std::filesystem::path out_dir_;
  StageCache cache_;
  PipelineResult result_;

  std::vector<Utterance> train_, dev_, test_;
  CorpusSplit split_;
  std::unordered_map<std::string, std::size_t> fold_of_;
  ChannelModel channel_;
  NgramModel bigram_;
  std::vector<CandidateList> train_lists_, dev_lists_, test_lists_;
  SectionScores train_scores_, dev_scores_, test_scores_;
  FeatureSpace space_;
  RerankerModel reranker_;
  std::vector<std::vector<Label>> dev_predicted_, test_predicted_;
  std::vector<ScoreProvenance> provenance_;
};

inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  Pipeline p(cfg);
  return p.run();
}

// Named feature configurations in the shape of the ablation tables:
// one row per language-model condition.
inline std::vector<std::pair<std::string, PipelineConfig>> ablation_configs(
    const PipelineConfig& base, const std::vector<std::string>& conditions) {
  std::vector<std::pair<std::string, PipelineConfig>> out;
  for (const auto& name : conditions) {
    PipelineConfig c = base;
    c.ncm_alone = false;
    c.fwd_lstm = c.bwd_lstm = c.fwd_4gram = c.bwd_4gram = false;
    if (name == "ncm-alone") {
      c.ncm_alone = true;
    } else if (name == "baseline") {
    } else if (name == "fwd-lstm") {
      c.fwd_lstm = true;
    } else if (name == "bwd-lstm") {
      c.bwd_lstm = true;
    } else if (name == "both-lstm") {
      c.fwd_lstm = c.bwd_lstm = true;
    } else if (name == "4gram") {
      c.fwd_4gram = c.bwd_4gram = true;
    } else if (name == "lstm-and-4gram") {
      c.fwd_lstm = c.bwd_lstm = c.fwd_4gram = c.bwd_4gram = true;
    } else {
      throw UsageError("unknown ablation condition: " + name);
    }
    c.out_dir = base.out_dir + "/" + name;
    // Conditions share decode and language-model artifacts.
    c.cache_dir = base.cache_dir.empty() ? base.out_dir + "/cache"
                                         : base.cache_dir;
    out.emplace_back(name, c);
  }
  return out;
}

inline std::vector<std::pair<std::string, PipelineResult>> ablation_matrix(
    const PipelineConfig& base, const std::vector<std::string>& conditions) {
  std::vector<std::pair<std::string, PipelineResult>> out;
  for (auto& [name, cfg] : ablation_configs(base, conditions))
    out.emplace_back(name, run_pipeline(cfg));
  return out;
}

inline std::string ablation_table(
    const std::vector<std::pair<std::string, PipelineResult>>& rows) {
  std::ostringstream os;
  os << "condition        dev-f   dev-err  test-f  test-err\n";
  for (const auto& [name, res] : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-15s %7.4f %8.4f %7.4f %9.4f\n",
                  name.c_str(), res.dev.f_score, res.dev.error_rate,
                  res.test.f_score, res.test.error_rate);
    os << buf;
  }
  return os.str();
}

}  // namespace disfl
