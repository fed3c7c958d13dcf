// acceptance.cpp -- integration acceptance suite. Each numbered criterion
// runs standalone, prints one PASS/FAIL line, and enforces its own runtime
// budget. Invoke with a criterion number (1..8) or "all".
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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "disfl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace disfl;

namespace {

struct Checker {
  bool ok = true;
  std::vector<std::string> notes;
  std::size_t checks = 0;

  void expect(bool cond, const std::string& what) {
    ++checks;
    if (!cond) {
      ok = false;
      if (notes.size() < 10) notes.push_back(what);
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("disfl-acceptance-" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Shared channel + bigram trained on synthetic data for criteria 1 and 3.
struct DecoderFixture {
  ChannelModel channel;
  NgramModel bigram;

  static DecoderFixture make() {
    auto fluent = generate_fluent_corpus(800, 21);
    std::vector<std::string> vocab;
    for (const auto& u : fluent)
      for (const auto& t : u.tokens) vocab.push_back(t.surface);
    ChannelParams params;
    params.p_start = 0.12;
    params.p_stop = 0.45;
    ChannelModel gen = ChannelModel::from_params(
        params, vocab, FillerLexicon::defaults(), 0.1,
        grammar_substitution_seeds());
    auto corpus = synthesize_corpus(fluent, gen, 0.2, 77);
    DecoderFixture fx{ChannelModel::train(corpus),
                      NgramModel::train_on_sentences(
                          [&corpus] {
                            std::vector<std::vector<std::string>> s;
                            for (const auto& u : corpus)
                              s.push_back(gold_fluent(u));
                            return s;
                          }(),
                          2, 1)};
    return fx;
  }
};

// --------------------------------------------------------------------------
// 1. Oracle equivalence of the decoder against exhaustive enumeration.

bool criterion1() {
  auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  DecoderFixture fx = DecoderFixture::make();
  static const std::vector<std::string> pool = {
      "a",      "flight", "to",  "boston", "denver", "the",  "teacher",
      "teachers", "saw",  "uh",  "i",      "mean",   "want", "we"};
  Rng rng(20250811);
  SearchLimits unlimited{0, 0, 0};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> words;
    std::size_t len = 1 + rng.next_index(10);
    for (std::size_t i = 0; i < len; ++i)
      words.push_back(pool[rng.next_index(pool.size())]);
    Utterance u;
    u.id = "acc1-" + std::to_string(trial);
    u.tokens = make_tokens(words);
    CandidateList fast =
        nbest(u, fx.channel, fx.bigram, 25, 100000000, unlimited);
    CandidateList slow = brute_force_nbest(u, fx.channel, fx.bigram, 25);
    ck.expect(fast.candidates.size() == slow.candidates.size(),
              "trial " + std::to_string(trial) + ": candidate count differs");
    std::map<std::vector<Label>, double> fast_scores, slow_scores;
    for (const auto& c : fast.candidates)
      fast_scores[c.labels] = c.ncm_total_logprob;
    for (const auto& c : slow.candidates)
      slow_scores[c.labels] = c.ncm_total_logprob;
    ck.expect(fast_scores.size() == fast.candidates.size(),
              "trial " + std::to_string(trial) + ": duplicate labelings");
    for (const auto& [labels, score] : slow_scores) {
      auto it = fast_scores.find(labels);
      if (it == fast_scores.end()) {
        ck.expect(false,
                  "trial " + std::to_string(trial) + ": candidate set differs");
        continue;
      }
      ck.expect(std::abs(it->second - score) <= 1e-9,
                "trial " + std::to_string(trial) + ": score differs by " +
                    format_double(std::abs(it->second - score)));
    }
    for (std::size_t i = 0; i < fast.candidates.size(); ++i)
      ck.expect(std::abs(fast.candidates[i].ncm_total_logprob -
                         slow.candidates[i].ncm_total_logprob) <= 1e-9,
                "trial " + std::to_string(trial) + ": rank order differs");
  }
  double elapsed = seconds_since(t0);
  ck.expect(elapsed < 120.0,
            "runtime " + format_double(elapsed) + "s exceeds 120s");
  std::printf(
      "[%s] criterion 1: decoder == exhaustive reference on 500 utterances "
      "<= 10 tokens (%zu checks, %.1fs)\n",
      ck.ok ? "PASS" : "FAIL", ck.checks, elapsed);
  for (const auto& n : ck.notes) std::printf("        %s\n", n.c_str());
  return ck.ok;
}

// --------------------------------------------------------------------------
// 2. LSTM gradients against central finite differences.

bool criterion2() {
  auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  Rng rng(424242);
  static const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f"};
  for (int trial = 0; trial < 20; ++trial) {
    LstmConfig cfg;
    cfg.hidden = 4 + static_cast<int>(rng.next_index(4)) * 4;  // 4..16
    cfg.embed = 3 + static_cast<int>(rng.next_index(6));
    cfg.layers = 1 + static_cast<int>(rng.next_index(2));
    cfg.batch = 4;
    cfg.epochs = static_cast<int>(rng.next_index(3));  // 0..2
    cfg.seed = rng.next_u64();
    cfg.bptt_window = 50;
    std::vector<std::vector<std::string>> corpus;
    std::size_t n_sent = 3 + rng.next_index(3);
    for (std::size_t s = 0; s < n_sent; ++s) {
      std::vector<std::string> sent;
      std::size_t len = 1 + rng.next_index(6);
      for (std::size_t i = 0; i < len; ++i)
        sent.push_back(pool[rng.next_index(pool.size())]);
      corpus.push_back(sent);
    }
    LstmModel m = LstmModel::train_on_sentences(corpus, cfg);
    double err = check_gradients(m, corpus);
    ck.expect(err < 1e-4, "trial " + std::to_string(trial) +
                              ": max relative error " + format_double(err));
  }
  double elapsed = seconds_since(t0);
  ck.expect(elapsed < 300.0,
            "runtime " + format_double(elapsed) + "s exceeds 300s");
  std::printf(
      "[%s] criterion 2: BPTT gradients match finite differences < 1e-4 on "
      "20 tiny models (%.1fs)\n",
      ck.ok ? "PASS" : "FAIL", elapsed);
  for (const auto& n : ck.notes) std::printf("        %s\n", n.c_str());
  return ck.ok;
}

// --------------------------------------------------------------------------
// 3. Kneser-Ney: normalization and hand-computed probabilities.

bool criterion3() {
  auto t0 = std::chrono::steady_clock::now();
  Checker ck;

  auto fluent = generate_fluent_corpus(600, 31);
  std::vector<std::vector<std::string>> sentences;
  for (const auto& u : fluent) sentences.push_back(u.surfaces());
  Rng rng(777);
  for (int order : {2, 4}) {
    NgramModel m = NgramModel::train_on_sentences(sentences, order,
                                                  order >= 4 ? 2 : 1);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::uint32_t> ctx;
      std::size_t len = rng.next_index(static_cast<std::size_t>(order));
      for (std::size_t i = 0; i < len; ++i)
        ctx.push_back(
            static_cast<std::uint32_t>(rng.next_index(m.vocab().size())));
      double sum = 0.0;
      for (std::uint32_t w = 0; w < m.vocab().size(); ++w) {
        if (w == Vocab::kBos) continue;
        sum += m.cond_prob_ids(ctx, w);
      }
      ck.expect(std::abs(sum - 1.0) <= 1e-6,
                "order " + std::to_string(order) + " context sums to " +
                    format_double(sum));
    }
  }

  // Hand-computed values for {"a b", "a b", "a c"}, order 2 (see the unit
  // suite for the full derivation) and for {"a"}, order 1.
  NgramModel toy = NgramModel::train_on_sentences(
      {{"a", "b"}, {"a", "b"}, {"a", "c"}}, 2);
  std::uint32_t a = toy.vocab().lookup("a"), b = toy.vocab().lookup("b");
  std::uint32_t ctx_a[1] = {a}, ctx_bos[1] = {Vocab::kBos}, ctx_b[1] = {b};
  ck.expect(std::abs(toy.cond_prob_ids(ctx_a, b) - 223.0 / 375.0) <= 1e-9,
            "p(b|a) != 223/375");
  ck.expect(std::abs(toy.cond_prob_ids(ctx_bos, a) - 1022.0 / 1125.0) <= 1e-9,
            "p(a|<s>) != 1022/1125");
  ck.expect(
      std::abs(toy.cond_prob_ids(ctx_b, Vocab::kEos) - 112.0 / 125.0) <= 1e-9,
      "p(</s>|b) != 112/125");
  NgramModel uni = NgramModel::train_on_sentences({{"a"}}, 1);
  std::vector<std::uint32_t> empty;
  ck.expect(std::abs(uni.cond_prob_ids(empty, uni.vocab().lookup("a")) -
                     1.0 / 3.0) <= 1e-9,
            "unigram p(a) != 1/3");

  double elapsed = seconds_since(t0);
  std::printf(
      "[%s] criterion 3: Kneser-Ney normalization (100 contexts, orders 2 "
      "and 4) and hand-computed values to 1e-9 (%.1fs)\n",
      ck.ok ? "PASS" : "FAIL", elapsed);
  for (const auto& n : ck.notes) std::printf("        %s\n", n.c_str());
  return ck.ok;
}

// --------------------------------------------------------------------------
// 4. Reranker objective: gradient check and separable selection.

bool criterion4() {
  auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  Rng rng(31415);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n_feat = 4 + rng.next_index(5);
    std::vector<TrainingInstance> instances;
    std::size_t n_inst = 4 + rng.next_index(8);
    for (std::size_t s = 0; s < n_inst; ++s) {
      TrainingInstance inst;
      inst.gold_edits = 1.0 + static_cast<double>(rng.next_index(4));
      std::size_t n_cand = 2 + rng.next_index(5);
      for (std::size_t c = 0; c < n_cand; ++c) {
        RerankCandidate rc;
        rc.predicted_edits = static_cast<double>(rng.next_index(5));
        double cap = std::min(rc.predicted_edits, inst.gold_edits);
        rc.correct_edits =
            cap <= 0 ? 0.0
                     : static_cast<double>(rng.next_index(
                           static_cast<std::size_t>(cap) + 1));
        std::size_t nf = 1 + rng.next_index(4);
        for (std::size_t f = 0; f < nf; ++f)
          rc.features.emplace_back(
              static_cast<std::uint32_t>(rng.next_index(n_feat)),
              rng.next_range(-2.0, 2.0));
        inst.candidates.push_back(std::move(rc));
      }
      instances.push_back(std::move(inst));
    }
    std::vector<double> w(n_feat);
    for (auto& v : w) v = rng.next_range(-1.0, 1.0);
    double lambda = 1e-3;
    std::vector<double> grad;
    ef_objective(instances, w, lambda, &grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < n_feat; ++i) {
      std::vector<double> up = w, dn = w;
      up[i] += h;
      dn[i] -= h;
      double fd = (ef_objective(instances, up, lambda, nullptr) -
                   ef_objective(instances, dn, lambda, nullptr)) /
                  (2.0 * h);
      double rel = std::abs(grad[i] - fd) /
                   std::max(1e-5, std::abs(grad[i]) + std::abs(fd));
      ck.expect(rel < 1e-5, "trial " + std::to_string(trial) + " feature " +
                                std::to_string(i) + ": rel err " +
                                format_double(rel));
    }
  }

  // Separable toy: an exclusive indicator on the oracle candidate.
  FeatureSpace space;
  std::vector<TrainingInstance> instances;
  std::vector<std::size_t> oracles;
  Rng orng(5);
  for (int s = 0; s < 30; ++s) {
    std::size_t n_cand = 3 + orng.next_index(4);
    std::size_t oracle = orng.next_index(n_cand);
    TrainingInstance inst;
    inst.gold_edits = 2.0;
    for (std::size_t c = 0; c < n_cand; ++c) {
      RerankCandidate rc;
      rc.predicted_edits = c == oracle ? 2.0 : 3.0;
      rc.correct_edits = c == oracle ? 2.0 : 0.0;
      rc.features.emplace_back(space.intern("NcmRank", true),
                               static_cast<double>(c));
      if (c == oracle)
        rc.features.emplace_back(space.intern("OracleFlag", false), 1.0);
      inst.candidates.push_back(std::move(rc));
    }
    instances.push_back(std::move(inst));
    oracles.push_back(oracle);
  }
  space.freeze();
  RerankerModel model = train_reranker(instances, space, 1e-4);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < instances.size(); ++s) {
    // Re-score the standardized instance directly.
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t c = 0; c < instances[s].candidates.size(); ++c) {
      double v = model.score(instances[s].candidates[c].features);
      if (v > best_score) {
        best_score = v;
        best = c;
      }
    }
    if (best == oracles[s]) ++correct;
  }
  ck.expect(correct == instances.size(),
            "oracle selected on " + std::to_string(correct) + "/" +
                std::to_string(instances.size()) + " instances");

  double elapsed = seconds_since(t0);
  std::printf(
      "[%s] criterion 4: expected-f gradient matches finite differences "
      "< 1e-5 on 20 instance sets; separable toy reaches oracle selection "
      "(%.1fs)\n",
      ck.ok ? "PASS" : "FAIL", elapsed);
  for (const auto& n : ck.notes) std::printf("        %s\n", n.c_str());
  return ck.ok;
}

// --------------------------------------------------------------------------
// 5. End-to-end relative ordering on a synthetic corpus.

bool criterion5() {
  auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  PipelineConfig base;
  base.synth = true;
  base.synth_count = 5000;
  base.synth_rate = 0.15;
  base.synth_seed = 1;
  base.k_folds = 4;
  base.lstm_scale = "desk";
  base.lstm_epochs = 13;
  base.out_dir = fresh_dir("criterion5").string();

  auto rows = ablation_matrix(base, {"ncm-alone", "baseline", "both-lstm"});
  std::map<std::string, PipelineResult> by_name;
  for (auto& [name, res] : rows) by_name.emplace(name, std::move(res));
  const EvalReport& ncm = by_name.at("ncm-alone").test;
  const EvalReport& baseline = by_name.at("baseline").test;
  const EvalReport& lstm = by_name.at("both-lstm").test;

  std::printf(
      "        test f: ncm-alone %.4f  baseline %.4f  +lstm %.4f\n"
      "        test err: ncm-alone %.4f  baseline %.4f  +lstm %.4f\n",
      ncm.f_score, baseline.f_score, lstm.f_score, ncm.error_rate,
      baseline.error_rate, lstm.error_rate);

  ck.expect(ncm.f_score < baseline.f_score,
            "f-score: ncm-alone not below baseline");
  ck.expect(baseline.f_score <= lstm.f_score,
            "f-score: baseline above reranker+lstm");
  ck.expect(lstm.f_score - ncm.f_score >= 0.02,
            "f-score: +lstm does not exceed ncm-alone by 2 points");
  ck.expect(ncm.error_rate > baseline.error_rate,
            "error: ncm-alone not above baseline");
  ck.expect(baseline.error_rate >= lstm.error_rate,
            "error: baseline below reranker+lstm");

  double elapsed = seconds_since(t0);
  ck.expect(elapsed < 1800.0,
            "runtime " + format_double(elapsed) + "s exceeds 1800s");
  std::printf(
      "[%s] criterion 5: end-to-end ordering ncm-alone < baseline <= +lstm "
      "with a >= 2-point gap, error rates reversed (%.0fs)\n",
      ck.ok ? "PASS" : "FAIL", elapsed);
  for (const auto& n : ck.notes) std::printf("        %s\n", n.c_str());
  return ck.ok;
}

// --------------------------------------------------------------------------
// 6. Metric unit suite.

bool criterion6() {
  auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  auto labels_at = [](std::size_t n, std::vector<std::size_t> where) {
    std::vector<Label> out(n, Label::Fluent);
    for (auto i : where) out[i] = Label::Edited;
    return out;
  };
  {
    EvalReport r =
        score({"u"}, {labels_at(6, {3, 4})}, {labels_at(6, {2, 3})});
    ck.expect(r.precision == 0.5, "precision != 0.5");
    ck.expect(r.recall == 0.5, "recall != 0.5");
    ck.expect(r.f_score == 0.5, "f != 0.5");
    ck.expect(r.error_rate == 1.0, "error != 1.0");
  }
  {
    auto g = labels_at(5, {0, 3});
    EvalReport r = score({"u"}, {g}, {g});
    ck.expect(r.f_score == 1.0, "perfect f != 1");
    ck.expect(r.error_rate == 0.0, "perfect error != 0");
  }
  {
    auto g = labels_at(4, {});
    EvalReport r = score({"u"}, {g}, {g});
    ck.expect(r.f_score == 0.0, "0/0 f convention violated");
    ck.expect(r.error_rate == 0.0, "clean error != 0");
  }
  // Corpus f-score equals pooled-count f-score under concatenation.
  std::vector<std::vector<Label>> gold = {
      labels_at(5, {1}), labels_at(4, {0, 2}), labels_at(6, {5})};
  std::vector<std::vector<Label>> pred = {
      labels_at(5, {1, 3}), labels_at(4, {2}), labels_at(6, {})};
  EvalReport joint = score({"a", "b", "c"}, pred, gold);
  EvalReport p1 = score({"a"}, {pred[0]}, {gold[0]});
  EvalReport p2 = score({"b", "c"}, {pred[1], pred[2]}, {gold[1], gold[2]});
  EvalReport pooled;
  pooled.tp = p1.tp + p2.tp;
  pooled.fp = p1.fp + p2.fp;
  pooled.fn = p1.fn + p2.fn;
  pooled.gold_edits = p1.gold_edits + p2.gold_edits;
  pooled.finalize();
  ck.expect(pooled.f_score == joint.f_score, "pooled f != corpus f");
  ck.expect(pooled.error_rate == joint.error_rate,
            "pooled error != corpus error");

  double elapsed = seconds_since(t0);
  std::printf(
      "[%s] criterion 6: metric unit suite exact, pooling additive (%.1fs)\n",
      ck.ok ? "PASS" : "FAIL", elapsed);
  for (const auto& n : ck.notes) std::printf("        %s\n", n.c_str());
  return ck.ok;
}

// --------------------------------------------------------------------------
// 7. Determinism of the full pipeline.

bool criterion7() {
  auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  auto dira = fresh_dir("criterion7-a");
  auto dirb = fresh_dir("criterion7-b");
  PipelineConfig cfg;
  cfg.synth = true;
  cfg.synth_count = 400;
  cfg.synth_rate = 0.2;
  cfg.k_folds = 2;
  cfg.lstm_epochs = 2;
  cfg.reranker_iterations = 60;
  cfg.out_dir = dira.string();
  run_pipeline(cfg);
  cfg.out_dir = dirb.string();
  cfg.cache_dir.clear();
  run_pipeline(cfg);

  for (const char* name :
       {"report-dev.json", "report-test.json", "reranker.bin",
        "predictions-dev.tsv", "predictions-test.tsv", "provenance.json"}) {
    bool same = slurp(dira / name) == slurp(dirb / name);
    ck.expect(same, std::string(name) + " differs between runs");
  }
  std::vector<fs::path> ca, cb;
  for (const auto& e : fs::directory_iterator(dira / "cache"))
    ca.push_back(e.path().filename());
  for (const auto& e : fs::directory_iterator(dirb / "cache"))
    cb.push_back(e.path().filename());
  std::sort(ca.begin(), ca.end());
  std::sort(cb.begin(), cb.end());
  ck.expect(ca == cb, "cache artifact sets differ");
  std::size_t model_files = 0;
  for (const auto& f : ca) {
    bool same = slurp(dira / "cache" / f) == slurp(dirb / "cache" / f);
    ck.expect(same, "model file " + f.string() + " differs between runs");
    ++model_files;
  }
  ck.expect(model_files > 0, "no model files produced");

  double elapsed = seconds_since(t0);
  std::printf(
      "[%s] criterion 7: two runs with identical config and seeds are "
      "byte-identical (%zu model files, %.1fs)\n",
      ck.ok ? "PASS" : "FAIL", model_files, elapsed);
  for (const auto& n : ck.notes) std::printf("        %s\n", n.c_str());
  return ck.ok;
}

// --------------------------------------------------------------------------
// 8. Fold discipline with k = 20.

bool criterion8() {
  auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  PipelineConfig cfg;
  cfg.synth = true;
  cfg.synth_count = 700;
  cfg.synth_rate = 0.2;
  cfg.k_folds = 20;
  cfg.lstm_epochs = 1;
  cfg.reranker_iterations = 20;
  cfg.out_dir = fresh_dir("criterion8").string();
  Pipeline pipeline(cfg);
  pipeline.run();

  auto folds = fold_of(pipeline.split());
  ck.expect(pipeline.split().folds.size() == 20, "fold count != 20");
  const auto& prov = pipeline.provenance();
  ck.expect(!prov.empty(), "no provenance records");
  std::map<std::string, std::set<std::string>> models_per_utt;
  for (const auto& rec : prov) {
    auto it = folds.find(rec.utterance_id);
    if (it == folds.end()) {
      ck.expect(false, "provenance for unknown utterance " +
                           rec.utterance_id);
      continue;
    }
    ck.expect(it->second == rec.utterance_fold,
              "fold mismatch for " + rec.utterance_id);
    for (std::size_t f : rec.model_folds)
      ck.expect(f != rec.utterance_fold,
                rec.utterance_id + " scored by a model trained on its fold");
    ck.expect(rec.model_folds.size() == 19,
              "model of " + rec.model_name + " trained on " +
                  std::to_string(rec.model_folds.size()) + " folds");
    models_per_utt[rec.utterance_id].insert(rec.model_name);
  }
  // Every training utterance was scored by both directions.
  for (const auto& [id, fold] : folds) {
    (void)fold;
    auto it = models_per_utt.find(id);
    ck.expect(it != models_per_utt.end() && it->second.size() >= 2,
              "utterance " + id + " lacks fold-model scores");
  }

  double elapsed = seconds_since(t0);
  std::printf(
      "[%s] criterion 8: no training utterance scored by a model trained on "
      "its own fold (k=20, %zu records, %.1fs)\n",
      ck.ok ? "PASS" : "FAIL", prov.size(), elapsed);
  for (const auto& n : ck.notes) std::printf("        %s\n", n.c_str());
  return ck.ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  if (argc < 2 || std::string(argv[1]) == "all") {
    which = {1, 2, 3, 4, 5, 6, 7, 8};
  } else {
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  }
  bool all_ok = true;
  for (int c : which) {
    bool ok = false;
    switch (c) {
      case 1: ok = criterion1(); break;
      case 2: ok = criterion2(); break;
      case 3: ok = criterion3(); break;
      case 4: ok = criterion4(); break;
      case 5: ok = criterion5(); break;
      case 6: ok = criterion6(); break;
      case 7: ok = criterion7(); break;
      case 8: ok = criterion8(); break;
      default:
        std::fprintf(stderr, "unknown criterion %d\n", c);
        return 1;
    }
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
