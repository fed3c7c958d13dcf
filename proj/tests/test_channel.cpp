// test_channel.cpp
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

#include "disfl/channel.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <map>
#include <sstream>

using namespace disfl;

namespace {

ChannelParams test_params() {
  ChannelParams p;
  p.p_start = 0.1;
  p.p_stop = 0.4;
  p.p_filler = 0.5;
  return p;
}

std::vector<std::string> channel_vocab() {
  return {"a", "b", "c", "to", "boston", "denver", "flight", "want"};
}

ChannelModel test_model() {
  return ChannelModel::from_params(test_params(), channel_vocab());
}

NgramModel test_bigram() {
  return NgramModel::train_on_sentences(
      {{"a", "flight", "to", "denver"},
       {"a", "flight", "to", "boston"},
       {"i", "want", "a", "flight"},
       {"a", "b", "c"},
       {"b", "a", "c"},
       {"c", "b"}},
      2);
}

Utterance utt(const std::vector<std::string>& words) {
  Utterance u;
  u.id = "t";
  u.tokens = make_tokens(words);
  return u;
}

const Analysis* find_labels(const CandidateList& list,
                            const std::vector<Label>& labels) {
  for (const auto& c : list.candidates)
    if (c.labels == labels) return &c;
  return nullptr;
}

// Set-wise equivalence with score agreement, plus identical ranking.
void check_equivalent(const CandidateList& fast, const CandidateList& slow) {
  REQUIRE(fast.candidates.size() == slow.candidates.size());
  std::map<std::vector<Label>, double> fast_scores, slow_scores;
  for (const auto& c : fast.candidates)
    fast_scores[c.labels] = c.ncm_total_logprob;
  for (const auto& c : slow.candidates)
    slow_scores[c.labels] = c.ncm_total_logprob;
  REQUIRE(fast_scores.size() == fast.candidates.size());
  for (const auto& [labels, score] : slow_scores) {
    auto it = fast_scores.find(labels);
    REQUIRE(it != fast_scores.end());
    CHECK(std::abs(it->second - score) <= 1e-9);
  }
  for (std::size_t i = 0; i < fast.candidates.size(); ++i) {
    CHECK(std::abs(fast.candidates[i].ncm_total_logprob -
                   slow.candidates[i].ncm_total_logprob) <= 1e-9);
  }
}

}  // namespace

TEST_CASE("all-fluent analysis scores n * log(1 - p_start)") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  Utterance u = utt({"a", "b", "c", "a"});
  CandidateList list = nbest(u, m, lm, 25, 1000, SearchLimits{0, 0, 0});
  const Analysis* af = find_labels(
      list, {Label::Fluent, Label::Fluent, Label::Fluent, Label::Fluent});
  REQUIRE(af != nullptr);
  CHECK(af->channel_logprob ==
        Catch::Approx(4.0 * std::log(0.9)).margin(1e-12));
  CHECK(score_channel(*af, m) ==
        Catch::Approx(af->channel_logprob).margin(1e-12));
}

TEST_CASE("single copy repeat matches the hand expansion") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  Utterance u = utt({"to", "to"});
  CandidateList list = nbest(u, m, lm, 25, 1000, SearchLimits{0, 0, 0});
  const Analysis* cand = find_labels(list, {Label::Edited, Label::Fluent});
  REQUIRE(cand != nullptr);
  // One region: start, a single COPY op from the chain-initial state, stop.
  // The repeated token is consumed as repair, so no other factor applies.
  double want = std::log(0.1) + std::log(test_params().op[0][0]) +
                std::log(0.4);
  CHECK(cand->channel_logprob == Catch::Approx(want).margin(1e-12));
  REQUIRE(cand->repairs.size() == 1);
  REQUIRE(cand->repairs[0].alignment.size() == 1);
  CHECK(cand->repairs[0].alignment[0].kind == AlignKind::Copy);
  CHECK(score_channel(*cand, m) ==
        Catch::Approx(cand->channel_logprob).margin(1e-12));
}

TEST_CASE("score_channel rejects malformed spans") {
  ChannelModel m = test_model();
  Analysis a;
  a.utterance_id = "t";
  a.labels = {Label::Edited, Label::Edited, Label::Fluent};
  RepairRegion r1;
  r1.reparandum = {0, 2};
  r1.interregnum = {2, 2};
  r1.repair = {1, 3};  // overlaps the reparandum
  r1.alignment.push_back(AlignOp{AlignKind::Insert, "a", std::nullopt});
  a.repairs.push_back(r1);
  CHECK_THROWS_AS(score_channel(a, m), DataError);

  a.repairs.clear();
  RepairRegion r2;
  r2.reparandum = {1, 1};  // empty reparandum
  r2.interregnum = {1, 1};
  r2.repair = {1, 1};
  a.repairs.push_back(r2);
  CHECK_THROWS_AS(score_channel(a, m), DataError);
}

TEST_CASE("one-token utterance enumerates exactly two analyses") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  CandidateList list = brute_force_nbest(utt({"a"}), m, lm, 100);
  REQUIRE(list.candidates.size() == 2);
  bool saw_fluent = false, saw_edited = false;
  for (const auto& c : list.candidates) {
    if (c.labels == std::vector<Label>{Label::Fluent}) saw_fluent = true;
    if (c.labels == std::vector<Label>{Label::Edited}) {
      saw_edited = true;
      REQUIRE(c.repairs.size() == 1);
      CHECK(c.repairs[0].repair.empty());
      REQUIRE(c.repairs[0].alignment.size() == 1);
      CHECK(c.repairs[0].alignment[0].kind == AlignKind::Insert);
    }
  }
  CHECK(saw_fluent);
  CHECK(saw_edited);
}

TEST_CASE("brute force rejects long inputs") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  Utterance u =
      utt({"a", "b", "c", "a", "b", "c", "a", "b", "c", "a", "b", "c", "a"});
  REQUIRE(u.size() == 13);
  CHECK_THROWS_AS(brute_force_nbest(u, m, lm, 5), DataError);
}

TEST_CASE("decoder matches the exhaustive reference on random inputs") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  static const std::vector<std::string> pool = {"a",  "b",      "c",
                                                "to", "boston", "uh"};
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> words;
    std::size_t len = 1 + rng.next_index(10);
    for (std::size_t i = 0; i < len; ++i)
      words.push_back(pool[rng.next_index(pool.size())]);
    Utterance u = utt(words);
    CandidateList fast =
        nbest(u, m, lm, 25, 100000000, SearchLimits{0, 0, 0});
    CandidateList slow = brute_force_nbest(u, m, lm, 25);
    INFO("trial " << trial);
    check_equivalent(fast, slow);
  }
}

TEST_CASE("every candidate list contains the all-fluent analysis") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  Rng rng(77);
  static const std::vector<std::string> pool = {"to", "to", "b", "uh", "a"};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::string> words;
    std::size_t len = 1 + rng.next_index(8);
    for (std::size_t i = 0; i < len; ++i)
      words.push_back(pool[rng.next_index(pool.size())]);
    for (int n : {1, 3, 25}) {
      CandidateList list = nbest(utt(words), m, lm, n);
      bool has_af = false;
      for (const auto& c : list.candidates)
        if (c.n_edits == 0) has_af = true;
      CHECK(has_af);
      CHECK(list.candidates.size() <= static_cast<std::size_t>(n));
    }
  }
}

TEST_CASE("increasing n preserves previously returned candidates") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  Utterance u = utt({"to", "to", "b", "a", "to", "b"});
  SearchLimits unlimited{0, 0, 0};
  CandidateList prev = nbest(u, m, lm, 1, 100000000, unlimited);
  for (int n = 2; n <= 40; ++n) {
    CandidateList cur = nbest(u, m, lm, n, 100000000, unlimited);
    for (const auto& c : prev.candidates)
      CHECK(find_labels(cur, c.labels) != nullptr);
    prev = std::move(cur);
  }
}

TEST_CASE("channel mass over all analyses is a sub-distribution") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  static const std::vector<std::string> pool = {"a", "b", "to", "uh"};
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::string> words;
    std::size_t len = 1 + rng.next_index(7);
    for (std::size_t i = 0; i < len; ++i)
      words.push_back(pool[rng.next_index(pool.size())]);
    CandidateList all = brute_force_nbest(utt(words), m, lm, 1 << 12);
    double mass = 0.0;
    for (const auto& c : all.candidates) {
      CHECK(c.channel_logprob <= 0.0);
      mass += std::exp(c.channel_logprob);
    }
    INFO("trial " << trial << " mass " << mass);
    CHECK(mass <= 1.0 + 1e-12);
  }
}

TEST_CASE("fluent tokens minus labels reproduce the fluent field") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  Utterance u = utt({"a", "flight", "to", "boston", "uh", "to", "denver"});
  CandidateList list = nbest(u, m, lm, 25);
  for (const auto& c : list.candidates) {
    std::vector<std::string> want;
    for (std::size_t i = 0; i < u.size(); ++i)
      if (c.labels[i] == Label::Fluent) want.push_back(u.tokens[i].surface);
    CHECK(c.fluent == want);
    CHECK(c.ncm_total_logprob ==
          Catch::Approx(c.channel_logprob + c.ncm_lm_logprob).margin(1e-12));
    CHECK(score_channel(c, m) ==
          Catch::Approx(c.channel_logprob).margin(1e-9));
  }
}

TEST_CASE("the annotated example analysis appears in the 25-best") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  Utterance u = utt(
      {"a", "flight", "to", "boston", "uh", "i", "mean", "to", "denver"});
  CandidateList list = nbest(u, m, lm, 25);
  // "uh i mean" is fixed as filler; the target candidate marks "to boston"
  // as the reparandum repaired by "to denver".
  std::vector<Label> want = {Label::Fluent, Label::Fluent, Label::Edited,
                             Label::Edited, Label::Filler, Label::Filler,
                             Label::Filler, Label::Fluent, Label::Fluent};
  const Analysis* cand = find_labels(list, want);
  REQUIRE(cand != nullptr);
  REQUIRE(cand->repairs.size() == 1);
  CHECK(cand->repairs[0].reparandum.begin == 2);
  CHECK(cand->repairs[0].reparandum.end == 4);
  CHECK(cand->repairs[0].interregnum.begin == 4);
  CHECK(cand->repairs[0].interregnum.end == 7);
  CHECK(cand->repairs[0].repair.begin == 7);
  CHECK(cand->repairs[0].repair.end == 9);
  CHECK(cand->fluent ==
        std::vector<std::string>{"a", "flight", "to", "denver"});
}

TEST_CASE("tiny start probability keeps fluent utterances fluent") {
  ChannelParams p = test_params();
  p.p_start = 1e-6;
  ChannelModel m = ChannelModel::from_params(p, channel_vocab());
  NgramModel lm = test_bigram();
  CandidateList list = nbest(utt({"a", "flight", "to", "denver"}), m, lm, 25);
  CHECK(list.top().n_edits == 0);
}

TEST_CASE("decoder output is deterministic") {
  ChannelModel m = test_model();
  NgramModel lm = test_bigram();
  Utterance u = utt({"to", "to", "b", "a", "uh", "to"});
  CandidateList x = nbest(u, m, lm, 25);
  CandidateList y = nbest(u, m, lm, 25);
  REQUIRE(x.candidates.size() == y.candidates.size());
  for (std::size_t i = 0; i < x.candidates.size(); ++i) {
    CHECK(x.candidates[i].labels == y.candidates[i].labels);
    CHECK(x.candidates[i].ncm_total_logprob ==
          y.candidates[i].ncm_total_logprob);
  }
}

TEST_CASE("training concentrates ops on copies for repeat-only data") {
  std::vector<Utterance> corpus;
  for (int i = 0; i < 50; ++i) {
    Utterance u = utt({"a", "b", "b", "c"});
    u.gold = std::vector<Label>{Label::Fluent, Label::Edited, Label::Fluent,
                                Label::Fluent};
    corpus.push_back(u);
  }
  ChannelModel m = ChannelModel::train(corpus);
  const auto& p = m.params();
  CHECK(p.op[ChannelModel::kStart][static_cast<int>(AlignKind::Copy)] >
        p.op[ChannelModel::kStart][static_cast<int>(AlignKind::Substitute)]);
  CHECK(p.op[ChannelModel::kStart][static_cast<int>(AlignKind::Copy)] > 0.9);
}

TEST_CASE("training without any repairs is an error") {
  std::vector<Utterance> corpus;
  Utterance u = utt({"a", "b"});
  u.gold = std::vector<Label>{Label::Fluent, Label::Fluent};
  corpus.push_back(u);
  CHECK_THROWS_AS(ChannelModel::train(corpus), DataError);
}

TEST_CASE("channel model container round-trips") {
  std::vector<Utterance> corpus;
  for (int i = 0; i < 20; ++i) {
    Utterance u = utt({"a", "b", "b", "c"});
    u.gold = std::vector<Label>{Label::Fluent, Label::Edited, Label::Fluent,
                                Label::Fluent};
    corpus.push_back(u);
    Utterance v = utt({"to", "boston", "to", "denver"});
    v.gold = std::vector<Label>{Label::Edited, Label::Edited, Label::Fluent,
                                Label::Fluent};
    corpus.push_back(v);
  }
  ChannelModel m = ChannelModel::train(corpus);
  std::ostringstream os1;
  m.save(os1);
  std::istringstream is(os1.str());
  ChannelModel back = ChannelModel::load(is);
  std::ostringstream os2;
  back.save(os2);
  CHECK(os1.str() == os2.str());

  NgramModel lm = test_bigram();
  Utterance u = utt({"to", "boston", "to", "denver"});
  CandidateList x = nbest(u, m, lm, 10);
  CandidateList y = nbest(u, back, lm, 10);
  REQUIRE(x.candidates.size() == y.candidates.size());
  for (std::size_t i = 0; i < x.candidates.size(); ++i)
    CHECK(x.candidates[i].ncm_total_logprob ==
          y.candidates[i].ncm_total_logprob);
}
