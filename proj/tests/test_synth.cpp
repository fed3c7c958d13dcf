// test_synth.cpp
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

#include "disfl/synth.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

using namespace disfl;

namespace {

// Generating parameters for recovery checks. Two identifiability limits of
// the minimum-edit estimator shape this matrix: chains that emit nothing
// (all-DELETE) cannot occur, which conditions away part of any large
// START->DELETE mass, and substitute/insert/delete runs between copy
// anchors are tie-equivalent under reordering, so rows return to COPY
// quickly (isolated edits between copied material, which is also what
// rough copies look like).
ChannelParams recoverable_params() {
  ChannelParams p;
  p.p_start = 0.15;
  p.p_stop = 0.45;
  p.p_filler = 0.5;
  double op[5][4] = {{0.62, 0.20, 0.14, 0.04},
                     {0.58, 0.20, 0.14, 0.08},
                     {0.90, 0.05, 0.03, 0.02},
                     {0.84, 0.02, 0.13, 0.01},
                     {0.93, 0.02, 0.005, 0.045}};
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 4; ++c) p.op[r][c] = op[r][c];
  return p;
}

ChannelModel synth_model() {
  std::vector<std::string> vocab;
  for (const auto& u : generate_fluent_corpus(200, 3))
    for (const auto& t : u.tokens) vocab.push_back(t.surface);
  return ChannelModel::from_params(recoverable_params(), vocab);
}

}  // namespace

TEST_CASE("fluent generator is deterministic") {
  auto a = generate_fluent_corpus(50, 11);
  auto b = generate_fluent_corpus(50, 11);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].surfaces() == b[i].surfaces());
  auto c = generate_fluent_corpus(50, 12);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].surfaces() != c[i].surfaces()) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("rate zero is the identity with all-fluent labels") {
  auto fluent = generate_fluent_corpus(40, 5);
  auto out = synthesize_corpus(fluent, synth_model(), 0.0, 99);
  REQUIRE(out.size() == fluent.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].surfaces() == fluent[i].surfaces());
    REQUIRE(out[i].gold.has_value());
    for (Label l : *out[i].gold) CHECK(l == Label::Fluent);
    CHECK(out[i].regions.empty());
  }
}

TEST_CASE("same seed reproduces the corpus exactly") {
  auto fluent = generate_fluent_corpus(60, 5);
  ChannelModel m = synth_model();
  auto a = synthesize_corpus(fluent, m, 0.2, 123);
  auto b = synthesize_corpus(fluent, m, 0.2, 123);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].surfaces() == b[i].surfaces());
    CHECK(*a[i].gold == *b[i].gold);
  }
  auto c = synthesize_corpus(fluent, m, 0.2, 124);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].surfaces() != c[i].surfaces()) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("injected regions are structurally consistent") {
  auto fluent = generate_fluent_corpus(300, 21);
  ChannelModel m = synth_model();
  auto out = synthesize_corpus(fluent, m, 0.25, 7);
  std::size_t regions = 0, copies = 0;
  for (const auto& u : out) {
    REQUIRE(u.gold.has_value());
    REQUIRE(u.gold->size() == u.tokens.size());
    for (const auto& r : u.regions) {
      ++regions;
      REQUIRE(r.rep_begin < r.rep_end);
      REQUIRE(r.rep_end <= r.intr_begin);
      REQUIRE(r.intr_end <= r.repair_begin);
      REQUIRE(r.repair_end <= u.tokens.size());
      for (std::size_t i = r.rep_begin; i < r.rep_end; ++i)
        CHECK((*u.gold)[i] == Label::Edited);
      for (std::size_t i = r.intr_begin; i < r.intr_end; ++i)
        CHECK((*u.gold)[i] == Label::Filler);
      for (std::size_t i = r.repair_begin; i < r.repair_end; ++i)
        CHECK((*u.gold)[i] == Label::Fluent);
      // Rough copy: count regions whose reparandum begins with the first
      // repair word.
      if (r.repair_begin < r.repair_end &&
          u.tokens[r.rep_begin].surface == u.tokens[r.repair_begin].surface)
        ++copies;
    }
    // Every edited token is covered by some region.
    for (std::size_t i = 0; i < u.size(); ++i) {
      if ((*u.gold)[i] != Label::Edited) continue;
      bool covered = false;
      for (const auto& r : u.regions)
        if (i >= r.rep_begin && i < r.rep_end) covered = true;
      CHECK(covered);
    }
  }
  CHECK(regions > 100);
  // Copy-dominant ops make exact leading copies frequent.
  CHECK(copies > regions / 3);
}

TEST_CASE("a copy injection marks the first twin as edited") {
  // Single deterministic example with aggressive injection: some utterance
  // acquires the pattern "w w" with the first token edited.
  auto fluent = generate_fluent_corpus(50, 2);
  ChannelModel m = synth_model();
  auto out = synthesize_corpus(fluent, m, 0.5, 31);
  bool found = false;
  for (const auto& u : out) {
    for (const auto& r : u.regions) {
      if (r.rep_end - r.rep_begin != 1 || r.repair_begin >= r.repair_end)
        continue;
      if (u.tokens[r.rep_begin].surface != u.tokens[r.repair_begin].surface)
        continue;
      if (r.repair_begin != r.rep_end) continue;  // want adjacent twins
      found = true;
      CHECK((*u.gold)[r.rep_begin] == Label::Edited);
      CHECK((*u.gold)[r.repair_begin] == Label::Fluent);
    }
  }
  CHECK(found);
}

TEST_CASE("channel training recovers the generating op distribution") {
  // Long sentences keep chain feasibility from binding; enough material for
  // at least 10k injected regions.
  auto base = generate_fluent_corpus(24000, 17);
  std::vector<Utterance> fluent;
  for (std::size_t i = 0; i + 2 < base.size(); i += 3) {
    Utterance u;
    u.id = base[i].id;
    for (std::size_t k = 0; k < 3; ++k)
      for (const auto& t : base[i + k].tokens) u.tokens.push_back(t);
    fluent.push_back(std::move(u));
  }
  ChannelModel truth = synth_model();
  SynthesisOptions opt;
  opt.max_reparandum = 12;
  auto corpus = synthesize_corpus(fluent, truth, 0.08, 1234, opt);
  std::size_t regions = 0;
  for (const auto& u : corpus) regions += u.regions.size();
  REQUIRE(regions >= 10000);

  ChannelModel learned = ChannelModel::train(corpus);
  const auto& want = truth.params();
  const auto& got = learned.params();
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 4; ++c) {
      INFO("op row " << r << " col " << c << ": want " << want.op[r][c]
                     << " got " << got.op[r][c]);
      CHECK(std::abs(got.op[r][c] - want.op[r][c]) <= 0.05);
    }
  }
  CHECK(std::abs(got.p_stop - want.p_stop) <= 0.05);
}
