// test_eval.cpp
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

#include "disfl/eval.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

using namespace disfl;

namespace {
constexpr Label O = Label::Fluent, E = Label::Edited, F = Label::Filler;

std::vector<Label> labels_at(std::size_t n, std::vector<std::size_t> where) {
  std::vector<Label> out(n, O);
  for (auto i : where) out[i] = E;
  return out;
}
}  // namespace

TEST_CASE("offset prediction: half right, error 1.0") {
  auto gold = labels_at(6, {2, 3});
  auto pred = labels_at(6, {3, 4});
  EvalReport r = score({"u0"}, {pred}, {gold});
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.f_score == 0.5);
  CHECK(r.error_rate == 1.0);
}

TEST_CASE("perfect prediction") {
  auto gold = labels_at(5, {0, 3});
  EvalReport r = score({"u0"}, {gold}, {gold});
  CHECK(r.f_score == 1.0);
  CHECK(r.error_rate == 0.0);
}

TEST_CASE("all-clean corpus follows the zero conventions") {
  auto gold = labels_at(4, {});
  EvalReport r = score({"u0"}, {gold}, {gold});
  CHECK(r.f_score == 0.0);  // 0/0 convention
  CHECK(r.error_rate == 0.0);
}

TEST_CASE("filler labels are excluded from both sides") {
  std::vector<Label> gold = {F, E, O};
  std::vector<Label> pred = {E, F, O};
  // Predicted F over gold E is a miss; predicted E over gold F is a false
  // positive; fillers themselves never count as positives.
  EvalReport r = score({"u0"}, {pred}, {gold});
  CHECK(r.tp == 0);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.gold_edits == 1);
  CHECK(r.error_rate == 2.0);
}

TEST_CASE("error rate exceeds one without clamping") {
  auto gold = labels_at(8, {0});
  auto pred = labels_at(8, {1, 2, 3, 4});
  EvalReport r = score({"u0"}, {pred}, {gold});
  CHECK(r.error_rate == 5.0);  // (4 fp + 1 fn) / 1
}

TEST_CASE("fluent-gold utterance with false positives reports infinity") {
  auto gold = labels_at(3, {});
  auto pred = labels_at(3, {1});
  EvalReport r = score({"u0"}, {pred}, {gold});
  REQUIRE(r.per_utterance.size() == 1);
  CHECK(std::isinf(r.per_utterance[0].error_rate));
  // Corpus level uses the corpus gold count, here still zero.
  CHECK(std::isinf(r.error_rate));
}

TEST_CASE("counts are additive across reordering and concatenation") {
  std::vector<std::vector<Label>> gold = {
      labels_at(5, {1}), labels_at(4, {0, 2}), labels_at(6, {})};
  std::vector<std::vector<Label>> pred = {
      labels_at(5, {1, 3}), labels_at(4, {2}), labels_at(6, {5})};
  EvalReport joint = score({"a", "b", "c"}, pred, gold);
  EvalReport swapped = score({"c", "b", "a"}, {pred[2], pred[1], pred[0]},
                             {gold[2], gold[1], gold[0]});
  CHECK(joint.f_score == swapped.f_score);
  CHECK(joint.error_rate == swapped.error_rate);

  // Pooled counts equal the sum of per-part counts.
  EvalReport part1 = score({"a"}, {pred[0]}, {gold[0]});
  EvalReport part2 = score({"b", "c"}, {pred[1], pred[2]},
                           {gold[1], gold[2]});
  CHECK(joint.tp == part1.tp + part2.tp);
  CHECK(joint.fp == part1.fp + part2.fp);
  CHECK(joint.fn == part1.fn + part2.fn);
  EvalReport pooled;
  pooled.tp = part1.tp + part2.tp;
  pooled.fp = part1.fp + part2.fp;
  pooled.fn = part1.fn + part2.fn;
  pooled.gold_edits = part1.gold_edits + part2.gold_edits;
  pooled.finalize();
  CHECK(pooled.f_score == joint.f_score);
  CHECK(pooled.error_rate == joint.error_rate);
}

TEST_CASE("self-comparison is perfect for random labelings") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 1 + rng.next_index(10);
    std::vector<Label> l;
    bool any_e = false;
    for (std::size_t i = 0; i < n; ++i) {
      l.push_back(static_cast<Label>(rng.next_index(3)));
      if (l.back() == E) any_e = true;
    }
    EvalReport r = score({"u"}, {l}, {l});
    CHECK(r.fp == 0);
    CHECK(r.fn == 0);
    if (any_e) CHECK(r.f_score == 1.0);
    CHECK(r.error_rate == 0.0);
  }
}

TEST_CASE("length mismatches are rejected") {
  CHECK_THROWS_AS(score({"u"}, {labels_at(3, {})}, {labels_at(4, {})}),
                  DataError);
  CHECK_THROWS_AS(score({"u"}, {}, {labels_at(4, {})}), DataError);
}

TEST_CASE("report serializes to json with sentinel handling") {
  auto gold = labels_at(3, {});
  auto pred = labels_at(3, {1});
  EvalReport r = score({"u0"}, {pred}, {gold});
  nlohmann::json j = r.to_json();
  CHECK(j["error_rate"] == "inf");
  CHECK(j["fp"] == 1);
  EvalReport ok = score({"u0"}, {gold}, {gold});
  CHECK(ok.to_json()["error_rate"] == 0.0);
}
