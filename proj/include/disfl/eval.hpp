// eval.hpp -- token-level scoring of edited-word detection: f-score and
// error rate (falsely labelled words over gold reparandum words).
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

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "disfl/common.hpp"
#include "disfl/corpus.hpp"

namespace disfl {

// Only the EDITED class is scored; filler labels count as negatives on
// both sides.
struct UtteranceEval {
  std::string id;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  std::uint64_t gold_edits = 0;
  // (fp + fn) / gold_edits; infinity when a fluent-gold utterance has
  // false positives, 0 when both are clean.
  double error_rate = 0.0;
};

struct EvalReport {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  std::uint64_t gold_edits = 0;
  double precision = 0.0, recall = 0.0, f_score = 0.0;
  double error_rate = 0.0;
  std::vector<UtteranceEval> per_utterance;

  void finalize() {
    precision = tp + fp == 0 ? 0.0
                             : static_cast<double>(tp) /
                                   static_cast<double>(tp + fp);
    recall = tp + fn == 0
                 ? 0.0
                 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    f_score = precision + recall == 0.0
                  ? 0.0
                  : 2.0 * precision * recall / (precision + recall);
    if (gold_edits > 0) {
      error_rate = static_cast<double>(fp + fn) /
                   static_cast<double>(gold_edits);
    } else {
      error_rate = fp + fn == 0
                       ? 0.0
                       : std::numeric_limits<double>::infinity();
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tp"] = tp;
    j["fp"] = fp;
    j["fn"] = fn;
    j["gold_edits"] = gold_edits;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f_score"] = f_score;
    if (std::isinf(error_rate))
      j["error_rate"] = "inf";
    else
      j["error_rate"] = error_rate;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& u : per_utterance) {
      nlohmann::json ju;
      ju["id"] = u.id;
      ju["tp"] = u.tp;
      ju["fp"] = u.fp;
      ju["fn"] = u.fn;
      if (std::isinf(u.error_rate))
        ju["error_rate"] = "inf";
      else
        ju["error_rate"] = u.error_rate;
      per.push_back(ju);
    }
    j["per_utterance"] = per;
    return j;
  }

  std::string table() const {
    std::ostringstream os;
    os << "tokens: tp " << tp << "  fp " << fp << "  fn " << fn
       << "  gold-edited " << gold_edits << "\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "precision %.4f  recall %.4f  f-score %.4f  error %.4f\n",
                  precision, recall, f_score, error_rate);
    os << buf;
    return os.str();
  }
};

// Token-level comparison over aligned utterances. Lengths must match pair
// by pair.
inline EvalReport score(const std::vector<std::string>& ids,
                        const std::vector<std::vector<Label>>& predicted,
                        const std::vector<std::vector<Label>>& gold) {
  if (predicted.size() != gold.size() || ids.size() != gold.size())
    throw DataError("score: corpus size mismatch");
  EvalReport rep;
  for (std::size_t u = 0; u < gold.size(); ++u) {
    if (predicted[u].size() != gold[u].size())
      throw DataError("score: utterance length mismatch at " + ids[u]);
    UtteranceEval ue;
    ue.id = ids[u];
    for (std::size_t i = 0; i < gold[u].size(); ++i) {
      bool pe = predicted[u][i] == Label::Edited;
      bool ge = gold[u][i] == Label::Edited;
      if (ge) ++ue.gold_edits;
      if (pe && ge) ++ue.tp;
      if (pe && !ge) ++ue.fp;
      if (!pe && ge) ++ue.fn;
    }
    if (ue.gold_edits > 0)
      ue.error_rate = static_cast<double>(ue.fp + ue.fn) /
                      static_cast<double>(ue.gold_edits);
    else
      ue.error_rate = ue.fp == 0
                          ? 0.0
                          : std::numeric_limits<double>::infinity();
    rep.tp += ue.tp;
    rep.fp += ue.fp;
    rep.fn += ue.fn;
    rep.gold_edits += ue.gold_edits;
    rep.per_utterance.push_back(std::move(ue));
  }
  rep.finalize();
  return rep;
}

inline EvalReport score_utterances(const std::vector<Utterance>& gold_utts,
                                   const std::vector<std::vector<Label>>&
                                       predicted) {
  std::vector<std::string> ids;
  std::vector<std::vector<Label>> gold;
  for (const auto& u : gold_utts) {
    if (!u.gold) throw DataError("score: utterance without gold labels");
    ids.push_back(u.id);
    gold.push_back(*u.gold);
  }
  return score(ids, predicted, gold);
}

}  // namespace disfl
