// features.hpp -- reranker feature extraction: model scores plus surface
// pattern indicators over candidate labelings.
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

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "disfl/channel.hpp"
#include "disfl/common.hpp"
#include "disfl/corpus.hpp"

namespace disfl {

// Sparse feature vector keyed by name. Boolean indicators carry value 1.
struct FeatureVector {
  std::map<std::string, double> values;

  void set(const std::string& name, double v) { values[name] = v; }
  void fire(const std::string& name) { values[name] = 1.0; }
  double get(const std::string& name) const {
    auto it = values.find(name);
    return it == values.end() ? 0.0 : it->second;
  }
  bool has(const std::string& name) const { return values.count(name) > 0; }
};

// Ordered feature-name table. Training extraction grows it; once frozen,
// unknown names are dropped rather than added (test-time behaviour).
class FeatureSpace {
 public:
  static constexpr std::uint32_t kMissing = 0xffffffffu;

  std::uint32_t intern(const std::string& name, bool is_score) {
    auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    if (frozen_) return kMissing;
    std::uint32_t id = static_cast<std::uint32_t>(names_.size());
    names_.push_back(name);
    is_score_.push_back(is_score);
    index_.emplace(name, id);
    return id;
  }

  std::uint32_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? kMissing : it->second;
  }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  std::size_t size() const { return names_.size(); }
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  bool is_score(std::uint32_t id) const { return is_score_.at(id); }

 private:
  std::vector<std::string> names_;
  std::vector<bool> is_score_;
  std::unordered_map<std::string, std::uint32_t> index_;
  bool frozen_ = false;
};

// External language-model scores attached to one candidate.
struct ScoreBundle {
  std::optional<double> fwd_lstm;
  std::optional<double> bwd_lstm;
  std::optional<double> fwd_4gram;
  std::optional<double> bwd_4gram;
};

// Which of the external scores the configuration requests as features.
struct LmFeatureRequest {
  bool fwd_lstm = false;
  bool bwd_lstm = false;
  bool fwd_4gram = false;
  bool bwd_4gram = false;
};

// Rank of the candidate in its n-best list and the list's top score.
struct CandidateContext {
  int rank = 0;
  double top_total_logprob = 0.0;
};

// CopyFlags_X_Y: an exact length-X copy (1 <= X <= 3) whose first
// occurrence is fully edited, with Y non-filler tokens (0 <= Y <= 3)
// strictly between the copies. Fillers in the gap are not counted, so an
// interregnum between reparandum and repair does not widen the gap.
inline std::set<std::string> copy_flags(const std::vector<Token>& tokens,
                                        const std::vector<Label>& labels) {
  if (tokens.size() != labels.size())
    throw DataError("copy_flags: token/label length mismatch");
  const std::size_t n = tokens.size();
  std::set<std::string> fired;
  for (std::size_t x = 1; x <= 3; ++x) {
    for (std::size_t i = 0; i + 2 * x <= n; ++i) {
      bool edited = true;
      for (std::size_t k = 0; k < x; ++k)
        if (labels[i + k] != Label::Edited) edited = false;
      if (!edited) continue;
      std::size_t gap = 0;
      for (std::size_t j = i + x; j + x <= n; ++j) {
        if (j > i + x) {
          if (labels[j - 1] != Label::Filler) ++gap;
          if (gap > 3) break;
        }
        bool match = true;
        for (std::size_t k = 0; k < x; ++k)
          if (tokens[j + k].surface != tokens[i + k].surface) match = false;
        if (match)
          fired.insert("CopyFlags_" + std::to_string(x) + "_" +
                       std::to_string(gap));
      }
    }
  }
  return fired;
}

// WordsFlags_L_n_R over every 3-token window: L/R flag an edited token
// immediately left/right of the window, n counts edited tokens inside it.
inline std::set<std::string> words_flags(const std::vector<Token>& tokens,
                                         const std::vector<Label>& labels) {
  if (tokens.size() != labels.size())
    throw DataError("words_flags: token/label length mismatch");
  std::set<std::string> fired;
  const std::size_t n = tokens.size();
  if (n < 3) return fired;
  for (std::size_t i = 0; i + 3 <= n; ++i) {
    int left = i > 0 && labels[i - 1] == Label::Edited ? 1 : 0;
    int right = i + 3 < n && labels[i + 3] == Label::Edited ? 1 : 0;
    int inside = 0;
    for (std::size_t k = 0; k < 3; ++k)
      if (labels[i + k] == Label::Edited) ++inside;
    fired.insert("WordsFlags_" + std::to_string(left) + "_" +
                 std::to_string(inside) + "_" + std::to_string(right));
  }
  return fired;
}

// SentenceEdgeFlags_B_L: an edited run touching the sentence start or end,
// with its length clamped to 3.
inline std::set<std::string> sentence_edge_flags(
    const std::vector<Token>& tokens, const std::vector<Label>& labels) {
  if (tokens.size() != labels.size())
    throw DataError("sentence_edge_flags: token/label length mismatch");
  std::set<std::string> fired;
  const std::size_t n = labels.size();
  if (n == 0) return fired;
  if (labels.front() == Label::Edited) {
    std::size_t len = 0;
    while (len < n && labels[len] == Label::Edited) ++len;
    fired.insert("SentenceEdgeFlags_initial_" +
                 std::to_string(std::min<std::size_t>(len, 3)));
  }
  if (labels.back() == Label::Edited) {
    std::size_t len = 0;
    while (len < n && labels[n - 1 - len] == Label::Edited) ++len;
    fired.insert("SentenceEdgeFlags_final_" +
                 std::to_string(std::min<std::size_t>(len, 3)));
  }
  return fired;
}

// Full feature vector for one candidate analysis. Model-score features are
// emitted only when requested; a requested score that is absent from the
// bundle is an error.
inline FeatureVector extract(const Analysis& candidate,
                             const std::vector<Token>& tokens,
                             const ScoreBundle& scores,
                             const LmFeatureRequest& request,
                             const CandidateContext& ctx) {
  FeatureVector fv;
  auto need = [&](const std::optional<double>& v, const char* what) {
    if (!v.has_value())
      throw DataError(std::string("missing score: ") + what);
    return *v;
  };
  if (request.fwd_lstm)
    fv.set("FwdLstmScore", need(scores.fwd_lstm, "forward lstm"));
  if (request.bwd_lstm)
    fv.set("BwdLstmScore", need(scores.bwd_lstm, "backward lstm"));
  if (request.fwd_4gram)
    fv.set("Fwd4gramScore", need(scores.fwd_4gram, "forward 4-gram"));
  if (request.bwd_4gram)
    fv.set("Bwd4gramScore", need(scores.bwd_4gram, "backward 4-gram"));

  fv.set("NcmTotalScore", candidate.ncm_total_logprob);
  fv.set("NcmLmScore", candidate.ncm_lm_logprob);
  fv.set("NcmRank", static_cast<double>(ctx.rank));
  fv.set("NcmScoreGap", ctx.top_total_logprob - candidate.ncm_total_logprob);
  fv.set("NumEdits", static_cast<double>(candidate.n_edits));
  fv.set("LmChannelEditSum", candidate.ncm_lm_logprob +
                                 candidate.channel_logprob +
                                 static_cast<double>(candidate.n_edits));
  fv.set("ChannelScore", candidate.channel_logprob);

  for (const auto& f : copy_flags(tokens, candidate.labels)) fv.fire(f);
  for (const auto& f : words_flags(tokens, candidate.labels)) fv.fire(f);
  for (const auto& f : sentence_edge_flags(tokens, candidate.labels))
    fv.fire(f);
  return fv;
}

// Names of the continuous features; everything else is a boolean flag.
inline bool is_score_feature(const std::string& name) {
  return name == "FwdLstmScore" || name == "BwdLstmScore" ||
         name == "Fwd4gramScore" || name == "Bwd4gramScore" ||
         name == "NcmTotalScore" || name == "NcmLmScore" ||
         name == "NcmRank" || name == "NcmScoreGap" || name == "NumEdits" ||
         name == "LmChannelEditSum" || name == "ChannelScore";
}

}  // namespace disfl
