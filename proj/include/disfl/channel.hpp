// channel.hpp -- noisy-channel model of disfluency: a first-order Markov
// transducer over reparandum words conditioned on the aligned repair, with
// dynamic-programming n-best extraction and an exhaustive reference search
// for short inputs.
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
//
// Scoring semantics. An analysis is a labeling of the utterance; filler
// tokens are fixed in advance by lexicon lookup and every other token is
// fluent or edited. Each maximal edited run is one repair region whose
// repair is the following stretch of p >= 0 fluent tokens (p = 0 is a
// restart). The channel probability of a labeling is the maximum over
// region structures of
//
//     prod_(fluent tokens outside repair spans) (1 - p_start)
//   * prod_(regions) p_start * P(op chain)
//   * p_filler ^ (#filler tokens)
//
// where an op chain generates the reparandum conditioned on the repair:
// first op drawn from P(op | START), later ops from P(op | previous op)
// with continuation probability (1 - p_stop) before each subsequent op and
// a final stop factor p_stop. COPY emits the aligned repair word, SUBSTITUTE
// emits a different word from the substitution distribution, INSERT emits a
// word with no repair-side alignment, DELETE consumes a repair word
// silently. Fluent tokens inside a repair span carry no start/no-start
// decision; their probability lives in the language-model factor.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "disfl/common.hpp"
#include "disfl/corpus.hpp"
#include "disfl/ngram.hpp"

namespace disfl {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class AlignKind : std::uint8_t {
  Copy = 0,
  Substitute = 1,
  Insert = 2,
  Delete = 3
};

inline const char* align_kind_name(AlignKind k) {
  switch (k) {
    case AlignKind::Copy: return "COPY";
    case AlignKind::Substitute: return "SUBSTITUTE";
    case AlignKind::Insert: return "INSERT";
    case AlignKind::Delete: return "DELETE";
  }
  return "?";
}

struct AlignOp {
  AlignKind kind;
  std::optional<std::string> reparandum_word;  // COPY/SUBSTITUTE/INSERT
  std::optional<std::string> repair_word;      // COPY/SUBSTITUTE/DELETE
};

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool empty() const { return begin >= end; }
  std::size_t size() const { return end - begin; }
};

struct RepairRegion {
  Span reparandum;
  Span interregnum;  // possibly empty
  Span repair;       // possibly empty (restart)
  std::vector<AlignOp> alignment;
};

struct Analysis {
  std::string utterance_id;
  std::vector<Label> labels;
  std::vector<std::string> fluent;  // tokens minus edited/filler positions
  std::vector<RepairRegion> repairs;
  double channel_logprob = 0.0;
  double ncm_lm_logprob = 0.0;
  double ncm_total_logprob = 0.0;
  int n_edits = 0;
};

struct CandidateList {
  Utterance utterance;
  std::vector<Analysis> candidates;  // descending by ncm_total_logprob
  int n = 0;

  const Analysis& top() const {
    if (candidates.empty()) throw DataError("empty candidate list");
    return candidates.front();
  }
};

// Deterministic candidate order: total score descending, ties broken
// lexicographically on the label sequence (fluent < edited < filler).
inline bool candidate_before(const Analysis& a, const Analysis& b) {
  if (a.ncm_total_logprob != b.ncm_total_logprob)
    return a.ncm_total_logprob > b.ncm_total_logprob;
  return a.labels < b.labels;
}

struct ChannelParams {
  double p_start = 0.05;
  double p_stop = 0.4;
  double p_filler = 0.5;
  // Rows: previous op {START, COPY, SUBSTITUTE, INSERT, DELETE}; columns:
  // next op {COPY, SUBSTITUTE, INSERT, DELETE}. Each row sums to 1.
  double op[5][4] = {{0.55, 0.2, 0.15, 0.10},
                     {0.55, 0.2, 0.15, 0.10},
                     {0.45, 0.3, 0.15, 0.10},
                     {0.40, 0.2, 0.30, 0.10},
                     {0.45, 0.2, 0.15, 0.20}};
};

class ChannelModel {
 public:
  static constexpr int kStart = 0;  // row index for chain-initial ops
  static constexpr std::uint32_t kNullRepair = 0xffffffffu;
  static constexpr char kMagic[6] = "DFCH1";

  ChannelModel() : lexicon_(FillerLexicon::defaults()) {}

  // A substitution observation used to seed fixed-parameter models: the
  // reparandum word `word` aligned against repair-side `context`, or an
  // insertion when `context` is empty.
  struct SubSeed {
    std::string context;
    std::string word;
    std::uint64_t count = 1;
  };

  // Fixed-parameter construction. Without seeds the substitution
  // distribution is uniform over the word support. Used by tests and the
  // synthesizer.
  static ChannelModel from_params(const ChannelParams& p,
                                  const std::vector<std::string>& words,
                                  FillerLexicon lexicon =
                                      FillerLexicon::defaults(),
                                  double alpha = 0.1,
                                  const std::vector<SubSeed>& seeds = {}) {
    ChannelModel m;
    m.params_ = p;
    m.alpha_ = alpha;
    m.lexicon_ = std::move(lexicon);
    for (const auto& w : words) m.vocab_.add(w);
    for (const auto& s : seeds) {
      std::uint32_t ctx = s.context.empty() ? kNullRepair
                                            : m.vocab_.add(s.context);
      std::uint32_t w = m.vocab_.add(s.word);
      m.sub_counts_[sub_key(ctx, w)] += s.count;
      m.sub_totals_[ctx] += s.count;
    }
    m.validate();
    return m;
  }

  // Estimates every component distribution from gold-annotated utterances.
  // Alignments come from minimum-edit-distance alignment of each reparandum
  // to its repair; all distributions get add-alpha smoothing.
  static ChannelModel train(const std::vector<Utterance>& annotated,
                            FillerLexicon lexicon = FillerLexicon::defaults(),
                            double alpha = 0.1);

  const FillerLexicon& lexicon() const { return lexicon_; }
  const Vocab& vocab() const { return vocab_; }
  const ChannelParams& params() const { return params_; }

  double log_start() const { return std::log(params_.p_start); }
  double log_no_start() const { return std::log1p(-params_.p_start); }
  double log_stop() const { return std::log(params_.p_stop); }
  double log_continue() const { return std::log1p(-params_.p_stop); }
  double log_filler() const { return std::log(params_.p_filler); }

  double log_op(int prev_row, AlignKind k) const {
    return std::log(params_.op[prev_row][static_cast<int>(k)]);
  }

  static int row_of(AlignKind k) { return static_cast<int>(k) + 1; }

  // Substitution support: every vocab word plus the unknown class, never
  // the boundary symbols.
  std::size_t substitution_support() const { return vocab_.size() - 2; }

  double substitution_prob(std::uint32_t repair_ctx, std::uint32_t word) const {
    double total = 0.0;
    auto tit = sub_totals_.find(repair_ctx);
    if (tit != sub_totals_.end()) total = static_cast<double>(tit->second);
    double c = 0.0;
    auto cit = sub_counts_.find(sub_key(repair_ctx, word));
    if (cit != sub_counts_.end()) c = static_cast<double>(cit->second);
    return (c + alpha_) /
           (total + alpha_ * static_cast<double>(substitution_support()));
  }

  double log_substitution(std::uint32_t repair_ctx, std::uint32_t word) const {
    return std::log(substitution_prob(repair_ctx, word));
  }

  std::uint32_t word_id(const std::string& w) const {
    std::uint32_t id = vocab_.lookup(w);
    return id == Vocab::kBos || id == Vocab::kEos ? Vocab::kUnk : id;
  }

  void validate() const {
    auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in_unit(params_.p_start) || !in_unit(params_.p_stop) ||
        !in_unit(params_.p_filler))
      throw NumericError("channel parameter outside (0,1)");
    for (int r = 0; r < 5; ++r) {
      double sum = 0.0;
      for (int c = 0; c < 4; ++c) {
        if (!in_unit(params_.op[r][c]))
          throw NumericError("op transition outside (0,1)");
        sum += params_.op[r][c];
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw NumericError("op transition row does not sum to 1");
    }
  }

  void save(std::ostream& os) const {
    BinaryWriter bw(os);
    bw.magic(kMagic);
    bw.f64(params_.p_start);
    bw.f64(params_.p_stop);
    bw.f64(params_.p_filler);
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 4; ++c) bw.f64(params_.op[r][c]);
    bw.f64(alpha_);
    vocab_.save(bw);
    std::vector<std::uint64_t> keys;
    keys.reserve(sub_counts_.size());
    for (const auto& [k, v] : sub_counts_) {
      (void)v;
      keys.push_back(k);
    }
    std::sort(keys.begin(), keys.end());
    bw.u64(keys.size());
    for (auto k : keys) {
      bw.u64(k);
      bw.u64(sub_counts_.at(k));
    }
    bw.u64(lexicon_.entries().size());
    for (const auto& e : lexicon_.entries()) {
      bw.u64(e.size());
      for (const auto& w : e) bw.str(w);
    }
  }

  static ChannelModel load(std::istream& is) {
    BinaryReader br(is);
    br.expect_magic(kMagic);
    ChannelModel m;
    m.params_.p_start = br.f64();
    m.params_.p_stop = br.f64();
    m.params_.p_filler = br.f64();
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 4; ++c) m.params_.op[r][c] = br.f64();
    m.alpha_ = br.f64();
    m.vocab_ = Vocab::load(br);
    std::uint64_t n = br.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint64_t k = br.u64();
      m.sub_counts_[k] = br.u64();
      m.sub_totals_[static_cast<std::uint32_t>(k >> 32)] += m.sub_counts_[k];
    }
    std::uint64_t ne = br.u64();
    std::vector<std::vector<std::string>> entries;
    for (std::uint64_t i = 0; i < ne; ++i) {
      std::uint64_t len = br.u64();
      std::vector<std::string> e;
      for (std::uint64_t j = 0; j < len; ++j) e.push_back(br.str());
      entries.push_back(std::move(e));
    }
    m.lexicon_ = FillerLexicon(std::move(entries));
    m.validate();
    return m;
  }

 private:
  static std::uint64_t sub_key(std::uint32_t ctx, std::uint32_t w) {
    return (static_cast<std::uint64_t>(ctx) << 32) | w;
  }

  ChannelParams params_;
  double alpha_ = 0.1;
  Vocab vocab_;
  FillerLexicon lexicon_;
  std::unordered_map<std::uint64_t, std::uint64_t> sub_counts_;
  std::unordered_map<std::uint32_t, std::uint64_t> sub_totals_;

  friend class ChannelTrainer;
};

// View of an utterance with lexicon fillers fixed: the search operates on
// the projected (non-filler) token sequence.
struct FillerProjection {
  std::vector<std::size_t> to_utterance;  // projected index -> token index
  std::vector<bool> is_filler;            // per utterance token
  std::vector<std::string> words;         // projected surfaces
  std::size_t filler_count = 0;

  static FillerProjection of(const Utterance& u, const FillerLexicon& lex) {
    FillerProjection p;
    p.is_filler = lex.mark(u.tokens);
    for (std::size_t i = 0; i < u.tokens.size(); ++i) {
      if (p.is_filler[i]) {
        ++p.filler_count;
        continue;
      }
      p.to_utterance.push_back(i);
      p.words.push_back(u.tokens[i].surface);
    }
    return p;
  }

  std::size_t size() const { return words.size(); }
};

namespace detail {

// Best-op-chain table for the n-best decoder. For a reparandum at projected
// positions [a, a+q) the forward pass over the (reparandum cursor, repair
// cursor, last op) grid yields, in one sweep, the best chain log probability
// for every repair length p.
class ChainTable {
 public:
  ChainTable(const ChannelModel& model, const FillerProjection& proj)
      : model_(model), proj_(proj), n_(proj.size()) {
    ids_.reserve(n_);
    for (const auto& w : proj.words) ids_.push_back(model.word_id(w));
  }

  // best[p] for p in 0..p_max; kNegInf where no valid chain exists.
  const std::vector<double>& best_for(std::size_t a, std::size_t q,
                                      std::size_t p_max) {
    Key key{a, q};
    auto it = cache_.find(pack(key));
    if (it != cache_.end() && it->second.size() >= p_max + 1)
      return it->second;
    std::vector<double> best = compute(a, q, p_max);
    auto [jt, inserted] = cache_.insert_or_assign(pack(key), std::move(best));
    (void)inserted;
    return jt->second;
  }

  // Op sequence realizing best_for(a, q)[p]; empty if unreachable.
  std::vector<AlignOp> backtrace(std::size_t a, std::size_t q,
                                 std::size_t p) const;

 private:
  struct Key {
    std::size_t a, q;
  };
  static std::uint64_t pack(Key k) {
    return (static_cast<std::uint64_t>(k.a) << 32) | k.q;
  }

  std::vector<double> compute(std::size_t a, std::size_t q,
                              std::size_t p_max) const;

  const ChannelModel& model_;
  const FillerProjection& proj_;
  std::size_t n_;
  std::vector<std::uint32_t> ids_;
  std::unordered_map<std::uint64_t, std::vector<double>> cache_;
};

inline std::vector<double> ChainTable::compute(std::size_t a, std::size_t q,
                                               std::size_t p_max) const {
  // v[r][m][op] = best log prob of ops covering r reparandum and m repair
  // words, ending with `op` (1..4; 0 = chain start), without the stop factor.
  const std::size_t rows = q + 1, cols = p_max + 1;
  std::vector<double> v(rows * cols * 5, kNegInf);
  auto at = [&](std::size_t r, std::size_t m, int op) -> double& {
    return v[(r * cols + m) * 5 + static_cast<std::size_t>(op)];
  };
  at(0, 0, ChannelModel::kStart) = 0.0;
  for (std::size_t r = 0; r <= q; ++r) {
    for (std::size_t m = 0; m <= p_max; ++m) {
      for (int op = 0; op < 5; ++op) {
        double base = at(r, m, op);
        if (base == kNegInf) continue;
        double cont = op == ChannelModel::kStart ? 0.0 : model_.log_continue();
        std::uint32_t rep_word = r < q ? ids_[a + r] : 0;
        std::uint32_t repair_word = m < p_max ? ids_[a + q + m] : 0;
        bool words_equal =
            r < q && m < p_max && proj_.words[a + r] == proj_.words[a + q + m];
        if (r < q && m < p_max && words_equal) {
          double s = base + cont + model_.log_op(op, AlignKind::Copy);
          double& dst = at(r + 1, m + 1, ChannelModel::row_of(AlignKind::Copy));
          dst = std::max(dst, s);
        }
        if (r < q && m < p_max && !words_equal) {
          double s = base + cont + model_.log_op(op, AlignKind::Substitute) +
                     model_.log_substitution(repair_word, rep_word);
          double& dst =
              at(r + 1, m + 1, ChannelModel::row_of(AlignKind::Substitute));
          dst = std::max(dst, s);
        }
        if (r < q) {
          double s = base + cont + model_.log_op(op, AlignKind::Insert) +
                     model_.log_substitution(ChannelModel::kNullRepair,
                                             rep_word);
          double& dst = at(r + 1, m, ChannelModel::row_of(AlignKind::Insert));
          dst = std::max(dst, s);
        }
        if (m < p_max) {
          double s = base + cont + model_.log_op(op, AlignKind::Delete);
          double& dst = at(r, m + 1, ChannelModel::row_of(AlignKind::Delete));
          dst = std::max(dst, s);
        }
      }
    }
  }
  std::vector<double> best(p_max + 1, kNegInf);
  for (std::size_t p = 0; p <= p_max; ++p) {
    double b = kNegInf;
    for (int op = 1; op < 5; ++op) b = std::max(b, at(q, p, op));
    if (b != kNegInf) best[p] = b + model_.log_stop();
  }
  return best;
}

inline std::vector<AlignOp> ChainTable::backtrace(std::size_t a, std::size_t q,
                                                  std::size_t p) const {
  // Recompute the grid with parents; regions in final candidates are few.
  const std::size_t rows = q + 1, cols = p + 1;
  std::vector<double> v(rows * cols * 5, kNegInf);
  std::vector<int> parent(rows * cols * 5, -1);
  auto idx = [&](std::size_t r, std::size_t m, int op) {
    return (r * cols + m) * 5 + static_cast<std::size_t>(op);
  };
  v[idx(0, 0, ChannelModel::kStart)] = 0.0;
  for (std::size_t r = 0; r <= q; ++r) {
    for (std::size_t m = 0; m <= p; ++m) {
      for (int op = 0; op < 5; ++op) {
        double base = v[idx(r, m, op)];
        if (base == kNegInf) continue;
        double cont = op == ChannelModel::kStart ? 0.0 : model_.log_continue();
        auto relax = [&](std::size_t r2, std::size_t m2, AlignKind k,
                         double extra) {
          double s = base + cont + model_.log_op(op, k) + extra;
          std::size_t di = idx(r2, m2, ChannelModel::row_of(k));
          if (s > v[di]) {
            v[di] = s;
            parent[di] = static_cast<int>(idx(r, m, op));
          }
        };
        bool words_equal =
            r < q && m < p && proj_.words[a + r] == proj_.words[a + q + m];
        if (r < q && m < p && words_equal) relax(r + 1, m + 1, AlignKind::Copy, 0.0);
        if (r < q && m < p && !words_equal)
          relax(r + 1, m + 1, AlignKind::Substitute,
                model_.log_substitution(ids_[a + q + m], ids_[a + r]));
        if (r < q)
          relax(r + 1, m, AlignKind::Insert,
                model_.log_substitution(ChannelModel::kNullRepair,
                                        ids_[a + r]));
        if (m < p) relax(r, m + 1, AlignKind::Delete, 0.0);
      }
    }
  }
  int end = -1;
  double best = kNegInf;
  for (int op = 1; op < 5; ++op) {
    if (v[idx(q, p, op)] > best) {
      best = v[idx(q, p, op)];
      end = static_cast<int>(idx(q, p, op));
    }
  }
  std::vector<AlignOp> ops;
  if (end < 0) return ops;
  // Walk parents back to the start cell, reading (r, m, op) off the index.
  std::size_t cur = static_cast<std::size_t>(end);
  while (parent[cur] >= 0) {
    int op = static_cast<int>(cur % 5);
    std::size_t cell = cur / 5;
    std::size_t m = cell % cols, r = cell / cols;
    AlignKind k = static_cast<AlignKind>(op - 1);
    AlignOp a_op;
    a_op.kind = k;
    if (k == AlignKind::Copy || k == AlignKind::Substitute ||
        k == AlignKind::Insert)
      a_op.reparandum_word = proj_.words[a + r - 1];
    if (k == AlignKind::Copy || k == AlignKind::Substitute ||
        k == AlignKind::Delete)
      a_op.repair_word = proj_.words[a + q + m - 1];
    ops.push_back(std::move(a_op));
    cur = static_cast<std::size_t>(parent[cur]);
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

}  // namespace detail

struct SearchLimits {
  int max_regions = 3;      // <= 0 means unlimited
  int max_reparandum = 0;   // 0 means unlimited
  int max_repair = 0;       // 0 means unlimited
};

CandidateList nbest(const Utterance& utterance, const ChannelModel& model,
                    const NgramModel& lm, int n, int beam = 100,
                    const SearchLimits& limits = SearchLimits{});

CandidateList brute_force_nbest(const Utterance& utterance,
                                const ChannelModel& model,
                                const NgramModel& lm, int n);

double score_channel(const Analysis& analysis, const ChannelModel& model);

namespace detail {

// Shared assembly of a full Analysis record from a labeling plus the chosen
// region structure. `region_extents` lists (a, q, p) per edited run in
// projected coordinates; `ops` the matching alignments.
inline Analysis assemble_analysis(
    const Utterance& u, const FillerProjection& proj,
    const std::vector<bool>& edited,  // per projected token
    const std::vector<std::array<std::size_t, 3>>& region_extents,
    std::vector<std::vector<AlignOp>> ops, double channel_lp, double lm_lp) {
  Analysis a;
  a.utterance_id = u.id;
  a.labels.assign(u.tokens.size(), Label::Fluent);
  for (std::size_t i = 0; i < u.tokens.size(); ++i)
    if (proj.is_filler[i]) a.labels[i] = Label::Filler;
  for (std::size_t pi = 0; pi < proj.size(); ++pi)
    if (edited[pi]) a.labels[proj.to_utterance[pi]] = Label::Edited;
  for (std::size_t i = 0; i < u.tokens.size(); ++i)
    if (a.labels[i] == Label::Fluent) a.fluent.push_back(u.tokens[i].surface);
  for (std::size_t r = 0; r < region_extents.size(); ++r) {
    auto [pa, q, p] = region_extents[r];
    RepairRegion region;
    region.reparandum.begin = proj.to_utterance[pa];
    region.reparandum.end = proj.to_utterance[pa + q - 1] + 1;
    std::size_t intr_begin = region.reparandum.end;
    std::size_t intr_end = intr_begin;
    // The interregnum is the filler stretch between reparandum and repair.
    while (intr_end < u.tokens.size() && proj.is_filler[intr_end]) ++intr_end;
    if (p > 0) {
      region.interregnum = Span{intr_begin, intr_end};
      region.repair.begin = proj.to_utterance[pa + q];
      region.repair.end = proj.to_utterance[pa + q + p - 1] + 1;
    } else {
      // Restarts own no following tokens.
      region.interregnum = Span{intr_begin, intr_begin};
      region.repair = Span{intr_begin, intr_begin};
    }
    region.alignment = std::move(ops[r]);
    a.repairs.push_back(std::move(region));
  }
  a.channel_logprob = channel_lp;
  a.ncm_lm_logprob = lm_lp;
  a.ncm_total_logprob = channel_lp + lm_lp;
  a.n_edits = 0;
  for (Label l : a.labels)
    if (l == Label::Edited) ++a.n_edits;
  return a;
}

// All-fluent analysis. Accumulation order matches the decoder's path sums
// term for term, so the value is bit-identical to the decoded one.
inline Analysis all_fluent_analysis(const Utterance& u,
                                    const ChannelModel& model,
                                    const NgramModel& lm,
                                    const FillerProjection& proj) {
  double channel = 0.0;
  for (std::size_t i = 0; i < proj.size(); ++i)
    channel += model.log_no_start();
  channel += static_cast<double>(proj.filler_count) * model.log_filler();
  double lmlp = 0.0;
  std::uint32_t prev = Vocab::kBos;
  for (const auto& w : proj.words) {
    std::uint32_t id = lm.vocab().lookup(w);
    lmlp += lm.bigram_logprob(prev, id);
    prev = id;
  }
  lmlp += lm.bigram_logprob(prev, Vocab::kEos);
  std::vector<bool> edited(proj.size(), false);
  return assemble_analysis(u, proj, edited, {}, {}, channel, lmlp);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// n-best decoder

namespace detail {

struct Partial {
  double total = 0.0;
  double channel = 0.0;
  double lm = 0.0;
  const Partial* parent = nullptr;
  // Edge that produced this partial: emit one fluent token, or a region
  // (a, q, p). q == 0 marks an emit edge.
  std::size_t edge_a = 0, edge_q = 0, edge_p = 0;
  std::uint32_t regions_used = 0;
  bool after_restart = false;  // a region may not follow a p == 0 region
  std::vector<std::uint64_t> label_bits;

  bool labels_equal(const Partial& o) const {
    return label_bits == o.label_bits;
  }
  bool labels_less(const Partial& o) const {
    // Lexicographic over projected positions, fluent < edited: compare the
    // bit vectors word by word with bits reversed within each word.
    for (std::size_t i = 0;
         i < std::max(label_bits.size(), o.label_bits.size()); ++i) {
      std::uint64_t a = i < label_bits.size() ? label_bits[i] : 0;
      std::uint64_t b = i < o.label_bits.size() ? o.label_bits[i] : 0;
      if (a == b) continue;
      std::uint64_t diff = a ^ b;
      std::uint64_t lowest = diff & (~diff + 1);
      return (a & lowest) == 0;  // first differing position is fluent in a
    }
    return false;
  }
};

inline void set_label_bits(std::vector<std::uint64_t>& bits, std::size_t begin,
                           std::size_t end) {
  if (end == begin) return;
  std::size_t need = (end + 63) / 64;
  if (bits.size() < need) bits.resize(need, 0);
  for (std::size_t i = begin; i < end; ++i) bits[i / 64] |= 1ull << (i % 64);
}

}  // namespace detail

// Candidates maximize channel log probability plus the bigram language-model
// log probability of the fluent string. The search is exact for
// sufficiently large beam; the all-fluent analysis is always included.
inline CandidateList nbest(const Utterance& utterance,
                           const ChannelModel& model, const NgramModel& lm,
                           int n, int beam, const SearchLimits& limits) {
  if (n < 1) throw DataError("nbest: n must be >= 1");
  if (beam < 1) throw DataError("nbest: beam must be >= 1");
  using detail::Partial;

  FillerProjection proj = FillerProjection::of(utterance, model.lexicon());
  const std::size_t nproj = proj.size();
  detail::ChainTable chains(model, proj);

  std::vector<std::uint32_t> lm_ids;
  lm_ids.reserve(nproj);
  for (const auto& w : proj.words) lm_ids.push_back(lm.vocab().lookup(w));
  // bigram_cache[j + 1][i] = log p(word_i | word_j), j == -1 for <s>.
  std::vector<std::vector<double>> bigram_cache(nproj + 1);
  std::vector<double> eos_cache(nproj + 1);
  for (std::size_t jj = 0; jj <= nproj; ++jj) {
    std::uint32_t prev = jj == 0 ? Vocab::kBos : lm_ids[jj - 1];
    bigram_cache[jj].resize(nproj, 0.0);
    for (std::size_t i = 0; i < nproj; ++i)
      bigram_cache[jj][i] = lm.bigram_logprob(prev, lm_ids[i]);
    eos_cache[jj] = lm.bigram_logprob(prev, Vocab::kEos);
  }

  const std::size_t max_regions =
      limits.max_regions <= 0 ? nproj + 1
                              : static_cast<std::size_t>(limits.max_regions);
  const std::size_t cap_q = limits.max_reparandum <= 0
                                ? nproj
                                : static_cast<std::size_t>(limits.max_reparandum);
  const std::size_t cap_p =
      limits.max_repair <= 0 ? nproj
                             : static_cast<std::size_t>(limits.max_repair);

  // Node = (position, index of last fluent token + 1, regions used).
  struct NodeKey {
    std::size_t j_plus1, k;
    bool operator<(const NodeKey& o) const {
      return j_plus1 != o.j_plus1 ? j_plus1 < o.j_plus1 : k < o.k;
    }
  };
  using NodeMap = std::map<NodeKey, std::vector<const Partial*>>;
  std::vector<NodeMap> positions(nproj + 1);
  std::deque<Partial> arena;

  auto push = [&](std::size_t pos, NodeKey key, Partial&& pt) {
    auto& list = positions[pos][key];
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i]->labels_equal(pt)) {
        if (pt.total > list[i]->total) {
          arena.push_back(std::move(pt));
          list[i] = &arena.back();
        }
        return;
      }
    }
    arena.push_back(std::move(pt));
    list.push_back(&arena.back());
  };

  {
    Partial root;
    positions[0][NodeKey{0, 0}].push_back(
        &*arena.insert(arena.end(), std::move(root)));
  }

  auto partial_rank = [](const Partial* a, const Partial* b) {
    if (a->total != b->total) return a->total > b->total;
    return a->labels_less(*b);
  };

  for (std::size_t i = 0; i <= nproj; ++i) {
    NodeMap& nodes = positions[i];
    // Per-node: order, de-duplicated already; cap at n.
    for (auto& [key, list] : nodes) {
      std::sort(list.begin(), list.end(), partial_rank);
      if (list.size() > static_cast<std::size_t>(n))
        list.resize(static_cast<std::size_t>(n));
    }
    // Position-wide beam.
    std::size_t live = 0;
    for (auto& [key, list] : nodes) live += list.size();
    if (live > static_cast<std::size_t>(beam)) {
      std::vector<const Partial*> all;
      all.reserve(live);
      for (auto& [key, list] : nodes)
        all.insert(all.end(), list.begin(), list.end());
      std::sort(all.begin(), all.end(), partial_rank);
      all.resize(static_cast<std::size_t>(beam));
      std::set<const Partial*> keep(all.begin(), all.end());
      for (auto& [key, list] : nodes) {
        std::vector<const Partial*> kept;
        for (auto* p : list)
          if (keep.count(p)) kept.push_back(p);
        list = std::move(kept);
      }
    }
    if (i == nproj) break;

    for (auto& [key, list] : nodes) {
      const std::size_t j_plus1 = key.j_plus1;
      for (const Partial* pt : list) {
        // Emit token i as fluent.
        {
          Partial nx;
          nx.parent = pt;
          nx.edge_a = i;
          nx.edge_q = 0;
          nx.edge_p = 0;
          nx.regions_used = pt->regions_used;
          nx.after_restart = false;
          nx.channel = pt->channel + model.log_no_start();
          nx.lm = pt->lm + bigram_cache[j_plus1][i];
          nx.total = nx.channel + nx.lm;
          nx.label_bits = pt->label_bits;
          push(i + 1, NodeKey{i + 1, key.k}, std::move(nx));
        }
        // Open a region with reparandum [i, i+q) and repair length p.
        if (pt->after_restart || key.k >= max_regions) continue;
        for (std::size_t q = 1; q <= std::min(cap_q, nproj - i); ++q) {
          std::size_t p_max = std::min(cap_p, nproj - i - q);
          const std::vector<double>& best = chains.best_for(i, q, p_max);
          for (std::size_t p = 0; p <= p_max; ++p) {
            if (best[p] == kNegInf) continue;
            Partial nx;
            nx.parent = pt;
            nx.edge_a = i;
            nx.edge_q = q;
            nx.edge_p = p;
            nx.regions_used = pt->regions_used + 1;
            nx.after_restart = p == 0;
            nx.channel = pt->channel + model.log_start();
            nx.channel += best[p];
            nx.lm = pt->lm;
            std::size_t prev = j_plus1;
            for (std::size_t u2 = 0; u2 < p; ++u2) {
              nx.lm += bigram_cache[prev][i + q + u2];
              prev = i + q + u2 + 1;
            }
            nx.total = nx.channel + nx.lm;
            nx.label_bits = pt->label_bits;
            detail::set_label_bits(nx.label_bits, i, i + q);
            std::size_t land = i + q + p;
            NodeKey nk{p > 0 ? land : j_plus1, key.k + 1};
            push(land, nk, std::move(nx));
          }
        }
      }
    }
  }

  // Goal: close with the end-of-sentence transition and the constant filler
  // emission cost.
  double filler_const =
      static_cast<double>(proj.filler_count) * model.log_filler();
  struct Goal {
    double total, channel, lm;
    const Partial* partial;
  };
  std::vector<Goal> goals;
  for (auto& [key, list] : positions[nproj]) {
    for (const Partial* pt : list) {
      Goal g;
      g.channel = pt->channel + filler_const;
      g.lm = pt->lm + eos_cache[key.j_plus1];
      g.total = g.channel + g.lm;
      g.partial = pt;
      goals.push_back(g);
    }
  }
  std::sort(goals.begin(), goals.end(), [](const Goal& a, const Goal& b) {
    if (a.total != b.total) return a.total > b.total;
    return a.partial->labels_less(*b.partial);
  });
  if (goals.size() > static_cast<std::size_t>(n))
    goals.resize(static_cast<std::size_t>(n));

  CandidateList out;
  out.utterance = utterance;
  out.n = n;
  bool has_all_fluent = false;
  for (const Goal& g : goals) {
    // Reconstruct edges from the parent chain.
    std::vector<const Partial*> path;
    for (const Partial* p = g.partial; p != nullptr && p->parent != nullptr;
         p = p->parent)
      path.push_back(p);
    std::reverse(path.begin(), path.end());
    std::vector<bool> edited(nproj, false);
    std::vector<std::array<std::size_t, 3>> extents;
    std::vector<std::vector<AlignOp>> ops;
    for (const Partial* p : path) {
      if (p->edge_q == 0) continue;
      for (std::size_t x = p->edge_a; x < p->edge_a + p->edge_q; ++x)
        edited[x] = true;
      extents.push_back({p->edge_a, p->edge_q, p->edge_p});
      ops.push_back(chains.backtrace(p->edge_a, p->edge_q, p->edge_p));
    }
    Analysis a = detail::assemble_analysis(utterance, proj, edited, extents,
                                           std::move(ops), g.channel, g.lm);
    if (a.n_edits == 0) has_all_fluent = true;
    out.candidates.push_back(std::move(a));
  }
  if (!has_all_fluent) {
    Analysis af = detail::all_fluent_analysis(utterance, model, lm, proj);
    if (out.candidates.size() >= static_cast<std::size_t>(n))
      out.candidates.pop_back();
    out.candidates.push_back(std::move(af));
    std::sort(out.candidates.begin(), out.candidates.end(), candidate_before);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exhaustive reference search. Independent scoring path: a plain recursive
// chain scorer plus direct per-labeling evaluation, used as the oracle the
// decoder is checked against.

namespace detail {

class BruteChainScorer {
 public:
  BruteChainScorer(const ChannelModel& model, const FillerProjection& proj)
      : model_(model), proj_(proj) {}

  // Best chain log prob aligning reparandum [a, a+q) to repair
  // [a+q, a+q+p), including the final stop factor.
  double best(std::size_t a, std::size_t q, std::size_t p,
              std::vector<AlignOp>* ops_out = nullptr) const {
    double best_v = kNegInf;
    std::vector<AlignOp> cur, best_ops;
    recurse(a, q, p, 0, 0, ChannelModel::kStart, 0.0, cur, best_v, best_ops);
    if (ops_out != nullptr) *ops_out = best_ops;
    return best_v;
  }

 private:
  void recurse(std::size_t a, std::size_t q, std::size_t p, std::size_t r,
               std::size_t m, int last, double acc, std::vector<AlignOp>& cur,
               double& best_v, std::vector<AlignOp>& best_ops) const {
    if (r == q && m == p) {
      if (last == ChannelModel::kStart) return;  // reparandum is non-empty
      double v = acc + model_.log_stop();
      if (v > best_v) {
        best_v = v;
        best_ops = cur;
      }
      return;
    }
    double cont = last == ChannelModel::kStart ? 0.0 : model_.log_continue();
    const std::string* rep_w = r < q ? &proj_.words[a + r] : nullptr;
    const std::string* repair_w = m < p ? &proj_.words[a + q + m] : nullptr;
    if (rep_w != nullptr && repair_w != nullptr && *rep_w == *repair_w) {
      cur.push_back(AlignOp{AlignKind::Copy, *rep_w, *repair_w});
      recurse(a, q, p, r + 1, m + 1, ChannelModel::row_of(AlignKind::Copy),
              acc + cont + model_.log_op(last, AlignKind::Copy), cur, best_v,
              best_ops);
      cur.pop_back();
    }
    if (rep_w != nullptr && repair_w != nullptr && *rep_w != *repair_w) {
      cur.push_back(AlignOp{AlignKind::Substitute, *rep_w, *repair_w});
      recurse(a, q, p, r + 1, m + 1,
              ChannelModel::row_of(AlignKind::Substitute),
              acc + cont + model_.log_op(last, AlignKind::Substitute) +
                  model_.log_substitution(model_.word_id(*repair_w),
                                          model_.word_id(*rep_w)),
              cur, best_v, best_ops);
      cur.pop_back();
    }
    if (rep_w != nullptr) {
      cur.push_back(AlignOp{AlignKind::Insert, *rep_w, std::nullopt});
      recurse(a, q, p, r + 1, m, ChannelModel::row_of(AlignKind::Insert),
              acc + cont + model_.log_op(last, AlignKind::Insert) +
                  model_.log_substitution(ChannelModel::kNullRepair,
                                          model_.word_id(*rep_w)),
              cur, best_v, best_ops);
      cur.pop_back();
    }
    if (repair_w != nullptr) {
      cur.push_back(AlignOp{AlignKind::Delete, std::nullopt, *repair_w});
      recurse(a, q, p, r, m + 1, ChannelModel::row_of(AlignKind::Delete),
              acc + cont + model_.log_op(last, AlignKind::Delete), cur, best_v,
              best_ops);
      cur.pop_back();
    }
  }

  const ChannelModel& model_;
  const FillerProjection& proj_;
};

}  // namespace detail

inline CandidateList brute_force_nbest(const Utterance& utterance,
                                       const ChannelModel& model,
                                       const NgramModel& lm, int n) {
  if (n < 1) throw DataError("brute_force_nbest: n must be >= 1");
  if (utterance.size() > 12)
    throw DataError(
        "brute_force_nbest: input longer than 12 tokens; use nbest");
  FillerProjection proj = FillerProjection::of(utterance, model.lexicon());
  const std::size_t nproj = proj.size();
  detail::BruteChainScorer scorer(model, proj);

  std::vector<std::uint32_t> lm_ids;
  for (const auto& w : proj.words) lm_ids.push_back(lm.vocab().lookup(w));
  double filler_const =
      static_cast<double>(proj.filler_count) * model.log_filler();

  std::vector<Analysis> all;
  for (std::uint64_t mask = 0; mask < (1ull << nproj); ++mask) {
    std::vector<bool> edited(nproj, false);
    for (std::size_t i = 0; i < nproj; ++i)
      if (mask & (1ull << i)) edited[i] = true;

    // Left-to-right scan mirroring the decoder's path accumulation term for
    // term: fluent steps add one no-start factor and one bigram each; a
    // region adds start + chain, then its repair tokens' bigrams.
    double channel = 0.0, lmlp = 0.0;
    std::size_t prev = 0;  // index of last fluent token + 1; 0 means <s>
    bool feasible = true;
    std::vector<std::array<std::size_t, 3>> extents;
    std::vector<std::vector<AlignOp>> ops;
    auto bigram = [&](std::size_t prev_plus1, std::size_t i) {
      std::uint32_t prev_id =
          prev_plus1 == 0 ? Vocab::kBos : lm_ids[prev_plus1 - 1];
      return lm.bigram_logprob(prev_id, lm_ids[i]);
    };
    std::size_t i = 0;
    while (i < nproj) {
      if (!edited[i]) {
        channel += model.log_no_start();
        lmlp += bigram(prev, i);
        prev = i + 1;
        ++i;
        continue;
      }
      std::size_t a = i;
      while (i < nproj && edited[i]) ++i;
      std::size_t q = i - a;
      std::size_t gap = 0;
      while (i + gap < nproj && !edited[i + gap]) ++gap;
      // Choose the repair length. Consuming p fluent tokens into the repair
      // span removes their no-start factors, hence the -p*log(1-s) term in
      // the comparison; ties keep the shortest repair.
      double run_best = kNegInf;
      std::size_t best_p = 0;
      std::vector<AlignOp> best_ops;
      for (std::size_t p = 0; p <= gap; ++p) {
        std::vector<AlignOp> cand_ops;
        double chain = scorer.best(a, q, p, &cand_ops);
        if (chain == kNegInf) continue;
        double v = chain - static_cast<double>(p) * model.log_no_start();
        if (v > run_best) {
          run_best = v;
          best_p = p;
          best_ops = std::move(cand_ops);
        }
      }
      if (run_best == kNegInf) {
        feasible = false;
        break;
      }
      channel += model.log_start();
      channel += scorer.best(a, q, best_p);
      for (std::size_t u2 = 0; u2 < best_p; ++u2) {
        lmlp += bigram(prev, i + u2);
        prev = i + u2 + 1;
      }
      extents.push_back({a, q, best_p});
      ops.push_back(std::move(best_ops));
      i += best_p;
    }
    if (!feasible) continue;
    channel += filler_const;
    {
      std::uint32_t prev_id = prev == 0 ? Vocab::kBos : lm_ids[prev - 1];
      lmlp += lm.bigram_logprob(prev_id, Vocab::kEos);
    }

    all.push_back(detail::assemble_analysis(utterance, proj, edited, extents,
                                            std::move(ops), channel, lmlp));
  }
  std::sort(all.begin(), all.end(), candidate_before);
  CandidateList out;
  out.utterance = utterance;
  out.n = n;
  bool has_all_fluent = false;
  for (auto& a : all) {
    if (out.candidates.size() >= static_cast<std::size_t>(n)) break;
    if (a.n_edits == 0) has_all_fluent = true;
    out.candidates.push_back(std::move(a));
  }
  if (!has_all_fluent) {
    for (auto& a : all) {
      if (a.n_edits == 0) {
        if (!out.candidates.empty()) out.candidates.pop_back();
        out.candidates.push_back(std::move(a));
        std::sort(out.candidates.begin(), out.candidates.end(),
                  candidate_before);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rescoring a given analysis (with its stored region structure).

inline double score_channel(const Analysis& analysis,
                            const ChannelModel& model) {
  const auto& labels = analysis.labels;
  const std::size_t n = labels.size();
  std::vector<bool> in_repair_span(n, false);
  std::size_t last_end = 0;
  for (const auto& r : analysis.repairs) {
    if (r.reparandum.empty())
      throw DataError("malformed span: empty reparandum");
    if (r.reparandum.begin < last_end)
      throw DataError("malformed span: regions overlap or out of order");
    if (r.reparandum.end > r.interregnum.begin ||
        r.interregnum.end > r.repair.begin || r.repair.end > n ||
        r.interregnum.begin > r.interregnum.end ||
        r.repair.begin > r.repair.end)
      throw DataError("malformed span: region spans out of order");
    last_end = std::max(r.repair.end, r.interregnum.end);
    for (std::size_t i = r.reparandum.begin; i < r.reparandum.end; ++i)
      if (labels.at(i) == Label::Fluent)
        throw DataError("malformed span: fluent token inside reparandum");
    for (std::size_t i = r.repair.begin; i < r.repair.end; ++i) {
      if (labels.at(i) == Label::Edited)
        throw DataError("malformed span: edited token inside repair");
      if (labels.at(i) == Label::Fluent) in_repair_span[i] = true;
    }
  }

  double lp = 0.0;
  std::size_t n_fluent_outside = 0, n_filler = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == Label::Filler) ++n_filler;
    if (labels[i] == Label::Fluent && !in_repair_span[i]) ++n_fluent_outside;
  }
  lp += static_cast<double>(n_fluent_outside) * model.log_no_start();
  lp += static_cast<double>(n_filler) * model.log_filler();

  for (const auto& r : analysis.repairs) {
    lp += model.log_start();
    if (r.alignment.empty())
      throw DataError("malformed span: region without alignment");
    int last = ChannelModel::kStart;
    for (const auto& op : r.alignment) {
      if (last != ChannelModel::kStart) lp += model.log_continue();
      lp += model.log_op(last, op.kind);
      switch (op.kind) {
        case AlignKind::Copy:
          if (!op.reparandum_word || !op.repair_word ||
              *op.reparandum_word != *op.repair_word)
            throw DataError("malformed alignment: COPY words must match");
          break;
        case AlignKind::Substitute:
          if (!op.reparandum_word || !op.repair_word ||
              *op.reparandum_word == *op.repair_word)
            throw DataError("malformed alignment: SUBSTITUTE words must differ");
          lp += model.log_substitution(model.word_id(*op.repair_word),
                                       model.word_id(*op.reparandum_word));
          break;
        case AlignKind::Insert:
          if (!op.reparandum_word || op.repair_word)
            throw DataError("malformed alignment: INSERT carries only a "
                            "reparandum word");
          lp += model.log_substitution(ChannelModel::kNullRepair,
                                       model.word_id(*op.reparandum_word));
          break;
        case AlignKind::Delete:
          if (op.reparandum_word || !op.repair_word)
            throw DataError(
                "malformed alignment: DELETE carries only a repair word");
          break;
      }
      last = ChannelModel::row_of(op.kind);
    }
    lp += model.log_stop();
  }
  if (!std::isfinite(lp) || lp > 0.0)
    throw NumericError("channel log probability must be finite and <= 0");
  return lp;
}

// ---------------------------------------------------------------------------
// Training

// Reconstructs region structure from plain token labels: each maximal edited
// run is a reparandum; the following filler run is its interregnum; the
// repair is the following fluent run truncated to the reparandum length.
inline std::vector<RepairAnnotation> derive_regions(const Utterance& u) {
  if (!u.gold) return {};
  const auto& g = *u.gold;
  std::vector<RepairAnnotation> out;
  std::size_t i = 0;
  while (i < g.size()) {
    if (g[i] != Label::Edited) {
      ++i;
      continue;
    }
    RepairAnnotation r;
    r.rep_begin = i;
    while (i < g.size() && g[i] == Label::Edited) ++i;
    r.rep_end = i;
    r.intr_begin = i;
    while (i < g.size() && g[i] == Label::Filler) ++i;
    r.intr_end = i;
    r.repair_begin = i;
    std::size_t limit = r.rep_end - r.rep_begin;
    std::size_t taken = 0;
    while (i < g.size() && g[i] == Label::Fluent && taken < limit) {
      ++i;
      ++taken;
    }
    r.repair_end = i;
    out.push_back(r);
  }
  return out;
}

class ChannelTrainer {
 public:
  static ChannelModel train(const std::vector<Utterance>& annotated,
                            FillerLexicon lexicon, double alpha) {
    ChannelModel m;
    m.lexicon_ = std::move(lexicon);
    m.alpha_ = alpha;

    std::uint64_t op_counts[5][4] = {};
    std::uint64_t stop_events = 0, continue_events = 0;
    std::uint64_t start_events = 0, no_start_events = 0;
    std::uint64_t filler_tokens = 0, total_tokens = 0;
    std::size_t regions_seen = 0;

    for (const auto& u : annotated) {
      for (const auto& t : u.tokens) m.vocab_.add(t.surface);
      if (!u.gold) continue;
      std::vector<RepairAnnotation> regions =
          !u.regions.empty() ? u.regions : derive_regions(u);
      const auto& g = *u.gold;
      std::vector<bool> in_span(u.size(), false);
      for (const auto& r : regions)
        for (std::size_t i = r.repair_begin; i < r.repair_end; ++i)
          in_span[i] = true;
      for (std::size_t i = 0; i < u.size(); ++i) {
        ++total_tokens;
        if (g[i] == Label::Filler) ++filler_tokens;
        if (g[i] == Label::Fluent && !in_span[i]) ++no_start_events;
      }
      for (const auto& r : regions) {
        std::vector<std::string> rep, repair;
        for (std::size_t i = r.rep_begin; i < r.rep_end; ++i)
          if (g[i] == Label::Edited) rep.push_back(u.tokens[i].surface);
        for (std::size_t i = r.repair_begin; i < r.repair_end; ++i)
          if (g[i] == Label::Fluent) repair.push_back(u.tokens[i].surface);
        if (rep.empty()) continue;
        ++regions_seen;
        ++start_events;
        std::vector<AlignKind> ops = edit_align(rep, repair);
        int last = ChannelModel::kStart;
        std::size_t ri = 0, mi = 0;
        for (std::size_t oi = 0; oi < ops.size(); ++oi) {
          AlignKind k = ops[oi];
          ++op_counts[last][static_cast<int>(k)];
          if (oi + 1 < ops.size())
            ++continue_events;
          else
            ++stop_events;
          if (k == AlignKind::Substitute)
            bump(m, m.vocab_.lookup(repair[mi]), m.vocab_.lookup(rep[ri]));
          if (k == AlignKind::Insert)
            bump(m, ChannelModel::kNullRepair, m.vocab_.lookup(rep[ri]));
          if (k == AlignKind::Copy || k == AlignKind::Substitute ||
              k == AlignKind::Insert)
            ++ri;
          if (k == AlignKind::Copy || k == AlignKind::Substitute ||
              k == AlignKind::Delete)
            ++mi;
          last = ChannelModel::row_of(k);
        }
      }
    }
    (void)total_tokens;

    if (regions_seen == 0)
      throw DataError("channel training: no repairs in data");

    for (int r = 0; r < 5; ++r) {
      std::uint64_t tot = 0;
      for (int c = 0; c < 4; ++c) tot += op_counts[r][c];
      for (int c = 0; c < 4; ++c)
        m.params_.op[r][c] =
            (static_cast<double>(op_counts[r][c]) + alpha) /
            (static_cast<double>(tot) + 4.0 * alpha);
    }
    m.params_.p_stop =
        (static_cast<double>(stop_events) + alpha) /
        (static_cast<double>(stop_events + continue_events) + 2.0 * alpha);
    m.params_.p_start =
        (static_cast<double>(start_events) + alpha) /
        (static_cast<double>(start_events + no_start_events) + 2.0 * alpha);
    // Fixed per-token interregnum emission cost; fillers are closed-class
    // and detected by lexicon lookup, so this is a constant of the model.
    double rate = filler_tokens == 0
                      ? 0.5
                      : static_cast<double>(filler_tokens) /
                            static_cast<double>(total_tokens);
    m.params_.p_filler = std::min(0.9, std::max(0.1, rate * 5.0));
    m.validate();
    return m;
  }

 private:
  static void bump(ChannelModel& m, std::uint32_t ctx, std::uint32_t w) {
    ++m.sub_counts_[(static_cast<std::uint64_t>(ctx) << 32) | w];
    ++m.sub_totals_[ctx];
  }

  // Minimum-edit-distance alignment. Ties are broken walking back from the
  // end preferring DELETE, then INSERT, then the diagonal, which places
  // insertions and deletions as late as possible. Tie families between copy
  // anchors are inherently unorderable; this canonical form keeps mixed
  // delete/copy/insert patterns intact instead of collapsing them into
  // substitution pairs.
  static std::vector<AlignKind> edit_align(
      const std::vector<std::string>& rep,
      const std::vector<std::string>& repair) {
    const std::size_t q = rep.size(), p = repair.size();
    std::vector<std::uint32_t> cost((q + 1) * (p + 1), 0);
    auto at = [&](std::size_t r, std::size_t m) -> std::uint32_t& {
      return cost[r * (p + 1) + m];
    };
    for (std::size_t r = 0; r <= q; ++r)
      for (std::size_t m = 0; m <= p; ++m) {
        if (r == 0 && m == 0) continue;
        std::uint32_t best = UINT32_MAX;
        if (r > 0 && m > 0)
          best = std::min(best, at(r - 1, m - 1) +
                                    (rep[r - 1] == repair[m - 1] ? 0u : 1u));
        if (r > 0) best = std::min(best, at(r - 1, m) + 1u);
        if (m > 0) best = std::min(best, at(r, m - 1) + 1u);
        at(r, m) = best;
      }
    std::vector<AlignKind> ops;
    std::size_t r = q, m = p;
    while (r > 0 || m > 0) {
      if (m > 0 && at(r, m) == at(r, m - 1) + 1) {
        ops.push_back(AlignKind::Delete);
        --m;
      } else if (r > 0 && at(r, m) == at(r - 1, m) + 1) {
        ops.push_back(AlignKind::Insert);
        --r;
      } else {
        ops.push_back(rep[r - 1] == repair[m - 1] ? AlignKind::Copy
                                                  : AlignKind::Substitute);
        --r;
        --m;
      }
    }
    std::reverse(ops.begin(), ops.end());
    return ops;
  }
};

inline ChannelModel ChannelModel::train(const std::vector<Utterance>& annotated,
                                        FillerLexicon lexicon, double alpha) {
  return ChannelTrainer::train(annotated, std::move(lexicon), alpha);
}

}  // namespace disfl
