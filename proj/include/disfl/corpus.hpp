// corpus.hpp -- transcript ingestion, normalization and cross-validation
// fold scheduling.
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

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "disfl/common.hpp"

namespace disfl {

// Per-token state: O = fluent, E = edited (reparandum), F = filled pause or
// discourse marker.
enum class Label : std::uint8_t { Fluent = 0, Edited = 1, Filler = 2 };

inline char label_char(Label l) {
  switch (l) {
    case Label::Fluent: return 'O';
    case Label::Edited: return 'E';
    case Label::Filler: return 'F';
  }
  return '?';
}

inline Label label_from_char(char c, std::size_t line) {
  switch (c) {
    case 'O': return Label::Fluent;
    case 'E': return Label::Edited;
    case 'F': return Label::Filler;
  }
  throw ParseError(std::string("unknown label '") + c + "'", line);
}

struct Token {
  std::string surface;
  bool is_partial = false;  // transcript fragment: ends with '-', length >= 2
  bool is_punct = false;    // every byte non-alphanumeric (ASCII rules)
};

// Bytes >= 0x80 (multi-byte UTF-8) count as word characters.
inline Token make_token(std::string surface) {
  Token t;
  t.is_partial = surface.size() >= 2 && surface.back() == '-';
  bool all_non_alnum = !surface.empty();
  for (unsigned char c : surface) {
    if (is_ascii_alnum(c) || c >= 0x80) {
      all_non_alnum = false;
      break;
    }
  }
  t.is_punct = all_non_alnum;
  t.surface = std::move(surface);
  return t;
}

inline std::vector<Token> make_tokens(const std::vector<std::string>& words) {
  std::vector<Token> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(make_token(w));
  return out;
}

// Gold disfluency structure attached to an utterance: token index ranges for
// one reparandum / interregnum / repair triple. Ranges are half-open and may
// be empty for the interregnum and repair.
struct RepairAnnotation {
  std::size_t rep_begin = 0, rep_end = 0;
  std::size_t intr_begin = 0, intr_end = 0;
  std::size_t repair_begin = 0, repair_end = 0;
};

struct Utterance {
  std::string id;
  std::vector<Token> tokens;
  std::optional<std::vector<Label>> gold;
  // Populated by the bracketed-format parser and the synthetic generator;
  // empty for plain TSV input.
  std::vector<RepairAnnotation> regions;

  std::size_t size() const { return tokens.size(); }

  std::vector<std::string> surfaces() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.surface);
    return out;
  }
};

// Closed set of filled pauses and discourse markers. Entries may span
// several tokens ("i mean", "you know"); matching is greedy longest-first.
class FillerLexicon {
 public:
  FillerLexicon() = default;

  explicit FillerLexicon(std::vector<std::vector<std::string>> entries)
      : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const auto& a, const auto& b) {
                if (a.size() != b.size()) return a.size() > b.size();
                return a < b;
              });
  }

  static FillerLexicon defaults() {
    return FillerLexicon({{"uh"},
                          {"um"},
                          {"uh-huh"},
                          {"i", "mean"},
                          {"you", "know"},
                          {"well"},
                          {"like"}});
  }

  // Length of the longest entry matching at position i, or 0.
  std::size_t match_at(const std::vector<Token>& tokens, std::size_t i) const {
    for (const auto& e : entries_) {
      if (i + e.size() > tokens.size()) continue;
      bool ok = true;
      for (std::size_t k = 0; k < e.size(); ++k) {
        if (tokens[i + k].surface != e[k]) {
          ok = false;
          break;
        }
      }
      if (ok) return e.size();
    }
    return 0;
  }

  // Greedy left-to-right longest-match marking of filler tokens.
  std::vector<bool> mark(const std::vector<Token>& tokens) const {
    std::vector<bool> is_filler(tokens.size(), false);
    std::size_t i = 0;
    while (i < tokens.size()) {
      std::size_t len = match_at(tokens, i);
      if (len == 0) {
        ++i;
        continue;
      }
      for (std::size_t k = 0; k < len; ++k) is_filler[i + k] = true;
      i += len;
    }
    return is_filler;
  }

  bool contains_word(const std::string& w) const {
    for (const auto& e : entries_)
      if (e.size() == 1 && e[0] == w) return true;
    return false;
  }

  const std::vector<std::vector<std::string>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::vector<std::string>> entries_;
};

// Drops partial words and punctuation, lowercases what survives, and filters
// gold labels and region annotations in lockstep. Idempotent; the result may
// be empty.
inline Utterance normalize(const Utterance& raw) {
  Utterance out;
  out.id = raw.id;
  std::vector<std::size_t> new_index(raw.tokens.size(), SIZE_MAX);
  if (raw.gold) out.gold.emplace();
  for (std::size_t i = 0; i < raw.tokens.size(); ++i) {
    const Token& t = raw.tokens[i];
    if (t.is_partial || t.is_punct) continue;
    new_index[i] = out.tokens.size();
    out.tokens.push_back(make_token(lowercase(t.surface)));
    if (raw.gold) out.gold->push_back((*raw.gold)[i]);
  }
  // Remap region annotations; a region whose reparandum vanished is dropped.
  auto remap = [&](std::size_t begin, std::size_t end) {
    std::size_t nb = out.tokens.size(), ne = out.tokens.size();
    for (std::size_t i = begin; i < end; ++i) {
      if (new_index[i] == SIZE_MAX) continue;
      nb = std::min(nb, new_index[i]);
      ne = new_index[i] + 1;
    }
    if (nb > ne) nb = ne;
    return std::pair<std::size_t, std::size_t>{nb, ne};
  };
  for (const auto& r : raw.regions) {
    RepairAnnotation nr;
    auto [rb, re] = remap(r.rep_begin, r.rep_end);
    if (rb >= re) continue;
    nr.rep_begin = rb;
    nr.rep_end = re;
    auto [ib, ie] = remap(r.intr_begin, r.intr_end);
    if (ib >= ie) ib = ie = re;
    nr.intr_begin = ib;
    nr.intr_end = ie;
    auto [pb, pe] = remap(r.repair_begin, r.repair_end);
    if (pb >= pe) pb = pe = nr.intr_end;
    nr.repair_begin = pb;
    nr.repair_end = pe;
    out.regions.push_back(nr);
  }
  return out;
}

enum class CorpusFormat { Tsv, DpsLike };

namespace detail {

inline std::string next_utterance_id(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "u%06zu", n);
  return std::string(buf);
}

}  // namespace detail

// TSV: one token per line as "token<TAB>label" (label in {O,E,F}) or a bare
// token when the corpus is unannotated; a blank line ends an utterance.
inline std::vector<Utterance> parse_tsv(std::istream& in) {
  std::vector<Utterance> out;
  Utterance cur;
  bool any_label = false, any_bare = false;
  std::size_t lineno = 0;
  auto flush = [&]() {
    if (cur.tokens.empty()) return;
    if (any_label && any_bare)
      throw ParseError("utterance mixes labeled and unlabeled lines", lineno);
    if (!any_label) cur.gold.reset();
    cur.id = detail::next_utterance_id(out.size());
    out.push_back(std::move(cur));
    cur = Utterance{};
    cur.gold.emplace();
    any_label = any_bare = false;
  };
  cur.gold.emplace();
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        cols.push_back(line.substr(start));
        break;
      }
      cols.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (cols.size() > 2 || cols[0].empty())
      throw ParseError("malformed line: expected token or token<TAB>label",
                       lineno);
    cur.tokens.push_back(make_token(cols[0]));
    if (cols.size() == 2) {
      if (cols[1].size() != 1)
        throw ParseError("malformed label column", lineno);
      cur.gold->push_back(label_from_char(cols[1][0], lineno));
      any_label = true;
    } else {
      any_bare = true;
    }
  }
  ++lineno;
  flush();
  return out;
}

// Canonical TSV form: parse followed by serialize is the identity on this
// output.
inline void serialize_tsv(const std::vector<Utterance>& utts,
                          std::ostream& os) {
  bool first = true;
  for (const auto& u : utts) {
    if (!first) os << '\n';
    first = false;
    for (std::size_t i = 0; i < u.tokens.size(); ++i) {
      os << u.tokens[i].surface;
      if (u.gold) os << '\t' << label_char((*u.gold)[i]);
      os << '\n';
    }
  }
}

namespace detail {

struct DpsParser {
  const std::vector<std::string>& syms;
  std::size_t pos = 0;
  std::size_t lineno;
  Utterance& utt;

  bool at_end() const { return pos >= syms.size(); }
  const std::string& peek() const { return syms[pos]; }

  void parse_filler_group() {
    ++pos;  // '{'
    bool any = false;
    while (!at_end() && peek() != "}") {
      if (peek() == "{" || peek() == "[" || peek() == "]" || peek() == "+")
        throw ParseError("markup not allowed inside filler group", lineno);
      utt.tokens.push_back(make_token(syms[pos]));
      utt.gold->push_back(Label::Filler);
      ++pos;
      any = true;
    }
    if (at_end()) throw ParseError("unbalanced '{'", lineno);
    if (!any) throw ParseError("empty filler group", lineno);
    ++pos;  // '}'
  }

  // '[' elems '+' [filler-group] elems ']'. Everything before the '+'
  // is reparandum; nested repairs inside it stay edited.
  void parse_repair(bool inside_reparandum, bool top_level) {
    ++pos;  // '['
    RepairAnnotation region;
    region.rep_begin = utt.tokens.size();
    while (!at_end() && peek() != "]" && peek() != "+")
      parse_elem(/*inside_reparandum=*/true);
    if (at_end()) throw ParseError("unbalanced '['", lineno);
    if (peek() != "+")
      throw ParseError("missing '+' in bracketed repair", lineno);
    if (utt.tokens.size() == region.rep_begin)
      throw ParseError("empty reparandum", lineno);
    region.rep_end = utt.tokens.size();
    ++pos;  // '+'
    region.intr_begin = utt.tokens.size();
    if (!at_end() && peek() == "{") parse_filler_group();
    region.intr_end = utt.tokens.size();
    region.repair_begin = utt.tokens.size();
    while (!at_end() && peek() != "]") parse_elem(inside_reparandum);
    if (at_end()) throw ParseError("unbalanced '['", lineno);
    ++pos;  // ']'
    region.repair_end = utt.tokens.size();
    if (top_level && !inside_reparandum) utt.regions.push_back(region);
  }

  void parse_elem(bool inside_reparandum) {
    const std::string& s = peek();
    if (s == "[") {
      parse_repair(inside_reparandum, /*top_level=*/!inside_reparandum);
    } else if (s == "{") {
      parse_filler_group();
    } else if (s == "]" || s == "}" ) {
      throw ParseError("unbalanced '" + s + "'", lineno);
    } else if (s == "+") {
      throw ParseError("'+' outside brackets", lineno);
    } else {
      utt.tokens.push_back(make_token(s));
      utt.gold->push_back(inside_reparandum ? Label::Edited : Label::Fluent);
      ++pos;
    }
  }

  void run() {
    while (!at_end()) parse_elem(false);
  }
};

}  // namespace detail

// Bracketed annotation, one utterance per line:
//   i want [ to boston + { uh i mean } to denver ] on friday
// Brackets, braces and '+' must be whitespace-separated symbols.
inline std::vector<Utterance> parse_dps_like(std::istream& in) {
  std::vector<Utterance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> syms = split_ws(line);
    if (syms.empty()) continue;
    Utterance u;
    u.gold.emplace();
    detail::DpsParser p{syms, 0, lineno, u};
    p.run();
    u.id = detail::next_utterance_id(out.size());
    out.push_back(std::move(u));
  }
  return out;
}

inline std::vector<Utterance> parse_annotated(std::istream& in,
                                              CorpusFormat format) {
  return format == CorpusFormat::Tsv ? parse_tsv(in) : parse_dps_like(in);
}

// Train/dev/test id sets plus a k-way partition of the training ids.
struct CorpusSplit {
  std::vector<std::string> train, dev, test;
  std::vector<std::vector<std::string>> folds;

  void validate() const {
    std::set<std::string> seen;
    auto check_disjoint = [&](const std::vector<std::string>& ids) {
      for (const auto& id : ids)
        if (!seen.insert(id).second)
          throw DataError("corpus split: duplicate utterance id " + id);
    };
    check_disjoint(train);
    check_disjoint(dev);
    check_disjoint(test);
    if (folds.size() < 2) throw DataError("corpus split: need k >= 2 folds");
    std::set<std::string> train_ids(train.begin(), train.end());
    std::set<std::string> fold_ids;
    for (const auto& f : folds)
      for (const auto& id : f) {
        if (!train_ids.count(id))
          throw DataError("corpus split: fold id not in train: " + id);
        if (!fold_ids.insert(id).second)
          throw DataError("corpus split: id in two folds: " + id);
      }
    if (fold_ids.size() != train_ids.size())
      throw DataError("corpus split: folds do not cover train");
  }
};

// Deterministic k-fold partition of the training set. Fold sizes differ by
// at most one.
inline CorpusSplit make_folds(const std::vector<Utterance>& train, int k,
                              std::uint64_t seed) {
  if (k < 2) throw DataError("make_folds: k must be at least 2");
  if (train.size() < static_cast<std::size_t>(k))
    throw DataError("make_folds: fewer utterances than folds");
  CorpusSplit split;
  for (const auto& u : train) split.train.push_back(u.id);
  std::vector<std::string> ids = split.train;
  Rng rng(seed);
  rng.shuffle(ids);
  std::size_t n = ids.size(), kk = static_cast<std::size_t>(k);
  std::size_t base = n / kk, extra = n % kk;
  std::size_t at = 0;
  for (std::size_t f = 0; f < kk; ++f) {
    std::size_t len = base + (f < extra ? 1 : 0);
    split.folds.emplace_back(ids.begin() + at, ids.begin() + at + len);
    at += len;
  }
  split.validate();
  return split;
}

// Index of each training utterance's fold.
inline std::unordered_map<std::string, std::size_t> fold_of(
    const CorpusSplit& split) {
  std::unordered_map<std::string, std::size_t> out;
  for (std::size_t f = 0; f < split.folds.size(); ++f)
    for (const auto& id : split.folds[f]) out[id] = f;
  return out;
}

// The fluent side of a labeled utterance: tokens not marked edited/filler.
inline std::vector<std::string> gold_fluent(const Utterance& u) {
  std::vector<std::string> out;
  if (!u.gold) return u.surfaces();
  for (std::size_t i = 0; i < u.tokens.size(); ++i)
    if ((*u.gold)[i] == Label::Fluent) out.push_back(u.tokens[i].surface);
  return out;
}

}  // namespace disfl
