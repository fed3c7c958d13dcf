// synth.hpp -- synthetic corpora: a small fluent template grammar plus
// channel-driven disfluency injection with exact gold structure.
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
#include <set>
#include <string>
#include <vector>

#include "disfl/channel.hpp"
#include "disfl/common.hpp"
#include "disfl/corpus.hpp"

namespace disfl {

namespace detail {

// Slot-filled templates. Several of them carry long-range structure
// (number agreement across a relative clause, either/or frames) that a
// bigram model cannot track, so stronger language models have signal to
// contribute when ranking candidate fluent strings.
struct FluentGrammar {
  std::vector<std::string> city = {"boston",  "denver",  "dallas",
                                   "seattle", "austin",  "chicago",
                                   "portland", "atlanta"};
  std::vector<std::string> day = {"monday", "tuesday", "thursday",
                                  "friday", "sunday"};
  std::vector<std::string> noun_sg = {"teacher", "student", "pilot",
                                      "driver",  "doctor",  "farmer"};
  std::vector<std::string> noun_pl = {"teachers", "students", "pilots",
                                      "drivers",  "doctors",  "farmers"};
  std::vector<std::string> verb_sg = {"sleeps", "works", "travels",
                                      "smiles", "waits", "reads"};
  std::vector<std::string> verb_pl = {"sleep", "work", "travel",
                                      "smile", "wait", "read"};
  std::vector<std::string> name = {"mary",  "john",  "sarah",
                                   "peter", "alice", "tom"};
  std::vector<std::string> adv = {"quickly", "quietly", "often", "rarely"};
  std::vector<std::string> action = {"leave", "pack", "drive", "call"};
  std::vector<std::string> place = {"station", "airport", "harbor", "market"};
  std::vector<std::string> daypart = {"tomorrow", "tonight", "today"};

  std::vector<std::string> sample(Rng& rng) const {
    auto pick = [&rng](const std::vector<std::string>& v) {
      return v[rng.next_index(v.size())];
    };
    switch (rng.next_index(20)) {
      case 0:
        return {"i", "want", "a", "flight", "to", pick(city), "on", pick(day)};
      case 1:
        return {"i",        "need", "to",         "fly", "from",
                pick(city), "to",   pick(city),   pick(daypart)};
      case 2: {
        std::size_t k = rng.next_index(noun_sg.size());
        std::size_t v = rng.next_index(verb_sg.size());
        return {"the",  noun_sg[k], "that", "the",      pick(name),
                "saw",  verb_sg[v], "very", pick(adv)};
      }
      case 3: {
        std::size_t k = rng.next_index(noun_pl.size());
        std::size_t v = rng.next_index(verb_pl.size());
        return {"the",  noun_pl[k], "that", "the",      pick(name),
                "saw",  verb_pl[v], "very", pick(adv)};
      }
      case 4:
        return {"either", "we", pick(action), "today",
                "or",     "we", pick(action), "tomorrow"};
      case 5:
        return {pick(name),    "said", "that", "the", pick(noun_sg),
                pick(verb_sg), "near", "the",  pick(place)};
      case 6:
        return {"do",          "we",  "know", "whether", "the",
                pick(noun_pl), pick(verb_pl), "by",      "the", pick(place)};
      case 7:
        return {"book", "a",        "ticket", "from",     pick(city),
                "to",   pick(city), "for",    pick(name), "please"};
      case 8:
        return {"she",       "thinks", "that", pick(name), "wants",
                "a",         pick(noun_sg),    "from",     "the",
                pick(place)};
      case 9:
        return {"when",   "the",         "rain", "comes", "the",
                pick(noun_pl), "usually", pick(verb_pl),  "early"};
      case 10: {
        std::size_t k = rng.next_index(noun_sg.size());
        return {"the",  noun_sg[k], "near", "the",  pick(place),
                pick(verb_sg), "when", "the", "rain", "comes"};
      }
      case 11: {
        std::size_t k = rng.next_index(noun_pl.size());
        return {"the",  noun_pl[k], "near", "the",  pick(place),
                pick(verb_pl), "after", "the", "snow", "comes"};
      }
      case 12:
        return {pick(name), "and", pick(name), "often", pick(action),
                "near",     "the", pick(place)};
      case 13:
        return {"the", pick(noun_sg), "from", pick(city),
                pick(verb_sg), "on", pick(day)};
      case 14:
        return {"the", pick(noun_pl), "from", pick(city), pick(verb_pl),
                "on",  pick(day)};
      // Topicalized variants: constituent orders vary so junction word
      // pairs stay locally plausible and candidate selection is decided by
      // sentence-level structure.
      case 15:
        return {"on", pick(day), "i", "want", "a", "flight", "to",
                pick(city)};
      case 16:
        return {"from", pick(city), "to",  pick(city),
                "we",   pick(action), pick(daypart)};
      case 17:
        return {"near",         "the",         pick(place), "the",
                pick(noun_pl), pick(verb_pl), pick(daypart)};
      case 18:
        return {"to", pick(city), "the", pick(noun_sg), pick(verb_sg),
                "on", pick(day)};
      default:
        return {pick(daypart), "the",        pick(noun_pl), "from",
                pick(city),    pick(verb_pl), "early"};
    }
  }
};

}  // namespace detail

// Substitution seeds derived from the template grammar's slot structure:
// speakers repair within a category ("boston" for "denver") and confuse
// number ("teacher" for "teachers"), and insertions favor function words.
// Seeding the generating channel this way yields reparanda that are locally
// plausible, so candidate analyses differ in ways only longer-context
// language models can separate.
inline std::vector<ChannelModel::SubSeed> grammar_substitution_seeds() {
  detail::FluentGrammar g;
  std::vector<ChannelModel::SubSeed> seeds;
  auto same_category = [&seeds](const std::vector<std::string>& lst,
                                std::uint64_t count) {
    for (const auto& a : lst)
      for (const auto& b : lst)
        if (a != b) seeds.push_back({a, b, count});
  };
  // Number confusions and same-slot repairs both occur; the sg/pl pairs
  // are the ones whose correct reading is fixed by agreement, often beyond
  // a bigram's horizon.
  for (const auto* lst :
       {&g.city, &g.day, &g.noun_sg, &g.noun_pl, &g.verb_sg, &g.verb_pl,
        &g.name, &g.adv, &g.action, &g.place, &g.daypart})
    same_category(*lst, 25);
  for (std::size_t i = 0; i < g.noun_sg.size(); ++i) {
    seeds.push_back({g.noun_pl[i], g.noun_sg[i], 70});
    seeds.push_back({g.noun_sg[i], g.noun_pl[i], 70});
  }
  for (std::size_t i = 0; i < g.verb_sg.size(); ++i) {
    seeds.push_back({g.verb_pl[i], g.verb_sg[i], 70});
    seeds.push_back({g.verb_sg[i], g.verb_pl[i], 70});
  }
  for (const char* w : {"the", "to", "a", "i", "we", "from", "for", "that"})
    seeds.push_back({"", w, 25});
  // Modest insertion mass over the whole lexicon keeps restart readings of
  // arbitrary spans plausible, which is what makes candidate selection
  // ambiguous enough to need language-model evidence.
  std::set<std::string> all_words;
  for (const auto* lst :
       {&g.city, &g.day, &g.noun_sg, &g.noun_pl, &g.verb_sg, &g.verb_pl,
        &g.name, &g.adv, &g.action, &g.place, &g.daypart})
    for (const auto& w : *lst) all_words.insert(w);
  for (const auto& w : all_words) seeds.push_back({"", w, 8});
  return seeds;
}

// Deterministic fluent corpus from the built-in template grammar.
inline std::vector<Utterance> generate_fluent_corpus(std::size_t count,
                                                     std::uint64_t seed) {
  detail::FluentGrammar grammar;
  Rng rng(seed);
  std::vector<Utterance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Utterance u;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%06zu", i);
    u.id = buf;
    u.tokens = make_tokens(grammar.sample(rng));
    out.push_back(std::move(u));
  }
  return out;
}

struct SynthesisOptions {
  double interregnum_prob = 0.35;  // chance of a filler stretch per region
  std::size_t max_reparandum = 4;
};

namespace detail {

// Draws one alignment-op chain from the channel parameters. The draw is a
// single faithful sample: if it is infeasible here (consumes more repair
// words than remain, emits nothing, or exceeds the reparandum cap) no
// region is injected at this position. Retrying instead would condition
// the injected chains on feasibility and skew the transition statistics
// the trainer is later checked against.
inline std::vector<AlignKind> sample_chain(const ChannelModel& model,
                                           std::size_t repair_available,
                                           const SynthesisOptions& opt,
                                           Rng& rng) {
  const auto& p = model.params();
  std::vector<AlignKind> ops;
  int last = ChannelModel::kStart;
  std::size_t emitted = 0, consumed = 0;
  while (true) {
    double r = rng.next_double();
    int kind = 3;
    double acc = 0.0;
    for (int c = 0; c < 4; ++c) {
      acc += p.op[last][c];
      if (r < acc) {
        kind = c;
        break;
      }
    }
    ops.push_back(static_cast<AlignKind>(kind));
    AlignKind k = static_cast<AlignKind>(kind);
    if (k == AlignKind::Copy || k == AlignKind::Substitute ||
        k == AlignKind::Insert)
      ++emitted;
    if (k == AlignKind::Copy || k == AlignKind::Substitute ||
        k == AlignKind::Delete)
      ++consumed;
    last = ChannelModel::row_of(k);
    if (rng.next_double() < p.p_stop) break;
    if (ops.size() >= 4 * opt.max_reparandum) break;  // runaway guard
  }
  if (emitted == 0 || emitted > opt.max_reparandum) return {};
  if (consumed > repair_available) return {};
  return ops;
}

// Word sampled from the substitution distribution for `ctx`, excluding the
// boundary/unknown symbols, single-word fillers, and `exclude` itself.
inline std::string sample_substitution_word(const ChannelModel& model,
                                            std::uint32_t ctx,
                                            const std::string& exclude,
                                            Rng& rng) {
  const Vocab& v = model.vocab();
  std::vector<std::uint32_t> support;
  std::vector<double> probs;
  double total = 0.0;
  for (std::uint32_t id = 3; id < v.size(); ++id) {
    const std::string& w = v.word(id);
    if (w == exclude || model.lexicon().contains_word(w)) continue;
    double pr = model.substitution_prob(ctx, id);
    support.push_back(id);
    probs.push_back(pr);
    total += pr;
  }
  if (support.empty()) return exclude;  // degenerate vocab; caller copes
  double r = rng.next_double() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    acc += probs[i];
    if (r < acc) return v.word(support[i]);
  }
  return v.word(support.back());
}

}  // namespace detail

// Injects rough-copy disfluencies into fluent utterances. Every output
// token carries a gold label and every injected region carries its exact
// span annotation, so the result doubles as channel-model training data.
// `rate` is the per-position probability that a region opens; rate == 0
// returns the input token sequences unchanged with all-fluent labels.
inline std::vector<Utterance> synthesize_corpus(
    const std::vector<Utterance>& fluent, const ChannelModel& model,
    double rate, std::uint64_t seed,
    const SynthesisOptions& opt = SynthesisOptions{}) {
  if (rate < 0.0 || rate > 1.0)
    throw DataError("synthesize_corpus: rate must be in [0,1]");
  Rng rng(seed);
  std::vector<Utterance> out;
  out.reserve(fluent.size());
  for (const auto& src : fluent) {
    std::vector<std::string> words;
    for (const auto& t : src.tokens) words.push_back(lowercase(t.surface));
    Utterance dst;
    dst.id = src.id;
    dst.gold.emplace();
    const std::size_t m = words.size();
    std::size_t j = 0;
    while (j <= m) {
      bool at_end = j == m;
      bool inject = rate > 0.0 && rng.next_double() < rate;
      // A reparandum aligned to upcoming repair words only makes sense when
      // its first repair word is an ordinary token.
      if (inject && !at_end && model.lexicon().contains_word(words[j]))
        inject = false;
      if (inject) {
        std::vector<AlignKind> chain =
            detail::sample_chain(model, m - j, opt, rng);
        if (!chain.empty()) {
          RepairAnnotation region;
          region.rep_begin = dst.tokens.size();
          std::size_t cursor = j;
          for (AlignKind k : chain) {
            switch (k) {
              case AlignKind::Copy:
                dst.tokens.push_back(make_token(words[cursor]));
                dst.gold->push_back(Label::Edited);
                ++cursor;
                break;
              case AlignKind::Substitute:
                dst.tokens.push_back(make_token(
                    detail::sample_substitution_word(
                        model, model.word_id(words[cursor]), words[cursor],
                        rng)));
                dst.gold->push_back(Label::Edited);
                ++cursor;
                break;
              case AlignKind::Insert:
                dst.tokens.push_back(make_token(
                    detail::sample_substitution_word(
                        model, ChannelModel::kNullRepair, "", rng)));
                dst.gold->push_back(Label::Edited);
                break;
              case AlignKind::Delete:
                ++cursor;
                break;
            }
          }
          region.rep_end = dst.tokens.size();
          region.intr_begin = dst.tokens.size();
          if (rng.next_double() < opt.interregnum_prob) {
            const auto& entries = model.lexicon().entries();
            const auto& entry = entries[rng.next_index(entries.size())];
            for (const auto& w : entry) {
              dst.tokens.push_back(make_token(w));
              dst.gold->push_back(Label::Filler);
            }
          }
          region.intr_end = dst.tokens.size();
          region.repair_begin = dst.tokens.size();
          // The consumed source words become the repair span.
          for (std::size_t c = j; c < cursor; ++c) {
            dst.tokens.push_back(make_token(words[c]));
            dst.gold->push_back(Label::Fluent);
          }
          region.repair_end = dst.tokens.size();
          dst.regions.push_back(region);
          j = cursor;
          if (region.repair_begin == region.repair_end && !at_end) {
            // Restart: emit the next source word plainly so at most one
            // region opens per position.
            dst.tokens.push_back(make_token(words[j]));
            dst.gold->push_back(Label::Fluent);
            ++j;
          }
          if (at_end) break;
          continue;
        }
      }
      if (at_end) break;
      dst.tokens.push_back(make_token(words[j]));
      dst.gold->push_back(Label::Fluent);
      ++j;
    }
    out.push_back(std::move(dst));
  }
  return out;
}

}  // namespace disfl
