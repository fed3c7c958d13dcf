// ngram.hpp -- interpolated Kneser-Ney n-gram language models.
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
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "disfl/common.hpp"
#include "disfl/corpus.hpp"

namespace disfl {

inline constexpr int kMaxNgramOrder = 5;

struct NgramKey {
  std::uint32_t ids[kMaxNgramOrder] = {0, 0, 0, 0, 0};
  std::uint8_t len = 0;

  static NgramKey of(std::span<const std::uint32_t> g) {
    NgramKey k;
    k.len = static_cast<std::uint8_t>(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) k.ids[i] = g[i];
    return k;
  }

  NgramKey suffix() const {
    NgramKey k;
    k.len = static_cast<std::uint8_t>(len - 1);
    for (int i = 1; i < len; ++i) k.ids[i - 1] = ids[i];
    return k;
  }

  NgramKey context() const {
    NgramKey k;
    k.len = static_cast<std::uint8_t>(len - 1);
    for (int i = 0; i + 1 < len; ++i) k.ids[i] = ids[i];
    return k;
  }

  std::uint32_t last() const { return ids[len - 1]; }

  bool operator==(const NgramKey& o) const {
    if (len != o.len) return false;
    for (int i = 0; i < len; ++i)
      if (ids[i] != o.ids[i]) return false;
    return true;
  }
  bool operator<(const NgramKey& o) const {
    for (int i = 0; i < std::min(len, o.len); ++i)
      if (ids[i] != o.ids[i]) return ids[i] < o.ids[i];
    return len < o.len;
  }
};

struct NgramKeyHash {
  std::size_t operator()(const NgramKey& k) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int i = 0; i < k.len; ++i) {
      h ^= k.ids[i];
      h *= 0x100000001b3ULL;
    }
    h ^= k.len;
    h *= 0x100000001b3ULL;
    return static_cast<std::size_t>(h);
  }
};

// Interpolated Kneser-Ney model with a single discount per level,
// d = n1 / (n1 + 2 n2) from the level's count-of-counts. The highest level
// keeps raw counts; lower levels use continuation counts except for
// <s>-initial grams, which have no left extensions and keep raw counts.
class NgramModel {
 public:
  using CountTable = std::unordered_map<NgramKey, std::uint64_t, NgramKeyHash>;

  // Words seen fewer than unk_threshold times are replaced by the unknown
  // class before counting, so the unknown class receives real mass.
  static NgramModel train_on_sentences(
      const std::vector<std::vector<std::string>>& sentences, int order,
      int unk_threshold = 1) {
    if (order < 1 || order > kMaxNgramOrder)
      throw DataError("ngram order out of range [1," +
                      std::to_string(kMaxNgramOrder) + "]: " +
                      std::to_string(order));
    if (sentences.empty()) throw DataError("ngram training corpus is empty");

    NgramModel m;
    m.order_ = order;
    m.unk_threshold_ = unk_threshold;

    std::unordered_map<std::string, std::uint64_t> freq;
    for (const auto& s : sentences)
      for (const auto& w : s) ++freq[w];
    // Insertion order of the vocab follows first occurrence, which keeps
    // training deterministic.
    for (const auto& s : sentences)
      for (const auto& w : s)
        if (freq[w] >= static_cast<std::uint64_t>(unk_threshold))
          m.vocab_.add(w);

    // Raw counts at every level; each level pads with its own <s> context.
    std::vector<CountTable> raw(static_cast<std::size_t>(order) + 1);
    for (const auto& s : sentences) {
      std::vector<std::uint32_t> ids;
      ids.reserve(s.size() + static_cast<std::size_t>(order));
      for (int k = 1; k <= order; ++k) {
        ids.clear();
        for (int i = 0; i + 1 < k; ++i) ids.push_back(Vocab::kBos);
        for (const auto& w : s) ids.push_back(m.vocab_.lookup(w));
        ids.push_back(Vocab::kEos);
        for (std::size_t start = 0; start + k <= ids.size(); ++start)
          ++raw[static_cast<std::size_t>(k)][NgramKey::of(
              std::span<const std::uint32_t>(ids.data() + start,
                                             static_cast<std::size_t>(k)))];
      }
    }

    m.levels_.resize(static_cast<std::size_t>(order) + 1);
    m.levels_[static_cast<std::size_t>(order)] =
        raw[static_cast<std::size_t>(order)];
    for (int k = order - 1; k >= 1; --k) {
      CountTable& tbl = m.levels_[static_cast<std::size_t>(k)];
      // Continuation counts: one per distinct left extension at level k+1.
      for (const auto& [key, cnt] : raw[static_cast<std::size_t>(k) + 1]) {
        (void)cnt;
        NgramKey g = key.suffix();
        if (g.ids[0] == Vocab::kBos) continue;
        ++tbl[g];
      }
      for (const auto& [key, cnt] : raw[static_cast<std::size_t>(k)])
        if (key.ids[0] == Vocab::kBos) tbl[key] = cnt;
    }

    m.finalize();
    return m;
  }

  static NgramModel train(const std::vector<Utterance>& corpus, int order,
                          int unk_threshold = 1) {
    std::vector<std::vector<std::string>> sentences;
    sentences.reserve(corpus.size());
    for (const auto& u : corpus) sentences.push_back(u.surfaces());
    return train_on_sentences(sentences, order, unk_threshold);
  }

  int order() const { return order_; }
  const Vocab& vocab() const { return vocab_; }
  double discount(int level) const {
    return discounts_.at(static_cast<std::size_t>(level));
  }

  // Number of predictable symbols: the whole vocab except <s>.
  std::size_t prediction_vocab_size() const { return vocab_.size() - 1; }

  double cond_prob_ids(std::span<const std::uint32_t> context,
                       std::uint32_t word) const {
    std::size_t ctx_len =
        std::min(context.size(), static_cast<std::size_t>(order_ - 1));
    std::span<const std::uint32_t> ctx =
        context.subspan(context.size() - ctx_len, ctx_len);
    return level_prob(static_cast<int>(ctx_len) + 1, ctx, word);
  }

  double cond_logprob_ids(std::span<const std::uint32_t> context,
                          std::uint32_t word) const {
    return std::log(cond_prob_ids(context, word));
  }

  // Conditional for the channel decoder. prev == kBos starts a sentence.
  double bigram_logprob(std::uint32_t prev, std::uint32_t word) const {
    std::uint32_t ctx[1] = {prev};
    return cond_logprob_ids(std::span<const std::uint32_t>(ctx, 1), word);
  }

  std::vector<std::uint32_t> to_ids(
      const std::vector<std::string>& words) const {
    std::vector<std::uint32_t> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(vocab_.lookup(w));
    return ids;
  }

  // Sum of conditional log probabilities including the end-of-sentence
  // transition. Finite for any input: unseen words score as the unknown
  // class. The empty sentence scores log p(</s> | <s>).
  double logprob_ids(std::span<const std::uint32_t> words) const {
    std::vector<std::uint32_t> seq;
    seq.reserve(words.size() + static_cast<std::size_t>(order_));
    for (int i = 0; i + 1 < order_; ++i) seq.push_back(Vocab::kBos);
    std::size_t bos = seq.size();
    for (auto w : words) seq.push_back(w);
    seq.push_back(Vocab::kEos);
    double total = 0.0;
    for (std::size_t t = bos; t < seq.size(); ++t)
      total += cond_logprob_ids(
          std::span<const std::uint32_t>(seq.data(), t), seq[t]);
    return total;
  }

  double logprob(const std::vector<std::string>& sentence) const {
    auto ids = to_ids(sentence);
    return logprob_ids(ids);
  }

  static constexpr char kMagic[6] = "DFNG1";

  void save(std::ostream& os) const {
    BinaryWriter bw(os);
    bw.magic(kMagic);
    bw.u8(static_cast<std::uint8_t>(order_));
    bw.u32(static_cast<std::uint32_t>(unk_threshold_));
    vocab_.save(bw);
    for (int k = 1; k <= order_; ++k)
      bw.f64(discounts_[static_cast<std::size_t>(k)]);
    for (int k = 1; k <= order_; ++k) {
      const CountTable& tbl = levels_[static_cast<std::size_t>(k)];
      std::vector<NgramKey> keys;
      keys.reserve(tbl.size());
      for (const auto& [key, cnt] : tbl) {
        (void)cnt;
        keys.push_back(key);
      }
      std::sort(keys.begin(), keys.end());
      bw.u64(keys.size());
      for (const auto& key : keys) {
        for (int i = 0; i < k; ++i) bw.u32(key.ids[i]);
        bw.u64(tbl.at(key));
      }
    }
  }

  static NgramModel load(std::istream& is) {
    BinaryReader br(is);
    br.expect_magic(kMagic);
    NgramModel m;
    m.order_ = br.u8();
    if (m.order_ < 1 || m.order_ > kMaxNgramOrder)
      throw DataError("ngram model: bad order");
    m.unk_threshold_ = static_cast<int>(br.u32());
    m.vocab_ = Vocab::load(br);
    m.discounts_.assign(static_cast<std::size_t>(m.order_) + 1, 0.0);
    for (int k = 1; k <= m.order_; ++k)
      m.discounts_[static_cast<std::size_t>(k)] = br.f64();
    m.levels_.resize(static_cast<std::size_t>(m.order_) + 1);
    for (int k = 1; k <= m.order_; ++k) {
      std::uint64_t n = br.u64();
      CountTable& tbl = m.levels_[static_cast<std::size_t>(k)];
      tbl.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i) {
        NgramKey key;
        key.len = static_cast<std::uint8_t>(k);
        for (int j = 0; j < k; ++j) key.ids[j] = br.u32();
        tbl[key] = br.u64();
      }
    }
    m.rebuild_aggregates();
    return m;
  }

 private:
  struct CtxStats {
    std::uint64_t total = 0;
    std::uint64_t distinct = 0;
  };
  using CtxTable = std::unordered_map<NgramKey, CtxStats, NgramKeyHash>;

  void finalize() {
    discounts_.assign(static_cast<std::size_t>(order_) + 1, 0.0);
    for (int k = 1; k <= order_; ++k) {
      std::uint64_t n1 = 0, n2 = 0;
      for (const auto& [key, cnt] : levels_[static_cast<std::size_t>(k)]) {
        (void)key;
        if (cnt == 1) ++n1;
        if (cnt == 2) ++n2;
      }
      double d;
      if (n1 + 2 * n2 == 0) {
        d = 0.5;
      } else {
        d = static_cast<double>(n1) / static_cast<double>(n1 + 2 * n2);
      }
      // Keep a little mass flowing to lower levels even when the
      // count-of-counts degenerate (n1 == 0), so no conditional is ever 0.
      d = std::max(d, 0.05);
      discounts_[static_cast<std::size_t>(k)] = d;
    }
    rebuild_aggregates();
  }

  void rebuild_aggregates() {
    ctx_.assign(static_cast<std::size_t>(order_) + 1, CtxTable{});
    for (int k = 1; k <= order_; ++k) {
      CtxTable& agg = ctx_[static_cast<std::size_t>(k)];
      for (const auto& [key, cnt] : levels_[static_cast<std::size_t>(k)]) {
        CtxStats& st = agg[key.context()];
        st.total += cnt;
        st.distinct += 1;
      }
    }
  }

  double level_prob(int level, std::span<const std::uint32_t> ctx,
                    std::uint32_t word) const {
    if (level <= 0)
      return 1.0 / static_cast<double>(prediction_vocab_size());
    const CtxTable& agg = ctx_[static_cast<std::size_t>(level)];
    NgramKey ctx_key = NgramKey::of(ctx);
    auto it = agg.find(ctx_key);
    if (it == agg.end() || it->second.total == 0)
      return level_prob(level - 1, shrink(ctx), word);
    const CtxStats& st = it->second;
    NgramKey full = ctx_key;
    full.ids[full.len] = word;
    full.len = static_cast<std::uint8_t>(full.len + 1);
    const CountTable& tbl = levels_[static_cast<std::size_t>(level)];
    auto cit = tbl.find(full);
    double c = cit == tbl.end() ? 0.0 : static_cast<double>(cit->second);
    double d = discounts_[static_cast<std::size_t>(level)];
    double tot = static_cast<double>(st.total);
    double high = std::max(c - d, 0.0) / tot;
    double lambda = d * static_cast<double>(st.distinct) / tot;
    return high + lambda * level_prob(level - 1, shrink(ctx), word);
  }

  static std::span<const std::uint32_t> shrink(
      std::span<const std::uint32_t> ctx) {
    return ctx.empty() ? ctx : ctx.subspan(1);
  }

  int order_ = 0;
  int unk_threshold_ = 1;
  Vocab vocab_;
  std::vector<double> discounts_;   // index by level, [0] unused
  std::vector<CountTable> levels_;  // index by level, [0] unused
  std::vector<CtxTable> ctx_;       // context aggregates per level
};

}  // namespace disfl
