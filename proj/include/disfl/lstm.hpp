// lstm.hpp -- forward/backward LSTM language models trained from scratch
// with truncated backpropagation through time.
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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "disfl/common.hpp"
#include "disfl/corpus.hpp"

namespace disfl {

enum class LmDirection : std::uint8_t { Forward = 0, Backward = 1 };

struct LstmConfig {
  int layers = 2;
  int hidden = 200;
  int embed = 200;
  int batch = 20;
  int epochs = 13;
  double lr0 = 1.0;
  double decay = 0.5;
  int decay_after_epoch = 4;
  int max_len = 50;
  int bptt_window = 20;
  std::uint64_t seed = 1;
  LmDirection direction = LmDirection::Forward;
  int unk_threshold = 1;
  double clip_norm = 5.0;
  double init_scale = 0.05;

  // Small profile for tests and end-to-end runs on a single machine.
  static LstmConfig desk_scale() {
    LstmConfig c;
    c.hidden = 64;
    c.embed = 64;
    return c;
  }

  // The full-size profile (the struct defaults).
  static LstmConfig full_scale() { return LstmConfig{}; }

  void validate() const {
    if (layers < 1 || hidden < 1 || embed < 1 || batch < 1 || epochs < 0 ||
        max_len < 1 || bptt_window < 1)
      throw DataError("lstm config: sizes must be positive");
    if (decay <= 0.0 || decay > 1.0)
      throw DataError("lstm config: decay must be in (0,1]");
  }
};

// Stepped schedule: full rate through `decay_after_epoch`, then geometric
// decay. Epochs are 1-based.
inline double learning_rate_for_epoch(const LstmConfig& cfg, int epoch) {
  int over = std::max(0, epoch - cfg.decay_after_epoch);
  return cfg.lr0 * std::pow(cfg.decay, over);
}

class LstmModel;
double check_gradients(
    const LstmModel& model,
    const std::vector<std::vector<std::string>>& minibatch);

class LstmModel {
 public:
  struct Layer {
    Eigen::MatrixXd wx;  // 4H x input
    Eigen::MatrixXd wh;  // 4H x H
    Eigen::MatrixXd b;   // 4H x 1
  };

  struct Gradients {
    Eigen::MatrixXd embedding;
    std::vector<Layer> layers;
    Eigen::MatrixXd w_out;
    Eigen::MatrixXd b_out;
  };

  static constexpr char kMagic[6] = "DFLS1";

  static LstmModel train_on_sentences(
      const std::vector<std::vector<std::string>>& sentences,
      const LstmConfig& cfg) {
    cfg.validate();
    if (sentences.empty()) throw DataError("lstm training corpus is empty");
    LstmModel m;
    m.cfg_ = cfg;
    m.build_vocab(sentences);
    m.init_parameters();

    std::vector<std::vector<std::uint32_t>> seqs;
    seqs.reserve(sentences.size());
    for (const auto& s : sentences) seqs.push_back(m.to_training_ids(s));

    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      double lr = learning_rate_for_epoch(cfg, epoch);
      shuffle_rng.shuffle(order);
      double nll_sum = 0.0;
      std::size_t token_count = 0;
      for (std::size_t at = 0; at < order.size();
           at += static_cast<std::size_t>(cfg.batch)) {
        std::size_t bsz = std::min(static_cast<std::size_t>(cfg.batch),
                                   order.size() - at);
        std::vector<const std::vector<std::uint32_t>*> batch;
        for (std::size_t b = 0; b < bsz; ++b)
          batch.push_back(&seqs[order[at + b]]);
        auto [nll, tokens] = m.train_batch(batch, lr);
        nll_sum += nll;
        token_count += tokens;
      }
      m.epoch_losses_.push_back(token_count == 0
                                    ? 0.0
                                    : nll_sum / static_cast<double>(token_count));
    }
    return m;
  }

  static LstmModel train(const std::vector<Utterance>& corpus,
                         const LstmConfig& cfg) {
    std::vector<std::vector<std::string>> sentences;
    sentences.reserve(corpus.size());
    for (const auto& u : corpus) sentences.push_back(u.surfaces());
    return train_on_sentences(sentences, cfg);
  }

  const LstmConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  const std::vector<double>& epoch_losses() const { return epoch_losses_; }

  // Sum of next-token log probabilities including the end-of-sentence
  // transition; a backward model scores the reversed sequence.
  double logprob(const std::vector<std::string>& sentence) const {
    return logprob_batch({sentence})[0];
  }

  std::vector<double> logprob_batch(
      const std::vector<std::vector<std::string>>& sentences) const {
    if (sentences.empty()) return {};
    std::vector<std::vector<std::uint32_t>> seqs;
    seqs.reserve(sentences.size());
    for (const auto& s : sentences) seqs.push_back(to_scoring_ids(s));
    std::vector<const std::vector<std::uint32_t>*> batch;
    for (const auto& s : seqs) batch.push_back(&s);
    Forward fwd = forward(batch, /*window_state=*/nullptr);
    std::vector<double> out(sentences.size(), 0.0);
    for (std::size_t t = 0; t < fwd.steps.size(); ++t) {
      const Step& st = fwd.steps[t];
      for (std::size_t b = 0; b < batch.size(); ++b) {
        if (t + 1 >= batch[b]->size()) continue;
        std::uint32_t target = (*batch[b])[t + 1];
        out[b] += st.log_probs(target, static_cast<Eigen::Index>(b));
      }
    }
    return out;
  }

  // Distribution over the next token given a prefix (forward direction of
  // the model's own input convention).
  std::vector<double> next_distribution(
      const std::vector<std::string>& prefix) const {
    std::vector<std::uint32_t> ids;
    ids.push_back(Vocab::kBos);
    for (const auto& w : prefix) ids.push_back(vocab_.lookup(w));
    ids.push_back(Vocab::kEos);  // placeholder target; ignored
    std::vector<const std::vector<std::uint32_t>*> batch = {&ids};
    Forward fwd = forward(batch, nullptr);
    const Step& st = fwd.steps[ids.size() - 2];
    std::vector<double> probs(vocab_.size());
    for (std::size_t v = 0; v < vocab_.size(); ++v)
      probs[v] = std::exp(st.log_probs(static_cast<Eigen::Index>(v), 0));
    return probs;
  }

  void save(std::ostream& os) const {
    BinaryWriter bw(os);
    bw.magic(kMagic);
    bw.u32(static_cast<std::uint32_t>(cfg_.layers));
    bw.u32(static_cast<std::uint32_t>(cfg_.hidden));
    bw.u32(static_cast<std::uint32_t>(cfg_.embed));
    bw.u32(static_cast<std::uint32_t>(cfg_.batch));
    bw.u32(static_cast<std::uint32_t>(cfg_.epochs));
    bw.f64(cfg_.lr0);
    bw.f64(cfg_.decay);
    bw.u32(static_cast<std::uint32_t>(cfg_.decay_after_epoch));
    bw.u32(static_cast<std::uint32_t>(cfg_.max_len));
    bw.u32(static_cast<std::uint32_t>(cfg_.bptt_window));
    bw.u64(cfg_.seed);
    bw.u8(static_cast<std::uint8_t>(cfg_.direction));
    bw.u32(static_cast<std::uint32_t>(cfg_.unk_threshold));
    bw.f64(cfg_.clip_norm);
    bw.f64(cfg_.init_scale);
    vocab_.save(bw);
    auto write_mat = [&bw](const Eigen::MatrixXd& m) {
      bw.u64(static_cast<std::uint64_t>(m.rows()));
      bw.u64(static_cast<std::uint64_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) bw.f64(m(r, c));
    };
    write_mat(embedding_);
    bw.u32(static_cast<std::uint32_t>(layers_.size()));
    for (const auto& l : layers_) {
      write_mat(l.wx);
      write_mat(l.wh);
      write_mat(l.b);
    }
    write_mat(w_out_);
    write_mat(b_out_);
    bw.u64(epoch_losses_.size());
    for (double v : epoch_losses_) bw.f64(v);
  }

  static LstmModel load(std::istream& is) {
    BinaryReader br(is);
    br.expect_magic(kMagic);
    LstmModel m;
    m.cfg_.layers = static_cast<int>(br.u32());
    m.cfg_.hidden = static_cast<int>(br.u32());
    m.cfg_.embed = static_cast<int>(br.u32());
    m.cfg_.batch = static_cast<int>(br.u32());
    m.cfg_.epochs = static_cast<int>(br.u32());
    m.cfg_.lr0 = br.f64();
    m.cfg_.decay = br.f64();
    m.cfg_.decay_after_epoch = static_cast<int>(br.u32());
    m.cfg_.max_len = static_cast<int>(br.u32());
    m.cfg_.bptt_window = static_cast<int>(br.u32());
    m.cfg_.seed = br.u64();
    m.cfg_.direction = static_cast<LmDirection>(br.u8());
    m.cfg_.unk_threshold = static_cast<int>(br.u32());
    m.cfg_.clip_norm = br.f64();
    m.cfg_.init_scale = br.f64();
    m.vocab_ = Vocab::load(br);
    auto read_mat = [&br]() {
      std::uint64_t rows = br.u64(), cols = br.u64();
      Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = br.f64();
      return m;
    };
    m.embedding_ = read_mat();
    std::uint32_t nlayers = br.u32();
    for (std::uint32_t i = 0; i < nlayers; ++i) {
      Layer l;
      l.wx = read_mat();
      l.wh = read_mat();
      l.b = read_mat();
      m.layers_.push_back(std::move(l));
    }
    m.w_out_ = read_mat();
    m.b_out_ = read_mat();
    std::uint64_t nl = br.u64();
    for (std::uint64_t i = 0; i < nl; ++i)
      m.epoch_losses_.push_back(br.f64());
    return m;
  }

  // Analytic gradients of the batch loss (summed cross entropy divided by
  // the number of sequences) at the current parameters.
  Gradients analytic_gradients(
      const std::vector<std::vector<std::string>>& minibatch) const {
    std::vector<std::vector<std::uint32_t>> seqs;
    for (const auto& s : minibatch) seqs.push_back(to_training_ids(s));
    std::vector<const std::vector<std::uint32_t>*> batch;
    for (const auto& s : seqs) batch.push_back(&s);
    Gradients g = zero_gradients();
    Forward fwd = forward(batch, nullptr);
    backward(batch, fwd, g);
    return g;
  }

  double batch_loss(
      const std::vector<std::vector<std::string>>& minibatch) const {
    std::vector<std::vector<std::uint32_t>> seqs;
    for (const auto& s : minibatch) seqs.push_back(to_training_ids(s));
    std::vector<const std::vector<std::uint32_t>*> batch;
    for (const auto& s : seqs) batch.push_back(&s);
    Forward fwd = forward(batch, nullptr);
    return fwd.loss;
  }

  // Parameter traversal in a fixed order; used by the finite-difference
  // check and the initializer.
  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    fn("embedding", embedding_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::string tag = "layer" + std::to_string(i);
      fn(tag + ".wx", layers_[i].wx);
      fn(tag + ".wh", layers_[i].wh);
      fn(tag + ".b", layers_[i].b);
    }
    fn("w_out", w_out_);
    fn("b_out", b_out_);
  }

  template <typename Fn>
  void for_each_gradient(Gradients& g, Fn&& fn) const {
    fn("embedding", g.embedding);
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
      std::string tag = "layer" + std::to_string(i);
      fn(tag + ".wx", g.layers[i].wx);
      fn(tag + ".wh", g.layers[i].wh);
      fn(tag + ".b", g.layers[i].b);
    }
    fn("w_out", g.w_out);
    fn("b_out", g.b_out);
  }

  bool parameters_equal(const LstmModel& o) const {
    if (embedding_ != o.embedding_ || w_out_ != o.w_out_ ||
        b_out_ != o.b_out_ || layers_.size() != o.layers_.size())
      return false;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].wx != o.layers_[i].wx ||
          layers_[i].wh != o.layers_[i].wh || layers_[i].b != o.layers_[i].b)
        return false;
    return true;
  }

 private:
  struct Step {
    std::vector<std::uint32_t> inputs;  // per batch lane
    // Per layer activations, each H x B (gates 4H x B).
    std::vector<Eigen::MatrixXd> gates;  // pre-activation nonlinearities
    std::vector<Eigen::MatrixXd> i, f, o, g, c, tanh_c, h;
    Eigen::MatrixXd log_probs;  // V x B
    std::vector<bool> active;   // lane has a target at this step
  };

  struct Forward {
    std::vector<Step> steps;
    double loss = 0.0;
    std::size_t target_count = 0;
    // Final state per layer, H x B.
    std::vector<Eigen::MatrixXd> h_last, c_last;
  };

  void build_vocab(const std::vector<std::vector<std::string>>& sentences) {
    std::unordered_map<std::string, std::uint64_t> freq;
    for (const auto& s : sentences)
      for (const auto& w : s) ++freq[w];
    for (const auto& s : sentences)
      for (const auto& w : s)
        if (freq[w] >= static_cast<std::uint64_t>(cfg_.unk_threshold))
          vocab_.add(w);
  }

  void init_parameters() {
    const int H = cfg_.hidden, E = cfg_.embed;
    const int V = static_cast<int>(vocab_.size());
    embedding_.resize(V, E);
    layers_.clear();
    for (int l = 0; l < cfg_.layers; ++l) {
      Layer layer;
      int in = l == 0 ? E : H;
      layer.wx.resize(4 * H, in);
      layer.wh.resize(4 * H, H);
      layer.b.resize(4 * H, 1);
      layers_.push_back(std::move(layer));
    }
    w_out_.resize(V, H);
    b_out_.resize(V, 1);
    Rng rng(cfg_.seed);
    for_each_parameter([&](const std::string&, Eigen::MatrixXd& m) {
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          m(r, c) = rng.next_range(-cfg_.init_scale, cfg_.init_scale);
    });
  }

  // Training sequence: <s> w1 .. wk </s> with the word part reversed for
  // backward models and truncated to max_len (after reversal).
  std::vector<std::uint32_t> to_training_ids(
      const std::vector<std::string>& sentence) const {
    std::vector<std::uint32_t> words;
    words.reserve(sentence.size());
    for (const auto& w : sentence) words.push_back(vocab_.lookup(w));
    if (cfg_.direction == LmDirection::Backward)
      std::reverse(words.begin(), words.end());
    if (words.size() > static_cast<std::size_t>(cfg_.max_len))
      words.resize(static_cast<std::size_t>(cfg_.max_len));
    std::vector<std::uint32_t> seq;
    seq.reserve(words.size() + 2);
    seq.push_back(Vocab::kBos);
    seq.insert(seq.end(), words.begin(), words.end());
    seq.push_back(Vocab::kEos);
    return seq;
  }

  // Scoring uses the same convention but never truncates.
  std::vector<std::uint32_t> to_scoring_ids(
      const std::vector<std::string>& sentence) const {
    std::vector<std::uint32_t> words;
    for (const auto& w : sentence) words.push_back(vocab_.lookup(w));
    if (cfg_.direction == LmDirection::Backward)
      std::reverse(words.begin(), words.end());
    std::vector<std::uint32_t> seq;
    seq.push_back(Vocab::kBos);
    seq.insert(seq.end(), words.begin(), words.end());
    seq.push_back(Vocab::kEos);
    return seq;
  }

  Gradients zero_gradients() const {
    Gradients g;
    g.embedding = Eigen::MatrixXd::Zero(embedding_.rows(), embedding_.cols());
    for (const auto& l : layers_) {
      Layer z;
      z.wx = Eigen::MatrixXd::Zero(l.wx.rows(), l.wx.cols());
      z.wh = Eigen::MatrixXd::Zero(l.wh.rows(), l.wh.cols());
      z.b = Eigen::MatrixXd::Zero(l.b.rows(), l.b.cols());
      g.layers.push_back(std::move(z));
    }
    g.w_out = Eigen::MatrixXd::Zero(w_out_.rows(), w_out_.cols());
    g.b_out = Eigen::MatrixXd::Zero(b_out_.rows(), b_out_.cols());
    return g;
  }

  struct WindowState {
    std::vector<Eigen::MatrixXd> h, c;
  };

  // Forward pass over the full (or windowed) target range. `window_state`
  // supplies carried-in state and is left untouched.
  Forward forward(const std::vector<const std::vector<std::uint32_t>*>& batch,
                  const WindowState* window_state, std::size_t t_begin = 0,
                  std::size_t t_end = SIZE_MAX) const {
    const int H = cfg_.hidden;
    const auto B = static_cast<Eigen::Index>(batch.size());
    std::size_t max_targets = 0;
    for (const auto* s : batch) max_targets = std::max(max_targets, s->size() - 1);
    t_end = std::min(t_end, max_targets);

    Forward fwd;
    std::vector<Eigen::MatrixXd> h(layers_.size()), c(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h[l] = window_state != nullptr ? window_state->h[l]
                                     : Eigen::MatrixXd::Zero(H, B);
      c[l] = window_state != nullptr ? window_state->c[l]
                                     : Eigen::MatrixXd::Zero(H, B);
    }

    for (std::size_t t = t_begin; t < t_end; ++t) {
      Step st;
      st.inputs.resize(batch.size());
      st.active.resize(batch.size());
      Eigen::MatrixXd x(cfg_.embed, B);
      for (Eigen::Index b = 0; b < B; ++b) {
        const auto& seq = *batch[static_cast<std::size_t>(b)];
        bool active = t + 1 < seq.size();
        st.active[static_cast<std::size_t>(b)] = active;
        std::uint32_t in = t < seq.size() - 1 ? seq[t] : Vocab::kEos;
        st.inputs[static_cast<std::size_t>(b)] = in;
        x.col(b) = embedding_.row(in).transpose();
      }
      Eigen::MatrixXd input = x;
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& L = layers_[l];
        Eigen::MatrixXd pre = L.wx * input + L.wh * h[l];
        pre.colwise() += L.b.col(0);
        Eigen::MatrixXd gi = pre.topRows(H).unaryExpr(&sigmoid);
        Eigen::MatrixXd gf = pre.middleRows(H, H).unaryExpr(&sigmoid);
        Eigen::MatrixXd go = pre.middleRows(2 * H, H).unaryExpr(&sigmoid);
        Eigen::MatrixXd gg = pre.bottomRows(H).array().tanh();
        Eigen::MatrixXd c_new =
            gf.cwiseProduct(c[l]) + gi.cwiseProduct(gg);
        Eigen::MatrixXd tc = c_new.array().tanh();
        Eigen::MatrixXd h_new = go.cwiseProduct(tc);
        st.gates.push_back(std::move(pre));
        st.i.push_back(gi);
        st.f.push_back(gf);
        st.o.push_back(go);
        st.g.push_back(gg);
        st.c.push_back(c[l]);  // carried-in cell, needed for backprop
        st.tanh_c.push_back(tc);
        st.h.push_back(h[l]);  // carried-in hidden
        c[l] = std::move(c_new);
        h[l] = std::move(h_new);
        input = h[l];
      }
      Eigen::MatrixXd logits = w_out_ * input;
      logits.colwise() += b_out_.col(0);
      // Column-wise stable log softmax.
      st.log_probs.resize(logits.rows(), logits.cols());
      for (Eigen::Index bcol = 0; bcol < logits.cols(); ++bcol) {
        double mx = logits.col(bcol).maxCoeff();
        double lse = std::log((logits.col(bcol).array() - mx).exp().sum());
        st.log_probs.col(bcol) = logits.col(bcol).array() - mx - lse;
      }
      for (Eigen::Index b = 0; b < B; ++b) {
        const auto& seq = *batch[static_cast<std::size_t>(b)];
        if (t + 1 >= seq.size()) continue;
        fwd.loss -= st.log_probs(seq[t + 1], b);
        ++fwd.target_count;
      }
      fwd.steps.push_back(std::move(st));
    }
    fwd.loss /= static_cast<double>(batch.size());
    fwd.h_last = h;
    fwd.c_last = c;
    return fwd;
  }

  // Backpropagation through the stored steps; accumulates into `g`.
  void backward(const std::vector<const std::vector<std::uint32_t>*>& batch,
                const Forward& fwd, Gradients& g,
                std::size_t t_begin = 0) const {
    const int H = cfg_.hidden;
    const auto B = static_cast<Eigen::Index>(batch.size());
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<Eigen::MatrixXd> dh(layers_.size()), dc(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      dh[l] = Eigen::MatrixXd::Zero(H, B);
      dc[l] = Eigen::MatrixXd::Zero(H, B);
    }
    for (std::size_t ti = fwd.steps.size(); ti-- > 0;) {
      const Step& st = fwd.steps[ti];
      std::size_t t = t_begin + ti;
      // dLogits = softmax - onehot(target), scaled by 1/B, masked.
      Eigen::MatrixXd dlogits =
          st.log_probs.array().exp().matrix() * inv_b;
      for (Eigen::Index b = 0; b < B; ++b) {
        const auto& seq = *batch[static_cast<std::size_t>(b)];
        if (t + 1 < seq.size())
          dlogits(seq[t + 1], b) -= inv_b;
        else
          dlogits.col(b).setZero();
      }
      // Top hidden at this step is o * tanh(c) of the last layer.
      Eigen::MatrixXd top_h =
          st.o.back().cwiseProduct(st.tanh_c.back());
      g.w_out.noalias() += dlogits * top_h.transpose();
      g.b_out.col(0).noalias() += dlogits.rowwise().sum();
      Eigen::MatrixXd dinput = w_out_.transpose() * dlogits;
      for (std::size_t l = layers_.size(); l-- > 0;) {
        Eigen::MatrixXd dht = dh[l] + dinput;
        Eigen::MatrixXd dtc =
            dht.cwiseProduct(st.o[l])
                .cwiseProduct(
                    (1.0 - st.tanh_c[l].array().square()).matrix()) +
            dc[l];
        Eigen::MatrixXd do_ = dht.cwiseProduct(st.tanh_c[l]);
        Eigen::MatrixXd di = dtc.cwiseProduct(st.g[l]);
        Eigen::MatrixXd dg = dtc.cwiseProduct(st.i[l]);
        Eigen::MatrixXd df = dtc.cwiseProduct(st.c[l]);
        dc[l] = dtc.cwiseProduct(st.f[l]);
        Eigen::MatrixXd dpre(4 * H, B);
        dpre.topRows(H) =
            di.cwiseProduct(st.i[l]).cwiseProduct(
                (1.0 - st.i[l].array()).matrix());
        dpre.middleRows(H, H) =
            df.cwiseProduct(st.f[l]).cwiseProduct(
                (1.0 - st.f[l].array()).matrix());
        dpre.middleRows(2 * H, H) =
            do_.cwiseProduct(st.o[l]).cwiseProduct(
                (1.0 - st.o[l].array()).matrix());
        dpre.bottomRows(H) =
            dg.cwiseProduct((1.0 - st.g[l].array().square()).matrix());
        // Input to this layer at this step.
        if (l == 0) {
          Eigen::MatrixXd x(cfg_.embed, B);
          for (Eigen::Index b = 0; b < B; ++b)
            x.col(b) =
                embedding_.row(st.inputs[static_cast<std::size_t>(b)])
                    .transpose();
          g.layers[l].wx.noalias() += dpre * x.transpose();
          Eigen::MatrixXd dx = layers_[l].wx.transpose() * dpre;
          for (Eigen::Index b = 0; b < B; ++b)
            g.embedding.row(st.inputs[static_cast<std::size_t>(b)]) +=
                dx.col(b).transpose();
        } else {
          Eigen::MatrixXd lower_h =
              st.o[l - 1].cwiseProduct(st.tanh_c[l - 1]);
          g.layers[l].wx.noalias() += dpre * lower_h.transpose();
          dinput = layers_[l].wx.transpose() * dpre;
        }
        g.layers[l].wh.noalias() += dpre * st.h[l].transpose();
        g.layers[l].b.col(0).noalias() += dpre.rowwise().sum();
        dh[l] = layers_[l].wh.transpose() * dpre;
        if (l == 0) dinput.setZero();
      }
    }
  }

  // One batch, truncated BPTT: forward/backward/update per window with
  // state carried across windows (treated as constant by the gradient).
  std::pair<double, std::size_t> train_batch(
      const std::vector<const std::vector<std::uint32_t>*>& batch, double lr) {
    std::size_t max_targets = 0;
    for (const auto* s : batch)
      max_targets = std::max(max_targets, s->size() - 1);
    WindowState state;
    const auto B = static_cast<Eigen::Index>(batch.size());
    state.h.assign(layers_.size(), Eigen::MatrixXd::Zero(cfg_.hidden, B));
    state.c.assign(layers_.size(), Eigen::MatrixXd::Zero(cfg_.hidden, B));
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t t0 = 0; t0 < max_targets;
         t0 += static_cast<std::size_t>(cfg_.bptt_window)) {
      std::size_t t1 = std::min(
          max_targets, t0 + static_cast<std::size_t>(cfg_.bptt_window));
      Forward fwd = forward(batch, &state, t0, t1);
      Gradients g = zero_gradients();
      backward(batch, fwd, g, t0);
      clip_and_apply(g, lr);
      nll += fwd.loss * static_cast<double>(batch.size());
      tokens += fwd.target_count;
      state.h = fwd.h_last;
      state.c = fwd.c_last;
    }
    return {nll, tokens};
  }

  void clip_and_apply(Gradients& g, double lr) {
    double sq = 0.0;
    for_each_gradient(g, [&](const std::string&, Eigen::MatrixXd& m) {
      sq += m.squaredNorm();
    });
    double norm = std::sqrt(sq);
    double scale = norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
    embedding_.noalias() -= (lr * scale) * g.embedding;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].wx.noalias() -= (lr * scale) * g.layers[l].wx;
      layers_[l].wh.noalias() -= (lr * scale) * g.layers[l].wh;
      layers_[l].b.noalias() -= (lr * scale) * g.layers[l].b;
    }
    w_out_.noalias() -= (lr * scale) * g.w_out;
    b_out_.noalias() -= (lr * scale) * g.b_out;
  }

  static double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

  LstmConfig cfg_;
  Vocab vocab_;
  Eigen::MatrixXd embedding_;  // V x E
  std::vector<Layer> layers_;
  Eigen::MatrixXd w_out_;  // V x H
  Eigen::MatrixXd b_out_;  // V x 1
  std::vector<double> epoch_losses_;
};

inline LstmModel train_lstm(const std::vector<Utterance>& corpus,
                            const LstmConfig& cfg) {
  return LstmModel::train(corpus, cfg);
}

inline double lstm_logprob(const LstmModel& model,
                           const std::vector<std::string>& sentence) {
  return model.logprob(sentence);
}

// Maximum relative disagreement between analytic gradients and central
// finite differences (step 1e-4) over every parameter entry. The
// denominator is floored at 1e-3: below that scale the difference
// quotient is dominated by roundoff (~1e-11 for losses of this size), so
// near-zero entries are effectively compared in absolute terms at 1e-7.
// Zero-length batches return 0.
inline double max_rel_error_against_fd(
    LstmModel& model, const std::vector<std::vector<std::string>>& minibatch,
    const LstmModel::Gradients& analytic) {
  const double step = 1e-4;
  double worst = 0.0;
  LstmModel::Gradients g = analytic;
  std::vector<std::pair<Eigen::MatrixXd*, Eigen::MatrixXd*>> pairs;
  model.for_each_parameter([&](const std::string& name, Eigen::MatrixXd& p) {
    Eigen::MatrixXd* grad = nullptr;
    model.for_each_gradient(g, [&](const std::string& gname,
                                   Eigen::MatrixXd& gm) {
      if (gname == name) grad = &gm;
    });
    pairs.emplace_back(&p, grad);
  });
  for (auto& [param, grad] : pairs) {
    for (Eigen::Index c = 0; c < param->cols(); ++c) {
      for (Eigen::Index r = 0; r < param->rows(); ++r) {
        double saved = (*param)(r, c);
        (*param)(r, c) = saved + step;
        double up = model.batch_loss(minibatch);
        (*param)(r, c) = saved - step;
        double down = model.batch_loss(minibatch);
        (*param)(r, c) = saved;
        double fd = (up - down) / (2.0 * step);
        double an = (*grad)(r, c);
        double rel =
            std::abs(an - fd) / std::max(1e-3, std::abs(an) + std::abs(fd));
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

inline double check_gradients(
    const LstmModel& model,
    const std::vector<std::vector<std::string>>& minibatch) {
  if (minibatch.empty()) return 0.0;
  LstmModel::Gradients g = model.analytic_gradients(minibatch);
  LstmModel probe = model;  // finite differences perturb parameters
  return max_rel_error_against_fd(probe, minibatch, g);
}

}  // namespace disfl
