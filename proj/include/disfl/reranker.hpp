// reranker.hpp -- conditional log-linear model over n-best candidate
// analyses, trained by maximizing an expected-f-score objective with L2
// regularization.
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
// Objective. With per-candidate correct-edit counts g_c and predicted-edit
// counts e_c against gold, and posterior p_w(c) over each utterance's
// candidates, the trained quantity is
//
//   EF(w) = 2 * sum_s sum_c p_w(c) g_c
//           -----------------------------------------    -  lambda ||w||^2
//           sum_s sum_c p_w(c) e_c  +  total gold edits
//
// the plug-in f-score over expected statistics. It is maximized with
// deterministic full-batch gradient ascent under backtracking line search.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "disfl/channel.hpp"
#include "disfl/common.hpp"
#include "disfl/features.hpp"

namespace disfl {

struct RerankCandidate {
  std::vector<std::pair<std::uint32_t, double>> features;  // indexed, raw
  double correct_edits = 0.0;    // |predicted edited ∩ gold edited|
  double predicted_edits = 0.0;  // candidate's edited-token count
};

struct TrainingInstance {
  std::vector<RerankCandidate> candidates;
  double gold_edits = 0.0;
};

// Builds one training instance, interning names into `space`.
inline TrainingInstance make_instance(const CandidateList& list,
                                      const std::vector<FeatureVector>& fvs,
                                      const std::vector<Label>& gold,
                                      FeatureSpace& space) {
  if (list.candidates.empty())
    throw DataError("make_instance: empty candidate list");
  if (fvs.size() != list.candidates.size())
    throw DataError("make_instance: one feature vector per candidate");
  TrainingInstance inst;
  for (std::size_t c = 0; c < list.candidates.size(); ++c) {
    const Analysis& a = list.candidates[c];
    if (a.labels.size() != gold.size())
      throw DataError("make_instance: candidate/gold length mismatch");
    RerankCandidate rc;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      bool pe = a.labels[i] == Label::Edited;
      bool ge = gold[i] == Label::Edited;
      if (pe && ge) rc.correct_edits += 1.0;
    }
    rc.predicted_edits = static_cast<double>(a.n_edits);
    for (const auto& [name, value] : fvs[c].values) {
      std::uint32_t id = space.intern(name, is_score_feature(name));
      if (id != FeatureSpace::kMissing) rc.features.emplace_back(id, value);
    }
    inst.candidates.push_back(std::move(rc));
  }
  for (Label l : gold)
    if (l == Label::Edited) inst.gold_edits += 1.0;
  return inst;
}

struct RerankerModel {
  static constexpr char kMagic[6] = "DFRR1";

  std::vector<std::string> feature_names;
  std::vector<std::uint8_t> is_score;
  std::vector<double> mean;   // standardization shift per feature
  std::vector<double> scale;  // multiplier; 0 folds a constant feature out
  std::vector<double> weights;
  double l2_lambda = 1e-3;

  double standardized(std::uint32_t id, double raw) const {
    return (raw - mean[id]) * scale[id];
  }

  double score(const std::vector<std::pair<std::uint32_t, double>>& feats)
      const {
    double s = 0.0;
    for (const auto& [id, v] : feats)
      s += weights[id] * standardized(id, v);
    return s;
  }

  void save(std::ostream& os) const {
    BinaryWriter bw(os);
    bw.magic(kMagic);
    bw.f64(l2_lambda);
    bw.u64(feature_names.size());
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
      bw.str(feature_names[i]);
      bw.u8(is_score[i]);
      bw.f64(mean[i]);
      bw.f64(scale[i]);
      bw.f64(weights[i]);
    }
  }

  static RerankerModel load(std::istream& is) {
    BinaryReader br(is);
    br.expect_magic(kMagic);
    RerankerModel m;
    m.l2_lambda = br.f64();
    std::uint64_t n = br.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      m.feature_names.push_back(br.str());
      m.is_score.push_back(br.u8());
      m.mean.push_back(br.f64());
      m.scale.push_back(br.f64());
      m.weights.push_back(br.f64());
    }
    return m;
  }

  FeatureSpace to_space() const {
    FeatureSpace space;
    for (std::size_t i = 0; i < feature_names.size(); ++i)
      space.intern(feature_names[i], is_score[i] != 0);
    space.freeze();
    return space;
  }
};

// Max-shifted softmax over one instance's candidate scores.
inline std::vector<double> posterior(const std::vector<double>& scores) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : scores) mx = std::max(mx, s);
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

namespace detail {

struct Standardizer {
  std::vector<double> mean, scale;

  // Mean/variance over every candidate occurrence of each score feature.
  // Missing entries of a sparse vector count as value 0, matching how the
  // linear score treats them.
  static Standardizer fit(const std::vector<TrainingInstance>& instances,
                          const FeatureSpace& space) {
    Standardizer st;
    std::size_t n = space.size();
    st.mean.assign(n, 0.0);
    st.scale.assign(n, 1.0);
    std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
    double count = 0.0;
    for (const auto& inst : instances) {
      for (const auto& c : inst.candidates) {
        count += 1.0;
        for (const auto& [id, v] : c.features) {
          sum[id] += v;
          sumsq[id] += v * v;
        }
      }
    }
    if (count == 0.0) return st;
    for (std::uint32_t id = 0; id < n; ++id) {
      if (!space.is_score(id)) continue;  // flags stay 0/1
      double m = sum[id] / count;
      double var = sumsq[id] / count - m * m;
      st.mean[id] = m;
      st.scale[id] = var > 1e-12 ? 1.0 / std::sqrt(var) : 0.0;
    }
    return st;
  }

  void apply(std::vector<TrainingInstance>& instances) const {
    for (auto& inst : instances)
      for (auto& c : inst.candidates)
        for (auto& [id, v] : c.features) v = (v - mean[id]) * scale[id];
  }
};

}  // namespace detail

// Objective value and gradient of EF(w) - lambda ||w||^2 over standardized
// instances. Exposed for the finite-difference check.
inline double ef_objective(const std::vector<TrainingInstance>& instances,
                           const std::vector<double>& w, double lambda,
                           std::vector<double>* grad_out) {
  double gold_total = 0.0;
  for (const auto& inst : instances) gold_total += inst.gold_edits;
  if (gold_total <= 0.0)
    throw DataError("reranker training: no gold edits in any instance");

  double a_sum = 0.0, b_sum = gold_total;
  std::vector<double> da(w.size(), 0.0), db(w.size(), 0.0);
  for (const auto& inst : instances) {
    std::vector<double> scores(inst.candidates.size(), 0.0);
    for (std::size_t c = 0; c < inst.candidates.size(); ++c)
      for (const auto& [id, v] : inst.candidates[c].features)
        scores[c] += w[id] * v;
    std::vector<double> p = posterior(scores);
    double eg = 0.0, ee = 0.0;
    for (std::size_t c = 0; c < inst.candidates.size(); ++c) {
      eg += p[c] * inst.candidates[c].correct_edits;
      ee += p[c] * inst.candidates[c].predicted_edits;
    }
    a_sum += 2.0 * eg;
    b_sum += ee;
    if (grad_out != nullptr) {
      // d p_c / d w = p_c (phi_c - phibar); accumulate through g and e.
      std::vector<double> coef_a(inst.candidates.size());
      std::vector<double> coef_b(inst.candidates.size());
      for (std::size_t c = 0; c < inst.candidates.size(); ++c) {
        coef_a[c] = p[c] * (inst.candidates[c].correct_edits - eg);
        coef_b[c] = p[c] * (inst.candidates[c].predicted_edits - ee);
      }
      for (std::size_t c = 0; c < inst.candidates.size(); ++c) {
        for (const auto& [id, v] : inst.candidates[c].features) {
          da[id] += 2.0 * coef_a[c] * v;
          db[id] += coef_b[c] * v;
        }
      }
    }
  }
  double ef = a_sum / b_sum;
  double obj = ef;
  for (double v : w) obj -= lambda * v * v;
  if (grad_out != nullptr) {
    grad_out->assign(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i)
      (*grad_out)[i] =
          (da[i] * b_sum - a_sum * db[i]) / (b_sum * b_sum) -
          2.0 * lambda * w[i];
  }
  return obj;
}

struct TrainOptions {
  int max_iterations = 200;
  double tolerance = 1e-10;
};

// Deterministic full-batch gradient ascent with backtracking line search,
// starting from zero weights. The returned model never scores below the
// zero-weight model on the regularized objective.
inline RerankerModel train_reranker(std::vector<TrainingInstance> instances,
                                    const FeatureSpace& space,
                                    double l2_lambda,
                                    const TrainOptions& opts = TrainOptions{}) {
  if (instances.empty())
    throw DataError("reranker training: no instances");
  detail::Standardizer st = detail::Standardizer::fit(instances, space);
  st.apply(instances);

  std::vector<double> w(space.size(), 0.0);
  double obj = ef_objective(instances, w, l2_lambda, nullptr);
  std::vector<double> grad;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    double cur = ef_objective(instances, w, l2_lambda, &grad);
    double gnorm_sq = 0.0;
    for (double g : grad) gnorm_sq += g * g;
    if (gnorm_sq < 1e-20) break;
    double step = 1.0;
    bool improved = false;
    std::vector<double> trial(w.size());
    for (int halving = 0; halving < 40; ++halving) {
      for (std::size_t i = 0; i < w.size(); ++i)
        trial[i] = w[i] + step * grad[i];
      double t = ef_objective(instances, trial, l2_lambda, nullptr);
      if (t > cur + 1e-4 * step * gnorm_sq) {
        w = trial;
        obj = t;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
    if (obj - cur < opts.tolerance) break;
  }

  RerankerModel model;
  model.l2_lambda = l2_lambda;
  for (std::uint32_t id = 0; id < space.size(); ++id) {
    model.feature_names.push_back(space.name(id));
    model.is_score.push_back(space.is_score(id) ? 1 : 0);
    model.mean.push_back(st.mean[id]);
    model.scale.push_back(st.scale[id]);
  }
  model.weights = w;
  return model;
}

// Argmax-posterior candidate; ties keep the lowest n-best rank. The
// returned index refers into list.candidates.
inline std::size_t predict_index(const RerankerModel& model,
                                 const CandidateList& list,
                                 const std::vector<FeatureVector>& fvs) {
  if (list.candidates.empty())
    throw DataError("predict: empty candidate list");
  if (fvs.size() != list.candidates.size())
    throw DataError("predict: one feature vector per candidate");
  FeatureSpace space = model.to_space();
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < list.candidates.size(); ++c) {
    double s = 0.0;
    for (const auto& [name, value] : fvs[c].values) {
      std::uint32_t id = space.lookup(name);
      if (id == FeatureSpace::kMissing) continue;  // unknown at test time
      s += model.weights[id] * model.standardized(id, value);
    }
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

inline const Analysis& predict(const RerankerModel& model,
                               const CandidateList& list,
                               const std::vector<FeatureVector>& fvs) {
  return list.candidates[predict_index(model, list, fvs)];
}

}  // namespace disfl
