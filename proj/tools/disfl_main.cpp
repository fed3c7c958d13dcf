// disfl_main.cpp -- command-line front end: train the individual models,
// run the full detection pipeline, and reproduce the ablation tables.
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

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "disfl/pipeline.hpp"

namespace {

using namespace disfl;

std::vector<Utterance> read_corpus(const std::string& path,
                                   const std::string& format) {
  if (!std::filesystem::exists(path))
    throw UsageError("input path does not exist: " + path);
  std::ifstream is(path);
  return parse_annotated(
      is, format == "dps" ? CorpusFormat::DpsLike : CorpusFormat::Tsv);
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw DataError("cannot write " + path);
  return os;
}

template <typename Model>
Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("model path does not exist: " + path);
  return Model::load(is);
}

std::vector<std::vector<std::string>> lm_sentences(
    const std::vector<Utterance>& corpus, bool fluent_only) {
  std::vector<std::vector<std::string>> out;
  out.reserve(corpus.size());
  for (const auto& u : corpus)
    out.push_back(fluent_only ? gold_fluent(u) : u.surfaces());
  return out;
}

// Config file + command-line overrides; flags set on the command line win.
PipelineConfig config_from(const std::string& config_path, CLI::App* cmd,
                           PipelineConfig overrides) {
  PipelineConfig cfg;
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) throw UsageError("config path does not exist: " + config_path);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded())
      throw UsageError("config file is not valid JSON: " + config_path);
    cfg = PipelineConfig::from_json(j);
  }
  auto took = [cmd](const std::string& flag) {
    return cmd->count(flag) > 0;
  };
  if (took("--train")) cfg.train_path = overrides.train_path;
  if (took("--dev")) cfg.dev_path = overrides.dev_path;
  if (took("--test")) cfg.test_path = overrides.test_path;
  if (took("--corpus-format")) cfg.format = overrides.format;
  if (took("--synth")) cfg.synth = overrides.synth;
  if (took("--synth-count")) cfg.synth_count = overrides.synth_count;
  if (took("--synth-rate")) cfg.synth_rate = overrides.synth_rate;
  if (took("--synth-seed")) cfg.synth_seed = overrides.synth_seed;
  if (took("--n-best")) cfg.n_best = overrides.n_best;
  if (took("--beam")) cfg.beam = overrides.beam;
  if (took("--k-folds")) cfg.k_folds = overrides.k_folds;
  if (took("--lstm-scale")) cfg.lstm_scale = overrides.lstm_scale;
  if (took("--lstm-epochs")) cfg.lstm_epochs = overrides.lstm_epochs;
  if (took("--lstm-seed")) cfg.lstm_seed = overrides.lstm_seed;
  if (took("--lambda")) cfg.l2_lambda = overrides.l2_lambda;
  if (took("--tune-lambda")) cfg.tune_lambda = overrides.tune_lambda;
  if (took("--fwd-lstm")) cfg.fwd_lstm = overrides.fwd_lstm;
  if (took("--bwd-lstm")) cfg.bwd_lstm = overrides.bwd_lstm;
  if (took("--fwd-4gram")) cfg.fwd_4gram = overrides.fwd_4gram;
  if (took("--bwd-4gram")) cfg.bwd_4gram = overrides.bwd_4gram;
  if (took("--ncm-alone")) cfg.ncm_alone = overrides.ncm_alone;
  if (took("--out-dir")) cfg.out_dir = overrides.out_dir;
  if (took("--cache-dir")) cfg.cache_dir = overrides.cache_dir;
  if (took("--dump-features")) cfg.dump_features = overrides.dump_features;
  return cfg;
}

void add_pipeline_flags(CLI::App* cmd, std::string& config_path,
                        PipelineConfig& o) {
  cmd->add_option("--config", config_path, "declarative JSON config file");
  cmd->add_option("--train", o.train_path, "training corpus");
  cmd->add_option("--dev", o.dev_path, "development corpus");
  cmd->add_option("--test", o.test_path, "test corpus");
  cmd->add_option("--corpus-format", o.format, "tsv or dps");
  cmd->add_flag("--synth", o.synth, "use the built-in synthetic corpus");
  cmd->add_option("--synth-count", o.synth_count, "synthetic utterances");
  cmd->add_option("--synth-rate", o.synth_rate, "disfluency rate");
  cmd->add_option("--synth-seed", o.synth_seed, "synthesis seed");
  cmd->add_option("--n-best", o.n_best, "candidates per utterance");
  cmd->add_option("--beam", o.beam, "decoder beam width");
  cmd->add_option("--k-folds", o.k_folds, "cross-validation folds");
  cmd->add_option("--lstm-scale", o.lstm_scale, "desk or full");
  cmd->add_option("--lstm-epochs", o.lstm_epochs, "training epochs");
  cmd->add_option("--lstm-seed", o.lstm_seed, "lstm seed");
  cmd->add_option("--lambda", o.l2_lambda, "reranker L2 strength");
  cmd->add_flag("--tune-lambda", o.tune_lambda, "grid-search lambda on dev");
  cmd->add_flag("--fwd-lstm,!--no-fwd-lstm", o.fwd_lstm,
                "forward LSTM feature");
  cmd->add_flag("--bwd-lstm,!--no-bwd-lstm", o.bwd_lstm,
                "backward LSTM feature");
  cmd->add_flag("--fwd-4gram", o.fwd_4gram, "forward 4-gram feature");
  cmd->add_flag("--bwd-4gram", o.bwd_4gram, "backward 4-gram feature");
  cmd->add_flag("--ncm-alone", o.ncm_alone, "skip the reranker");
  cmd->add_option("--out-dir", o.out_dir, "artifact directory");
  cmd->add_option("--cache-dir", o.cache_dir, "stage cache directory");
  cmd->add_flag("--dump-features", o.dump_features,
                "write features-train.jsonl");
}

void print_result(const std::string& name, const PipelineResult& res) {
  std::cout << name << " dev:  " << res.dev.table();
  std::cout << name << " test: " << res.test.table();
  std::cout << "artifacts under: ";
  auto it = res.artifacts.find("report_test");
  std::cout << (it != res.artifacts.end() ? it->second : std::string("-"))
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noisy-channel disfluency detection"};
  app.require_subcommand(1);

  // Subcommands with local state.
  auto* norm = app.add_subcommand("normalize", "normalize a corpus");
  std::string n_in, n_out, n_fmt = "tsv";
  norm->add_option("--in", n_in)->required();
  norm->add_option("--out", n_out)->required();
  norm->add_option("--corpus-format", n_fmt);

  auto* synth = app.add_subcommand("synth", "emit a synthetic corpus");
  std::size_t s_count = 1000;
  double s_rate = 0.15;
  std::uint64_t s_seed = 1;
  std::string s_fluent, s_channel, s_out;
  synth->add_option("--count", s_count);
  synth->add_option("--rate", s_rate);
  synth->add_option("--seed", s_seed);
  synth->add_option("--fluent", s_fluent, "fluent source corpus (tsv)");
  synth->add_option("--channel", s_channel, "channel model file");
  synth->add_option("--out", s_out)->required();

  auto* tch = app.add_subcommand("train-channel", "train the channel model");
  std::string tc_in, tc_out, tc_fmt = "tsv";
  tch->add_option("--in", tc_in)->required();
  tch->add_option("--out", tc_out)->required();
  tch->add_option("--corpus-format", tc_fmt);

  auto* tng = app.add_subcommand("train-ngram", "train a Kneser-Ney model");
  std::string ng_in, ng_out, ng_fmt = "tsv";
  int ng_order = 4;
  bool ng_fluent = false, ng_rev = false;
  tng->add_option("--in", ng_in)->required();
  tng->add_option("--out", ng_out)->required();
  tng->add_option("--order", ng_order);
  tng->add_option("--corpus-format", ng_fmt);
  tng->add_flag("--gold-fluent", ng_fluent,
                "train on the gold-fluent side of the corpus");
  tng->add_flag("--reverse", ng_rev, "reverse sentences before counting");

  auto* tls = app.add_subcommand("train-lstm", "train an LSTM model");
  std::string ls_in, ls_out, ls_fmt = "tsv", ls_dir = "forward",
              ls_scale = "desk";
  int ls_epochs = 13;
  std::uint64_t ls_seed = 1;
  bool ls_fluent = false;
  tls->add_option("--in", ls_in)->required();
  tls->add_option("--out", ls_out)->required();
  tls->add_option("--direction", ls_dir, "forward or backward");
  tls->add_option("--scale", ls_scale, "desk or full");
  tls->add_option("--epochs", ls_epochs);
  tls->add_option("--seed", ls_seed);
  tls->add_option("--corpus-format", ls_fmt);
  tls->add_flag("--gold-fluent", ls_fluent);

  auto* nb = app.add_subcommand("nbest", "decode candidate analyses");
  std::string nb_in, nb_ch, nb_bg, nb_out, nb_fmt = "tsv";
  int nb_n = 25, nb_beam = 100;
  nb->add_option("--in", nb_in)->required();
  nb->add_option("--channel", nb_ch)->required();
  nb->add_option("--bigram", nb_bg)->required();
  nb->add_option("--n", nb_n);
  nb->add_option("--beam", nb_beam);
  nb->add_option("--out", nb_out)->required();
  nb->add_option("--corpus-format", nb_fmt);

  auto* xf = app.add_subcommand("extract-features",
                                "feature vectors from an n-best file");
  std::string xf_nbest, xf_out, xf_fwd, xf_bwd;
  xf->add_option("--nbest", xf_nbest)->required();
  xf->add_option("--out", xf_out)->required();
  xf->add_option("--fwd-lstm-model", xf_fwd);
  xf->add_option("--bwd-lstm-model", xf_bwd);

  auto* evl = app.add_subcommand("evaluate", "score predictions against gold");
  std::string ev_gold, ev_pred, ev_json;
  evl->add_option("--gold", ev_gold)->required();
  evl->add_option("--pred", ev_pred)->required();
  evl->add_option("--json", ev_json, "also write a JSON report");

  // Pipeline-family subcommands share the override flag set.
  std::string pl_config, tr_config, pr_config, ab_config;
  PipelineConfig pl_over, tr_over, pr_over, ab_over;
  auto* pl = app.add_subcommand("pipeline", "run the full pipeline");
  add_pipeline_flags(pl, pl_config, pl_over);
  auto* trr = app.add_subcommand("train-reranker",
                                 "run the pipeline through reranker training");
  add_pipeline_flags(trr, tr_config, tr_over);
  auto* prd = app.add_subcommand(
      "predict", "run the pipeline and write test-set predictions");
  add_pipeline_flags(prd, pr_config, pr_over);
  std::string pr_out;
  prd->add_option("--pred-out", pr_out, "prediction TSV path");
  auto* abl = app.add_subcommand("ablate", "feature-configuration matrix");
  add_pipeline_flags(abl, ab_config, ab_over);
  std::vector<std::string> ab_conditions = {"ncm-alone", "baseline",
                                            "fwd-lstm", "bwd-lstm",
                                            "both-lstm"};
  abl->add_option("--conditions", ab_conditions, "rows of the matrix");

  try {
    app.parse(argc, argv);

    if (norm->parsed()) {
      auto utts = read_corpus(n_in, n_fmt);
      std::vector<Utterance> cleaned;
      for (const auto& u : utts) cleaned.push_back(normalize(u));
      auto os = open_out(n_out);
      serialize_tsv(cleaned, os);
      return 0;
    }
    if (synth->parsed()) {
      std::vector<Utterance> fluent =
          s_fluent.empty() ? generate_fluent_corpus(s_count, s_seed)
                           : read_corpus(s_fluent, "tsv");
      ChannelModel model;
      if (!s_channel.empty()) {
        model = load_model<ChannelModel>(s_channel);
      } else {
        std::vector<std::string> vocab;
        for (const auto& u : fluent)
          for (const auto& t : u.tokens) vocab.push_back(t.surface);
        model = ChannelModel::from_params(ChannelParams{}, vocab);
      }
      auto corpus = synthesize_corpus(fluent, model, s_rate, s_seed + 1);
      auto os = open_out(s_out);
      serialize_tsv(corpus, os);
      return 0;
    }
    if (tch->parsed()) {
      auto utts = read_corpus(tc_in, tc_fmt);
      std::vector<Utterance> cleaned;
      for (const auto& u : utts) cleaned.push_back(normalize(u));
      ChannelModel m = ChannelModel::train(cleaned);
      auto os = open_out(tc_out, true);
      m.save(os);
      return 0;
    }
    if (tng->parsed()) {
      auto utts = read_corpus(ng_in, ng_fmt);
      auto sentences = lm_sentences(utts, ng_fluent);
      if (ng_rev)
        for (auto& s : sentences) std::reverse(s.begin(), s.end());
      NgramModel m = NgramModel::train_on_sentences(sentences, ng_order,
                                                    ng_order >= 4 ? 2 : 1);
      auto os = open_out(ng_out, true);
      m.save(os);
      return 0;
    }
    if (tls->parsed()) {
      auto utts = read_corpus(ls_in, ls_fmt);
      LstmConfig cfg = ls_scale == "full" ? LstmConfig::full_scale()
                                          : LstmConfig::desk_scale();
      cfg.direction = ls_dir == "backward" ? LmDirection::Backward
                                           : LmDirection::Forward;
      cfg.epochs = ls_epochs;
      cfg.seed = ls_seed;
      LstmModel m =
          LstmModel::train_on_sentences(lm_sentences(utts, ls_fluent), cfg);
      auto os = open_out(ls_out, true);
      m.save(os);
      return 0;
    }
    if (nb->parsed()) {
      auto utts = read_corpus(nb_in, nb_fmt);
      ChannelModel channel = load_model<ChannelModel>(nb_ch);
      NgramModel bigram = load_model<NgramModel>(nb_bg);
      std::vector<CandidateList> lists;
      for (const auto& raw : utts)
        lists.push_back(nbest(normalize(raw), channel, bigram, nb_n, nb_beam));
      auto os = open_out(nb_out);
      write_candidates_jsonl(lists, os);
      return 0;
    }
    if (xf->parsed()) {
      std::ifstream is(xf_nbest);
      if (!is) throw UsageError("cannot read n-best file: " + xf_nbest);
      auto lists = read_candidates_jsonl(is);
      LmFeatureRequest req;
      std::optional<LstmModel> fwd, bwd;
      if (!xf_fwd.empty()) {
        fwd = load_model<LstmModel>(xf_fwd);
        req.fwd_lstm = true;
      }
      if (!xf_bwd.empty()) {
        bwd = load_model<LstmModel>(xf_bwd);
        req.bwd_lstm = true;
      }
      auto os = open_out(xf_out);
      for (const auto& list : lists) {
        double top = list.candidates.empty()
                         ? 0.0
                         : list.candidates.front().ncm_total_logprob;
        std::vector<std::vector<std::string>> fluents;
        for (const auto& c : list.candidates) fluents.push_back(c.fluent);
        std::vector<double> fwd_lp, bwd_lp;
        if (fwd) fwd_lp = fwd->logprob_batch(fluents);
        if (bwd) bwd_lp = bwd->logprob_batch(fluents);
        for (std::size_t c = 0; c < list.candidates.size(); ++c) {
          ScoreBundle bundle;
          if (fwd) bundle.fwd_lstm = fwd_lp[c];
          if (bwd) bundle.bwd_lstm = bwd_lp[c];
          FeatureVector fv =
              extract(list.candidates[c], list.utterance.tokens, bundle, req,
                      CandidateContext{static_cast<int>(c), top});
          nlohmann::json j;
          j["id"] = list.utterance.id;
          j["candidate_index"] = c;
          j["features"] = fv.values;
          os << j.dump() << "\n";
        }
      }
      return 0;
    }
    if (evl->parsed()) {
      auto gold = read_corpus(ev_gold, "tsv");
      auto pred = read_corpus(ev_pred, "tsv");
      if (gold.size() != pred.size())
        throw DataError("gold and prediction corpora differ in size");
      std::vector<std::vector<Label>> predicted;
      for (const auto& u : pred) {
        if (!u.gold) throw DataError("prediction file lacks label column");
        predicted.push_back(*u.gold);
      }
      EvalReport rep = score_utterances(gold, predicted);
      std::cout << rep.table();
      if (!ev_json.empty()) {
        auto os = open_out(ev_json);
        os << rep.to_json().dump(2) << "\n";
      }
      return 0;
    }
    if (pl->parsed()) {
      PipelineConfig cfg = config_from(pl_config, pl, pl_over);
      PipelineResult res = run_pipeline(cfg);
      print_result("pipeline", res);
      return 0;
    }
    if (trr->parsed()) {
      PipelineConfig cfg = config_from(tr_config, trr, tr_over);
      cfg.ncm_alone = false;
      PipelineResult res = run_pipeline(cfg);
      print_result("train-reranker", res);
      return 0;
    }
    if (prd->parsed()) {
      PipelineConfig cfg = config_from(pr_config, prd, pr_over);
      Pipeline pipeline(cfg);
      PipelineResult res = pipeline.run();
      print_result("predict", res);
      if (!pr_out.empty()) {
        std::vector<Utterance> out;
        const auto& utts = pipeline.test_section();
        const auto& preds = pipeline.test_predictions();
        for (std::size_t u = 0; u < utts.size(); ++u) {
          Utterance copy = utts[u];
          copy.gold = preds[u];
          copy.regions.clear();
          out.push_back(std::move(copy));
        }
        auto os = open_out(pr_out);
        serialize_tsv(out, os);
      }
      return 0;
    }
    if (abl->parsed()) {
      PipelineConfig cfg = config_from(ab_config, abl, ab_over);
      auto rows = ablation_matrix(cfg, ab_conditions);
      std::cout << ablation_table(rows);
      return 0;
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems map to exit code 1
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
