// Copyright 2026 The compexp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "compexp/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "compexp/metrics.hpp"
#include "compexp/rng.hpp"

namespace compexp {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string out_path(const ExperimentConfig& cfg, const char* name) {
  return (fs::path(cfg.out_dir) / name).string();
}

void require_artifact(const std::string& path) {
  if (!fs::exists(path))
    throw std::runtime_error("missing artifact: " + path + " (run the earlier stages first)");
}

CorpusData load_corpus(const ExperimentConfig& cfg) {
  const std::string path = out_path(cfg, artifact::kCorpus);
  require_artifact(path);
  return CorpusData::load_file(path);
}

ModelConfig model_config(const ExperimentConfig& cfg, const CorpusData& corpus) {
  ModelConfig mc = cfg.model;
  mc.dims.vocab = corpus.vocab.size();
  mc.dims.r_max = corpus.rating_range_width();
  return mc;
}

Model load_model(const ExperimentConfig& cfg, const CorpusData& corpus,
                 const std::string& params_name) {
  const std::string path = out_path(cfg, params_name.c_str());
  require_artifact(path);
  Model model = Model::adopt(model_config(cfg, corpus), ParamStore::load_file(path));
  const Shape embed_shape = model.store.get("enc.embed").shape();
  if (embed_shape != Shape{model.cfg.dims.vocab, model.cfg.dims.embed})
    throw std::runtime_error("params file " + path +
                             " does not match the configured model dimensions");
  return model;
}

std::string fmt(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

void write_train_log(const std::string& path, const TrainLog& log, const char* metric) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch\ttrain_loss\t" << metric << "\n";
  for (const EpochStats& e : log.epochs)
    out << e.epoch << "\t" << fmt(e.train_loss, 6) << "\t" << fmt(e.val_metric, 6) << "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

TrainConfig train_config(const ExperimentConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  return t;
}

std::string detokenize(const std::vector<int>& tokens, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.token(tokens[i]);
  }
  return out;
}

const std::vector<std::size_t>& split_ids(const CorpusData& corpus, const std::string& split) {
  if (split == "train") return corpus.train_ids;
  if (split == "valid") return corpus.valid_ids;
  if (split == "test") return corpus.test_ids;
  throw ConfigError("unknown split \"" + split + "\" (expected train, valid or test)");
}

/// Mean metrics of greedy generations over instances. BLEU-family scores are
/// scaled to 0..100. Instances the model cannot serve (empty pool/profile)
/// are skipped and counted.
struct EvalAccum {
  ScoreReport report;
  std::size_t scored = 0;
  std::size_t skipped = 0;
  std::size_t feature_instances = 0;
};

EvalAccum score_split(const Model& model, const CorpusData& corpus,
                      const std::vector<EvalInstance>& instances,
                      const std::vector<int>* rating_override, const std::set<int>& lexicon,
                      const MetricsConfig& mcfg, std::uint64_t seed) {
  auto rng = make_rng(derive_seed(seed, "evaluate"));

  std::optional<double> corpus_ref_len;
  if (mcfg.corpus_level_ref_len) {
    double total = 0.0;
    std::size_t n = 0;
    for (const EvalInstance& inst : instances)
      for (std::size_t id : inst.gt_ids) {
        total += static_cast<double>(corpus.sentences[id].tokens.size());
        ++n;
      }
    if (n > 0) corpus_ref_len = total / static_cast<double>(n);
  }

  const std::set<std::size_t> orders(mcfg.eval_orders.begin(), mcfg.eval_orders.end());
  EvalAccum acc;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const EvalInstance& inst = instances[i];
    const int rating = rating_override != nullptr ? (*rating_override)[i] : inst.rating;
    const GenerationResult gen =
        generate_one(model, corpus, inst.user_id, inst.item_id, rating, rng);
    if (!gen.ok) {
      ++acc.skipped;
      continue;
    }
    std::vector<std::vector<int>> refs;
    std::vector<int> gt_concat;
    for (std::size_t id : inst.gt_ids) {
      refs.push_back(corpus.sentences[id].tokens);
      gt_concat.insert(gt_concat.end(), corpus.sentences[id].tokens.begin(),
                       corpus.sentences[id].tokens.end());
    }
    const std::vector<int>& expl = gen.explanation;

    auto score_order = [&](std::size_t k, double& ib, double& b) {
      if (orders.count(k) == 0) return;
      const BleuWeights w = BleuWeights::uniform(k);
      ib += 100.0 * (expl.empty() ? 0.0 : idf_bleu(expl, refs, corpus.idf, w, corpus_ref_len));
      b += 100.0 * (expl.empty() ? 0.0 : bleu(expl, refs, w));
    };
    score_order(1, acc.report.idf_bleu_1, acc.report.bleu_1);
    score_order(2, acc.report.idf_bleu_2, acc.report.bleu_2);
    score_order(4, acc.report.idf_bleu_4, acc.report.bleu_4);

    acc.report.avg_length += static_cast<double>(expl.size());
    acc.report.idf_per_word += expl.empty() ? 0.0 : idf_per_word(expl, corpus.idf);
    acc.report.rep_per_len += expl.empty() ? 0.0 : rep_per_len(expl);
    acc.report.seq_rep_2 += seq_rep_2(expl);

    if (!lexicon.empty()) {
      const FeatureScore fs = feature_prf(expl, gt_concat, lexicon);
      if (fs.has_gt_features) {
        acc.report.feat_precision += 100.0 * fs.precision;
        acc.report.feat_recall += 100.0 * fs.recall;
        ++acc.feature_instances;
      }
    }
    ++acc.scored;
  }

  if (acc.scored > 0) {
    const double n = static_cast<double>(acc.scored);
    acc.report.idf_bleu_1 /= n;
    acc.report.idf_bleu_2 /= n;
    acc.report.idf_bleu_4 /= n;
    acc.report.bleu_1 /= n;
    acc.report.bleu_2 /= n;
    acc.report.bleu_4 /= n;
    acc.report.avg_length /= n;
    acc.report.idf_per_word /= n;
    acc.report.rep_per_len /= n;
    acc.report.seq_rep_2 /= n;
  }
  if (acc.feature_instances > 0) {
    acc.report.feat_precision /= static_cast<double>(acc.feature_instances);
    acc.report.feat_recall /= static_cast<double>(acc.feature_instances);
  }
  return acc;
}

/// Intrinsic statistics of the ground-truth sentences themselves.
ScoreReport human_row(const CorpusData& corpus, const std::vector<EvalInstance>& instances) {
  ScoreReport r;
  std::size_t n = 0;
  for (const EvalInstance& inst : instances)
    for (std::size_t id : inst.gt_ids) {
      const std::vector<int>& tokens = corpus.sentences[id].tokens;
      r.avg_length += static_cast<double>(tokens.size());
      r.idf_per_word += tokens.empty() ? 0.0 : idf_per_word(tokens, corpus.idf);
      r.rep_per_len += rep_per_len(tokens);
      r.seq_rep_2 += seq_rep_2(tokens);
      ++n;
    }
  if (n > 0) {
    r.avg_length /= static_cast<double>(n);
    r.idf_per_word /= static_cast<double>(n);
    r.rep_per_len /= static_cast<double>(n);
    r.seq_rep_2 /= static_cast<double>(n);
  }
  return r;
}

}  // namespace

void cmd_ingest(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.data.reviews.empty()) throw ConfigError("ingest: data.reviews is not set");
  std::ifstream in(cfg.data.reviews);
  if (!in) throw CorpusError("ingest: cannot open " + cfg.data.reviews);

  const ParseResult parsed = parse_reviews(in, cfg.data.rating_min, cfg.data.rating_max);
  for (const std::string& e : parsed.errors) err << "warning: skipped " << e << "\n";

  const CorpusData corpus = build_corpus(parsed.records, cfg.ingest_options());
  fs::create_directories(cfg.out_dir);
  corpus.save_file(out_path(cfg, artifact::kCorpus));

  std::set<std::string> users, items;
  std::set<std::size_t> reviews;
  for (const LabeledSentence& s : corpus.sentences) {
    users.insert(s.user_id);
    items.insert(s.item_id);
    reviews.insert(s.review_index);
  }
  out << "users:        " << users.size() << "\n"
      << "items:        " << items.size() << "\n"
      << "reviews:      " << reviews.size() << "\n"
      << "sentences:    " << corpus.sentences.size() << "\n"
      << "rating range: " << corpus.rating_min << ".." << corpus.rating_max << "\n"
      << "vocabulary:   " << corpus.vocab.size() << "\n"
      << "splits:       train " << corpus.train_ids.size() << " / valid "
      << corpus.valid_ids.size() << " / test " << corpus.test_ids.size() << "\n";
}

void cmd_pretrain_extractor(const ExperimentConfig& cfg, std::ostream& out) {
  const CorpusData corpus = load_corpus(cfg);
  const ModelConfig mc = model_config(cfg, corpus);

  std::map<int, std::vector<double>> pretrained;
  if (cfg.embedding_file)
    pretrained = load_embeddings(*cfg.embedding_file, corpus.vocab, mc.dims.embed);

  Model model = Model::init(mc, cfg.seed, pretrained);
  const TrainLog log = pretrain_extractor(model, corpus, train_config(cfg));

  model.store.save_file(out_path(cfg, artifact::kExtractor));
  write_train_log(out_path(cfg, "extractor_log.tsv"), log, "val_nll");
  out << "extractor pretraining: " << log.epochs.size() << " epochs, best val NLL "
      << fmt(log.best_val, 4) << " at epoch " << log.best_epoch << " (uniform baseline "
      << fmt(log.val_uniform_baseline, 4) << ")\n";
}

void cmd_pretrain_refiner(const ExperimentConfig& cfg, std::ostream& out) {
  const CorpusData corpus = load_corpus(cfg);
  Model model = load_model(cfg, corpus, artifact::kExtractor);

  const auto pairs = make_refiner_pairs(corpus, model.encoder);
  const TrainLog log = pretrain_refiner(model, corpus, pairs, train_config(cfg));

  model.store.save_file(out_path(cfg, artifact::kRefiner));
  write_train_log(out_path(cfg, "refiner_log.tsv"), log, "val_ppl");
  out << "refiner pretraining: " << pairs.size() << " pairs, " << log.epochs.size()
      << " epochs, best val perplexity " << fmt(log.best_val, 4) << " at epoch "
      << log.best_epoch << "\n";
}

void cmd_finetune(const ExperimentConfig& cfg, std::ostream& out) {
  const CorpusData corpus = load_corpus(cfg);
  Model model = load_model(cfg, corpus, artifact::kRefiner);

  const TrainLog log = finetune(model, corpus, train_config(cfg));

  model.store.save_file(out_path(cfg, artifact::kFinetuned));
  write_train_log(out_path(cfg, "finetune_log.tsv"), log, "val_idf_bleu_1");
  out << "fine-tuning: " << log.epochs.size() << " epochs, best val IDF-BLEU-1 "
      << fmt(log.best_val, 6) << " at epoch " << log.best_epoch << "\n";
}

void cmd_generate(const ExperimentConfig& cfg, const std::string& requests_path,
                  const std::string& params_name, std::ostream& out, std::ostream& err) {
  const CorpusData corpus = load_corpus(cfg);
  const Model model = load_model(cfg, corpus, params_name);

  std::ifstream in(requests_path);
  if (!in) throw std::runtime_error("generate: cannot open " + requests_path);

  std::ostringstream records;
  std::string line;
  std::size_t line_no = 0;
  auto emit = [&](const json& rec) { records << rec.dump() << "\n"; };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json req = json::parse(line, nullptr, false);

    std::string problem;
    std::string user_id;
    std::vector<std::pair<std::string, int>> items;
    if (req.is_discarded() || !req.is_object()) {
      problem = "not a JSON object";
    } else if (!req.contains("user_id") || !req["user_id"].is_string()) {
      problem = "missing string field user_id";
    } else if (!req.contains("items") || !req["items"].is_array()) {
      problem = "missing array field items";
    } else {
      user_id = req["user_id"].get<std::string>();
      std::set<std::string> seen;
      for (const json& it : req["items"]) {
        if (!it.is_object() || !it.contains("item_id") || !it["item_id"].is_string() ||
            !it.contains("rating") || !it["rating"].is_number_integer()) {
          problem = "items entries need string item_id and integer rating";
          break;
        }
        const std::string item_id = it["item_id"].get<std::string>();
        const int rating = it["rating"].get<int>();
        if (rating < corpus.rating_min || rating > corpus.rating_max) {
          problem = "rating outside dataset range for item " + item_id;
          break;
        }
        if (!seen.insert(item_id).second) {
          problem = "duplicate item " + item_id;
          break;
        }
        items.emplace_back(item_id, rating);
      }
    }

    if (!problem.empty()) {
      err << "warning: request line " << line_no << ": " << problem << "\n";
      json rec;
      rec["error"] = "line " + std::to_string(line_no) + ": " + problem;
      emit(rec);
      continue;
    }

    auto rng = make_rng(derive_seed(cfg.seed, "generate", line_no));
    for (const auto& [item_id, rating] : items) {
      const GenerationResult gen = generate_one(model, corpus, user_id, item_id, rating, rng);
      json rec;
      rec["user_id"] = user_id;
      rec["item_id"] = item_id;
      rec["rating"] = rating;
      if (!gen.ok) {
        rec["error"] = gen.error;
      } else {
        rec["prototype"] = detokenize(gen.prototype, corpus.vocab);
        rec["explanation"] = detokenize(gen.explanation, corpus.vocab);
      }
      emit(rec);
    }
  }

  const std::string body = records.str();
  fs::create_directories(cfg.out_dir);
  write_text_file(out_path(cfg, "generations.jsonl"), body);
  out << body;
}

void cmd_evaluate(const ExperimentConfig& cfg, const std::string& params_name,
                  const std::string& split, std::ostream& out) {
  const CorpusData corpus = load_corpus(cfg);
  const Model model = load_model(cfg, corpus, params_name);

  const std::vector<EvalInstance> instances = group_instances(corpus, split_ids(corpus, split));
  if (instances.empty()) throw CorpusError("evaluate: split \"" + split + "\" is empty");

  std::set<int> lexicon;
  if (cfg.data.features) lexicon = load_feature_lexicon(*cfg.data.features, corpus.vocab);

  const EvalAccum acc =
      score_split(model, corpus, instances, nullptr, lexicon, cfg.metrics, cfg.seed);
  const ScoreReport human = human_row(corpus, instances);

  const std::set<std::size_t> orders(cfg.metrics.eval_orders.begin(),
                                     cfg.metrics.eval_orders.end());
  std::vector<std::pair<std::string, std::pair<double, double>>> columns;  // name, model/human
  const double na = std::numeric_limits<double>::quiet_NaN();
  if (orders.count(1)) columns.push_back({"idf-bleu-1", {acc.report.idf_bleu_1, na}});
  if (orders.count(2)) columns.push_back({"idf-bleu-2", {acc.report.idf_bleu_2, na}});
  if (orders.count(4)) columns.push_back({"idf-bleu-4", {acc.report.idf_bleu_4, na}});
  if (orders.count(1)) columns.push_back({"bleu-1", {acc.report.bleu_1, na}});
  if (orders.count(2)) columns.push_back({"bleu-2", {acc.report.bleu_2, na}});
  if (orders.count(4)) columns.push_back({"bleu-4", {acc.report.bleu_4, na}});
  columns.push_back({"length", {acc.report.avg_length, human.avg_length}});
  columns.push_back({"idf/word", {acc.report.idf_per_word, human.idf_per_word}});
  columns.push_back({"rep/l", {acc.report.rep_per_len, human.rep_per_len}});
  columns.push_back({"seq_rep_2", {acc.report.seq_rep_2, human.seq_rep_2}});
  if (!lexicon.empty()) {
    columns.push_back({"feat-p", {acc.report.feat_precision, na}});
    columns.push_back({"feat-r", {acc.report.feat_recall, na}});
  }

  std::ostringstream table;
  auto cell = [](double v) { return std::isnan(v) ? std::string("-") : fmt(v, 2); };
  table << "split: " << split << " (" << acc.scored << " instances scored, " << acc.skipped
        << " skipped)\n";
  table << "metric";
  for (const auto& c : columns) table << "\t" << c.first;
  table << "\ncompexp";
  for (const auto& c : columns) table << "\t" << cell(c.second.first);
  table << "\nhuman";
  for (const auto& c : columns) table << "\t" << cell(c.second.second);
  table << "\n";

  fs::create_directories(cfg.out_dir);
  write_text_file(out_path(cfg, "evaluation.tsv"), table.str());
  out << table.str();
}

void cmd_perturb(const ExperimentConfig& cfg, const std::string& params_name,
                 const std::vector<double>& sigmas, std::ostream& out) {
  if (sigmas.empty()) throw ConfigError("perturb: need at least one sigma");
  const CorpusData corpus = load_corpus(cfg);
  const Model model = load_model(cfg, corpus, params_name);

  const std::vector<EvalInstance> instances =
      group_instances(corpus, split_ids(corpus, "test"));
  if (instances.empty()) throw CorpusError("perturb: test split is empty");

  MetricsConfig mcfg = cfg.metrics;
  mcfg.eval_orders = {1};

  std::ostringstream curve;
  curve << "sigma\tbleu_1\tidf_bleu_1\n";
  for (std::size_t level = 0; level < sigmas.size(); ++level) {
    const double sigma = sigmas[level];
    if (sigma < 0) throw ConfigError("perturb: sigma must be nonnegative");
    auto noise_rng = make_rng(derive_seed(cfg.seed, "perturb-noise", level));
    std::vector<int> noisy(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const double shifted =
          static_cast<double>(instances[i].rating) + sigma * normal(noise_rng);
      const double rounded = std::round(shifted);
      noisy[i] = static_cast<int>(std::clamp(
          rounded, static_cast<double>(corpus.rating_min),
          static_cast<double>(corpus.rating_max)));
    }
    const EvalAccum acc =
        score_split(model, corpus, instances, &noisy, {}, mcfg, cfg.seed);
    curve << fmt(sigma, 3) << "\t" << fmt(acc.report.bleu_1, 4) << "\t"
          << fmt(acc.report.idf_bleu_1, 4) << "\n";
  }

  fs::create_directories(cfg.out_dir);
  write_text_file(out_path(cfg, "perturbation.tsv"), curve.str());
  out << curve.str();
}

}  // namespace compexp
