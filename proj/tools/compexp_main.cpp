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

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "compexp/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"compexp: extract-and-refine comparative explanation generator"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "experiment config file (JSON)")->required();
  std::optional<std::uint64_t> seed_override;
  app.add_option("--seed", seed_override, "override the config seed");
  std::string out_override;
  app.add_option("--out", out_override, "override the config output directory");

  CLI::App* ingest = app.add_subcommand("ingest", "build corpus artifacts from raw reviews");
  CLI::App* pre_ext =
      app.add_subcommand("pretrain-extractor", "phase 1: likelihood-train the extractor");
  CLI::App* pre_ref =
      app.add_subcommand("pretrain-refiner", "phase 2: teacher-force the decoder");
  CLI::App* fine =
      app.add_subcommand("finetune", "phase 3: policy-gradient fine-tuning");

  CLI::App* gen = app.add_subcommand("generate", "explain a ranked request list");
  std::string requests;
  std::string gen_params = compexp::artifact::kFinetuned;
  gen->add_option("--requests", requests, "request file, one JSON object per line")
      ->required();
  gen->add_option("--params", gen_params, "parameter artifact to load");

  CLI::App* eval = app.add_subcommand("evaluate", "score greedy generations on a split");
  std::string split = "test";
  std::string eval_params = compexp::artifact::kFinetuned;
  eval->add_option("--split", split, "train, valid or test");
  eval->add_option("--params", eval_params, "parameter artifact to load");

  CLI::App* pert = app.add_subcommand("perturb", "rating-noise robustness sweep");
  std::vector<double> sigmas = {0.0, 0.5, 1.0, 2.0};
  std::string pert_params = compexp::artifact::kFinetuned;
  pert->add_option("--sigma", sigmas, "Gaussian noise levels");
  pert->add_option("--params", pert_params, "parameter artifact to load");

  CLI11_PARSE(app, argc, argv);

  try {
    compexp::ExperimentConfig cfg = compexp::ExperimentConfig::load_file(config_path);
    if (seed_override) {
      cfg.seed = *seed_override;
      cfg.train.seed = *seed_override;
    }
    if (!out_override.empty()) cfg.out_dir = out_override;

    if (ingest->parsed()) {
      compexp::cmd_ingest(cfg, std::cout, std::cerr);
    } else if (pre_ext->parsed()) {
      compexp::cmd_pretrain_extractor(cfg, std::cout);
    } else if (pre_ref->parsed()) {
      compexp::cmd_pretrain_refiner(cfg, std::cout);
    } else if (fine->parsed()) {
      compexp::cmd_finetune(cfg, std::cout);
    } else if (gen->parsed()) {
      compexp::cmd_generate(cfg, requests, gen_params, std::cout, std::cerr);
    } else if (eval->parsed()) {
      compexp::cmd_evaluate(cfg, eval_params, split, std::cout);
    } else if (pert->parsed()) {
      compexp::cmd_perturb(cfg, pert_params, sigmas, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
