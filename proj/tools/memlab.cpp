// memlab CLI: drives the pipeline stages over a config file. Stages compose
// through artifacts in the output directory; any stage can be rerun alone.

#include <CLI11.hpp>

#include <iostream>

#include "memlab/memlab.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitNumeric = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memlab: desk-scale LLM memorization laboratory"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_override;
  std::string model_tag;
  std::string family_filter;
  int64_t seed_override = -1;
  int workers_override = 0;
  bool quiet = false;

  app.add_option("-c,--config", config_path, "experiment config file")->required();
  app.add_option("-o,--out", out_override, "override out_dir from the config");
  app.add_option("--seed", seed_override, "override the global seed");
  app.add_option("-j,--workers", workers_override, "override worker count");
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  auto* cmd_gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus and manifest");
  auto* cmd_train = app.add_subcommand("train", "train the configured model families");
  cmd_train->add_option("--family", family_filter, "train only this family");
  auto* cmd_score = app.add_subcommand("score", "memorization scores for every probe (alpha 0)");
  auto* cmd_compress = app.add_subcommand("compress", "compression ratios for memorized probes");
  auto* cmd_noise = app.add_subcommand("noise", "scores and similarity profiles over the alpha grid");
  auto* cmd_lens = app.add_subcommand("lens", "logit-lens decoding curves per cohort");
  auto* cmd_ablate = app.add_subcommand("ablate", "attention-head importance per domain");
  auto* cmd_stats = app.add_subcommand("stats", "overlap tables, W1 shifts, profiles, heatmap");
  auto* cmd_report = app.add_subcommand("report", "assemble the report directory");
  auto* cmd_run = app.add_subcommand("run", "run the whole pipeline in order");
  for (auto* c : {cmd_score, cmd_compress, cmd_noise, cmd_lens, cmd_ablate})
    c->add_option("-m,--model", model_tag, "model tag (default: analysis.reference)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    memlab::report::ExperimentConfig cfg = memlab::report::ExperimentConfig::load(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (workers_override > 0) cfg.workers = workers_override;
    if (model_tag.empty()) model_tag = cfg.reference;
    std::ostream* log = quiet ? nullptr : &std::cerr;

    using namespace memlab::report;
    if (cmd_gen->parsed()) stage_gen_corpus(cfg);
    if (cmd_train->parsed()) stage_train(cfg, family_filter, log);
    if (cmd_score->parsed()) stage_score(cfg, model_tag);
    if (cmd_compress->parsed()) stage_compress(cfg, model_tag);
    if (cmd_noise->parsed()) stage_noise(cfg, model_tag);
    if (cmd_lens->parsed()) stage_lens(cfg, model_tag);
    if (cmd_ablate->parsed()) stage_ablate(cfg, model_tag);
    if (cmd_stats->parsed()) stage_stats(cfg);
    if (cmd_report->parsed()) stage_report(cfg);
    if (cmd_run->parsed()) run_full_pipeline(cfg, log);
    return 0;
  } catch (const memlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const memlab::MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const memlab::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
