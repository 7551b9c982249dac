#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "relcue/relcue.hpp"

namespace fs = std::filesystem;
using namespace relcue;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string provider;
  std::string filter_similar;  // "", true, false
};

PipelineConfig effective_config(const Globals& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.jobs) cfg.jobs = *g.jobs;
  if (!g.provider.empty()) cfg.embeddings.provider = g.provider;
  if (!g.filter_similar.empty()) {
    if (g.filter_similar == "true" || g.filter_similar == "1")
      cfg.prompts.filter_similar = true;
    else if (g.filter_similar == "false" || g.filter_similar == "0")
      cfg.prompts.filter_similar = false;
    else
      throw ConfigError("--filter-similar: expected true or false, got '" + g.filter_similar + "'");
  }
  cfg.validate();
  return cfg;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relative-cue target speech extraction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Pipeline config (JSON)")->envname("RELCUE_CONFIG");
  app.add_option("--seed", g.seed, "Root seed; overrides the config")->envname("RELCUE_SEED");
  app.add_option("--jobs", g.jobs, "Worker threads")->envname("RELCUE_JOBS");
  app.add_option("--provider", g.provider, "Embedding provider: oracle | file")
      ->envname("RELCUE_PROVIDER");
  app.add_option("--filter-similar", g.filter_similar, "Drop similar/Same cues from prompts")
      ->envname("RELCUE_FILTER_SIMILAR");

  std::string out, data, manifest, head, quantizers, predictions;
  std::string sim_split, train_split, classify_split, eval_split;
  std::optional<std::size_t> count;

  auto* synth = app.add_subcommand("synth-corpus", "Write a synthetic speech corpus and manifest");
  synth->add_option("--out", out, "Corpus directory")->required()->envname("RELCUE_OUT");

  auto* simulate = app.add_subcommand("simulate", "Render reverberant two-speaker mixtures");
  simulate->add_option("--manifest", manifest, "Utterance manifest (JSONL)")
      ->required()
      ->envname("RELCUE_MANIFEST");
  simulate->add_option("--out", out, "Dataset directory")->required()->envname("RELCUE_OUT");
  simulate->add_option("--split", sim_split, "train | validation | test | all")
      ->default_val("all")
      ->envname("RELCUE_SPLIT");
  simulate->add_option("--count", count, "Mixtures per split")->envname("RELCUE_COUNT");

  auto* attributes = app.add_subcommand("attributes", "Extract per-utterance attributes");
  attributes->add_option("--manifest", manifest, "Utterance manifest (JSONL)")
      ->required()
      ->envname("RELCUE_MANIFEST");
  attributes->add_option("--out", out, "Output JSONL")->required()->envname("RELCUE_OUT");

  auto* cues = app.add_subcommand("cues", "Label relative and independent cues");
  cues->add_option("--data", data, "Dataset directory")->required()->envname("RELCUE_DATA");
  cues->add_option("--quantizers", quantizers, "Fixed quantizers (JSON)")
      ->envname("RELCUE_QUANTIZERS");

  auto* prompts = app.add_subcommand("prompts", "Generate text prompts");
  prompts->add_option("--data", data, "Dataset directory")->required()->envname("RELCUE_DATA");

  auto* train = app.add_subcommand("train", "Train the text projection head");
  train->add_option("--data", data, "Dataset directory")->required()->envname("RELCUE_DATA");
  train->add_option("--out", out, "Output directory")->required()->envname("RELCUE_OUT");
  train->add_option("--split", train_split, "Training split")->default_val("train")->envname("RELCUE_SPLIT");

  auto* classify = app.add_subcommand("classify", "Pick the target channel per prompt");
  classify->add_option("--data", data, "Dataset directory")->required()->envname("RELCUE_DATA");
  classify->add_option("--head", head, "Projection head checkpoint")->envname("RELCUE_HEAD");
  classify->add_option("--split", classify_split, "Split to classify")->default_val("test")->envname("RELCUE_SPLIT");
  classify->add_option("--out", out, "Predictions (JSONL)")->required()->envname("RELCUE_OUT");

  auto* evaluate = app.add_subcommand("evaluate", "Classify and report accuracy per cue");
  evaluate->add_option("--data", data, "Dataset directory")->required()->envname("RELCUE_DATA");
  evaluate->add_option("--head", head, "Projection head checkpoint")->envname("RELCUE_HEAD");
  evaluate->add_option("--split", eval_split, "Split to evaluate")->default_val("test")->envname("RELCUE_SPLIT");
  evaluate->add_option("--out", out, "Output directory")->required()->envname("RELCUE_OUT");

  auto* analyze = app.add_subcommand("analyze", "Aggregate predictions into report tables");
  analyze->add_option("--data", data, "Dataset directory")->required()->envname("RELCUE_DATA");
  analyze->add_option("--predictions", predictions, "Predictions (JSONL)")
      ->required()
      ->envname("RELCUE_PREDICTIONS");
  analyze->add_option("--out", out, "Report directory")->required()->envname("RELCUE_OUT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const auto opt_path = [](const std::string& s) -> std::optional<fs::path> {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
  };

  try {
    const PipelineConfig cfg = effective_config(g);
    std::string summary;
    if (*synth) {
      SynthCorpusSpec spec;
      spec.seed = cfg.seed;
      const Manifest m = synthesize_corpus(out, spec);
      summary = "wrote " + std::to_string(m.entries.size()) + " utterances to " + out;
    } else if (*simulate) {
      summary = cmd_simulate(cfg, manifest, out, sim_split, count);
    } else if (*attributes) {
      summary = cmd_attributes(cfg, manifest, out);
    } else if (*cues) {
      summary = cmd_cues(cfg, data, opt_path(quantizers));
    } else if (*prompts) {
      summary = cmd_prompts(cfg, data);
    } else if (*train) {
      summary = cmd_train(cfg, data, out, train_split);
    } else if (*classify) {
      summary = cmd_classify(cfg, data, opt_path(head), classify_split, out);
    } else if (*evaluate) {
      summary = cmd_evaluate(cfg, data, opt_path(head), eval_split, out);
    } else if (*analyze) {
      summary = cmd_analyze(cfg, data, predictions, out);
    }
    std::cout << summary << '\n';
    return 0;
  } catch (const Error& e) {
    std::cerr << "relcue: error: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "relcue: error: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "relcue: error: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "relcue: internal error: " << one_line(e.what()) << '\n';
    return 3;
  }
}
