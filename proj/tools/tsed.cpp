// SPDX-License-Identifier: Apache-2.0
// Command-line driver of the two-stage pipeline.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsed/pipeline/commands.hpp"

namespace {

using namespace tsed::pipeline;

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string output_dir;
  bool print_config = false;
  bool quiet = false;
};

RunConfig resolve(const Options& o, std::vector<std::string> extra = {}) {
  std::vector<std::string> all = o.overrides;
  if (!o.output_dir.empty()) all.push_back("output_dir=" + o.output_dir);
  all.insert(all.end(), extra.begin(), extra.end());
  return o.config.empty() ? make_run_config(all) : load_run_config(o.config, all);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage semi-supervised sound event detection"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("-c,--config", opt.config, "Run configuration file (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("-s,--set", opt.overrides, "Override a config key, e.g. --set stage1.epochs=5")->take_all();
  app.add_option("-o,--output-dir", opt.output_dir, "Output directory (TSED_OUTPUT_DIR takes precedence)");
  app.add_flag("--print-config", opt.print_config, "Print the resolved configuration before running");
  app.add_flag("-q,--quiet", opt.quiet, "Suppress progress output");

  auto* synth = app.add_subcommand("synthdata", "Generate a synthetic corpus with exact strong annotations");
  std::string synth_out;
  std::size_t n_clips = 0, n_classes = 0;
  std::uint64_t seed = 0;
  synth->add_option("--out", synth_out, "Corpus directory (config key data_dir)");
  synth->add_option("--n-clips", n_clips, "Number of 10 s clips")->check(CLI::PositiveNumber);
  synth->add_option("--classes", n_classes, "Number of classes (1-10)")->check(CLI::Range(1, 10));
  synth->add_option("--seed", seed, "Random seed");

  app.add_subcommand("train-stage1", "Train the audio-tagging model on weak, weakified and unlabeled clips");
  app.add_subcommand("infer-pseudo", "Write pseudo-weak labels for the unlabeled clips");
  app.add_subcommand("train-stage2", "Train the detection model on strong, weak and pseudo-weak clips");
  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint (or a detections TSV) with PSDS");
  std::string predictions;
  eval->add_option("--predictions", predictions, "Strong-format TSV of detections to score instead of a model");
  app.add_subcommand("report", "Collect training logs, scores and ROC curves into CSV files");

  CLI11_PARSE(app, argc, argv);

  try {
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    std::vector<std::string> extra;
    if (name == "synthdata") {
      if (!synth_out.empty()) extra.push_back("data_dir=" + synth_out);
      if (n_clips) extra.push_back("synth.n_clips=" + std::to_string(n_clips));
      if (n_classes) extra.push_back("synth.n_classes=" + std::to_string(n_classes));
      if (synth->count("--seed")) extra.push_back("seed=" + std::to_string(seed));
    }
    const RunConfig cfg = resolve(opt, extra);
    if (opt.print_config) std::cout << dump_run_config(cfg) << std::flush;
    Progress progress;
    if (!opt.quiet) progress = [](const std::string& line) { std::cout << line << std::endl; };

    if (name == "evaluate")
      cmd_evaluate(cfg, predictions, progress);
    else
      run_command(name, cfg, progress);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
