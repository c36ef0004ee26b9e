// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tsed/metrics/psds.hpp"
#include "tsed/pipeline/run_config.hpp"

namespace tsed::pipeline {

/// Where each command reads and writes inside the output directory.
struct Artifacts {
  std::filesystem::path root;

  explicit Artifacts(std::filesystem::path output_dir) : root(std::move(output_dir)) {}
  std::filesystem::path stage_dir(int stage) const { return root / ("stage" + std::to_string(stage)); }
  std::filesystem::path checkpoint(int stage) const { return stage_dir(stage) / "best.ckpt"; }
  std::filesystem::path train_log(int stage) const { return stage_dir(stage) / "log.csv"; }
  std::filesystem::path pseudo_labels() const { return root / "pseudo_weak.tsv"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path scores() const { return eval_dir() / "scores.json"; }
  std::filesystem::path report_dir() const { return root / "report"; }
};

/// Receives one human-readable progress line at a time.
using Progress = std::function<void(const std::string&)>;

data::SynthPlan cmd_synthdata(const RunConfig& cfg, const Progress& progress = {});

training::TrainResult cmd_train_stage1(const RunConfig& cfg, const Progress& progress = {});

struct PseudoSummary {
  std::size_t clips = 0;
  std::size_t labeled_clips = 0;  // clips with at least one class
  std::size_t labels = 0;
};
PseudoSummary cmd_infer_pseudo(const RunConfig& cfg, const Progress& progress = {});

training::TrainResult cmd_train_stage2(const RunConfig& cfg, const Progress& progress = {});

struct EvalSummary {
  metrics::PsdsReport psds1, psds2;
  std::size_t clips = 0;
  std::size_t detected_events = 0;
};
/// Scores the configured checkpoint on the evaluation manifest, or, when
/// `predictions` is set, a strong-format TSV of detected events.
EvalSummary cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& predictions = {},
                         const Progress& progress = {});

/// Collects training logs, scores and ROC curves into CSV files under
/// `report/`. Returns the files written.
std::vector<std::filesystem::path> cmd_report(const RunConfig& cfg, const Progress& progress = {});

/// Runs a command by its command-line name.
void run_command(const std::string& name, const RunConfig& cfg, const Progress& progress = {});

}  // namespace tsed::pipeline
