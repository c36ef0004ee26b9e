// SPDX-License-Identifier: Apache-2.0
#include "tsed/pipeline/commands.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tsed/data/manifest.hpp"
#include "tsed/numerics/checkpoint.hpp"
#include "tsed/training/dataset.hpp"

namespace tsed::pipeline {

namespace {

namespace fs = std::filesystem;
using training::Example;

void say(const Progress& p, const std::string& line) {
  if (p) p(line);
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "," : "") + names[i];
  return out;
}

training::FeatureSource features_for(const RunConfig& cfg, std::size_t n_mels) {
  return {cfg.audio_root, cfg.cache_features ? cfg.feature_cache : fs::path(), n_mels};
}

data::DatasetIndex read_manifest(const fs::path& path, data::ManifestKind kind, const RunConfig& cfg,
                                 const std::string& key) {
  if (!fs::exists(path))
    throw std::runtime_error(std::string(data::to_string(kind)) + " manifest not found: " + path.string() +
                             " (set " + key + " in the config or run `tsed synthdata` first)");
  return data::parse_manifest(path, kind, cfg.vocabulary());
}

std::vector<Example> load_set(const fs::path& path, data::ManifestKind kind, const RunConfig& cfg,
                              const std::string& key, std::size_t n_mels, const Progress& progress) {
  auto index = read_manifest(path, kind, cfg, key);
  say(progress, "loading " + std::to_string(index.size()) + " clips from " + path.string());
  return training::load_examples(index, features_for(cfg, n_mels), cfg.vocabulary().size());
}

std::unique_ptr<models::Model> load_checkpoint(const fs::path& path, const RunConfig& cfg, int stage) {
  if (!fs::exists(path)) {
    const std::string cmd = stage == 1 ? "tsed train-stage1" : "tsed train-stage2";
    throw std::runtime_error("no stage-" + std::to_string(stage) + " checkpoint at " + path.string() + "; run `" +
                             cmd + "` first");
  }
  const models::Arch arch = checkpoint::load_sidecar(path);
  const std::string expected = join_names(cfg.vocabulary().names());
  if (auto it = arch.find("classes"); it != arch.end() && it->second != expected)
    throw std::runtime_error("checkpoint " + path.string() + " was trained on classes '" + it->second +
                             "' but the config names '" + expected + "'");
  return models::load_model(path);
}

training::TrainConfig stage_train_config(const RunConfig& cfg, const StageRecipe& recipe, int stage,
                                         const Progress& progress) {
  training::TrainConfig t = recipe.train;
  t.out_dir = Artifacts(cfg.output_dir).stage_dir(stage);
  t.checkpoint_meta = {{"classes", join_names(cfg.vocabulary().names())}, {"stage", std::to_string(stage)}};
  const std::size_t total = t.epochs;
  t.on_epoch = [progress, stage, total](const training::EpochLog& e) {
    char line[256];
    std::snprintf(line, sizeof line,
                  "stage%d epoch %zu/%zu  loss %.4f  frame %.4f  clip %.4f  cons %.4f  ict %.4f  val %.4f%s  (%.1fs)",
                  stage, e.epoch + 1, total, e.loss, e.frame_loss, e.clip_loss, e.consistency, e.ict, e.val_score,
                  e.best ? " *" : "", e.seconds);
    say(progress, line);
  };
  return t;
}

/// Median-filter settings for a model whose frames are `hop` seconds apart.
metrics::MedianConfig median_for(const RunConfig& cfg, double hop, std::size_t k, const Progress& progress) {
  std::vector<double> durations(k, 1.0);
  if (fs::exists(cfg.strong_manifest)) {
    auto index = data::parse_manifest(cfg.strong_manifest, data::ManifestKind::Strong, cfg.vocabulary());
    durations = metrics::median_durations(index.strong, k);
  } else {
    say(progress, "no strong manifest; median filter assumes 1 s events");
  }
  metrics::MedianConfig m = metrics::MedianConfig::uniform(durations, hop, cfg.eval.median_beta);
  if (!cfg.eval.adaptive_median) m.window_override.assign(k, cfg.eval.median_window);
  m.validate();
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

data::SynthPlan cmd_synthdata(const RunConfig& cfg, const Progress& progress) {
  say(progress, "writing " + std::to_string(cfg.synth.n_clips) + " clips to " + cfg.data_dir.string());
  data::SynthPlan plan = data::write_corpus(cfg.data_dir, cfg.synth);
  say(progress, "splits: strong " + std::to_string(plan.strong.size()) + ", weak " + std::to_string(plan.weak.size()) +
                    ", unlabeled " + std::to_string(plan.unlabeled.size()) + ", validation " +
                    std::to_string(plan.validation.size()));
  return plan;
}

training::TrainResult cmd_train_stage1(const RunConfig& cfg, const Progress& progress) {
  const std::size_t m = cfg.stage1.n_mels;
  training::TrainSets sets;
  sets.n_classes = cfg.vocabulary().size();
  sets.strong = load_set(cfg.strong_manifest, data::ManifestKind::Strong, cfg, "strong_manifest", m, progress);
  sets.weak = load_set(cfg.weak_manifest, data::ManifestKind::Weak, cfg, "weak_manifest", m, progress);
  sets.unlabeled =
      load_set(cfg.unlabeled_manifest, data::ManifestKind::Unlabeled, cfg, "unlabeled_manifest", m, progress);
  if (fs::exists(cfg.validation_manifest))
    sets.validation = load_set(cfg.validation_manifest, data::ManifestKind::Strong, cfg, "validation_manifest", m,
                               progress);
  auto model = build_model(cfg.stage1, sets.n_classes, cfg.seed);
  say(progress, "stage1 model " + cfg.stage1.model + " with " + std::to_string(model->store().param_count()) +
                    " parameters");
  auto result = training::train_stage1(*model, sets, stage_train_config(cfg, cfg.stage1, 1, progress));
  say(progress, "stage1 best epoch " + std::to_string(result.best_epoch + 1) + ", checkpoint " +
                    Artifacts(cfg.output_dir).checkpoint(1).string());
  return result;
}

PseudoSummary cmd_infer_pseudo(const RunConfig& cfg, const Progress& progress) {
  const Artifacts art(cfg.output_dir);
  auto model = load_checkpoint(art.checkpoint(1), cfg, 1);
  auto index = read_manifest(cfg.unlabeled_manifest, data::ManifestKind::Unlabeled, cfg, "unlabeled_manifest");
  const auto source = features_for(cfg, model->n_mels());
  const std::size_t k = model->n_classes();
  Tensor probs({index.clips.size(), k});
  for (std::size_t i = 0; i < index.clips.size(); ++i) {
    Tensor p = model->infer(source.features(index.clips[i]), cfg.pseudo.pooling).clip;
    for (std::size_t c = 0; c < k; ++c) probs[i * k + c] = p[c];
  }
  auto labels = data::pseudo_labels(probs, index.clips, {cfg.pseudo.threshold});
  data::write_weak_manifest(art.pseudo_labels(), labels, cfg.vocabulary());

  PseudoSummary s;
  s.clips = labels.size();
  for (const auto& l : labels) {
    s.labeled_clips += !l.classes.empty();
    s.labels += l.classes.size();
  }
  say(progress, "pseudo-weak labels for " + std::to_string(s.clips) + " clips (" + std::to_string(s.labeled_clips) +
                    " with at least one class) written to " + art.pseudo_labels().string());
  return s;
}

training::TrainResult cmd_train_stage2(const RunConfig& cfg, const Progress& progress) {
  const Artifacts art(cfg.output_dir);
  if (cfg.stage2_pseudo && !fs::exists(art.pseudo_labels()))
    throw std::runtime_error("pseudo-weak labels not found at " + art.pseudo_labels().string() +
                             "; run `tsed infer-pseudo` first (or set stage2.pseudo = false for the stage-2-only "
                             "ablation)");
  const std::size_t m = cfg.stage2.n_mels;
  training::TrainSets sets;
  sets.n_classes = cfg.vocabulary().size();
  sets.strong = load_set(cfg.strong_manifest, data::ManifestKind::Strong, cfg, "strong_manifest", m, progress);
  sets.weak = load_set(cfg.weak_manifest, data::ManifestKind::Weak, cfg, "weak_manifest", m, progress);
  if (cfg.stage2_pseudo) {
    sets.unlabeled = load_set(art.pseudo_labels(), data::ManifestKind::Weak, cfg, "pseudo labels", m, progress);
    if (!cfg.pseudo.keep_empty)
      for (auto& e : sets.unlabeled) {
        bool any = false;
        for (double v : e.clip_target.data()) any = any || v > 0.0;
        if (!any) e.clip_target = Tensor();
      }
  } else {
    sets.unlabeled =
        load_set(cfg.unlabeled_manifest, data::ManifestKind::Unlabeled, cfg, "unlabeled_manifest", m, progress);
  }
  if (fs::exists(cfg.validation_manifest))
    sets.validation = load_set(cfg.validation_manifest, data::ManifestKind::Strong, cfg, "validation_manifest", m,
                               progress);

  auto model = build_model(cfg.stage2, sets.n_classes, cfg.seed);
  say(progress, "stage2 model " + cfg.stage2.model + " with " + std::to_string(model->store().param_count()) +
                    " parameters");
  training::TrainConfig t = stage_train_config(cfg, cfg.stage2, 2, progress);
  t.median = median_for(cfg, training::output_hop_seconds(*model), sets.n_classes, progress);
  auto result = training::train_stage2(*model, sets, t);
  say(progress, "stage2 best epoch " + std::to_string(result.best_epoch + 1) + ", checkpoint " +
                    art.checkpoint(2).string());
  return result;
}

EvalSummary cmd_evaluate(const RunConfig& cfg, const fs::path& predictions, const Progress& progress) {
  const Artifacts art(cfg.output_dir);
  const auto vocab = cfg.vocabulary();
  const std::size_t k = vocab.size();
  auto refs_index = read_manifest(cfg.eval.manifest, data::ManifestKind::Strong, cfg, "eval.manifest");
  const auto& refs = refs_index.strong;
  const double seconds = static_cast<double>(refs.size()) * data::kClipSeconds;

  metrics::PsdsConfig s1 = metrics::PsdsConfig::scenario1(), s2 = metrics::PsdsConfig::scenario2();
  s1.thresholds = s2.thresholds = metrics::PsdsConfig::linear_thresholds(cfg.eval.n_thresholds);

  EvalSummary out;
  out.clips = refs.size();
  std::vector<data::EventList> events;
  nlohmann::json scores;
  if (!predictions.empty()) {
    if (!fs::exists(predictions)) throw std::runtime_error("predictions file not found: " + predictions.string());
    auto pred = data::parse_manifest(predictions, data::ManifestKind::Strong, vocab);
    std::map<std::string, std::vector<data::Event>> by_clip;
    for (const auto& c : pred.strong) by_clip[c.clip_id] = c.events;
    for (const auto& r : refs) events.push_back({r.clip_id, by_clip.count(r.clip_id) ? by_clip[r.clip_id] : std::vector<data::Event>{}});
    // a fixed set of detections is a single operating point
    out.psds1 = metrics::psds_from_detections({events}, {0.5}, refs, k, seconds, s1);
    out.psds2 = metrics::psds_from_detections({events}, {0.5}, refs, k, seconds, s2);
    scores["source"] = predictions.string();
  } else {
    const int stage = cfg.eval.model == "stage1" ? 1 : 2;
    auto model = load_checkpoint(art.checkpoint(stage), cfg, stage);
    const double hop = training::output_hop_seconds(*model);
    const auto median = median_for(cfg, hop, k, progress);
    const auto windows = metrics::adaptive_windows(median);
    const auto source = features_for(cfg, model->n_mels());
    std::vector<metrics::ClipPosteriors> preds;
    say(progress, "scoring " + std::to_string(refs.size()) + " clips with " + art.checkpoint(stage).string());
    for (const auto& r : refs) {
      Tensor frame = model->infer(source.features(r.clip_id)).frame;
      events.push_back(metrics::detect(frame, cfg.eval.event_threshold, windows, hop, r.clip_id));
      preds.push_back({r.clip_id, std::move(frame)});
    }
    out.psds1 = metrics::compute_psds(preds, refs, k, median, s1, seconds);
    out.psds2 = metrics::compute_psds(preds, refs, k, median, s2, seconds);
    scores["source"] = art.checkpoint(stage).string();
    scores["median_windows"] = windows;
  }
  for (const auto& e : events) out.detected_events += e.events.size();

  const fs::path dir = art.eval_dir();
  fs::create_directories(dir);
  metrics::write_report_json(dir / "psds1.json", out.psds1, vocab.names());
  metrics::write_report_json(dir / "psds2.json", out.psds2, vocab.names());
  metrics::write_roc_csv(dir / "roc_psds1.csv", out.psds1);
  metrics::write_roc_csv(dir / "roc_psds2.csv", out.psds2);
  data::write_strong_manifest(dir / "events.tsv", events, vocab);
  scores["psds1"] = out.psds1.score;
  scores["psds2"] = out.psds2.score;
  scores["psds_sum"] = out.psds1.score + out.psds2.score;
  scores["clips"] = out.clips;
  scores["detected_events"] = out.detected_events;
  write_text(art.scores(), scores.dump(2) + "\n");

  char line[128];
  std::snprintf(line, sizeof line, "PSDS1 %.4f  PSDS2 %.4f  sum %.4f", out.psds1.score, out.psds2.score,
                out.psds1.score + out.psds2.score);
  say(progress, line);
  return out;
}

std::vector<fs::path> cmd_report(const RunConfig& cfg, const Progress& progress) {
  const Artifacts art(cfg.output_dir);
  std::vector<fs::path> written;
  const fs::path dir = art.report_dir();

  std::ostringstream curves, summary;
  curves << "stage,epoch,loss,frame_loss,clip_loss,consistency,ict,val_score\n";
  summary << "stage,epochs,best_epoch,best_val_score,final_loss\n";
  bool any_log = false;
  for (int stage : {1, 2}) {
    if (!fs::exists(art.train_log(stage))) continue;
    any_log = true;
    auto rows = read_csv(art.train_log(stage));
    if (rows.size() < 2) continue;
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[rows[0][i]] = i;
    for (const char* need : {"epoch", "loss", "frame_loss", "clip_loss", "consistency", "ict", "val_score", "best"})
      if (!col.count(need)) throw std::runtime_error(art.train_log(stage).string() + ": missing column " + need);
    std::string best_epoch = "", best_val = "";
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      curves << stage << ',' << row[col["epoch"]] << ',' << row[col["loss"]] << ',' << row[col["frame_loss"]] << ','
             << row[col["clip_loss"]] << ',' << row[col["consistency"]] << ',' << row[col["ict"]] << ','
             << row[col["val_score"]] << '\n';
      if (row[col["best"]] == "1") {
        best_epoch = row[col["epoch"]];
        best_val = row[col["val_score"]];
      }
    }
    summary << stage << ',' << rows.size() - 1 << ',' << best_epoch << ',' << best_val << ','
            << rows.back()[col["loss"]] << '\n';
  }

  const bool have_eval = fs::exists(art.scores());
  if (!any_log && !have_eval)
    throw std::runtime_error("nothing to report in " + cfg.output_dir.string() +
                             "; run `tsed train-stage1` or `tsed evaluate` first");
  if (any_log) {
    write_text(dir / "training_curves.csv", curves.str());
    write_text(dir / "training_summary.csv", summary.str());
    written.push_back(dir / "training_curves.csv");
    written.push_back(dir / "training_summary.csv");
  }
  if (have_eval) {
    std::ifstream is(art.scores());
    auto j = nlohmann::json::parse(is);
    std::ostringstream scores, roc;
    scores << "scenario,score\npsds1," << j["psds1"].get<double>() << "\npsds2," << j["psds2"].get<double>()
           << "\nsum," << j["psds_sum"].get<double>() << '\n';
    roc << "scenario,efpr,etpr\n";
    for (const char* s : {"psds1", "psds2"}) {
      const fs::path f = art.eval_dir() / (std::string("roc_") + s + ".csv");
      if (!fs::exists(f)) continue;
      auto rows = read_csv(f);
      for (std::size_t r = 1; r < rows.size(); ++r) roc << s << ',' << rows[r][0] << ',' << rows[r][1] << '\n';
    }
    write_text(dir / "scores.csv", scores.str());
    write_text(dir / "roc_curves.csv", roc.str());
    written.push_back(dir / "scores.csv");
    written.push_back(dir / "roc_curves.csv");
  }
  for (const auto& f : written) say(progress, "wrote " + f.string());
  return written;
}

void run_command(const std::string& name, const RunConfig& cfg, const Progress& progress) {
  if (name == "synthdata")
    cmd_synthdata(cfg, progress);
  else if (name == "train-stage1")
    cmd_train_stage1(cfg, progress);
  else if (name == "infer-pseudo")
    cmd_infer_pseudo(cfg, progress);
  else if (name == "train-stage2")
    cmd_train_stage2(cfg, progress);
  else if (name == "evaluate")
    cmd_evaluate(cfg, {}, progress);
  else if (name == "report")
    cmd_report(cfg, progress);
  else
    throw std::invalid_argument("unknown command '" + name + "'");
}

}  // namespace tsed::pipeline
