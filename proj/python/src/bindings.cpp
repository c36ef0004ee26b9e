// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <tuple>

#include "tsed/audio/logmel.hpp"
#include "tsed/data/batching.hpp"
#include "tsed/metrics/postprocess.hpp"
#include "tsed/metrics/psds.hpp"
#include "tsed/metrics/scores.hpp"
#include "tsed/models/pooling.hpp"
#include "tsed/pipeline/commands.hpp"
#include "tsed/training/losses.hpp"

namespace py = pybind11;
using namespace tsed;
using namespace tsed::audio;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using EventTuple = std::tuple<std::size_t, double, double>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

data::EventList to_events(const std::string& clip, const std::vector<EventTuple>& events) {
  data::EventList out{clip, {}};
  for (const auto& [cls, on, off] : events) out.events.push_back({cls, on, off});
  return out;
}

std::vector<EventTuple> from_events(const data::EventList& e) {
  std::vector<EventTuple> out;
  for (const auto& ev : e.events) out.emplace_back(ev.cls, ev.onset, ev.offset);
  return out;
}

std::vector<data::EventList> to_reference_lists(const std::map<std::string, std::vector<EventTuple>>& refs) {
  std::vector<data::EventList> out;
  for (const auto& [clip, events] : refs) out.push_back(to_events(clip, events));
  return out;
}

metrics::PsdsConfig scenario(int which, std::size_t n_thresholds) {
  if (which != 1 && which != 2) throw std::invalid_argument("scenario must be 1 or 2");
  auto cfg = which == 1 ? metrics::PsdsConfig::scenario1() : metrics::PsdsConfig::scenario2();
  cfg.thresholds = metrics::PsdsConfig::linear_thresholds(n_thresholds);
  return cfg;
}

pipeline::RunConfig run_config(const std::optional<std::filesystem::path>& path,
                               const std::vector<std::string>& overrides) {
  return path ? pipeline::load_run_config(*path, overrides) : pipeline::make_run_config(overrides);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Two-stage semi-supervised sound event detection";
  m.attr("SAMPLE_RATE") = kSampleRate;
  m.attr("CLIP_SECONDS") = data::kClipSeconds;
  m.attr("FEATURE_HOP_SECONDS") = kFeatureHopSeconds;

  // audio
  m.def(
      "logmel",
      [](const Array& samples, std::size_t n_mels, int rate) {
        Waveform w{std::vector<double>(samples.data(), samples.data() + samples.size()), rate};
        return to_array(logmel(w, n_mels).frames);
      },
      py::arg("samples"), py::arg("n_mels") = 128, py::arg("rate") = kSampleRate,
      "Log-mel features [T, n_mels] of a mono waveform.");
  m.def(
      "load_audio", [](const std::filesystem::path& p) { return load_audio(p).samples; }, py::arg("path"),
      "Reads a WAV file as a 10 s mono clip at 16 kHz.");
  m.def(
      "mel_filterbank", [](std::size_t n_mels) { return to_array(mel_filterbank(n_mels)); }, py::arg("n_mels"));

  // labels and batching
  m.def(
      "weakify",
      [](const std::vector<EventTuple>& events) {
        auto w = data::weakify(to_events("", events));
        return std::vector<std::size_t>(w.classes.begin(), w.classes.end());
      },
      py::arg("events"), "Sorted distinct classes of (class, onset, offset) events.");
  m.def(
      "frame_targets",
      [](const std::vector<EventTuple>& events, std::size_t n_frames, double hop, std::size_t n_classes) {
        return to_array(data::frame_targets(to_events("", events), n_frames, hop, n_classes));
      },
      py::arg("events"), py::arg("n_frames"), py::arg("frame_hop"), py::arg("n_classes"));
  m.def(
      "compose_batch",
      [](std::size_t batch_size) {
        auto p = data::BatchPlan::for_batch(batch_size);
        return std::make_tuple(p.n_strong, p.n_weak, p.n_unlabeled);
      },
      py::arg("batch_size"), "(strong, weak, unlabeled) counts of a batch.");
  m.def(
      "pseudo_labels",
      [](const Array& probs, const std::vector<std::string>& clips, double threshold) {
        std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
        for (const auto& w : data::pseudo_labels(to_tensor(probs), clips, {threshold}))
          out.emplace_back(w.clip_id, std::vector<std::size_t>(w.classes.begin(), w.classes.end()));
        return out;
      },
      py::arg("probs"), py::arg("clip_ids"), py::arg("threshold") = 0.5);

  // pooling and losses
  m.def(
      "exp_softmax_pool", [](const Array& p) { return to_array(models::exp_softmax_pool(Var(to_tensor(p))).value()); },
      py::arg("frame_probs"), "Clip probabilities from frame probabilities [T, K] or [N, T, K].");
  m.def(
      "attention_pool",
      [](const Array& logits, const Array& p) {
        return to_array(models::attention_pool(Var(to_tensor(logits)), Var(to_tensor(p))).value());
      },
      py::arg("logits"), py::arg("frame_probs"));
  m.def(
      "bce_loss", [](const Array& p, const Array& y) { return training::bce_loss(Var(to_tensor(p)), to_tensor(y)).value().item(); },
      py::arg("probs"), py::arg("targets"));
  m.def(
      "afl_loss",
      [](const Array& p, const Array& y, double gamma, double zeta) {
        return training::afl_loss(Var(to_tensor(p)), to_tensor(y), {gamma, zeta}).value().item();
      },
      py::arg("probs"), py::arg("targets"), py::arg("gamma") = 0.625, py::arg("zeta") = 1.0,
      "Asymmetric focal loss; gamma weights active targets and zeta inactive ones.");

  // post-processing and metrics
  m.def(
      "adaptive_window",
      [](double duration, double beta, double hop) {
        return metrics::adaptive_window(0, metrics::MedianConfig::uniform({duration}, hop, beta));
      },
      py::arg("duration"), py::arg("beta") = 1.0 / 3.0, py::arg("frame_hop") = 0.064,
      "Median-filter length in frames for events of typical `duration` seconds.");
  m.def(
      "median_filter",
      [](const Array& binary, const std::vector<std::size_t>& windows) {
        return to_array(metrics::median_filter(to_tensor(binary), windows));
      },
      py::arg("binary"), py::arg("windows"));
  m.def(
      "detect",
      [](const Array& probs, double threshold, const std::vector<std::size_t>& windows, double hop) {
        return from_events(metrics::detect(to_tensor(probs), threshold, windows, hop, ""));
      },
      py::arg("frame_probs"), py::arg("threshold"), py::arg("windows"), py::arg("frame_hop") = 0.064,
      "Binarize, median-filter and decode [T, K] probabilities into (class, onset, offset) events.");
  m.def(
      "psds_from_posteriors",
      [](const std::map<std::string, Array>& predictions,
         const std::map<std::string, std::vector<EventTuple>>& references, std::size_t n_classes, int which,
         double hop, double beta, std::size_t n_thresholds) {
        auto refs = to_reference_lists(references);
        std::vector<metrics::ClipPosteriors> preds;
        for (const auto& r : refs) {
          auto it = predictions.find(r.clip_id);
          if (it == predictions.end()) throw std::invalid_argument("no prediction for clip " + r.clip_id);
          preds.push_back({r.clip_id, to_tensor(it->second)});
        }
        auto median = metrics::MedianConfig::uniform(metrics::median_durations(refs, n_classes), hop, beta);
        return metrics::compute_psds(preds, refs, n_classes, median, scenario(which, n_thresholds),
                                     data::kClipSeconds * refs.size())
            .score;
      },
      py::arg("predictions"), py::arg("references"), py::arg("n_classes"), py::arg("scenario") = 1,
      py::arg("frame_hop") = 0.064, py::arg("beta") = 1.0 / 3.0, py::arg("n_thresholds") = 50,
      "PSDS of frame posteriors {clip: [T, K]} against reference events {clip: [(class, onset, offset)]}.");
  m.def(
      "psds_from_events",
      [](const std::map<std::string, std::vector<EventTuple>>& detections,
         const std::map<std::string, std::vector<EventTuple>>& references, std::size_t n_classes, int which) {
        auto refs = to_reference_lists(references);
        std::vector<data::EventList> dets;
        for (const auto& r : refs) {
          auto it = detections.find(r.clip_id);
          dets.push_back(to_events(r.clip_id, it == detections.end() ? std::vector<EventTuple>{} : it->second));
        }
        return metrics::psds_from_detections({dets}, {0.5}, refs, n_classes, data::kClipSeconds * refs.size(),
                                             scenario(which, 2))
            .score;
      },
      py::arg("detections"), py::arg("references"), py::arg("n_classes"), py::arg("scenario") = 1,
      "PSDS of one fixed set of detected events.");
  m.def(
      "macro_f1", [](const Array& p, const Array& y, double t) { return metrics::macro_f1(to_tensor(p), to_tensor(y), t); },
      py::arg("probs"), py::arg("targets"), py::arg("threshold") = 0.5);

  // models
  m.def(
      "crnn_param_count",
      [](std::size_t n_classes, std::size_t n_mels, std::size_t basis_kernels) {
        auto c = basis_kernels ? models::CrnnConfig::fdy(basis_kernels) : models::CrnnConfig{};
        c.n_classes = n_classes;
        c.n_mels = n_mels;
        return models::crnn_param_count(c);
      },
      py::arg("n_classes") = 10, py::arg("n_mels") = 128, py::arg("basis_kernels") = 0,
      "Trainable parameters of the CRNN (basis_kernels > 0 gives the frequency-dynamic variant).");
  m.def(
      "at_param_count",
      [](std::size_t n_classes, std::size_t width_divisor) {
        auto c = models::AtConfig::scaled(width_divisor);
        c.n_classes = n_classes;
        return models::at_param_count(c);
      },
      py::arg("n_classes") = 10, py::arg("width_divisor") = 1);

  py::class_<models::Model>(m, "Model")
      .def_property_readonly("n_classes", &models::Model::n_classes)
      .def_property_readonly("n_mels", &models::Model::n_mels)
      .def_property_readonly("time_ratio", &models::Model::time_ratio)
      .def_property_readonly("param_count", [](const models::Model& mdl) { return mdl.store().param_count(); })
      .def_property_readonly("arch", &models::Model::arch)
      .def(
          "infer",
          [](models::Model& mdl, const Array& features, const std::string& pooling) {
            auto p = mdl.infer(to_tensor(features), models::parse_pooling(pooling));
            return std::make_pair(to_array(p.frame), to_array(p.clip));
          },
          py::arg("features"), py::arg("pooling") = "attention",
          "(frame [T', K], clip [K]) probabilities of raw log-mel features [T, M].");
  m.def("load_model", &models::load_model, py::arg("path"));

  // pipeline
  m.def(
      "dump_config",
      [](const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
        return pipeline::dump_run_config(run_config(path, overrides));
      },
      py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "run",
      [](const std::string& command, const std::optional<std::filesystem::path>& path,
         const std::vector<std::string>& overrides, const py::object& progress) {
        auto cfg = run_config(path, overrides);
        pipeline::Progress cb;
        if (!progress.is_none())
          cb = [progress](const std::string& line) {
            py::gil_scoped_acquire gil;
            progress(line);
          };
        pipeline::run_command(command, cfg, cb);
        return pipeline::Artifacts(cfg.output_dir).root;
      },
      py::arg("command"), py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{},
      py::arg("progress") = py::none(), "Runs a pipeline command; returns the output directory.");
}
