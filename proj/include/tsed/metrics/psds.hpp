// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsed/data/labels.hpp"
#include "tsed/metrics/postprocess.hpp"
#include "tsed/numerics/tensor.hpp"

namespace tsed::metrics {

struct PsdsConfig {
  std::string name = "custom";
  double rho_dtc = 0.7;
  double rho_gtc = 0.7;
  double rho_cttc = 0.3;
  double alpha_st = 1.0;
  double alpha_ct = 0.0;
  double e_max = 100.0;  // false positives per hour
  std::vector<double> thresholds = linear_thresholds(50);

  /// n thresholds evenly spaced on [0.01, 0.99].
  static std::vector<double> linear_thresholds(std::size_t n);
  static PsdsConfig scenario1();
  static PsdsConfig scenario2();
  void validate() const;
};

/// Counts for one operating point. `ct` is row-major [K, K]: detected class
/// by reference class.
struct MatchCounts {
  std::vector<std::size_t> tp, fp, n_refs, ct;
  std::vector<double> ref_seconds;

  MatchCounts() = default;
  explicit MatchCounts(std::size_t n_classes);
  std::size_t n_classes() const { return tp.size(); }
  std::size_t cross(std::size_t det, std::size_t ref) const { return ct[det * n_classes() + ref]; }
  MatchCounts& operator+=(const MatchCounts& o);
};

/// Intersection-based matching within one clip. A detection passes the
/// detection tolerance criterion when its overlap with same-class references
/// covers at least rho_dtc of its length; failing detections are false
/// positives and, when rho_cttc > 0, cross-triggers of every other class
/// whose references cover at least rho_cttc of them. A reference is a true
/// positive when passing same-class detections cover at least rho_gtc of it.
MatchCounts match_dtc_gtc(const data::EventList& detections, const data::EventList& refs, std::size_t n_classes,
                          double rho_dtc, double rho_gtc, double rho_cttc = 0.0);

struct OperatingPoint {
  double threshold = 0.0;
  MatchCounts counts;
  std::vector<double> tpr;   // per class; NaN where the class has no references
  std::vector<double> efpr;  // per class, per hour
};

struct RocPoint {
  double efpr = 0.0;
  double etpr = 0.0;
};

struct PsdsReport {
  std::string scenario;
  double score = 0.0;
  std::vector<OperatingPoint> points;
  std::vector<RocPoint> curve;  // effective TPR staircase, sorted by eFPR
};

/// Scores pre-decoded detections: detections[j] holds every clip's events at
/// operating point j, labelled by `labels[j]`.
PsdsReport psds_from_detections(const std::vector<std::vector<data::EventList>>& detections,
                                const std::vector<double>& labels, const std::vector<data::EventList>& refs,
                                std::size_t n_classes, double dataset_seconds, const PsdsConfig& cfg);

struct ClipPosteriors {
  std::string clip_id;
  Tensor frame;  // [T', K]
};

/// Threshold sweep over frame posteriors, then intersection-based scoring.
PsdsReport compute_psds(const std::vector<ClipPosteriors>& predictions, const std::vector<data::EventList>& refs,
                        std::size_t n_classes, const MedianConfig& median, const PsdsConfig& cfg,
                        double dataset_seconds);

/// JSON text of a report; `class_names` labels the per-class arrays.
std::string report_json(const PsdsReport& r, const std::vector<std::string>& class_names);
void write_report_json(const std::filesystem::path& path, const PsdsReport& r,
                       const std::vector<std::string>& class_names);
/// "efpr,etpr" rows of the staircase.
void write_roc_csv(const std::filesystem::path& path, const PsdsReport& r);

}  // namespace tsed::metrics
