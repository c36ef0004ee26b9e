// SPDX-License-Identifier: Apache-2.0
#include "tsed/metrics/psds.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace tsed::metrics {

std::vector<double> PsdsConfig::linear_thresholds(std::size_t n) {
  if (n == 0) throw std::invalid_argument("psds: need at least one threshold");
  if (n == 1) return {0.5};
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = 0.01 + 0.98 * static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

PsdsConfig PsdsConfig::scenario1() {
  PsdsConfig c;
  c.name = "scenario1";
  c.rho_dtc = c.rho_gtc = 0.7;
  c.alpha_st = 1.0;
  c.alpha_ct = 0.0;
  return c;
}

PsdsConfig PsdsConfig::scenario2() {
  PsdsConfig c;
  c.name = "scenario2";
  c.rho_dtc = c.rho_gtc = 0.1;
  c.rho_cttc = 0.3;
  c.alpha_st = 1.0;
  c.alpha_ct = 0.5;
  return c;
}

void PsdsConfig::validate() const {
  auto in_unit = [](double r) { return r > 0.0 && r <= 1.0; };
  if (!in_unit(rho_dtc) || !in_unit(rho_gtc)) throw std::invalid_argument("psds: rho_dtc and rho_gtc must lie in (0, 1]");
  if (alpha_ct > 0.0 && !in_unit(rho_cttc)) throw std::invalid_argument("psds: rho_cttc must lie in (0, 1]");
  if (alpha_st < 0.0 || alpha_ct < 0.0) throw std::invalid_argument("psds: alphas must be non-negative");
  if (!(e_max > 0.0)) throw std::invalid_argument("psds: e_max must be positive");
  if (thresholds.empty()) throw std::invalid_argument("psds: no thresholds");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0)) throw std::invalid_argument("psds: thresholds must lie in (0, 1)");
    if (i && !(thresholds[i] > thresholds[i - 1])) throw std::invalid_argument("psds: thresholds must increase strictly");
  }
}

MatchCounts::MatchCounts(std::size_t k)
    : tp(k, 0), fp(k, 0), n_refs(k, 0), ct(k * k, 0), ref_seconds(k, 0.0) {}

MatchCounts& MatchCounts::operator+=(const MatchCounts& o) {
  if (o.n_classes() != n_classes()) throw std::invalid_argument("MatchCounts: class count mismatch");
  for (std::size_t c = 0; c < n_classes(); ++c) {
    tp[c] += o.tp[c];
    fp[c] += o.fp[c];
    n_refs[c] += o.n_refs[c];
    ref_seconds[c] += o.ref_seconds[c];
  }
  for (std::size_t i = 0; i < ct.size(); ++i) ct[i] += o.ct[i];
  return *this;
}

namespace {

double overlap(const data::Event& a, const data::Event& b) {
  return std::max(0.0, std::min(a.offset, b.offset) - std::max(a.onset, b.onset));
}

double covered(const data::Event& e, const std::vector<const data::Event*>& others) {
  double s = 0.0;
  for (const auto* o : others) s += overlap(e, *o);
  return s;
}

}  // namespace

MatchCounts match_dtc_gtc(const data::EventList& detections, const data::EventList& refs, std::size_t k,
                          double rho_dtc, double rho_gtc, double rho_cttc) {
  if (!detections.clip_id.empty() && !refs.clip_id.empty() && detections.clip_id != refs.clip_id) {
    throw std::invalid_argument("match_dtc_gtc: clip ids differ ('" + detections.clip_id + "' vs '" + refs.clip_id +
                                "')");
  }
  std::vector<std::vector<const data::Event*>> ref_by(k), det_ok(k);
  for (const auto& r : refs.events) {
    data::validate(r, k);
    ref_by[r.cls].push_back(&r);
  }
  MatchCounts m(k);
  for (std::size_t c = 0; c < k; ++c) {
    m.n_refs[c] = ref_by[c].size();
    for (const auto* r : ref_by[c]) m.ref_seconds[c] += r->offset - r->onset;
  }
  for (const auto& d : detections.events) {
    data::validate(d, k);
    const double len = d.offset - d.onset;
    if (covered(d, ref_by[d.cls]) >= rho_dtc * len) {
      det_ok[d.cls].push_back(&d);
      continue;
    }
    ++m.fp[d.cls];
    if (rho_cttc > 0.0) {
      for (std::size_t o = 0; o < k; ++o)
        if (o != d.cls && !ref_by[o].empty() && covered(d, ref_by[o]) >= rho_cttc * len) ++m.ct[d.cls * k + o];
    }
  }
  for (std::size_t c = 0; c < k; ++c)
    for (const auto* r : ref_by[c])
      if (covered(*r, det_ok[c]) >= rho_gtc * (r->offset - r->onset)) ++m.tp[c];
  return m;
}

namespace {

OperatingPoint summarize(double label, const MatchCounts& m, double hours, const PsdsConfig& cfg) {
  const std::size_t k = m.n_classes();
  OperatingPoint p;
  p.threshold = label;
  p.counts = m;
  p.tpr.assign(k, std::numeric_limits<double>::quiet_NaN());
  p.efpr.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    if (m.n_refs[c] > 0) p.tpr[c] = static_cast<double>(m.tp[c]) / static_cast<double>(m.n_refs[c]);
    double efpr = static_cast<double>(m.fp[c]) / hours;
    if (cfg.alpha_ct > 0.0) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t o = 0; o < k; ++o) {
        if (o == c || m.n_refs[o] == 0) continue;
        sum += static_cast<double>(m.cross(c, o)) / (m.ref_seconds[o] / 3600.0);
        ++n;
      }
      if (n) efpr += cfg.alpha_ct * sum / static_cast<double>(n);
    }
    p.efpr[c] = efpr;
  }
  return p;
}

// Per-class TPR as a function of eFPR: best TPR among points at or below x.
double class_tpr_at(const std::vector<OperatingPoint>& pts, std::size_t c, double x) {
  double best = 0.0;
  for (const auto& p : pts)
    if (p.efpr[c] <= x) best = std::max(best, p.tpr[c]);
  return best;
}

}  // namespace

PsdsReport psds_from_detections(const std::vector<std::vector<data::EventList>>& detections,
                                const std::vector<double>& labels, const std::vector<data::EventList>& refs,
                                std::size_t k, double dataset_seconds, const PsdsConfig& cfg) {
  cfg.validate();
  if (!(dataset_seconds > 0.0)) throw std::invalid_argument("psds: dataset duration must be positive");
  if (detections.size() != labels.size()) throw std::invalid_argument("psds: one label per operating point");
  if (detections.empty()) throw std::invalid_argument("psds: no operating points");
  std::map<std::string, const data::EventList*> ref_of;
  for (const auto& r : refs) {
    if (!ref_of.emplace(r.clip_id, &r).second) throw std::invalid_argument("psds: duplicate reference clip '" + r.clip_id + "'");
  }
  const double hours = dataset_seconds / 3600.0;
  const data::EventList none;

  PsdsReport rep;
  rep.scenario = cfg.name;
  for (std::size_t j = 0; j < detections.size(); ++j) {
    MatchCounts total(k);
    std::map<std::string, bool> seen;
    for (const auto& d : detections[j]) {
      if (seen.count(d.clip_id)) throw std::invalid_argument("psds: duplicate detection clip '" + d.clip_id + "'");
      seen[d.clip_id] = true;
      auto it = ref_of.find(d.clip_id);
      total += match_dtc_gtc(d, it == ref_of.end() ? none : *it->second, k, cfg.rho_dtc, cfg.rho_gtc,
                             cfg.alpha_ct > 0.0 ? cfg.rho_cttc : 0.0);
    }
    for (const auto& r : refs)
      if (!seen.count(r.clip_id)) total += match_dtc_gtc(data::EventList{r.clip_id, {}}, r, k, cfg.rho_dtc, cfg.rho_gtc);
    rep.points.push_back(summarize(labels[j], total, hours, cfg));
  }

  std::vector<std::size_t> scored;
  for (std::size_t c = 0; c < k; ++c)
    if (rep.points.front().counts.n_refs[c] > 0) scored.push_back(c);
  if (scored.empty()) throw std::domain_error("psds: the reference set has no events");

  std::vector<double> grid{0.0};
  for (const auto& p : rep.points)
    for (std::size_t c : scored)
      if (p.efpr[c] < cfg.e_max) grid.push_back(p.efpr[c]);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  double area = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t c : scored) mean += class_tpr_at(rep.points, c, grid[i]);
    mean /= static_cast<double>(scored.size());
    for (std::size_t c : scored) {
      const double d = class_tpr_at(rep.points, c, grid[i]) - mean;
      sq += d * d;
    }
    const double etpr = std::max(0.0, mean - cfg.alpha_st * std::sqrt(sq / static_cast<double>(scored.size())));
    rep.curve.push_back({grid[i], etpr});
    const double next = i + 1 < grid.size() ? grid[i + 1] : cfg.e_max;
    area += etpr * (next - grid[i]);
  }
  rep.score = area / cfg.e_max;
  return rep;
}

PsdsReport compute_psds(const std::vector<ClipPosteriors>& predictions, const std::vector<data::EventList>& refs,
                        std::size_t k, const MedianConfig& median, const PsdsConfig& cfg, double dataset_seconds) {
  cfg.validate();
  if (median.n_classes() != k) throw std::invalid_argument("psds: median config class count differs");
  const auto windows = adaptive_windows(median);
  std::vector<std::vector<data::EventList>> dets(cfg.thresholds.size());
  for (std::size_t j = 0; j < cfg.thresholds.size(); ++j) {
    dets[j].reserve(predictions.size());
    for (const auto& p : predictions) {
      if (p.frame.rank() != 2 || p.frame.dim(1) != k) {
        throw std::invalid_argument("psds: posteriors of '" + p.clip_id + "' are " + shape_str(p.frame.shape()));
      }
      dets[j].push_back(detect(p.frame, cfg.thresholds[j], windows, median.frame_hop_s, p.clip_id));
    }
  }
  return psds_from_detections(dets, cfg.thresholds, refs, k, dataset_seconds, cfg);
}

std::string report_json(const PsdsReport& r, const std::vector<std::string>& names) {
  using nlohmann::json;
  json j;
  j["scenario"] = r.scenario;
  j["psds"] = r.score;
  j["classes"] = names;
  json pts = json::array();
  for (const auto& p : r.points) {
    json tpr = json::array();
    for (double v : p.tpr) tpr.push_back(std::isnan(v) ? json(nullptr) : json(v));
    pts.push_back({{"threshold", p.threshold},
                   {"tp", p.counts.tp},
                   {"fp", p.counts.fp},
                   {"n_refs", p.counts.n_refs},
                   {"cross_triggers", p.counts.ct},
                   {"tpr", tpr},
                   {"efpr", p.efpr}});
  }
  j["operating_points"] = pts;
  json curve = json::array();
  for (const auto& c : r.curve) curve.push_back({{"efpr", c.efpr}, {"etpr", c.etpr}});
  j["roc"] = curve;
  return j.dump(2);
}

void write_report_json(const std::filesystem::path& path, const PsdsReport& r, const std::vector<std::string>& names) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << report_json(r, names) << '\n';
}

void write_roc_csv(const std::filesystem::path& path, const PsdsReport& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(10);
  os << "efpr,etpr\n";
  for (const auto& c : r.curve) os << c.efpr << ',' << c.etpr << '\n';
}

}  // namespace tsed::metrics
