// SPDX-License-Identifier: Apache-2.0
#include "tsed/pipeline/run_config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace tsed::pipeline {

namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

template <typename T>
T to_number(const std::string& v) {
  T out{};
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

std::string str(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}
std::string str(std::size_t v) { return std::to_string(v); }
std::string str(std::uint64_t v, int) { return std::to_string(v); }
std::string str(long v) { return std::to_string(v); }
std::string str(bool v) { return v ? "true" : "false"; }

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

struct Option {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define TSED_PATH(name, member)                                                   \
  Option {                                                                        \
    name, [](RunConfig& c, const std::string& v) { c.member = v; },               \
        [](const RunConfig& c) { return c.member.string(); }                      \
  }
#define TSED_NUM(name, member, type)                                              \
  Option {                                                                        \
    name, [](RunConfig& c, const std::string& v) { c.member = to_number<type>(v); }, \
        [](const RunConfig& c) { return str(c.member); }                          \
  }
#define TSED_BOOL(name, member)                                                   \
  Option {                                                                        \
    name, [](RunConfig& c, const std::string& v) { c.member = to_bool(v); },      \
        [](const RunConfig& c) { return str(c.member); }                          \
  }

std::vector<Option> stage_options(const std::string& p, StageRecipe RunConfig::*stage) {
  auto S = [stage](RunConfig& c) -> StageRecipe& { return c.*stage; };
  auto C = [stage](const RunConfig& c) -> const StageRecipe& { return c.*stage; };
  auto num = [&](const std::string& k, auto member) {
    using T = std::remove_reference_t<decltype(S(std::declval<RunConfig&>()).*member)>;
    return Option{p + k, [=](RunConfig& c, const std::string& v) { S(c).*member = to_number<T>(v); },
                  [=](const RunConfig& c) { return str(C(c).*member); }};
  };
  auto tnum = [&](const std::string& k, auto member) {
    using T = std::remove_reference_t<decltype(S(std::declval<RunConfig&>()).train.*member)>;
    return Option{p + k, [=](RunConfig& c, const std::string& v) { S(c).train.*member = to_number<T>(v); },
                  [=](const RunConfig& c) { return str(C(c).train.*member); }};
  };
  auto snum = [&](const std::string& k, auto member) {
    using T = std::remove_reference_t<decltype(S(std::declval<RunConfig&>()).train.ssl.*member)>;
    return Option{p + k, [=](RunConfig& c, const std::string& v) { S(c).train.ssl.*member = to_number<T>(v); },
                  [=](const RunConfig& c) { return str(C(c).train.ssl.*member); }};
  };
  auto anum = [&](const std::string& k, auto member) {
    using T = std::remove_reference_t<decltype(S(std::declval<RunConfig&>()).train.augment.*member)>;
    return Option{p + k, [=](RunConfig& c, const std::string& v) { S(c).train.augment.*member = to_number<T>(v); },
                  [=](const RunConfig& c) { return str(C(c).train.augment.*member); }};
  };
  auto abool = [&](const std::string& k, bool augment::AugmentConfig::*member) {
    return Option{p + k, [=](RunConfig& c, const std::string& v) { S(c).train.augment.*member = to_bool(v); },
                  [=](const RunConfig& c) { return str(C(c).train.augment.*member); }};
  };
  auto range = [&](const std::string& k, auto member) {
    return Option{p + k,
                  [=](RunConfig& c, const std::string& v) {
                    auto parts = split_list(v);
                    if (parts.size() != 2) throw std::invalid_argument("expected 'lo,hi', got '" + v + "'");
                    using T = typename std::remove_reference_t<decltype(S(c).train.augment.*member)>::first_type;
                    S(c).train.augment.*member = {to_number<T>(parts[0]), to_number<T>(parts[1])};
                  },
                  [=](const RunConfig& c) {
                    const auto& r = C(c).train.augment.*member;
                    return str(r.first) + "," + str(r.second);
                  }};
  };
  auto pooling = [&](const std::string& k, models::Pooling training::TrainConfig::*member) {
    return Option{p + k, [=](RunConfig& c, const std::string& v) { S(c).train.*member = models::parse_pooling(v); },
                  [=](const RunConfig& c) { return std::string(models::to_string(C(c).train.*member)); }};
  };
  return {
      Option{p + "model", [=](RunConfig& c, const std::string& v) { S(c).model = v; },
             [=](const RunConfig& c) { return C(c).model; }},
      num("n_mels", &StageRecipe::n_mels),
      num("width_divisor", &StageRecipe::width_divisor),
      num("gru_hidden", &StageRecipe::gru_hidden),
      num("basis_kernels", &StageRecipe::basis_kernels),
      num("dropout", &StageRecipe::dropout),
      tnum("epochs", &training::TrainConfig::epochs),
      tnum("batch_size", &training::TrainConfig::batch_size),
      tnum("learning_rate", &training::TrainConfig::learning_rate),
      tnum("max_batches_per_epoch", &training::TrainConfig::max_batches_per_epoch),
      snum("ema_decay", &training::SslConfig::ema_decay),
      snum("consistency_weight", &training::SslConfig::consistency_weight_max),
      snum("warmup_epochs", &training::SslConfig::warmup_epochs),
      Option{p + "ict", [=](RunConfig& c, const std::string& v) { S(c).train.ssl.ict_enabled = to_bool(v); },
             [=](const RunConfig& c) { return str(C(c).train.ssl.ict_enabled); }},
      snum("ict_alpha", &training::SslConfig::ict_alpha),
      Option{p + "afl_gamma", [=](RunConfig& c, const std::string& v) { S(c).train.loss.gamma = to_number<double>(v); },
             [=](const RunConfig& c) { return str(C(c).train.loss.gamma); }},
      Option{p + "afl_zeta", [=](RunConfig& c, const std::string& v) { S(c).train.loss.zeta = to_number<double>(v); },
             [=](const RunConfig& c) { return str(C(c).train.loss.zeta); }},
      Option{p + "augment", [=](RunConfig& c, const std::string& v) { S(c).train.augment_enabled = to_bool(v); },
             [=](const RunConfig& c) { return str(C(c).train.augment_enabled); }},
      abool("augment.time_mask", &augment::AugmentConfig::time_mask),
      abool("augment.frame_shift", &augment::AugmentConfig::frame_shift),
      abool("augment.mixup", &augment::AugmentConfig::mixup),
      abool("augment.noise", &augment::AugmentConfig::noise),
      abool("augment.filter_aug", &augment::AugmentConfig::filter_aug),
      anum("augment.time_mask_max_frames", &augment::AugmentConfig::time_mask_max_frames),
      anum("augment.frame_shift_max", &augment::AugmentConfig::frame_shift_max),
      anum("augment.mixup_alpha", &augment::AugmentConfig::mixup_alpha),
      anum("augment.noise_sigma", &augment::AugmentConfig::noise_sigma),
      range("augment.filter_aug_bands", &augment::AugmentConfig::filter_aug_bands),
      range("augment.filter_aug_db", &augment::AugmentConfig::filter_aug_db),
      anum("augment.apply_prob", &augment::AugmentConfig::apply_prob),
      pooling("train_pooling", &training::TrainConfig::train_pooling),
      pooling("eval_pooling", &training::TrainConfig::eval_pooling),
  };
}

const std::vector<Option>& options() {
  static const std::vector<Option> all = [] {
    std::vector<Option> o{
        TSED_PATH("data_dir", data_dir),
        TSED_PATH("audio_root", audio_root),
        TSED_PATH("strong_manifest", strong_manifest),
        TSED_PATH("weak_manifest", weak_manifest),
        TSED_PATH("unlabeled_manifest", unlabeled_manifest),
        TSED_PATH("validation_manifest", validation_manifest),
        TSED_PATH("output_dir", output_dir),
        Option{"feature_cache",
               [](RunConfig& c, const std::string& v) {
                 c.cache_features = v != "none";
                 c.feature_cache = c.cache_features ? fs::path(v) : fs::path();
               },
               [](const RunConfig& c) { return c.cache_features ? c.feature_cache.string() : std::string("none"); }},
        Option{"classes", [](RunConfig& c, const std::string& v) { c.classes = split_list(v); },
               [](const RunConfig& c) { return join(c.classes); }},
        Option{"seed", [](RunConfig& c, const std::string& v) { c.seed = to_number<std::uint64_t>(v); },
               [](const RunConfig& c) { return str(c.seed, 0); }},
        TSED_BOOL("deterministic", deterministic),
        TSED_NUM("synth.n_clips", synth.n_clips, std::size_t),
        TSED_NUM("synth.n_classes", synth.n_classes, std::size_t),
        TSED_NUM("synth.strong_fraction", synth.strong_fraction, double),
        TSED_NUM("synth.weak_fraction", synth.weak_fraction, double),
        TSED_NUM("synth.unlabeled_fraction", synth.unlabeled_fraction, double),
        TSED_NUM("synth.min_events", synth.min_events, std::size_t),
        TSED_NUM("synth.max_events", synth.max_events, std::size_t),
        TSED_NUM("synth.min_duration", synth.min_duration, double),
        TSED_NUM("synth.max_duration", synth.max_duration, double),
        TSED_NUM("synth.background_level", synth.background_level, double),
        TSED_NUM("synth.min_event_level", synth.min_event_level, double),
        TSED_NUM("synth.max_event_level", synth.max_event_level, double),
        TSED_BOOL("stage1.frame_loss", stage1.train.stage1_frame_loss),
        TSED_BOOL("stage2.pseudo", stage2_pseudo),
        TSED_NUM("pseudo.threshold", pseudo.threshold, double),
        TSED_BOOL("pseudo.keep_empty", pseudo.keep_empty),
        Option{"pseudo.pooling", [](RunConfig& c, const std::string& v) { c.pseudo.pooling = models::parse_pooling(v); },
               [](const RunConfig& c) { return std::string(models::to_string(c.pseudo.pooling)); }},
        TSED_PATH("eval.manifest", eval.manifest),
        Option{"eval.model", [](RunConfig& c, const std::string& v) { c.eval.model = v; },
               [](const RunConfig& c) { return c.eval.model; }},
        Option{"eval.median",
               [](RunConfig& c, const std::string& v) {
                 if (v != "adaptive" && v != "fixed")
                   throw std::invalid_argument("expected adaptive or fixed, got '" + v + "'");
                 c.eval.adaptive_median = v == "adaptive";
               },
               [](const RunConfig& c) { return std::string(c.eval.adaptive_median ? "adaptive" : "fixed"); }},
        TSED_NUM("eval.median_beta", eval.median_beta, double),
        TSED_NUM("eval.median_window", eval.median_window, std::size_t),
        TSED_NUM("eval.event_threshold", eval.event_threshold, double),
        TSED_NUM("eval.n_thresholds", eval.n_thresholds, std::size_t),
    };
    for (auto& s : stage_options("stage1.", &RunConfig::stage1)) o.push_back(std::move(s));
    for (auto& s : stage_options("stage2.", &RunConfig::stage2)) o.push_back(std::move(s));
    return o;
  }();
  return all;
}

#undef TSED_PATH
#undef TSED_NUM
#undef TSED_BOOL

const Option& find_option(const std::string& key) {
  for (const auto& o : options())
    if (o.key == key) return o;
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void apply_line(RunConfig& cfg, const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("expected key = value");
  set_option(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
}

// Already carries its file and line.
struct LocatedError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

void load_file(RunConfig& cfg, const fs::path& path, std::vector<fs::path>& stack) {
  const fs::path canonical = fs::weakly_canonical(path);
  if (std::find(stack.begin(), stack.end(), canonical) != stack.end())
    throw std::invalid_argument("config include cycle at " + path.string());
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config " + path.string());
  stack.push_back(canonical);
  std::string raw;
  for (std::size_t n = 1; std::getline(is, raw); ++n) {
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    try {
      const auto eq = line.find('=');
      if (eq != std::string::npos && trim(line.substr(0, eq)) == "include") {
        load_file(cfg, path.parent_path() / trim(line.substr(eq + 1)), stack);
        continue;
      }
      apply_line(cfg, line);
    } catch (const LocatedError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw LocatedError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  stack.pop_back();
}

}  // namespace

RunConfig::RunConfig() {
  stage1.model = "at";
  stage1.n_mels = 64;
  stage1.width_divisor = 8;
  stage1.train.augment = augment::AugmentConfig::stage1();
  stage1.train.eval_pooling = models::Pooling::ExpSoftmax;

  stage2.model = "fdy";
  stage2.n_mels = 128;
  stage2.train.augment = augment::AugmentConfig::stage2();
  stage2.train.loss = {0.625, 1.0};
}

void set_option(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_option(key).set(cfg, value);
}

data::Vocabulary RunConfig::vocabulary() const {
  if (classes.empty()) return data::synth_vocabulary(synth.n_classes);
  if (classes.size() == 1 && classes[0] == "desed") return data::Vocabulary::desed();
  return data::Vocabulary(classes);
}

void RunConfig::finalize() {
  if (const char* env = std::getenv("TSED_OUTPUT_DIR"); env && *env) output_dir = env;
  if (audio_root.empty()) audio_root = data_dir / data::CorpusLayout::kAudioDir;
  if (strong_manifest.empty()) strong_manifest = data_dir / data::CorpusLayout::kStrong;
  if (weak_manifest.empty()) weak_manifest = data_dir / data::CorpusLayout::kWeak;
  if (unlabeled_manifest.empty()) unlabeled_manifest = data_dir / data::CorpusLayout::kUnlabeled;
  if (validation_manifest.empty()) validation_manifest = data_dir / data::CorpusLayout::kValidation;
  if (eval.manifest.empty()) eval.manifest = validation_manifest;
  if (cache_features && feature_cache.empty()) feature_cache = output_dir / "features";

  synth.seed = seed;
  synth.validate();
  for (StageRecipe* s : {&stage1, &stage2}) {
    if (s->model != "at" && s->model != "crnn" && s->model != "fdy")
      throw std::invalid_argument("unknown model '" + s->model + "' (expected at, crnn or fdy)");
    s->train.seed = seed;
    s->train.validate();
    (void)build_model(*s, vocabulary().size(), seed);  // validates the architecture
  }
  if (!(pseudo.threshold > 0.0 && pseudo.threshold < 1.0))
    throw std::invalid_argument("pseudo.threshold must lie in (0, 1)");
  if (eval.model != "stage1" && eval.model != "stage2")
    throw std::invalid_argument("eval.model must be stage1 or stage2");
  if (!(eval.median_beta > 0.0)) throw std::invalid_argument("eval.median_beta must be positive");
  if (eval.median_window == 0) throw std::invalid_argument("eval.median_window must be positive");
  if (eval.n_thresholds < 2) throw std::invalid_argument("eval.n_thresholds must be at least 2");
}

RunConfig make_run_config(const std::vector<std::string>& overrides) {
  RunConfig cfg;
  for (const auto& o : overrides) {
    try {
      apply_line(cfg, o);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("override '" + o + "': " + e.what());
    }
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  std::vector<fs::path> stack;
  load_file(cfg, path, stack);
  for (const auto& o : overrides) {
    try {
      apply_line(cfg, o);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("override '" + o + "': " + e.what());
    }
  }
  cfg.finalize();
  return cfg;
}

std::string dump_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& o : options()) out += o.key + " = " + o.get(cfg) + "\n";
  return out;
}

std::unique_ptr<models::Model> build_model(const StageRecipe& r, std::size_t n_classes, std::uint64_t seed) {
  if (r.width_divisor == 0) throw std::invalid_argument("width_divisor must be positive");
  if (r.model == "at") {
    models::AtConfig c = models::AtConfig::scaled(r.width_divisor);
    c.n_mels = r.n_mels;
    c.n_classes = n_classes;
    c.dropout = r.dropout;
    c.init_seed = seed;
    if (r.gru_hidden) c.gru_hidden = r.gru_hidden;
    return std::make_unique<models::AtBackbone>(c);
  }
  models::CrnnConfig c = r.model == "fdy" ? models::CrnnConfig::fdy(r.basis_kernels) : models::CrnnConfig{};
  if (r.model != "fdy" && r.model != "crnn") throw std::invalid_argument("unknown model '" + r.model + "'");
  for (auto& f : c.filters) f = std::max<std::size_t>(f / r.width_divisor, 1);
  c.gru_hidden = r.gru_hidden ? r.gru_hidden : std::max<std::size_t>(c.gru_hidden / r.width_divisor, 1);
  c.n_mels = r.n_mels;
  c.n_classes = n_classes;
  c.dropout = r.dropout;
  c.init_seed = seed;
  return std::make_unique<models::Crnn>(c);
}

}  // namespace tsed::pipeline
