// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tsed/numerics/ops.hpp"
#include "tsed/numerics/parameters.hpp"
#include "tsed/numerics/random.hpp"

namespace tsed::models {

using Arch = std::map<std::string, std::string>;

enum class Pooling { Attention, ExpSoftmax };

Pooling parse_pooling(const std::string& name);
const char* to_string(Pooling p);

/// Batched model output.
struct ModelOutput {
  Var frame;  // [N, T', K] probabilities
  Var clip;   // [N, K] probabilities
};

/// Frame and clip probabilities of a single clip.
struct Posteriors {
  Tensor frame;  // [T', K]
  Tensor clip;   // [K]
};

/// Per-mel standardization fitted on training features and stored with the
/// model so inference sees the same scaling.
struct FeatureScaler {
  Tensor mean;  // [M]
  Tensor std;   // [M]

  void fit(const std::vector<const Tensor*>& features, std::size_t n_mels);
  /// x [T, M] -> (x - mean) / std. Identity when unfitted.
  Tensor apply(const Tensor& x) const;
};

struct CrnnConfig {
  std::size_t n_mels = 128;
  std::size_t n_classes = 10;
  std::vector<std::size_t> filters{16, 32, 64, 128, 128, 128, 128};
  std::vector<std::pair<std::size_t, std::size_t>> pools{{2, 2}, {2, 2}, {2, 1}, {2, 1}, {2, 1}, {2, 1}, {2, 1}};
  std::size_t gru_hidden = 128;
  std::size_t gru_layers = 2;
  double dropout = 0.5;
  double leaky_slope = 0.01;

  // Frequency-dynamic convolution; basis_kernels == 0 selects plain conv.
  std::size_t basis_kernels = 0;
  double temperature = 31.0;
  std::size_t attention_reduction = 4;

  std::uint64_t init_seed = 1;

  static CrnnConfig fdy(std::size_t basis_kernels = 4);
  bool is_fdy() const { return basis_kernels > 0; }
  std::size_t time_ratio() const;
  void validate() const;
};

struct AtConfig {
  std::size_t n_mels = 64;
  std::size_t n_classes = 10;
  std::vector<std::size_t> channels{64, 128, 256, 512, 1024, 2048};
  std::size_t embedding = 2048;
  std::size_t gru_hidden = 1024;
  std::size_t gru_layers = 2;
  double dropout = 0.5;
  std::uint64_t init_seed = 1;

  /// Divides every width by `divisor`.
  static AtConfig scaled(std::size_t divisor);
  std::size_t time_ratio() const { return std::size_t{1} << channels.size(); }
  void validate() const;
};

/// Common interface of the sound-event models. Inputs are normalized
/// features [N, T, M]. Not copyable or movable: the parameter store holds
/// pointers into the model.
class Model {
 public:
  virtual ~Model() = default;
  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  virtual ModelOutput forward(const Var& x, bool training, Rng& rng, Pooling pooling = Pooling::Attention) = 0;
  virtual std::size_t n_mels() const = 0;
  virtual std::size_t n_classes() const = 0;
  virtual std::size_t time_ratio() const = 0;
  virtual Arch arch() const = 0;

  /// Output frames for an input of `n_frames` feature frames.
  std::size_t output_frames(std::size_t n_frames) const { return n_frames / time_ratio(); }

  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  FeatureScaler& scaler() { return scaler_; }
  const FeatureScaler& scaler() const { return scaler_; }

  /// Runs the model on one raw (unnormalized) feature matrix [T, M] in
  /// evaluation mode without recording a graph.
  Posteriors infer(const Tensor& features, Pooling pooling = Pooling::Attention);

 protected:
  void register_scaler();

  ParamStore store_;
  FeatureScaler scaler_;
};

class Crnn final : public Model {
 public:
  explicit Crnn(CrnnConfig cfg);

  ModelOutput forward(const Var& x, bool training, Rng& rng, Pooling pooling = Pooling::Attention) override;
  std::size_t n_mels() const override { return cfg_.n_mels; }
  std::size_t n_classes() const override { return cfg_.n_classes; }
  std::size_t time_ratio() const override { return cfg_.time_ratio(); }
  Arch arch() const override;
  const CrnnConfig& config() const { return cfg_; }

  /// Per-frequency basis weights [N, F, K_b] of block `i` for input
  /// x [N, C, F, T] to that block.
  Var basis_weights(std::size_t block, const Var& x) const;

  /// Replaces the learned attention of every FDY block by fixed basis
  /// weights [K_b] used at all frequencies; an undefined Var restores it.
  void force_basis_weights(const Var& w) { forced_weights_ = w; }

 private:
  struct Block {
    Var w, b, gamma, beta;
    ops::BatchNormStats stats;
    Var att_w1, att_b1, att_w2, att_b2;
  };

  Var conv_block(std::size_t i, const Var& x, bool training);

  CrnnConfig cfg_;
  std::vector<std::unique_ptr<Block>> blocks_;
  std::vector<std::pair<ops::GruWeights, ops::GruWeights>> gru_;
  Var frame_w_, frame_b_, att_w_, att_b_;
  Var forced_weights_;
};

class AtBackbone final : public Model {
 public:
  explicit AtBackbone(AtConfig cfg);

  ModelOutput forward(const Var& x, bool training, Rng& rng, Pooling pooling = Pooling::Attention) override;
  std::size_t n_mels() const override { return cfg_.n_mels; }
  std::size_t n_classes() const override { return cfg_.n_classes; }
  std::size_t time_ratio() const override { return cfg_.time_ratio(); }
  Arch arch() const override;
  const AtConfig& config() const { return cfg_; }

 private:
  struct Conv {
    Var w, gamma, beta;
    ops::BatchNormStats stats;
  };

  AtConfig cfg_;
  std::vector<std::unique_ptr<Conv>> convs_;
  Var emb_w_, emb_b_;
  std::vector<std::pair<ops::GruWeights, ops::GruWeights>> gru_;
  Var frame_w_, frame_b_, att_w_, att_b_;
};

/// Closed-form trainable-parameter counts.
std::size_t crnn_param_count(const CrnnConfig& cfg);
std::size_t at_param_count(const AtConfig& cfg);

Arch to_arch(const CrnnConfig& cfg);
Arch to_arch(const AtConfig& cfg);
CrnnConfig crnn_config_from(const Arch& arch);
AtConfig at_config_from(const Arch& arch);

/// Builds a model from an architecture description (key "model" is
/// "crnn", "fdy-crnn" or "at").
std::unique_ptr<Model> make_model(const Arch& arch);

/// Writes the parameter/buffer checkpoint plus its `.arch` sidecar;
/// `extra` keys (e.g. class names) are added to the sidecar.
void save_model(const std::filesystem::path& path, const Model& model, const Arch& extra = {});

/// Rebuilds the model described by the sidecar and loads its weights.
std::unique_ptr<Model> load_model(const std::filesystem::path& path);

/// Copies every entry of a checkpoint whose name and shape match a model
/// parameter or buffer; returns the number copied. Hook for importing
/// externally trained weights converted to the checkpoint format.
std::size_t import_weights(Model& model, const std::filesystem::path& path);

}  // namespace tsed::models
