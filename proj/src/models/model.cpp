// SPDX-License-Identifier: Apache-2.0
#include "tsed/models/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tsed/numerics/checkpoint.hpp"

namespace tsed::models {

Pooling parse_pooling(const std::string& name) {
  if (name == "attention") return Pooling::Attention;
  if (name == "exp-softmax") return Pooling::ExpSoftmax;
  throw std::invalid_argument("unknown pooling '" + name + "' (expected attention or exp-softmax)");
}

const char* to_string(Pooling p) { return p == Pooling::Attention ? "attention" : "exp-softmax"; }

void FeatureScaler::fit(const std::vector<const Tensor*>& features, std::size_t n_mels) {
  std::vector<double> sum(n_mels, 0.0), sq(n_mels, 0.0);
  double count = 0.0;
  for (const Tensor* f : features) {
    if (f->rank() != 2 || f->dim(1) != n_mels) {
      throw std::invalid_argument("scaler: expected [T, " + std::to_string(n_mels) + "], got " +
                                  shape_str(f->shape()));
    }
    for (std::size_t t = 0; t < f->dim(0); ++t)
      for (std::size_t m = 0; m < n_mels; ++m) {
        double v = (*f)[t * n_mels + m];
        sum[m] += v;
        sq[m] += v * v;
      }
    count += static_cast<double>(f->dim(0));
  }
  if (count == 0.0) throw std::invalid_argument("scaler: no frames to fit");
  mean = Tensor({n_mels});
  std = Tensor({n_mels});
  for (std::size_t m = 0; m < n_mels; ++m) {
    double mu = sum[m] / count;
    mean[m] = mu;
    std[m] = std::sqrt(std::max(sq[m] / count - mu * mu, 0.0)) + 1e-8;
  }
}

Tensor FeatureScaler::apply(const Tensor& x) const {
  if (mean.empty()) return x;
  const std::size_t m = mean.size();
  if (x.rank() != 2 || x.dim(1) != m) {
    throw std::invalid_argument("scaler: expected [T, " + std::to_string(m) + "], got " + shape_str(x.shape()));
  }
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean[i % m]) / std[i % m];
  return y;
}

void Model::register_scaler() {
  scaler_.mean = Tensor({n_mels()}, 0.0);
  scaler_.std = Tensor({n_mels()}, 1.0);
  store_.add_buffer("scaler.mean", &scaler_.mean);
  store_.add_buffer("scaler.std", &scaler_.std);
}

Posteriors Model::infer(const Tensor& features, Pooling pooling) {
  NoGradGuard guard;
  Tensor x = scaler_.apply(features);
  const Shape s = x.shape();
  Rng unused(0);
  ModelOutput out = forward(Var(x.reshaped({1, s[0], s[1]})), false, unused, pooling);
  const Shape& fs = out.frame.shape();
  return {out.frame.value().reshaped({fs[1], fs[2]}), out.clip.value().reshaped({fs[2]})};
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

const std::string& get(const Arch& a, const std::string& key) {
  auto it = a.find(key);
  if (it == a.end()) throw std::runtime_error("architecture is missing key '" + key + "'");
  return it->second;
}

std::size_t get_size(const Arch& a, const std::string& key) {
  const std::string& v = get(a, key);
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') {
    throw std::runtime_error("architecture key '" + key + "' is not a count: '" + v + "'");
  }
  return static_cast<std::size_t>(n);
}

double get_real(const Arch& a, const std::string& key) {
  const std::string& v = get(a, key);
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw std::runtime_error("architecture key '" + key + "' is not a number: '" + v + "'");
  return d;
}

std::vector<std::size_t> get_list(const Arch& a, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream ss(get(a, key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    Arch one{{key, item}};
    out.push_back(get_size(one, key));
  }
  return out;
}

}  // namespace

Arch to_arch(const CrnnConfig& c) {
  std::string pools;
  for (std::size_t i = 0; i < c.pools.size(); ++i) {
    pools += (i ? "," : "") + std::to_string(c.pools[i].first) + "x" + std::to_string(c.pools[i].second);
  }
  return {{"model", c.is_fdy() ? "fdy-crnn" : "crnn"},
          {"n_mels", std::to_string(c.n_mels)},
          {"n_classes", std::to_string(c.n_classes)},
          {"filters", join(c.filters)},
          {"pools", pools},
          {"gru_hidden", std::to_string(c.gru_hidden)},
          {"gru_layers", std::to_string(c.gru_layers)},
          {"dropout", fmt(c.dropout)},
          {"leaky_slope", fmt(c.leaky_slope)},
          {"basis_kernels", std::to_string(c.basis_kernels)},
          {"temperature", fmt(c.temperature)},
          {"attention_reduction", std::to_string(c.attention_reduction)}};
}

Arch to_arch(const AtConfig& c) {
  return {{"model", "at"},
          {"n_mels", std::to_string(c.n_mels)},
          {"n_classes", std::to_string(c.n_classes)},
          {"channels", join(c.channels)},
          {"embedding", std::to_string(c.embedding)},
          {"gru_hidden", std::to_string(c.gru_hidden)},
          {"gru_layers", std::to_string(c.gru_layers)},
          {"dropout", fmt(c.dropout)}};
}

CrnnConfig crnn_config_from(const Arch& a) {
  CrnnConfig c;
  c.n_mels = get_size(a, "n_mels");
  c.n_classes = get_size(a, "n_classes");
  c.filters = get_list(a, "filters");
  c.pools.clear();
  std::stringstream ss(get(a, "pools"));
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto x = item.find('x');
    if (x == std::string::npos) throw std::runtime_error("architecture pool '" + item + "' is not FxT");
    c.pools.emplace_back(get_size({{"pool", item.substr(0, x)}}, "pool"), get_size({{"pool", item.substr(x + 1)}}, "pool"));
  }
  c.gru_hidden = get_size(a, "gru_hidden");
  c.gru_layers = get_size(a, "gru_layers");
  c.dropout = get_real(a, "dropout");
  c.leaky_slope = get_real(a, "leaky_slope");
  c.basis_kernels = get_size(a, "basis_kernels");
  c.temperature = get_real(a, "temperature");
  c.attention_reduction = get_size(a, "attention_reduction");
  return c;
}

AtConfig at_config_from(const Arch& a) {
  AtConfig c;
  c.n_mels = get_size(a, "n_mels");
  c.n_classes = get_size(a, "n_classes");
  c.channels = get_list(a, "channels");
  c.embedding = get_size(a, "embedding");
  c.gru_hidden = get_size(a, "gru_hidden");
  c.gru_layers = get_size(a, "gru_layers");
  c.dropout = get_real(a, "dropout");
  return c;
}

std::unique_ptr<Model> make_model(const Arch& arch) {
  const std::string& kind = get(arch, "model");
  if (kind == "crnn" || kind == "fdy-crnn") {
    CrnnConfig c = crnn_config_from(arch);
    if ((kind == "fdy-crnn") != c.is_fdy()) throw std::runtime_error("architecture: model kind disagrees with basis_kernels");
    return std::make_unique<Crnn>(c);
  }
  if (kind == "at") return std::make_unique<AtBackbone>(at_config_from(arch));
  throw std::runtime_error("unknown model kind '" + kind + "'");
}

void save_model(const std::filesystem::path& path, const Model& model, const Arch& extra) {
  checkpoint::save(path, model.store().state());
  Arch arch = model.arch();
  for (const auto& [k, v] : extra) arch.emplace(k, v);
  checkpoint::save_sidecar(path, arch);
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path) {
  Arch arch = checkpoint::load_sidecar(path);
  auto model = make_model(arch);
  try {
    model->store().load_state(checkpoint::load(path));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("checkpoint " + path.string() + " does not match its architecture: " + e.what());
  }
  return model;
}

std::size_t import_weights(Model& model, const std::filesystem::path& path) {
  auto incoming = checkpoint::load(path);
  auto current = model.store().state();
  std::vector<NamedTensor> merged;
  std::size_t copied = 0;
  for (auto& cur : current) {
    auto it = std::find_if(incoming.begin(), incoming.end(), [&](const NamedTensor& e) { return e.name == cur.name; });
    if (it != incoming.end() && it->value.shape() == cur.value.shape()) {
      merged.push_back(*it);
      ++copied;
    } else {
      merged.push_back(cur);
    }
  }
  model.store().load_state(merged);
  return copied;
}

}  // namespace tsed::models
