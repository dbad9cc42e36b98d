#pragma once

// The full network (lossy coder + lossless branch), its configuration and
// checkpoint persistence.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "hpdc/bytes.hpp"
#include "hpdc/entropy/stream.hpp"
#include "hpdc/lossy.hpp"
#include "hpdc/nn/adam.hpp"
#include "hpdc/nn/archive.hpp"
#include "hpdc/residual.hpp"

namespace hpdc {

struct ModelConfig {
  int lossy_channels = 32;
  int lossless_channels = 16;
  int K = 3;
  Family mixture = Family::laplace;
  Fusion fusion = Fusion::gated;
  std::uint32_t d = 512;

  void validate() const {
    if (lossy_channels < 1 || lossless_channels < 1) throw ArgumentError("channel counts must be >= 1");
    if (K < 1 || K > kMaxMixture) throw ArgumentError("K must be in [1, 16]");
    if (mixture == Family::gaussian) throw ArgumentError("residual mixture must be laplace or logistic");
    if (d < 2) throw ArgumentError("d must be >= 2");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    nn::Rng rng(seed);
    lossy_ = LossyNet<T>(params_, cfg.lossy_channels, rng);
    lossless_ = LosslessNet<T>(params_, cfg.lossless_channels, cfg.K, cfg.fusion, rng);
  }
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const LossyNet<T>& lossy() const { return lossy_; }
  const LosslessNet<T>& lossless() const { return lossless_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

 private:
  ModelConfig cfg_;
  nn::ParamSet<T> params_;
  LossyNet<T> lossy_;
  LosslessNet<T> lossless_;
};

/// Optimizer state carried across checkpoints.
struct TrainState {
  std::uint64_t step = 0;
  int epoch = 0;  // next epoch to run; drives the learning-rate schedule
  double lr = 0;
  std::map<std::string, nn::AdamMoments<float>> moments;
};

inline void put_config(nn::Archive& a, const ModelConfig& c) {
  a.scalars["config.lossy_channels"] = c.lossy_channels;
  a.scalars["config.lossless_channels"] = c.lossless_channels;
  a.scalars["config.K"] = c.K;
  a.scalars["config.mixture"] = static_cast<double>(c.mixture);
  a.scalars["config.fusion"] = static_cast<double>(c.fusion);
  a.scalars["config.d"] = c.d;
}

template <class T>
nn::Archive model_archive(const Model<T>& m) {
  nn::Archive a;
  put_config(a, m.config());
  for (const auto& e : m.params().entries()) a.tensors.emplace("param." + e.name, e.var.value().template cast<float>());
  return a;
}

/// SHA-256 of the configuration and parameters (optimizer state excluded).
template <class T>
entropy::ModelHash model_hash(const Model<T>& m) {
  const auto bytes = nn::serialize(model_archive(m));
  entropy::ModelHash h{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), h.data(), &len, EVP_sha256(), nullptr) != 1 || len != h.size())
    throw Error("SHA-256 digest failed");
  return h;
}

template <class T>
std::vector<std::uint8_t> save_checkpoint_bytes(const Model<T>& m, const TrainState* state = nullptr) {
  nn::Archive a = model_archive(m);
  if (state) {
    a.scalars["train.step"] = static_cast<double>(state->step);
    a.scalars["train.epoch"] = state->epoch;
    a.scalars["train.lr"] = state->lr;
    for (const auto& [name, mom] : state->moments) {
      a.tensors.emplace("adam.m." + name, mom.m);
      a.tensors.emplace("adam.v." + name, mom.v);
      a.scalars["adam.step." + name] = static_cast<double>(mom.step);
    }
  }
  return nn::serialize(a);
}

template <class T>
void save_checkpoint(const std::string& path, const Model<T>& m, const TrainState* state = nullptr) {
  write_file(path, save_checkpoint_bytes(m, state));
}

struct LoadedCheckpoint {
  std::unique_ptr<Model<float>> model;
  std::optional<TrainState> state;
};

inline ModelConfig read_config(const nn::Archive& a) {
  auto get = [&](const char* key) {
    auto it = a.scalars.find(key);
    if (it == a.scalars.end()) throw FormatError(std::string("checkpoint lacks '") + key + "'");
    return it->second;
  };
  ModelConfig c;
  c.lossy_channels = static_cast<int>(get("config.lossy_channels"));
  c.lossless_channels = static_cast<int>(get("config.lossless_channels"));
  c.K = static_cast<int>(get("config.K"));
  const int mixture = static_cast<int>(get("config.mixture"));
  const int fusion = static_cast<int>(get("config.fusion"));
  if (mixture < 0 || mixture > 2 || fusion < 0 || fusion > 1) throw FormatError("checkpoint has invalid switches");
  c.mixture = static_cast<Family>(mixture);
  c.fusion = static_cast<Fusion>(fusion);
  c.d = static_cast<std::uint32_t>(get("config.d"));
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }
  return c;
}

inline LoadedCheckpoint load_checkpoint_bytes(std::span<const std::uint8_t> bytes) {
  const nn::Archive a = nn::deserialize(bytes);
  LoadedCheckpoint out;
  out.model = std::make_unique<Model<float>>(read_config(a));
  for (auto& e : out.model->params().entries()) {
    auto it = a.tensors.find("param." + e.name);
    if (it == a.tensors.end()) throw FormatError("checkpoint lacks parameter '" + e.name + "'");
    if (!(it->second.shape() == e.var.shape()))
      throw FormatError("parameter '" + e.name + "' has shape " + it->second.shape().str() + ", expected " +
                        e.var.shape().str());
    e.var.mutable_value() = it->second;
  }
  if (a.scalars.count("train.step")) {
    TrainState st;
    st.step = static_cast<std::uint64_t>(a.scalars.at("train.step"));
    if (a.scalars.count("train.epoch")) st.epoch = static_cast<int>(a.scalars.at("train.epoch"));
    st.lr = a.scalars.at("train.lr");
    for (const auto& e : out.model->params().entries()) {
      auto m = a.tensors.find("adam.m." + e.name);
      auto v = a.tensors.find("adam.v." + e.name);
      auto s = a.scalars.find("adam.step." + e.name);
      if (m == a.tensors.end() || v == a.tensors.end() || s == a.scalars.end()) continue;
      st.moments[e.name] = nn::AdamMoments<float>{m->second, v->second, static_cast<std::int64_t>(s->second)};
    }
    out.state = std::move(st);
  }
  return out;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  try {
    return load_checkpoint_bytes(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError("'" + path + "': " + e.what());
  }
}

}  // namespace hpdc
