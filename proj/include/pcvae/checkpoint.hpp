#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "pcvae/model.hpp"

namespace pcvae {

inline constexpr const char* kCheckpointMagic = "pcvae-checkpoint-v1";

/// Self-contained model document: architecture, parameters, data scaling
/// and run provenance (config hash + seed).
inline nlohmann::json checkpoint_json(const Model& model,
                                      const std::string& config_hash,
                                      std::uint64_t seed) {
  nlohmann::json j;
  j["magic"] = kCheckpointMagic;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["kind"] = to_string(model.kind);
  j["encoder"]["data_dim"] = model.enc.data_dim;
  j["encoder"]["latent_dim"] = model.enc.latent_dim;
  j["encoder"]["hidden"] = model.enc.hidden;
  j["encoder"]["activation"] = to_string(model.enc.act);
  j["encoder"]["embed_dim"] = model.enc.embed_dim;
  j["encoder"]["h_width"] = model.enc.h_width;
  j["encoder"]["g_hidden"] = model.enc.g_hidden;
  j["decoder"]["hidden"] = model.dec.hidden;
  j["flow"]["layers"] = model.flow.layers;
  j["flow"]["bins"] = model.flow.bins;
  j["flow"]["cond_hidden"] = model.flow.cond_hidden;
  j["flow"]["squash"] = model.flow.squash;
  j["scale"]["min"] = model.scale.col_min;
  j["scale"]["max"] = model.scale.col_max;
  j["scale"]["constant"] = model.scale.constant;
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t i = 0; i < model.params.count(); ++i) {
    const Tensor& t = model.params.value(i);
    params[model.params.name(i)] = {{"shape", t.shape}, {"values", t.v}};
  }
  j["params"] = params;
  return j;
}

inline void save_checkpoint(const Model& model, const std::string& path,
                            const std::string& config_hash,
                            std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << checkpoint_json(model, config_hash, seed).dump(1) << '\n';
  if (!out) throw DataError("checkpoint write failed: " + path);
}

struct LoadedCheckpoint {
  Model model;
  std::string config_hash;
  std::uint64_t seed = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.contains("magic") || j.at("magic") != kCheckpointMagic)
    throw ParseError(path + ": not a model checkpoint (bad magic)");
  LoadedCheckpoint out;
  try {
    out.config_hash = j.at("config_hash").get<std::string>();
    out.seed = j.at("seed").get<std::uint64_t>();
    Model& m = out.model;
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    const auto& e = j.at("encoder");
    m.enc.kind = encoder_kind_for(m.kind);
    m.enc.data_dim = e.at("data_dim").get<std::size_t>();
    m.enc.latent_dim = e.at("latent_dim").get<std::size_t>();
    m.enc.hidden = e.at("hidden").get<std::vector<std::size_t>>();
    m.enc.act = activation_from_string(e.at("activation").get<std::string>());
    m.enc.embed_dim = e.at("embed_dim").get<std::size_t>();
    m.enc.h_width = e.at("h_width").get<std::size_t>();
    m.enc.g_hidden = e.at("g_hidden").get<std::vector<std::size_t>>();
    m.dec.latent_dim = m.enc.latent_dim;
    m.dec.data_dim = m.enc.data_dim;
    m.dec.hidden = j.at("decoder").at("hidden").get<std::vector<std::size_t>>();
    m.dec.act = m.enc.act;
    const auto& f = j.at("flow");
    m.flow.layers = f.at("layers").get<std::size_t>();
    m.flow.bins = f.at("bins").get<std::size_t>();
    m.flow.cond_hidden = f.at("cond_hidden").get<std::size_t>();
    m.flow.squash = f.at("squash").get<bool>();
    m.flow.latent_dim = m.enc.latent_dim;
    m.flow.context_dim = 2 * m.enc.data_dim;
    const auto& s = j.at("scale");
    m.scale.col_min = s.at("min").get<std::vector<double>>();
    m.scale.col_max = s.at("max").get<std::vector<double>>();
    m.scale.constant = s.at("constant").get<std::vector<std::uint8_t>>();
    for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it) {
      Tensor t(it.value().at("shape").get<std::vector<std::size_t>>(),
               it.value().at("values").get<std::vector<double>>());
      m.params.add(it.key(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": malformed checkpoint: " + e.what());
  }
  return out;
}

}  // namespace pcvae
