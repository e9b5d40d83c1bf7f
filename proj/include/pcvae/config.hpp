#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcvae/trainer.hpp"

namespace pcvae {

/// FNV-1a over a canonical string; the run fingerprint embedded in outputs.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

namespace toml_mini {

/// Minimal TOML reader covering what run configs need: [section] and
/// [section.sub] tables, string/number/bool scalars and flat arrays.
inline nlohmann::json parse(const std::string& text,
                            const std::string& origin) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) -> void {
    throw ParseError(origin + ":" + std::to_string(lineno) + ": " + what);
  };
  auto parse_scalar = [&](const std::string& raw) -> nlohmann::json {
    std::string s = detail::trim(raw);
    if (s.empty()) fail("empty value");
    if (s.front() == '"') {
      if (s.size() < 2 || s.back() != '"') fail("unterminated string");
      return s.substr(1, s.size() - 2);
    }
    if (s == "true") return true;
    if (s == "false") return false;
    double num = 0.0;
    if (!detail::parse_double(s, num)) fail("bad value: '" + s + "'");
    if (num == static_cast<double>(static_cast<long long>(num)) &&
        s.find_first_of(".eE") == std::string::npos)
      return static_cast<long long>(num);
    return num;
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    if (!s.empty() && s.back() == '\r') s.pop_back();
    if (s.empty() || s.front() == '#') continue;
    if (s.front() == '[') {
      std::size_t close = s.find(']');
      if (close == std::string::npos) fail("unterminated table header");
      std::string rest = detail::trim(s.substr(close + 1));
      if (!rest.empty() && rest.front() != '#')
        fail("trailing characters after table header");
      std::string name = detail::trim(s.substr(1, close - 1));
      if (name.empty()) fail("empty table name");
      table = &root;
      std::size_t start = 0;
      while (true) {
        std::size_t dot = name.find('.', start);
        std::string part = name.substr(
            start, dot == std::string::npos ? std::string::npos : dot - start);
        table = &(*table)[detail::trim(part)];
        if (!table->is_object() && !table->is_null())
          fail("table redefines a value: " + name);
        if (table->is_null()) *table = nlohmann::json::object();
        if (dot == std::string::npos) break;
        start = dot + 1;
      }
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    std::string key = detail::trim(s.substr(0, eq));
    std::string value = detail::trim(s.substr(eq + 1));
    // strip trailing comments outside strings
    if (!value.empty() && value.front() != '"') {
      std::size_t c = value.find('#');
      if (c != std::string::npos) value = detail::trim(value.substr(0, c));
    }
    if (key.empty()) fail("empty key");
    if (value.empty()) fail("empty value for " + key);
    if (value.front() == '[') {
      if (value.back() != ']') fail("unterminated array");
      nlohmann::json arr = nlohmann::json::array();
      std::string body = value.substr(1, value.size() - 2);
      std::string item;
      std::istringstream items(body);
      while (std::getline(items, item, ','))
        if (!detail::trim(item).empty()) arr.push_back(parse_scalar(item));
      (*table)[key] = arr;
    } else {
      (*table)[key] = parse_scalar(value);
    }
  }
  return root;
}

}  // namespace toml_mini

/// Run configuration file: TrainConfig plus dataset/mask paths and the
/// output directory. TOML preferred, JSON accepted; unknown keys rejected.
struct RunConfig {
  TrainConfig train;
  std::string data_path;
  std::string mask_path;
  std::string out_dir;
  bool data_header = false;
  double test_fraction = 0.0;  // 0 disables the train/test split
  std::uint64_t split_seed = 0;

  /// Resolved canonical form; also the input of the config hash.
  nlohmann::json canonical() const {
    nlohmann::json j;
    j["model"]["kind"] = to_string(train.model);
    j["model"]["latent_dim"] = train.arch.latent_dim;
    j["model"]["enc_hidden"] = train.arch.enc_hidden;
    j["model"]["dec_hidden"] = train.arch.dec_hidden;
    j["model"]["activation"] = to_string(train.arch.act);
    j["model"]["embed_dim"] = train.arch.embed_dim;
    j["model"]["pnp_h_width"] = train.arch.pnp_h_width;
    j["model"]["pnp_g_hidden"] = train.arch.pnp_g_hidden;
    j["model"]["flow_layers"] = train.arch.flow_layers;
    j["model"]["flow_bins"] = train.arch.flow_bins;
    j["model"]["flow_cond_hidden"] = train.arch.flow_cond_hidden;
    j["reg"]["enabled"] = train.reg.enabled;
    j["reg"]["lambda"] = train.reg.lambda;
    j["reg"]["mechanism"] = to_string(train.reg.mechanism.kind);
    j["reg"]["p_remove"] = train.reg.mechanism.p_remove;
    j["reg"]["samples"] = train.reg.samples;
    j["am"]["enabled"] = train.am.enabled;
    j["train"]["epochs"] = train.epochs;
    j["train"]["lr"] = train.lr;
    j["train"]["batch"] = train.batch;
    j["train"]["m_samples"] = train.m_samples;
    j["train"]["seed"] = train.seed;
    j["train"]["eval_cadence"] = train.eval_cadence;
    j["train"]["test_fraction"] = test_fraction;
    j["train"]["split_seed"] = split_seed;
    j["paths"]["data"] = data_path;
    j["paths"]["mask"] = mask_path;
    j["paths"]["out_dir"] = out_dir;
    j["paths"]["data_header"] = data_header;
    return j;
  }

  /// Fingerprint of the run semantics; file locations deliberately do not
  /// participate, so the same experiment hashes the same anywhere.
  std::string hash() const {
    nlohmann::json j = canonical();
    j.erase("paths");
    return hash_hex(fnv1a(j.dump()));
  }

  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::string& path);
};

namespace detail_config {

template <typename T>
void take(const nlohmann::json& table, const char* key, T& out,
          const std::string& where) {
  if (!table.contains(key)) return;
  try {
    out = table.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& table,
                           const std::vector<std::string>& known,
                           const std::string& where) {
  for (auto it = table.begin(); it != table.end(); ++it) {
    bool ok = false;
    for (const std::string& k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown key " + where + "." + it.key());
  }
}

}  // namespace detail_config

inline RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  using detail_config::reject_unknown;
  using detail_config::take;
  if (!doc.is_object()) throw ConfigError("config root must be a table");
  reject_unknown(doc, {"model", "reg", "am", "train", "paths"}, "config");
  RunConfig cfg;

  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    reject_unknown(m,
                   {"kind", "latent_dim", "enc_hidden", "dec_hidden",
                    "activation", "embed_dim", "pnp_h_width", "pnp_g_hidden",
                    "flow_layers", "flow_bins", "flow_cond_hidden"},
                   "model");
    std::string kind = to_string(cfg.train.model);
    take(m, "kind", kind, "model");
    cfg.train.model = model_kind_from_string(kind);
    take(m, "latent_dim", cfg.train.arch.latent_dim, "model");
    take(m, "enc_hidden", cfg.train.arch.enc_hidden, "model");
    take(m, "dec_hidden", cfg.train.arch.dec_hidden, "model");
    std::string act = to_string(cfg.train.arch.act);
    take(m, "activation", act, "model");
    cfg.train.arch.act = activation_from_string(act);
    take(m, "embed_dim", cfg.train.arch.embed_dim, "model");
    take(m, "pnp_h_width", cfg.train.arch.pnp_h_width, "model");
    take(m, "pnp_g_hidden", cfg.train.arch.pnp_g_hidden, "model");
    take(m, "flow_layers", cfg.train.arch.flow_layers, "model");
    take(m, "flow_bins", cfg.train.arch.flow_bins, "model");
    take(m, "flow_cond_hidden", cfg.train.arch.flow_cond_hidden, "model");
    if (cfg.train.arch.latent_dim == 0)
      throw ConfigError("model.latent_dim must be >= 1");
  }
  if (doc.contains("reg")) {
    const auto& r = doc.at("reg");
    reject_unknown(r, {"enabled", "lambda", "mechanism", "p_remove",
                       "samples"},
                   "reg");
    take(r, "enabled", cfg.train.reg.enabled, "reg");
    take(r, "lambda", cfg.train.reg.lambda, "reg");
    std::string mech = to_string(cfg.train.reg.mechanism.kind);
    take(r, "mechanism", mech, "reg");
    cfg.train.reg.mechanism.kind = mechanism_from_string(mech);
    take(r, "p_remove", cfg.train.reg.mechanism.p_remove, "reg");
    if (cfg.train.reg.mechanism.p_remove < 0.0 ||
        cfg.train.reg.mechanism.p_remove > 1.0)
      throw ConfigError("reg.p_remove must lie in [0,1]");
    take(r, "samples", cfg.train.reg.samples, "reg");
  }
  if (doc.contains("am")) {
    reject_unknown(doc.at("am"), {"enabled"}, "am");
    take(doc.at("am"), "enabled", cfg.train.am.enabled, "am");
  }
  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    reject_unknown(t,
                   {"epochs", "lr", "batch", "m_samples", "seed",
                    "eval_cadence", "test_fraction", "split_seed"},
                   "train");
    take(t, "epochs", cfg.train.epochs, "train");
    take(t, "lr", cfg.train.lr, "train");
    take(t, "batch", cfg.train.batch, "train");
    take(t, "m_samples", cfg.train.m_samples, "train");
    take(t, "seed", cfg.train.seed, "train");
    take(t, "eval_cadence", cfg.train.eval_cadence, "train");
    take(t, "test_fraction", cfg.test_fraction, "train");
    take(t, "split_seed", cfg.split_seed, "train");
  }
  if (doc.contains("paths")) {
    const auto& p = doc.at("paths");
    reject_unknown(p, {"data", "mask", "out_dir", "data_header"}, "paths");
    take(p, "data", cfg.data_path, "paths");
    take(p, "mask", cfg.mask_path, "paths");
    take(p, "out_dir", cfg.out_dir, "paths");
    take(p, "data_header", cfg.data_header, "paths");
  }
  cfg.train.validate();
  return cfg;
}

inline RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw ConfigError(path + ": empty config");
  nlohmann::json doc;
  if (text[first] == '{') {
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
  } else {
    doc = toml_mini::parse(text, path);
  }
  return from_json(doc);
}

}  // namespace pcvae
