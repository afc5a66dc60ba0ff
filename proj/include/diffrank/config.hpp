#pragma once

// Flat JSON form of ExperimentConfig. Keys mirror the config field names;
// loss and dataset fields are hoisted to the top level:
//
//   strategy, temperature, rank_temperature, sign_temperature, lambda, p_norm,
//   enable_r, enable_rho, enable_tau, average_pairs, lr, batch_size, epochs,
//   adam_betas, adam_eps, seed, dataset, n_contents, n_types, n_severities,
//   d_c, feature_noise_sd, mos_noise_sd, dataset_seed, train_fraction,
//   split_seed, hidden, pair_cap, random_fixed_pairs
//
// `dataset` is a CSV path; an empty string selects the synthetic generator.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "diffrank/errors.hpp"
#include "diffrank/train.hpp"

namespace diffrank::config {

using nlohmann::json;

inline json to_json(const train::ExperimentConfig& c) {
  json j;
  j["strategy"] = std::string(pairs::to_string(c.strategy));
  j["temperature"] = c.loss.temperature;
  if (c.loss.rank_temperature) j["rank_temperature"] = *c.loss.rank_temperature;
  if (c.loss.sign_temperature) j["sign_temperature"] = *c.loss.sign_temperature;
  j["lambda"] = c.loss.lambda;
  j["p_norm"] = c.loss.p_norm;
  j["enable_r"] = c.loss.enable_r;
  j["enable_rho"] = c.loss.enable_rho;
  j["enable_tau"] = c.loss.enable_tau;
  j["average_pairs"] = c.loss.average_pairs;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["adam_betas"] = json::array({c.adam.beta1, c.adam.beta2});
  j["adam_eps"] = c.adam.eps;
  j["seed"] = c.seed;
  j["dataset"] = c.dataset_csv;
  j["n_contents"] = c.dataset.n_contents;
  j["n_types"] = c.dataset.n_types;
  j["n_severities"] = c.dataset.n_severities;
  j["d_c"] = c.dataset.embedding_dim;
  j["feature_noise_sd"] = c.dataset.feature_noise_sd;
  j["mos_noise_sd"] = c.dataset.mos_noise_sd;
  j["dataset_seed"] = c.dataset.seed;
  j["train_fraction"] = c.train_fraction;
  j["split_seed"] = c.split_seed;
  j["hidden"] = c.hidden;
  j["pair_cap"] = c.pair_cap;
  j["random_fixed_pairs"] = c.random_fixed_pairs;
  return j;
}

// Applies every key of `j` on top of `base`. Unknown keys and wrongly typed
// values are configuration errors.
inline train::ExperimentConfig apply_json(const json& j, train::ExperimentConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "strategy") c.strategy = pairs::parse_strategy(v.get<std::string>());
      else if (key == "temperature") c.loss.temperature = v.get<double>();
      else if (key == "rank_temperature") c.loss.rank_temperature = v.get<double>();
      else if (key == "sign_temperature") c.loss.sign_temperature = v.get<double>();
      else if (key == "lambda") c.loss.lambda = v.get<double>();
      else if (key == "p_norm") c.loss.p_norm = v.get<double>();
      else if (key == "enable_r") c.loss.enable_r = v.get<bool>();
      else if (key == "enable_rho") c.loss.enable_rho = v.get<bool>();
      else if (key == "enable_tau") c.loss.enable_tau = v.get<bool>();
      else if (key == "average_pairs") c.loss.average_pairs = v.get<bool>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "adam_betas") {
        if (!v.is_array() || v.size() != 2) {
          throw ConfigError("adam_betas must be a two-element array");
        }
        c.adam.beta1 = v[0].get<double>();
        c.adam.beta2 = v[1].get<double>();
      } else if (key == "adam_eps") c.adam.eps = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "dataset") c.dataset_csv = v.get<std::string>();
      else if (key == "n_contents") c.dataset.n_contents = v.get<std::size_t>();
      else if (key == "n_types") c.dataset.n_types = v.get<std::size_t>();
      else if (key == "n_severities") c.dataset.n_severities = v.get<std::size_t>();
      else if (key == "d_c") c.dataset.embedding_dim = v.get<std::size_t>();
      else if (key == "feature_noise_sd") c.dataset.feature_noise_sd = v.get<double>();
      else if (key == "mos_noise_sd") c.dataset.mos_noise_sd = v.get<double>();
      else if (key == "dataset_seed") c.dataset.seed = v.get<std::uint64_t>();
      else if (key == "train_fraction") c.train_fraction = v.get<double>();
      else if (key == "split_seed") c.split_seed = v.get<std::uint64_t>();
      else if (key == "hidden") c.hidden = v.get<std::vector<std::size_t>>();
      else if (key == "pair_cap") c.pair_cap = v.get<std::size_t>();
      else if (key == "random_fixed_pairs") c.random_fixed_pairs = v.get<bool>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

inline train::ExperimentConfig load(const std::string& path,
                                    train::ExperimentConfig base = {}) {
  return apply_json(parse_json_file(path), std::move(base));
}

// Parses a `key=value` override. The value is read as JSON when possible and
// as a plain string otherwise.
inline train::ExperimentConfig apply_override(const std::string& assignment,
                                              train::ExperimentConfig c) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  return apply_json(json{{key, value}}, std::move(c));
}

// FNV-1a over the canonical (sorted-key) JSON of the config without its seed,
// so runs that differ only by seed share a hash.
inline std::string config_hash(const train::ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("seed");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace diffrank::config
