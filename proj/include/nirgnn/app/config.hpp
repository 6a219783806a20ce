#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nirgnn/model.hpp"

namespace nirgnn::app {

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Flat `key = value` text; '#' starts a comment.
inline KeyValues parse_key_values(std::istream& in, const std::string& source = "<config>") {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_key_values(in, path);
}

inline std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("bad " + what + " entry '" + part + "'");
    }
  }
  if (out.empty()) throw ConfigError(what + " list is empty");
  return out;
}

inline std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("bad " + what + " entry '" + part + "'");
    }
  }
  if (out.empty()) throw ConfigError(what + " list is empty");
  return out;
}

namespace detail {

inline std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size() || x < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + v + "'");
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace detail

/// Applies key=value settings on top of `cfg`. Unknown keys are errors.
inline void apply_config(TrainConfig& cfg, const KeyValues& kv) {
  using namespace detail;
  for (const auto& [k, v] : kv) {
    if (k == "d") cfg.d = to_size(k, v);
    else if (k == "d_a") cfg.d_a = to_size(k, v);
    else if (k == "h") cfg.h = to_size(k, v);
    else if (k == "steps") cfg.steps = to_size(k, v);
    else if (k == "lambda") cfg.lambda = to_double(k, v);
    else if (k == "gamma") cfg.gamma = to_double(k, v);
    else if (k == "lr") cfg.lr = to_double(k, v);
    else if (k == "beta1") cfg.beta1 = to_double(k, v);
    else if (k == "beta2") cfg.beta2 = to_double(k, v);
    else if (k == "adam_eps") cfg.adam_eps = to_double(k, v);
    else if (k == "epochs") cfg.epochs = to_size(k, v);
    else if (k == "batch_size") cfg.batch_size = to_size(k, v);
    else if (k == "seed") cfg.seed = to_u64(k, v);
    else if (k == "sampler_seed") {
      if (v.empty() || v == "none") cfg.sampler_seed.reset();
      else cfg.sampler_seed = to_u64(k, v);
    } else if (k == "candidate_mode") {
      if (v == "full_vocab") cfg.candidate_mode = CandidateMode::full_vocab;
      else if (v == "sampled") cfg.candidate_mode = CandidateMode::sampled;
      else throw ConfigError("candidate_mode must be full_vocab or sampled, got '" + v + "'");
    } else if (k == "negatives") cfg.negatives = to_size(k, v);
    else if (k == "eval_ks") cfg.eval_ks = parse_size_list(v, "eval_ks");
    else if (k == "propagate_taxonomy") cfg.propagate_taxonomy = to_bool(k, v);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  cfg.validate();
}

inline KeyValues config_values(const TrainConfig& cfg) {
  using detail::format_double;
  KeyValues kv;
  kv["d"] = std::to_string(cfg.d);
  kv["d_a"] = std::to_string(cfg.d_a);
  kv["h"] = std::to_string(cfg.h);
  kv["steps"] = std::to_string(cfg.steps);
  kv["lambda"] = format_double(cfg.lambda);
  kv["gamma"] = format_double(cfg.gamma);
  kv["lr"] = format_double(cfg.lr);
  kv["beta1"] = format_double(cfg.beta1);
  kv["beta2"] = format_double(cfg.beta2);
  kv["adam_eps"] = format_double(cfg.adam_eps);
  kv["epochs"] = std::to_string(cfg.epochs);
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["seed"] = std::to_string(cfg.seed);
  kv["sampler_seed"] = cfg.sampler_seed ? std::to_string(*cfg.sampler_seed) : "none";
  kv["candidate_mode"] = to_string(cfg.candidate_mode);
  kv["negatives"] = std::to_string(cfg.negatives);
  std::string ks;
  for (auto k : cfg.eval_ks) ks += (ks.empty() ? "" : ",") + std::to_string(k);
  kv["eval_ks"] = ks;
  kv["propagate_taxonomy"] = cfg.propagate_taxonomy ? "true" : "false";
  return kv;
}

/// Canonical text form (sorted keys); round-trips through apply_config.
inline std::string config_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_values(cfg)) out += k + "=" + v + "\n";
  return out;
}

inline nlohmann::json config_json(const TrainConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : config_values(cfg)) j[k] = v;
  return j;
}

}  // namespace nirgnn::app
