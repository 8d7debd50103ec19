#ifndef VERGE_CONFIG_HPP
#define VERGE_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "verge/common.hpp"
#include "verge/hyperparams.hpp"
#include "verge/sampler.hpp"
#include "verge/simulation.hpp"

namespace verge {

// Flat key=value files, '#' starts a comment, blank lines ignored. Values
// keep everything after the first '=' (trimmed), so paths with '=' survive.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config: " + path + ":" + std::to_string(lineno) +
                            ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ValidationError("config: " + path + ":" + std::to_string(lineno) + ": empty key");
    if (out.count(key))
      throw ValidationError("config: " + path + ":" + std::to_string(lineno) +
                            ": duplicate key '" + key + "'");
    out[key] = value;
  }
  return out;
}

namespace detail {

inline double cfg_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config: key '" + key + "' needs a real number, got '" + value + "'");
  }
}

inline long long cfg_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config: key '" + key + "' needs an integer, got '" + value + "'");
  }
}

inline bool cfg_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError("config: key '" + key + "' needs true/false, got '" + value + "'");
}

}  // namespace detail

// Applies recognized keys to the three config structs, consuming them from
// the map; leftover keys are rejected by apply_config. pi_set reports whether
// the file pinned pi_edge (campaigns otherwise re-derive it from P).
inline void apply_hyper_keys(std::map<std::string, std::string>& kv, Hyperparameters& h,
                             bool* pi_set = nullptr) {
  auto take = [&](const char* key, double& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return false;
    field = detail::cfg_double(key, it->second);
    kv.erase(it);
    return true;
  };
  take("nu0", h.nu0);
  take("nu1", h.nu1);
  take("lambda_diag", h.lambda_diag);
  const bool pi = take("pi_edge", h.pi_edge);
  if (pi_set) *pi_set = *pi_set || pi;
  take("a_mrf", h.a_mrf);
  take("b_mrf", h.b_mrf);
  take("a0", h.a0);
  take("b0", h.b0);
  take("a_lambda", h.a_lambda);
  take("b_lambda", h.b_lambda);
  take("a_z", h.a_z);
  take("b_z", h.b_z);
  take("a_r", h.a_r);
  take("b_r", h.b_r);
  take("alpha_cov", h.alpha_cov);
}

inline void apply_run_keys(std::map<std::string, std::string>& kv, RunConfig& rc) {
  auto take_int = [&](const char* key, auto& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    field = static_cast<std::decay_t<decltype(field)>>(detail::cfg_int(key, it->second));
    kv.erase(it);
  };
  auto take_double = [&](const char* key, double& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    field = detail::cfg_double(key, it->second);
    kv.erase(it);
  };
  take_int("iters", rc.total_iterations);
  take_int("burn_in", rc.burn_in);
  take_int("thin", rc.thin);
  take_int("seed", rc.seed);
  take_int("chains", rc.chains);
  take_double("rho_step_sd", rc.rho_step_sd);
  take_double("scale_step_sd", rc.scale_step_sd);
  if (auto it = kv.find("flat_likelihood"); it != kv.end()) {
    rc.flat_likelihood = detail::cfg_bool("flat_likelihood", it->second);
    kv.erase(it);
  }
}

inline void apply_scenario_keys(std::map<std::string, std::string>& kv, ScenarioConfig& sc) {
  auto take_int = [&](const char* key, auto& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    field = static_cast<std::decay_t<decltype(field)>>(detail::cfg_int(key, it->second));
    kv.erase(it);
  };
  take_int("n", sc.n);
  take_int("P", sc.P);
  take_int("K", sc.K);
  take_int("n_test", sc.n_test);
  take_int("replicates", sc.replicates);
  take_int("inject_failure_at", sc.inject_failure_at);
  take_int("scenario_seed", sc.seed);
  apply_run_keys(kv, sc.run);
  apply_hyper_keys(kv, sc.hyper, &sc.hyper_pi_overridden);
}

inline void reject_unknown_keys(const std::map<std::string, std::string>& kv,
                                const std::string& path) {
  if (kv.empty()) return;
  std::string keys;
  for (const auto& [k, v] : kv) {
    if (!keys.empty()) keys += ", ";
    keys += "'" + k + "'";
  }
  throw ValidationError("config: " + path + ": unknown key(s) " + keys);
}

}  // namespace verge

#endif  // VERGE_CONFIG_HPP
