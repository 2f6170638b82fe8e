#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

#include "ctrw/calibration.hpp"
#include "ctrw/conditioning.hpp"
#include "ctrw/error.hpp"
#include "ctrw/trajectory_analysis.hpp"

namespace ctrw {

// Pipeline configuration. The file form is JSON with the keys below; CLI
// flags override file values. min_flow has no default on purpose: the
// selection threshold is empirical and must be supplied.
struct Config {
  std::uint64_t seed = 0;
  int keyframes = 8;  // depth keyframes per video for calibration
  int stride = 4;     // temporal pose downsampling for latent-aligned outputs
  std::optional<double> min_flow;
  std::optional<int> balance_cap;  // nullopt = "auto"
  RansacParams ransac;
  AnalysisParams analysis;
  GuidanceWeights guidance;
};

namespace detail {

template <typename T>
void config_get(const nlohmann::json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config: bad value for '") + key + "'");
  }
}

inline void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                       const char* scope) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (key == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ValidationError(std::string("config: unknown key '") + key + "' in " + scope);
    }
  }
}

}  // namespace detail

inline Config parse_config(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ValidationError("config: invalid JSON");
  if (!doc.is_object()) throw ValidationError("config: top level must be an object");
  detail::check_keys(doc, {"seed", "keyframes", "stride", "min_flow", "balance_cap",
                           "ransac", "analysis", "guidance"},
                     "top level");

  Config cfg;
  detail::config_get(doc, "seed", cfg.seed);
  detail::config_get(doc, "keyframes", cfg.keyframes);
  detail::config_get(doc, "stride", cfg.stride);
  if (doc.contains("min_flow")) {
    double v = 0.0;
    detail::config_get(doc, "min_flow", v);
    cfg.min_flow = v;
  }
  if (doc.contains("balance_cap")) {
    if (doc["balance_cap"].is_string()) {
      if (doc["balance_cap"].get<std::string>() != "auto") {
        throw ValidationError("config: balance_cap must be an integer or \"auto\"");
      }
      cfg.balance_cap = std::nullopt;
    } else if (doc["balance_cap"].is_number_integer()) {
      cfg.balance_cap = doc["balance_cap"].get<int>();
    } else {
      throw ValidationError("config: balance_cap must be an integer or \"auto\"");
    }
  }
  if (doc.contains("ransac")) {
    const nlohmann::json& r = doc["ransac"];
    if (!r.is_object()) throw ValidationError("config: 'ransac' must be an object");
    detail::check_keys(r, {"iterations", "inlier_threshold_rel", "huber_delta",
                           "min_inlier_ratio", "max_pixels"},
                       "ransac");
    detail::config_get(r, "iterations", cfg.ransac.iterations);
    detail::config_get(r, "inlier_threshold_rel", cfg.ransac.inlier_threshold_rel);
    detail::config_get(r, "huber_delta", cfg.ransac.huber_delta);
    detail::config_get(r, "min_inlier_ratio", cfg.ransac.min_inlier_ratio);
    detail::config_get(r, "max_pixels", cfg.ransac.max_pixels);
  }
  if (doc.contains("analysis")) {
    const nlohmann::json& a = doc["analysis"];
    if (!a.is_object()) throw ValidationError("config: 'analysis' must be an object");
    detail::check_keys(a, {"n", "gamma_deg", "view_change_threshold_deg"}, "analysis");
    detail::config_get(a, "n", cfg.analysis.n);
    detail::config_get(a, "gamma_deg", cfg.analysis.gamma_deg);
    detail::config_get(a, "view_change_threshold_deg", cfg.analysis.view_change_threshold_deg);
  }
  if (doc.contains("guidance")) {
    const nlohmann::json& g = doc["guidance"];
    if (!g.is_object()) throw ValidationError("config: 'guidance' must be an object");
    detail::check_keys(g, {"w_text", "w_cam"}, "guidance");
    detail::config_get(g, "w_text", cfg.guidance.w_text);
    detail::config_get(g, "w_cam", cfg.guidance.w_cam);
  }

  cfg.ransac.rng_seed = cfg.seed;
  validate_ransac_params(cfg.ransac);
  validate_analysis_params(cfg.analysis);
  validate_guidance_weights(cfg.guidance);
  if (cfg.keyframes < 1) throw ValidationError("config: keyframes must be >= 1");
  if (cfg.stride < 1) throw ValidationError("config: stride must be >= 1");
  if (cfg.balance_cap.has_value() && *cfg.balance_cap < 1) {
    throw ValidationError("config: balance_cap must be >= 1");
  }
  return cfg;
}

}  // namespace ctrw
