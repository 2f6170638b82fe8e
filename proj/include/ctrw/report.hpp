#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "ctrw/error.hpp"

namespace ctrw {

inline constexpr const char* kToolName = "ctrw";
inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::ordered_json;

namespace detail {

// Rounds to 9 significant decimal digits; idempotent, so
// serialize -> parse -> serialize is a fixed point.
inline double round_sig9(double x) {
  if (!std::isfinite(x) || x == 0.0) return x;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return std::strtod(buf, nullptr);
}

inline void round_numbers(Json& node) {
  if (node.is_number_float()) {
    node = round_sig9(node.get<double>());
  } else if (node.is_object() || node.is_array()) {
    for (Json& child : node) round_numbers(child);
  }
}

}  // namespace detail

// Report schema: top-level keys `meta`, `calibration`, `profile`, `balance`,
// `metrics`, in that order; absent sections are omitted. meta always carries
// the tool name and version. Floating-point values are serialized at 9
// significant digits with stable key ordering, so identical inputs produce
// byte-identical reports.
inline std::string write_report(const Json& bundle, std::uint64_t seed = 0) {
  if (!bundle.is_object() && !bundle.is_null()) {
    throw ValidationError("report bundle must be a JSON object");
  }

  Json report;
  Json meta;
  if (bundle.is_object() && bundle.contains("meta") && bundle["meta"].is_object()) {
    meta = bundle["meta"];
  }
  meta["tool"] = kToolName;
  meta["version"] = kToolVersion;
  if (!meta.contains("seed")) meta["seed"] = seed;
  report["meta"] = meta;

  for (const char* key : {"calibration", "profile", "balance", "metrics"}) {
    if (bundle.is_object() && bundle.contains(key)) report[key] = bundle[key];
  }
  detail::round_numbers(report);
  return report.dump(2) + "\n";
}

inline Json parse_report(const std::string& text) {
  Json doc = Json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ValidationError("report: invalid JSON");
  if (!doc.is_object()) throw ValidationError("report: top level must be an object");
  return doc;
}

}  // namespace ctrw
