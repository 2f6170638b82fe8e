#pragma once

#include <json.hpp>

#include <set>
#include <string>
#include <vector>

#include "ctrw/error.hpp"

namespace ctrw {

// One video's input files. trajectory_path is required; the rest are optional
// (empty = absent) and must be non-empty strings when present.
struct ManifestEntry {
  std::string video_id;
  std::string trajectory_path;
  std::string depth_dir;
  std::string flow_dir;
  std::string mask_dir;
  std::string features_path;
};

struct DatasetManifest {
  int version = 1;
  std::vector<ManifestEntry> entries;
};

namespace detail {

inline std::string manifest_string(const nlohmann::json& obj, const char* key,
                                   bool required) {
  if (!obj.contains(key)) {
    if (required) throw ValidationError(std::string("manifest: entry missing '") + key + "'");
    return {};
  }
  if (!obj[key].is_string() || obj[key].get<std::string>().empty()) {
    throw ValidationError(std::string("manifest: '") + key + "' must be a non-empty string");
  }
  return obj[key].get<std::string>();
}

}  // namespace detail

inline DatasetManifest parse_manifest(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ValidationError("manifest: invalid JSON");
  if (!doc.is_object()) throw ValidationError("manifest: top level must be an object");
  if (!doc.contains("version") || !doc["version"].is_number_integer()) {
    throw ValidationError("manifest: missing integer 'version'");
  }
  if (!doc.contains("entries") || !doc["entries"].is_array()) {
    throw ValidationError("manifest: missing 'entries' array");
  }

  DatasetManifest manifest;
  manifest.version = doc["version"].get<int>();
  std::set<std::string> seen;
  for (const nlohmann::json& obj : doc["entries"]) {
    if (!obj.is_object()) throw ValidationError("manifest: entry must be an object");
    ManifestEntry entry;
    entry.video_id = detail::manifest_string(obj, "video_id", true);
    entry.trajectory_path = detail::manifest_string(obj, "trajectory_path", true);
    entry.depth_dir = detail::manifest_string(obj, "depth_dir", false);
    entry.flow_dir = detail::manifest_string(obj, "flow_dir", false);
    entry.mask_dir = detail::manifest_string(obj, "mask_dir", false);
    entry.features_path = detail::manifest_string(obj, "features_path", false);
    if (!seen.insert(entry.video_id).second) {
      throw ValidationError("manifest: duplicate video_id '" + entry.video_id + "'");
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

inline std::string write_manifest(const DatasetManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["version"] = manifest.version;
  doc["entries"] = nlohmann::ordered_json::array();
  for (const ManifestEntry& e : manifest.entries) {
    nlohmann::ordered_json obj;
    obj["video_id"] = e.video_id;
    obj["trajectory_path"] = e.trajectory_path;
    if (!e.depth_dir.empty()) obj["depth_dir"] = e.depth_dir;
    if (!e.flow_dir.empty()) obj["flow_dir"] = e.flow_dir;
    if (!e.mask_dir.empty()) obj["mask_dir"] = e.mask_dir;
    if (!e.features_path.empty()) obj["features_path"] = e.features_path;
    doc["entries"].push_back(obj);
  }
  return doc.dump(2) + "\n";
}

}  // namespace ctrw
