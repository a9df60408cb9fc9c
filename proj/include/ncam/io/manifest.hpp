#pragma once

// Scene manifest (JSON, schema version 1):
//
// {
//   "version": 1,
//   "width": 128, "height": 128,
//   "exposure_mode": "known" | "learned",
//   "images": [
//     { "path": "ldr_000.ppm",
//       "ev": -2.0,                      // or "exposure_seconds": 0.25 (exactly one)
//       "focus": "near",                 // free-form tag
//       "flow_to_next": "flow_000.flo",  // optional, displacement to image k+1
//       "gt_hdr": "gt_hdr_000.pfm" }     // optional ground truth (simulator output)
//   ]
// }
//
// Relative paths resolve against the manifest's directory.

#include "ncam/io/formats.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ncam {

inline constexpr int kManifestVersion = 1;

struct ManifestEntry {
  std::string path;
  std::optional<double> ev;
  std::optional<double> exposure_seconds;
  std::string focus;
  std::optional<std::string> flow_to_next;
  std::optional<std::string> gt_hdr;

  /// log2 of the exposure: the EV itself, or log2 of seconds.
  double log2_dt() const {
    if (ev) return *ev;
    return std::log2(*exposure_seconds);
  }
};

struct SceneManifest {
  int version = kManifestVersion;
  int width = 0;
  int height = 0;
  std::string exposure_mode = "known";
  std::vector<ManifestEntry> images;
  std::filesystem::path base_dir;  // not serialized

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

class ManifestError : public std::runtime_error {
 public:
  explicit ManifestError(const std::string& what) : std::runtime_error(what) {}
};

inline nlohmann::json to_json(const SceneManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["width"] = m.width;
  j["height"] = m.height;
  j["exposure_mode"] = m.exposure_mode;
  j["images"] = nlohmann::json::array();
  for (const auto& e : m.images) {
    nlohmann::json ej;
    ej["path"] = e.path;
    if (e.ev) ej["ev"] = *e.ev;
    if (e.exposure_seconds) ej["exposure_seconds"] = *e.exposure_seconds;
    ej["focus"] = e.focus;
    if (e.flow_to_next) ej["flow_to_next"] = *e.flow_to_next;
    if (e.gt_hdr) ej["gt_hdr"] = *e.gt_hdr;
    j["images"].push_back(ej);
  }
  return j;
}

inline SceneManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  auto fail = [](const std::string& why) { throw ManifestError("manifest: " + why); };
  if (!j.is_object()) fail("top level must be an object");
  SceneManifest m;
  m.base_dir = base_dir;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) fail("unsupported version " + std::to_string(m.version));
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.exposure_mode = j.value("exposure_mode", std::string("known"));
    if (m.exposure_mode != "known" && m.exposure_mode != "learned") fail("exposure_mode must be known|learned");
    if (m.width < 1 || m.height < 1) fail("width and height must be >= 1");
    const auto& imgs = j.at("images");
    if (!imgs.is_array() || imgs.empty()) fail("'images' must be a non-empty array");
    for (const auto& ej : imgs) {
      ManifestEntry e;
      e.path = ej.at("path").get<std::string>();
      if (ej.contains("ev")) e.ev = ej.at("ev").get<double>();
      if (ej.contains("exposure_seconds")) e.exposure_seconds = ej.at("exposure_seconds").get<double>();
      if (e.ev.has_value() == e.exposure_seconds.has_value()) {
        fail("image '" + e.path + "' needs exactly one of 'ev' or 'exposure_seconds'");
      }
      if (e.ev && !std::isfinite(*e.ev)) fail("image '" + e.path + "' has a non-finite ev");
      if (e.exposure_seconds && !(*e.exposure_seconds > 0.0 && std::isfinite(*e.exposure_seconds))) {
        fail("image '" + e.path + "' needs a positive exposure_seconds");
      }
      e.focus = ej.value("focus", std::string());
      if (ej.contains("flow_to_next")) e.flow_to_next = ej.at("flow_to_next").get<std::string>();
      if (ej.contains("gt_hdr")) e.gt_hdr = ej.at("gt_hdr").get<std::string>();
      m.images.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ex.what());
  }
  return m;
}

inline SceneManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("manifest: cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw ManifestError("manifest: '" + path.string() + "' is not valid JSON: " + ex.what());
  }
  SceneManifest m = manifest_from_json(j, path.parent_path());
  for (const auto& e : m.images) {
    if (!std::filesystem::exists(m.resolve(e.path))) throw ManifestError("manifest: missing image file '" + e.path + "'");
    if (e.flow_to_next && !std::filesystem::exists(m.resolve(*e.flow_to_next))) {
      throw ManifestError("manifest: missing flow file '" + *e.flow_to_next + "'");
    }
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const SceneManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError("manifest: cannot write '" + path.string() + "'");
  out << to_json(m).dump(2) << "\n";
}

}  // namespace ncam
