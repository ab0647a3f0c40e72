#pragma once

// Runtime configuration: JSON file, then PHOTOREPORT_* environment overrides.
//
//   ratio            0.75      keypoint ratio test
//   k_min            10        default VISUAL threshold when a task omits it
//   earth_radius_km  6371.0088
//   tick_seconds     1         deadline auto-close period
//   predictor_retries 3
//   predictor_backoff_ms 100
//   model_file       (none)    centroid file for the reference classifier
//   feature_dim      64        dimension of the built-in centroids

#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>

#include "photoreport/atree.hpp"
#include "photoreport/codec.hpp"
#include "photoreport/predictor.hpp"

namespace photoreport {

struct Config {
  double ratio = kDefaultRatio;
  double k_min = kDefaultMinMatches;
  double earth_radius_km = kEarthRadiusKm;
  int tick_seconds = 1;
  int predictor_retries = 3;
  int predictor_backoff_ms = 100;
  std::string model_file;
  std::size_t feature_dim = ClassifierModel::kDefaultFeatureDim;

  MatchParams match_params() const { return {ratio, earth_radius_km}; }
  RetryPolicy retry_policy() const {
    return {predictor_retries, std::chrono::milliseconds(predictor_backoff_ms)};
  }
};

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

namespace detail {

inline const char* env(const char* name) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? v : nullptr;
}

}  // namespace detail

inline Config load_config(const std::optional<std::string>& path) {
  Config c;
  if (path) {
    const Json j = read_json_file(*path);
    c.ratio = j.value("ratio", c.ratio);
    c.k_min = j.value("k_min", c.k_min);
    c.earth_radius_km = j.value("earth_radius_km", c.earth_radius_km);
    c.tick_seconds = j.value("tick_seconds", c.tick_seconds);
    c.predictor_retries = j.value("predictor_retries", c.predictor_retries);
    c.predictor_backoff_ms = j.value("predictor_backoff_ms", c.predictor_backoff_ms);
    c.model_file = j.value("model_file", c.model_file);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
  }
  if (auto v = detail::env("PHOTOREPORT_RATIO")) c.ratio = std::stod(v);
  if (auto v = detail::env("PHOTOREPORT_K_MIN")) c.k_min = std::stod(v);
  if (auto v = detail::env("PHOTOREPORT_EARTH_RADIUS_KM")) c.earth_radius_km = std::stod(v);
  if (auto v = detail::env("PHOTOREPORT_TICK_SECONDS")) c.tick_seconds = std::stoi(v);
  if (auto v = detail::env("PHOTOREPORT_PREDICTOR_RETRIES")) c.predictor_retries = std::stoi(v);
  if (auto v = detail::env("PHOTOREPORT_PREDICTOR_BACKOFF_MS")) c.predictor_backoff_ms = std::stoi(v);
  if (auto v = detail::env("PHOTOREPORT_MODEL_FILE")) c.model_file = v;

  if (!(c.ratio > 0.0 && c.ratio < 1.0)) throw std::invalid_argument("ratio must lie in (0,1)");
  if (!(c.k_min >= 1.0)) throw std::invalid_argument("k_min must be >= 1");
  if (!(c.earth_radius_km > 0.0)) throw std::invalid_argument("earth_radius_km must be positive");
  if (c.tick_seconds < 1) throw std::invalid_argument("tick_seconds must be >= 1");
  if (c.predictor_retries < 1) throw std::invalid_argument("predictor_retries must be >= 1");
  return c;
}

/// Centroid file: {"temperature": 1.0, "centroids": {"0": [...], "1": [...]}}.
inline ClassifierModel load_model(const Json& j, const ClassRegistry& registry) {
  std::map<ClassId, std::vector<double>> centroids;
  for (const auto& [key, value] : j.at("centroids").items())
    centroids.emplace(static_cast<ClassId>(std::stoul(key)), value.get<std::vector<double>>());
  return ClassifierModel(registry, std::move(centroids), j.value("temperature", 1.0));
}

inline ClassifierModel model_from_config(const Config& c, const ClassRegistry& registry) {
  if (!c.model_file.empty()) return load_model(read_json_file(c.model_file), registry);
  return ClassifierModel::axis_aligned(registry, c.feature_dim);
}

}  // namespace photoreport
