#pragma once

// JSON shapes of the domain types, plus task validation.
//
// Field names here are the wire format of the HTTP API and of the
// append-only store; changing one is a format break.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "photoreport/domain.hpp"

namespace photoreport {

using Json = nlohmann::json;

inline constexpr double kDefaultMinMatches = 10.0;

// ---------------------------------------------------------------------------
// Encoding

inline Json encode(const GeoPoint& p) { return Json{{"lat", p.lat()}, {"lon", p.lon()}}; }

inline Json encode(const LayerSpec& l) {
  return Json{{"kind", to_string(l.kind)}, {"threshold", l.threshold}};
}

inline Json encode(const Task& t) {
  Json layers = Json::array();
  for (const auto& l : t.layers) layers.push_back(encode(l));
  return Json{{"task_id", t.task_id},
              {"name", t.name},
              {"mode", to_string(t.mode)},
              {"expected_class", t.expected_class ? Json(*t.expected_class) : Json(nullptr)},
              {"layers", std::move(layers)},
              {"opened_at", t.opened_at},
              {"deadline", t.deadline},
              {"representative_policy", to_string(t.representative_policy)},
              {"state", to_string(t.status)}};
}

inline Json encode(const Submission& s) {
  Json j{{"submission_id", s.submission_id},
         {"task_id", s.task_id},
         {"worker_id", s.worker_id},
         {"captured_at", s.captured_at},
         {"location", encode(s.location)},
         {"keypoints", s.keypoints.rows()},
         {"global_feature", s.global_feature}};
  j["thumbnail_ref"] = s.thumbnail_ref ? Json(*s.thumbnail_ref) : Json(nullptr);
  return j;
}

inline Json encode(const Prediction& p) {
  return Json{{"class", p.predicted_class}, {"confidence", p.confidence}};
}

inline Json encode(const Verdict& v) {
  Json j{{"submission_id", v.submission_id},
         {"predicted_class", v.predicted_class},
         {"confidence", v.confidence},
         {"decision", to_string(v.decision)}};
  if (!v.reason.empty()) j["reason"] = v.reason;
  return j;
}

inline Json encode(const AggregationReport& r) {
  return Json{{"task_id", r.task_id},
              {"determined_class", r.determined_class},
              {"no_event", r.no_event},
              {"representatives", r.representatives},
              {"group_sizes", r.group_sizes},
              {"redundancy_ratio", r.redundancy_ratio},
              {"total_accepted", r.total_accepted},
              {"rejected_false", r.rejected_false}};
}

// ---------------------------------------------------------------------------
// Decoding helpers. Each collects issues instead of stopping at the first.

namespace detail {

class FieldReader {
 public:
  FieldReader(const Json& j, std::vector<std::string>& issues) : j_(j), issues_(issues) {
    if (!j_.is_object()) issues_.emplace_back("expected a JSON object");
  }

  bool has(const char* key) const { return j_.is_object() && j_.contains(key) && !j_[key].is_null(); }

  std::optional<std::string> str(const char* key, bool required) {
    if (!has(key)) {
      if (required) issues_.push_back(std::string("missing ") + key);
      return std::nullopt;
    }
    if (!j_[key].is_string()) {
      issues_.push_back(std::string(key) + " must be a string");
      return std::nullopt;
    }
    return j_[key].get<std::string>();
  }

  std::optional<std::int64_t> integer(const char* key, bool required) {
    if (!has(key)) {
      if (required) issues_.push_back(std::string("missing ") + key);
      return std::nullopt;
    }
    const auto& v = j_[key];
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && d == std::floor(d)) return static_cast<std::int64_t>(d);
    }
    issues_.push_back(std::string(key) + " must be an integer");
    return std::nullopt;
  }

  std::optional<double> number(const char* key, bool required) {
    if (!has(key)) {
      if (required) issues_.push_back(std::string("missing ") + key);
      return std::nullopt;
    }
    const auto& v = j_[key];
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
      issues_.push_back(std::string(key) + " must be a finite number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  const Json& raw(const char* key) const { return j_[key]; }

 private:
  const Json& j_;
  std::vector<std::string>& issues_;
};

inline std::optional<std::vector<double>> number_array(const Json& v) {
  if (!v.is_array()) return std::nullopt;
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) return std::nullopt;
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

struct ValidatedTask {
  Task task;
  std::vector<std::string> warnings;
};

/// Checks a raw task description against every task invariant and returns
/// either a well-formed Task or a ValidationError listing all violations.
/// Validating the encoding of an already valid Task returns it unchanged.
inline ValidatedTask validate_task(const Json& raw, const ClassRegistry& registry,
                                   double default_min_matches = kDefaultMinMatches) {
  std::vector<std::string> issues;
  std::vector<std::string> warnings;
  detail::FieldReader in(raw, issues);
  if (!raw.is_object()) throw ValidationError(std::move(issues));

  Task t;
  t.task_id = in.str("task_id", false).value_or("");
  t.name = in.str("name", false).value_or("");

  if (auto m = in.str("mode", true)) {
    if (auto mode = parse_mode(*m)) t.mode = *mode;
    else issues.push_back("unknown mode '" + *m + "'");
  }

  std::optional<ClassId> expected;
  if (in.has("expected_class")) {
    const auto& ec = in.raw("expected_class");
    if (ec.is_number_integer() && ec.get<std::int64_t>() >= 0 &&
        registry.contains(static_cast<ClassId>(ec.get<std::int64_t>()))) {
      expected = static_cast<ClassId>(ec.get<std::int64_t>());
    } else if (ec.is_string() && registry.find(ec.get<std::string>())) {
      expected = registry.find(ec.get<std::string>());
    } else {
      issues.push_back("unregistered expected_class " + ec.dump());
    }
  }
  if (t.mode == TaskMode::Online) {
    if (!in.has("expected_class")) issues.emplace_back("missing expected_class");
    else if (expected && registry.is_normal(*expected))
      issues.emplace_back("expected_class must not be the normal class");
    t.expected_class = expected;
  } else if (in.has("expected_class")) {
    warnings.push_back("expected_class " + in.raw("expected_class").dump() +
                       " ignored for OFFLINE task");
  }

  if (!in.has("layers")) {
    issues.emplace_back("missing layers");
  } else if (!in.raw("layers").is_array() || in.raw("layers").empty()) {
    issues.emplace_back("layers must be a non-empty array");
  } else {
    bool seen[3] = {false, false, false};
    for (const auto& lj : in.raw("layers")) {
      detail::FieldReader lr(lj, issues);
      if (!lj.is_object()) continue;
      LayerSpec spec;
      auto kind_name = lr.str("kind", true);
      if (!kind_name) continue;
      auto kind = parse_layer_kind(*kind_name);
      if (!kind) {
        issues.push_back("unknown layer kind '" + *kind_name + "'");
        continue;
      }
      spec.kind = *kind;
      const auto slot = static_cast<int>(*kind);
      if (seen[slot]) issues.emplace_back("duplicate layer kind " + std::string(to_string(*kind)));
      seen[slot] = true;

      std::optional<double> threshold =
          spec.kind == LayerKind::Visual && !lr.has("threshold") ? std::optional(default_min_matches)
                                                                 : lr.number("threshold", true);
      if (threshold) {
        spec.threshold = *threshold;
        if (*threshold <= 0.0)
          issues.emplace_back("non-positive threshold for layer " + std::string(to_string(*kind)));
        else if (spec.kind == LayerKind::Visual && *threshold != std::floor(*threshold))
          issues.emplace_back("VISUAL threshold must be a positive integer");
      }
      t.layers.push_back(spec);
    }
  }

  auto opened = in.integer("opened_at", true);
  auto deadline = in.integer("deadline", true);
  if (opened) t.opened_at = *opened;
  if (deadline) t.deadline = *deadline;
  if (opened && deadline && *deadline <= *opened) issues.emplace_back("deadline must be after opened_at");

  if (auto p = in.str("representative_policy", false)) {
    if (auto pol = parse_policy(*p)) t.representative_policy = *pol;
    else issues.push_back("unknown representative_policy '" + *p + "'");
  }
  if (auto s = in.str("state", false)) {
    if (auto st = parse_status(*s)) t.status = *st;
    else issues.push_back("unknown state '" + *s + "'");
  }

  if (!issues.empty()) throw ValidationError(std::move(issues));
  return {std::move(t), std::move(warnings)};
}

/// Parses a submission payload. Time-window and uniqueness checks need the
/// owning task and happen at ingestion, not here.
inline Submission decode_submission(const Json& raw) {
  std::vector<std::string> issues;
  detail::FieldReader in(raw, issues);
  if (!raw.is_object()) throw ValidationError(std::move(issues));

  Submission s;
  s.submission_id = in.str("submission_id", true).value_or("");
  if (in.has("submission_id") && s.submission_id.empty()) issues.emplace_back("submission_id is empty");
  s.task_id = in.str("task_id", false).value_or("");
  s.worker_id = in.str("worker_id", true).value_or("");
  s.captured_at = in.integer("captured_at", true).value_or(0);

  if (!in.has("location")) {
    issues.emplace_back("missing location");
  } else {
    detail::FieldReader loc(in.raw("location"), issues);
    auto lat = loc.number("lat", true);
    auto lon = loc.number("lon", true);
    if (lat && lon) {
      try {
        s.location = GeoPoint(*lat, *lon);
      } catch (const ValidationError& e) {
        issues.insert(issues.end(), e.issues().begin(), e.issues().end());
      }
    }
  }

  if (in.has("keypoints")) {
    const auto& kp = in.raw("keypoints");
    std::vector<std::vector<double>> rows;
    bool ok = kp.is_array();
    if (ok) {
      for (const auto& r : kp) {
        auto row = detail::number_array(r);
        if (!row) {
          ok = false;
          break;
        }
        rows.push_back(std::move(*row));
      }
    }
    if (!ok) {
      issues.emplace_back("keypoints must be an array of numeric arrays");
    } else {
      try {
        s.keypoints = KeypointSet(rows);
      } catch (const ValidationError& e) {
        issues.insert(issues.end(), e.issues().begin(), e.issues().end());
      }
    }
  }

  if (!in.has("global_feature")) {
    issues.emplace_back("missing global_feature");
  } else if (auto f = detail::number_array(in.raw("global_feature")); !f || f->empty()) {
    issues.emplace_back("global_feature must be a non-empty numeric array");
  } else {
    for (double v : *f)
      if (!std::isfinite(v)) {
        issues.emplace_back("global_feature has non-finite component");
        break;
      }
    s.global_feature = std::move(*f);
  }

  s.thumbnail_ref = in.str("thumbnail_ref", false);

  if (!issues.empty()) throw ValidationError(std::move(issues));
  return s;
}

inline Verdict decode_verdict(const Json& j) {
  Verdict v;
  v.submission_id = j.at("submission_id").get<std::string>();
  v.predicted_class = j.at("predicted_class").get<ClassId>();
  v.confidence = j.at("confidence").get<double>();
  auto d = parse_decision(j.at("decision").get<std::string>());
  if (!d) throw ValidationError({"unknown decision"});
  v.decision = *d;
  v.reason = j.value("reason", std::string{});
  return v;
}

inline AggregationReport decode_report(const Json& j) {
  AggregationReport r;
  r.task_id = j.at("task_id").get<std::string>();
  r.determined_class = j.at("determined_class").get<ClassId>();
  r.no_event = j.at("no_event").get<bool>();
  r.representatives = j.at("representatives").get<std::vector<std::string>>();
  r.group_sizes = j.at("group_sizes").get<std::vector<std::size_t>>();
  r.redundancy_ratio = j.at("redundancy_ratio").get<double>();
  r.total_accepted = j.at("total_accepted").get<std::size_t>();
  r.rejected_false = j.at("rejected_false").get<std::size_t>();
  return r;
}

}  // namespace photoreport
