#pragma once

// Core value types shared by every stage of the reporting pipeline.
//
// All types are plain values; once built they are never mutated in place by
// the pipeline, so they can be freely shared between threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace photoreport {

using ClassId = std::uint32_t;
using Timestamp = std::int64_t;  // seconds since epoch

/// Raised when a value fails domain validation. Carries every violated rule,
/// not only the first one.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> issues)
      : std::invalid_argument(join(issues)), issues_(std::move(issues)) {}

  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string out;
    for (const auto& s : issues) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }

  std::vector<std::string> issues_;
};

struct EventClass {
  ClassId id = 0;
  std::string name;
  bool is_normal = false;

  friend bool operator==(const EventClass&, const EventClass&) = default;
};

/// The closed set of event classes a deployment can predict. Exactly one of
/// them is the "normal everyday photo" class.
class ClassRegistry {
 public:
  explicit ClassRegistry(std::vector<EventClass> classes) : classes_(std::move(classes)) {
    std::vector<std::string> issues;
    if (classes_.empty()) issues.emplace_back("class registry is empty");
    const auto normals = std::count_if(classes_.begin(), classes_.end(),
                                       [](const EventClass& c) { return c.is_normal; });
    if (normals != 1) issues.emplace_back("exactly one class must be marked normal");
    std::sort(classes_.begin(), classes_.end(),
              [](const EventClass& a, const EventClass& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < classes_.size(); ++i)
      if (classes_[i].id == classes_[i - 1].id) issues.emplace_back("duplicate class id");
    if (!issues.empty()) throw ValidationError(std::move(issues));
  }

  /// fire, flood, damaged_infrastructure, normal (ids 0..3).
  static ClassRegistry standard() {
    return ClassRegistry({{0, "fire", false},
                          {1, "flood", false},
                          {2, "damaged_infrastructure", false},
                          {3, "normal", true}});
  }

  std::size_t size() const noexcept { return classes_.size(); }
  const std::vector<EventClass>& classes() const noexcept { return classes_; }

  bool contains(ClassId id) const noexcept { return lookup(id) != nullptr; }

  ClassId normal_id() const noexcept {
    for (const auto& c : classes_)
      if (c.is_normal) return c.id;
    return 0;  // unreachable: constructor enforces one normal class
  }

  bool is_normal(ClassId id) const noexcept {
    const auto* c = lookup(id);
    return c != nullptr && c->is_normal;
  }

  const EventClass& at(ClassId id) const {
    const auto* c = lookup(id);
    if (c == nullptr) throw std::out_of_range("unregistered class id " + std::to_string(id));
    return *c;
  }

  std::optional<ClassId> find(std::string_view name) const noexcept {
    for (const auto& c : classes_)
      if (c.name == name) return c.id;
    return std::nullopt;
  }

 private:
  const EventClass* lookup(ClassId id) const noexcept {
    for (const auto& c : classes_)
      if (c.id == id) return &c;
    return nullptr;
  }

  std::vector<EventClass> classes_;
};

/// A WGS84-style latitude/longitude pair in degrees. Longitude -180 is
/// normalised away by the range check: valid longitudes are (-180, 180].
class GeoPoint {
 public:
  GeoPoint() = default;
  GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
    if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0)
      throw ValidationError({"latitude out of range [-90, 90]"});
    if (!std::isfinite(lon) || lon <= -180.0 || lon > 180.0)
      throw ValidationError({"longitude out of range (-180, 180]"});
  }

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

/// An ordered set of equal-length local feature descriptors, stored row-major.
class KeypointSet {
 public:
  static constexpr std::size_t kDefaultDim = 128;

  KeypointSet() = default;

  explicit KeypointSet(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return;
    dim_ = rows.front().size();
    if (dim_ == 0) throw ValidationError({"keypoint descriptors must have dimension >= 1"});
    data_.reserve(rows.size() * dim_);
    for (const auto& r : rows) {
      if (r.size() != dim_)
        throw ValidationError({"keypoint descriptors must share one dimension"});
      for (double v : r) {
        if (!std::isfinite(v)) throw ValidationError({"keypoint descriptor has non-finite component"});
        data_.push_back(v);
      }
    }
  }

  std::size_t count() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> operator[](std::size_t i) const noexcept {
    return {data_.data() + i * dim_, dim_};
  }

  std::vector<std::vector<double>> rows() const {
    std::vector<std::vector<double>> out;
    out.reserve(count());
    for (std::size_t i = 0; i < count(); ++i) {
      auto r = (*this)[i];
      out.emplace_back(r.begin(), r.end());
    }
    return out;
  }

  friend bool operator==(const KeypointSet&, const KeypointSet&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

struct Submission {
  std::string submission_id;
  std::string task_id;
  std::string worker_id;
  Timestamp captured_at = 0;
  GeoPoint location;
  KeypointSet keypoints;
  std::vector<double> global_feature;
  std::optional<std::string> thumbnail_ref;

  friend bool operator==(const Submission&, const Submission&) = default;
};

enum class LayerKind { Time, Position, Visual };

/// TIME thresholds are seconds, POSITION kilometres, VISUAL a minimum number
/// of matched keypoints.
struct LayerSpec {
  LayerKind kind = LayerKind::Time;
  double threshold = 0.0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class TaskMode { Online, Offline };
enum class RepresentativePolicy { First, Last };
enum class TaskStatus { Open, Closed };

struct Task {
  std::string task_id;
  std::string name;
  TaskMode mode = TaskMode::Online;
  std::optional<ClassId> expected_class;
  std::vector<LayerSpec> layers;
  Timestamp opened_at = 0;
  Timestamp deadline = 0;
  RepresentativePolicy representative_policy = RepresentativePolicy::Last;
  TaskStatus status = TaskStatus::Open;

  std::size_t depth() const noexcept { return layers.size(); }

  friend bool operator==(const Task&, const Task&) = default;
};

enum class Decision { Accepted, RejectedFalse, Deferred };

struct Prediction {
  ClassId predicted_class = 0;
  double confidence = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct Verdict {
  std::string submission_id;
  ClassId predicted_class = 0;
  double confidence = 0.0;
  Decision decision = Decision::Deferred;
  std::string reason;  // empty unless the decision needs explaining

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct AggregationReport {
  std::string task_id;
  ClassId determined_class = 0;
  bool no_event = false;
  std::vector<std::string> representatives;
  std::vector<std::size_t> group_sizes;
  double redundancy_ratio = 0.0;
  std::size_t total_accepted = 0;
  std::size_t rejected_false = 0;

  friend bool operator==(const AggregationReport&, const AggregationReport&) = default;
};

/// Fraction of accepted submissions that are not forwarded.
inline double redundancy_ratio(std::size_t total_accepted, std::size_t representatives) noexcept {
  if (total_accepted == 0) return 0.0;
  return static_cast<double>(total_accepted - representatives) /
         static_cast<double>(total_accepted);
}

// ---------------------------------------------------------------------------
// Enum names as they appear on the wire.

inline std::string_view to_string(LayerKind k) noexcept {
  switch (k) {
    case LayerKind::Time: return "TIME";
    case LayerKind::Position: return "POSITION";
    case LayerKind::Visual: return "VISUAL";
  }
  return "?";
}

inline std::string_view to_string(TaskMode m) noexcept {
  return m == TaskMode::Online ? "ONLINE" : "OFFLINE";
}

inline std::string_view to_string(RepresentativePolicy p) noexcept {
  return p == RepresentativePolicy::First ? "FIRST" : "LAST";
}

inline std::string_view to_string(TaskStatus s) noexcept {
  return s == TaskStatus::Open ? "OPEN" : "CLOSED";
}

inline std::string_view to_string(Decision d) noexcept {
  switch (d) {
    case Decision::Accepted: return "ACCEPTED";
    case Decision::RejectedFalse: return "REJECTED_FALSE";
    case Decision::Deferred: return "DEFERRED";
  }
  return "?";
}

inline std::optional<LayerKind> parse_layer_kind(std::string_view s) noexcept {
  if (s == "TIME") return LayerKind::Time;
  if (s == "POSITION") return LayerKind::Position;
  if (s == "VISUAL") return LayerKind::Visual;
  return std::nullopt;
}

inline std::optional<TaskMode> parse_mode(std::string_view s) noexcept {
  if (s == "ONLINE") return TaskMode::Online;
  if (s == "OFFLINE") return TaskMode::Offline;
  return std::nullopt;
}

inline std::optional<RepresentativePolicy> parse_policy(std::string_view s) noexcept {
  if (s == "FIRST") return RepresentativePolicy::First;
  if (s == "LAST") return RepresentativePolicy::Last;
  return std::nullopt;
}

inline std::optional<TaskStatus> parse_status(std::string_view s) noexcept {
  if (s == "OPEN") return TaskStatus::Open;
  if (s == "CLOSED") return TaskStatus::Closed;
  return std::nullopt;
}

inline std::optional<Decision> parse_decision(std::string_view s) noexcept {
  if (s == "ACCEPTED") return Decision::Accepted;
  if (s == "REJECTED_FALSE") return Decision::RejectedFalse;
  if (s == "DEFERRED") return Decision::Deferred;
  return std::nullopt;
}

}  // namespace photoreport
