#pragma once

// Photo type prediction: classify each submission, then either judge it
// against the task's known event class (online) or defer it to a plurality
// vote at task close (offline).

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "photoreport/domain.hpp"

namespace photoreport {

/// Nearest-centroid reference classifier. Centroids come from configuration
/// and are never updated at run time.
class ClassifierModel {
 public:
  static constexpr std::size_t kDefaultFeatureDim = 64;

  ClassifierModel(const ClassRegistry& registry, std::map<ClassId, std::vector<double>> centroids,
                  double temperature = 1.0)
      : centroids_(std::move(centroids)), temperature_(temperature) {
    std::vector<std::string> issues;
    if (!(temperature_ > 0.0) || !std::isfinite(temperature_))
      issues.emplace_back("temperature must be positive");
    if (centroids_.size() != registry.size()) issues.emplace_back("need one centroid per registered class");
    for (const auto& c : registry.classes())
      if (!centroids_.contains(c.id)) issues.push_back("missing centroid for class " + c.name);
    for (const auto& [id, v] : centroids_) {
      if (!registry.contains(id)) issues.push_back("centroid for unregistered class " + std::to_string(id));
      if (v.empty() || v.size() != centroids_.begin()->second.size())
        issues.emplace_back("centroids must share one non-zero dimension");
      for (double x : v)
        if (!std::isfinite(x)) {
          issues.emplace_back("centroid has non-finite component");
          break;
        }
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
    dim_ = centroids_.begin()->second.size();
  }

  /// Class `k` (in id order) sits at `spacing` along axis k; all pairwise
  /// centroid distances are spacing * sqrt(2).
  static ClassifierModel axis_aligned(const ClassRegistry& registry,
                                      std::size_t dim = kDefaultFeatureDim, double spacing = 10.0,
                                      double temperature = 1.0) {
    if (dim < registry.size()) throw std::invalid_argument("feature dimension smaller than class count");
    std::map<ClassId, std::vector<double>> centroids;
    std::size_t axis = 0;
    for (const auto& c : registry.classes()) {
      std::vector<double> v(dim, 0.0);
      v[axis++] = spacing;
      centroids.emplace(c.id, std::move(v));
    }
    return ClassifierModel(registry, std::move(centroids), temperature);
  }

  std::size_t dim() const noexcept { return dim_; }
  double temperature() const noexcept { return temperature_; }
  const std::map<ClassId, std::vector<double>>& centroids() const noexcept { return centroids_; }

 private:
  std::map<ClassId, std::vector<double>> centroids_;
  double temperature_ = 1.0;
  std::size_t dim_ = 0;
};

/// Nearest centroid wins (ties: smallest class id). Confidence is the softmax
/// of negative distances over all classes, evaluated at the winner.
inline Prediction classify(const ClassifierModel& model, std::span<const double> feature) {
  if (feature.size() != model.dim()) throw std::invalid_argument("feature dimension mismatch");
  for (double x : feature)
    if (!std::isfinite(x)) throw std::invalid_argument("feature has non-finite component");

  std::vector<double> dist;
  dist.reserve(model.centroids().size());
  ClassId winner = 0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [id, c] : model.centroids()) {  // std::map iterates in id order
    double acc = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double d = feature[i] - c[i];
      acc += d * d;
    }
    const double d = std::sqrt(acc);
    dist.push_back(d);
    if (d < best) {
      best = d;
      winner = id;
    }
  }
  // Shift by the minimum distance so the winner's term is exp(0) = 1.
  double denom = 0.0;
  for (double d : dist) denom += std::exp(-(d - best) / model.temperature());
  return {winner, 1.0 / denom};
}

inline Verdict judge_online(const Task& task, std::string submission_id, const Prediction& p) {
  if (task.mode != TaskMode::Online) throw std::logic_error("judge_online called on an OFFLINE task");
  const bool match = task.expected_class && p.predicted_class == *task.expected_class;
  return {std::move(submission_id), p.predicted_class, p.confidence,
          match ? Decision::Accepted : Decision::RejectedFalse, ""};
}

inline Verdict judge_offline_defer(const Task& task, std::string submission_id, const Prediction& p) {
  if (task.mode != TaskMode::Offline) throw std::logic_error("offline deferral on an ONLINE task");
  if (task.status == TaskStatus::Closed) throw std::logic_error("task " + task.task_id + " is closed");
  return {std::move(submission_id), p.predicted_class, p.confidence, Decision::Deferred, ""};
}

struct OfflineResolution {
  ClassId determined_class = 0;
  bool no_event = false;
  std::vector<Verdict> verdicts;
};

/// Plurality vote over deferred predictions. Ties go to the larger summed
/// confidence, then to the smaller class id. A normal-class win means no
/// event: every verdict is rejected.
inline OfflineResolution resolve_offline(std::span<const Verdict> deferred, const ClassRegistry& registry) {
  struct Tally {
    std::size_t count = 0;
    double confidence = 0.0;
  };
  std::map<ClassId, Tally> tally;
  for (const auto& v : deferred) {
    auto& t = tally[v.predicted_class];
    ++t.count;
    t.confidence += v.confidence;
  }

  OfflineResolution out;
  out.determined_class = registry.normal_id();
  const Tally* best = nullptr;
  for (const auto& [id, t] : tally) {  // ascending id, so strict comparisons keep the smaller id
    if (best == nullptr || t.count > best->count ||
        (t.count == best->count && t.confidence > best->confidence)) {
      best = &t;
      out.determined_class = id;
    }
  }
  out.no_event = registry.is_normal(out.determined_class);

  out.verdicts.assign(deferred.begin(), deferred.end());
  for (auto& v : out.verdicts)
    v.decision = !out.no_event && v.predicted_class == out.determined_class ? Decision::Accepted
                                                                             : Decision::RejectedFalse;
  return out;
}

}  // namespace photoreport
