#pragma once

// The aggregation tree.
//
// A tree over D constraint layers has a bare root at layer 0, one level of
// nodes per constraint (layers 1..D), and leaf groups of sibling submissions
// below layer D. Every node below the root is anchored at the first
// submission routed through it and never re-anchored; a new submission
// descends by matching each layer's predicate against the children's
// anchors, taking the closest match (oldest child on ties) or opening a new
// child when nothing matches.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "photoreport/codec.hpp"
#include "photoreport/domain.hpp"
#include "photoreport/geo.hpp"
#include "photoreport/keypoints.hpp"

namespace photoreport {

struct MatchParams {
  double ratio = kDefaultRatio;
  double earth_radius_km = kEarthRadiusKm;

  friend bool operator==(const MatchParams&, const MatchParams&) = default;
};

/// Distance between two submissions on one layer, or nullopt when the
/// layer's predicate says they are not similar. Smaller is closer; the visual
/// distance is the negated match count.
inline std::optional<double> layer_distance(const LayerSpec& layer, const Submission& anchor,
                                            const Submission& incoming, const MatchParams& params) {
  switch (layer.kind) {
    case LayerKind::Time: {
      if (!similar_time(anchor.captured_at, incoming.captured_at, layer.threshold)) return std::nullopt;
      const auto diff = anchor.captured_at - incoming.captured_at;
      return static_cast<double>(diff < 0 ? -diff : diff);
    }
    case LayerKind::Position: {
      const double km = haversine_km(anchor.location, incoming.location, params.earth_radius_km);
      if (km > layer.threshold) return std::nullopt;
      return km;
    }
    case LayerKind::Visual: {
      const auto matches = match_keypoints(incoming.keypoints, anchor.keypoints, params.ratio);
      if (static_cast<double>(matches) < layer.threshold) return std::nullopt;
      return -static_cast<double>(matches);
    }
  }
  return std::nullopt;
}

/// Similarity of two submissions under one layer, symmetrised for the
/// asymmetric visual matcher by OR-ing both directions.
inline bool similar_under(const LayerSpec& layer, const Submission& a, const Submission& b,
                          const MatchParams& params) {
  if (layer_distance(layer, a, b, params)) return true;
  return layer.kind == LayerKind::Visual && layer_distance(layer, b, a, params).has_value();
}

/// Route of one submission: the child ordinal chosen at each layer 1..D and
/// the index of the leaf group it joined.
struct LeafPath {
  std::vector<std::size_t> branch;
  std::size_t group = 0;

  friend bool operator==(const LeafPath&, const LeafPath&) = default;
};

struct InsertionRecord {
  std::string submission_id;
  LeafPath path;

  friend bool operator==(const InsertionRecord&, const InsertionRecord&) = default;
};

struct Handover {
  std::vector<std::string> representatives;
  std::vector<std::size_t> group_sizes;
  double redundancy_ratio = 0.0;
};

class ATree {
 public:
  ATree() : ATree("", {LayerSpec{}}) {}

  ATree(std::string task_id, std::vector<LayerSpec> layers, MatchParams params = {})
      : task_id_(std::move(task_id)), layers_(std::move(layers)), params_(params) {
    if (layers_.empty()) throw std::invalid_argument("aggregation tree needs at least one layer");
    nodes_.push_back(Node{0, std::nullopt, {}, std::nullopt});
  }

  const std::string& task_id() const noexcept { return task_id_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t size() const noexcept { return members_.size(); }
  std::size_t group_count() const noexcept { return groups_.size(); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  const std::vector<InsertionRecord>& insertion_log() const noexcept { return log_; }
  bool sealed() const noexcept { return sealed_; }

  /// Rejects any further insertion; used when the owning task closes.
  void seal() noexcept { sealed_ = true; }

  LeafPath insert(const Submission& s) {
    if (sealed_) throw std::logic_error("insert into closed task " + task_id_);
    const std::size_t member = members_.size();
    members_.push_back(s);

    LeafPath path;
    std::size_t node = 0;
    for (std::size_t d = 1; d <= depth(); ++d) {
      const LayerSpec& layer = layers_[d - 1];
      std::optional<std::size_t> chosen;
      double best = 0.0;
      const auto& children = nodes_[node].children;
      for (std::size_t i = 0; i < children.size(); ++i) {
        const Node& child = nodes_[children[i]];
        auto dist = layer_distance(layer, members_[*child.anchor], s, params_);
        if (dist && (!chosen || *dist < best)) {
          chosen = i;
          best = *dist;
        }
      }
      if (!chosen) {
        chosen = children.size();
        const std::size_t fresh = nodes_.size();
        nodes_.push_back(Node{d, member, {}, std::nullopt});
        nodes_[node].children.push_back(fresh);
      }
      path.branch.push_back(*chosen);
      node = nodes_[node].children[*chosen];
    }

    if (!nodes_[node].group) {
      nodes_[node].group = groups_.size();
      groups_.emplace_back();
    }
    path.group = *nodes_[node].group;
    groups_[path.group].push_back(member);
    log_.push_back({s.submission_id, path});
    return path;
  }

  /// One representative per leaf group, in group creation order.
  Handover handover(RepresentativePolicy policy) const {
    Handover h;
    for (const auto& g : groups_) {
      const std::size_t pick = policy == RepresentativePolicy::First ? g.front() : g.back();
      h.representatives.push_back(members_[pick].submission_id);
      h.group_sizes.push_back(g.size());
    }
    h.redundancy_ratio = redundancy_ratio(members_.size(), groups_.size());
    return h;
  }

  /// Leaf groups as submission ids in arrival order, groups in creation order.
  std::vector<std::vector<std::string>> partition() const {
    std::vector<std::vector<std::string>> out;
    for (const auto& g : groups_) {
      auto& ids = out.emplace_back();
      for (auto m : g) ids.push_back(members_[m].submission_id);
    }
    return out;
  }

  /// Anchors of the nodes at `layer` (1-based), in node creation order.
  std::vector<std::string> anchors_at(std::size_t layer) const {
    std::vector<std::string> out;
    for (const auto& n : nodes_)
      if (n.layer == layer && n.anchor) out.push_back(members_[*n.anchor].submission_id);
    return out;
  }

  /// Accepted submissions in insertion order.
  const std::vector<Submission>& members() const noexcept { return members_; }

  /// Nested export: {layer_index, anchor, children}; nodes at layer D hold a
  /// single leaf record {layer_index: D+1, members: [...]}.
  Json snapshot() const {
    Json layers = Json::array();
    for (const auto& l : layers_) layers.push_back(encode(l));
    Json log = Json::array();
    for (const auto& r : log_)
      log.push_back(Json{{"submission_id", r.submission_id}, {"path", r.path.branch}, {"group", r.path.group}});
    return Json{{"task_id", task_id_},
                {"layers", std::move(layers)},
                {"group_count", groups_.size()},
                {"node_count", nodes_.size()},
                {"root", node_json(0)},
                {"insertion_log", std::move(log)}};
  }

  friend bool operator==(const ATree& a, const ATree& b) {
    return a.task_id_ == b.task_id_ && a.layers_ == b.layers_ && a.params_ == b.params_ &&
           a.nodes_ == b.nodes_ && a.groups_ == b.groups_ && a.log_ == b.log_ &&
           a.members_ == b.members_ && a.sealed_ == b.sealed_;
  }

 private:
  struct Node {
    std::size_t layer = 0;
    std::optional<std::size_t> anchor;  // index into members_
    std::vector<std::size_t> children;  // indices into nodes_, creation order
    std::optional<std::size_t> group;   // set on layer-D nodes once a leaf exists

    friend bool operator==(const Node&, const Node&) = default;
  };

  Json node_json(std::size_t index) const {
    const Node& n = nodes_[index];
    Json j{{"layer_index", n.layer},
           {"anchor", n.anchor ? Json(members_[*n.anchor].submission_id) : Json(nullptr)}};
    Json children = Json::array();
    for (auto c : n.children) children.push_back(node_json(c));
    if (n.group) {
      Json ids = Json::array();
      for (auto m : groups_[*n.group]) ids.push_back(members_[m].submission_id);
      children.push_back(Json{{"layer_index", depth() + 1}, {"group", *n.group}, {"members", std::move(ids)}});
    }
    j["children"] = std::move(children);
    return j;
  }

  std::string task_id_;
  std::vector<LayerSpec> layers_;
  MatchParams params_;
  std::vector<Node> nodes_;
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<Submission> members_;
  std::vector<InsertionRecord> log_;
  bool sealed_ = false;
};

}  // namespace photoreport
