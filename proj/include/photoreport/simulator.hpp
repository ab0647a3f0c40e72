#pragma once

// Synthetic worker streams with known ground truth, and an end-to-end
// evaluation harness that replays them through the platform.
//
// A scenario is a list of clusters, each an intended duplicate group sharing a
// time centre, a place and (through its visual group) a base descriptor set.
// Per-submission jitter keeps members similar; the generator refuses specs
// where some pair of clusters is neither clearly similar nor clearly distinct
// on a layer, since only then is the intended grouping independent of stream
// and layer order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "photoreport/codec.hpp"
#include "photoreport/oracle.hpp"
#include "photoreport/platform.hpp"
#include "photoreport/ptp.hpp"

namespace photoreport {

struct ClusterPlan {
  std::size_t size = 1;
  GeoPoint center;
  Timestamp time = 0;
  std::size_t visual_group = 0;  // clusters sharing a group share base descriptors
  std::vector<std::vector<double>> base_descriptors;  // generated when empty

  friend bool operator==(const ClusterPlan&, const ClusterPlan&) = default;
};

struct Jitter {
  double seconds = 30.0;
  double km = 0.05;
  double descriptor = 0.01;

  friend bool operator==(const Jitter&, const Jitter&) = default;
};

struct ScenarioSpec {
  std::uint64_t seed = 1;
  std::size_t n_workers = 8;
  std::optional<std::size_t> n_submissions;  // checked against the cluster plan when given
  ClassId true_class = 0;
  double false_rate = 0.0;
  TaskMode mode = TaskMode::Online;
  std::vector<LayerSpec> layers = {{LayerKind::Time, 300.0}, {LayerKind::Position, 0.5}, {LayerKind::Visual, 10.0}};
  RepresentativePolicy policy = RepresentativePolicy::Last;
  std::vector<ClusterPlan> clusters;
  Jitter jitter;
  double safety_factor = 2.0;
  std::size_t descriptors_per_photo = 20;
  std::size_t descriptor_dim = KeypointSet::kDefaultDim;
  double feature_noise = 0.25;  // per-component bound around a class centroid
  bool shuffle = true;

  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.size;
    return n;
  }
};

struct LabeledSubmission {
  Submission submission;
  std::size_t cluster = 0;
  ClassId intended_class = 0;
  bool injected_false = false;
};

class InfeasibleScenario : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline constexpr Timestamp kScenarioEpoch = 1'700'000'000;

/// Moves `p` by (north_km, east_km) on a locally flat Earth.
inline GeoPoint offset_km(const GeoPoint& p, double north_km, double east_km, double radius_km) {
  const double dlat = north_km / radius_km * 180.0 / std::numbers::pi;
  const double dlon = east_km / (radius_km * std::cos(deg_to_rad(p.lat()))) * 180.0 / std::numbers::pi;
  double lon = p.lon() + dlon;
  if (lon > 180.0) lon -= 360.0;
  if (lon <= -180.0) lon += 360.0;
  return GeoPoint(std::clamp(p.lat() + dlat, -90.0, 90.0), lon);
}

inline std::optional<double> layer_threshold(const std::vector<LayerSpec>& layers, LayerKind kind) {
  for (const auto& l : layers)
    if (l.kind == kind) return l.threshold;
  return std::nullopt;
}

enum class Relation { Close, Far, Ambiguous };

inline Relation classify_gap(double centre_gap, double spread, double threshold, double safety) {
  if (centre_gap + spread <= threshold / safety) return Relation::Close;
  if (centre_gap - spread >= threshold * safety) return Relation::Far;
  return Relation::Ambiguous;
}

}  // namespace detail

struct GenerateOptions {
  /// When false the margin checks are skipped; used for adversarial streams
  /// whose grouping is measured rather than asserted.
  bool enforce_margins = true;
};

/// Deterministic for a fixed spec. Returned in stream order.
inline std::vector<LabeledSubmission> generate(const ScenarioSpec& spec, const ClassifierModel& model,
                                               const ClassRegistry& registry, GenerateOptions options = {}) {
  const double radius = kEarthRadiusKm;
  std::vector<std::string> problems;
  if (spec.clusters.empty()) problems.emplace_back("scenario has no clusters");
  if (spec.n_submissions && *spec.n_submissions != spec.total())
    problems.emplace_back("n_submissions differs from the sum of cluster sizes");
  for (const auto& c : spec.clusters)
    if (c.size == 0) problems.emplace_back("empty cluster");
  if (!(spec.false_rate >= 0.0 && spec.false_rate <= 1.0)) problems.emplace_back("false_rate outside [0,1]");
  if (!registry.contains(spec.true_class)) problems.emplace_back("true_class is not registered");
  if (spec.mode == TaskMode::Online && registry.is_normal(spec.true_class))
    problems.emplace_back("online scenario needs an event class");
  if (spec.safety_factor < 2.0) problems.emplace_back("safety_factor must be >= 2");
  if (spec.n_workers == 0) problems.emplace_back("n_workers must be positive");
  if (spec.descriptors_per_photo == 0 || spec.descriptor_dim == 0)
    problems.emplace_back("descriptor shape must be non-empty");
  if (model.dim() == 0) problems.emplace_back("model has no dimension");

  if (options.enforce_margins && problems.empty()) {
    const double s = spec.safety_factor;
    // Features: a jittered feature must stay nearest its own centroid.
    double min_gap = std::numeric_limits<double>::infinity();
    for (const auto& [a, ca] : model.centroids())
      for (const auto& [b, cb] : model.centroids())
        if (a < b) min_gap = std::min(min_gap, euclidean(ca, cb));
    if (spec.feature_noise * std::sqrt(static_cast<double>(model.dim())) * s > min_gap / 2.0)
      problems.emplace_back("feature_noise too large for the class centroid spacing");

    const auto tau = detail::layer_threshold(spec.layers, LayerKind::Time);
    const auto delta = detail::layer_threshold(spec.layers, LayerKind::Position);
    if (tau && 2.0 * spec.jitter.seconds * s > *tau) problems.emplace_back("time jitter not inside threshold");
    if (delta && 2.0 * spec.jitter.km * s > *delta) problems.emplace_back("position jitter not inside threshold");

    const std::size_t k = spec.clusters.size();
    using detail::Relation;
    std::vector<std::vector<Relation>> rel_t(k, std::vector<Relation>(k, Relation::Close));
    auto rel_p = rel_t;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) {
        const auto& a = spec.clusters[i];
        const auto& b = spec.clusters[j];
        bool separated = false;
        if (tau) {
          const double gap = std::abs(static_cast<double>(a.time - b.time));
          rel_t[i][j] = rel_t[j][i] = detail::classify_gap(gap, 2.0 * spec.jitter.seconds, *tau, s);
          separated |= rel_t[i][j] == Relation::Far;
        }
        if (delta) {
          const double gap = haversine_km(a.center, b.center, radius);
          rel_p[i][j] = rel_p[j][i] = detail::classify_gap(gap, 2.0 * spec.jitter.km, *delta, s);
          separated |= rel_p[i][j] == Relation::Far;
        }
        if (detail::layer_threshold(spec.layers, LayerKind::Visual)) separated |= a.visual_group != b.visual_group;
        if (rel_t[i][j] == Relation::Ambiguous || rel_p[i][j] == Relation::Ambiguous)
          problems.push_back("clusters " + std::to_string(i) + " and " + std::to_string(j) +
                             " are inside neither the similarity nor the separation margin");
        if (!separated)
          problems.push_back("clusters " + std::to_string(i) + " and " + std::to_string(j) +
                             " are not separated on any layer");
      }
    // Closeness has to be an equivalence or the grouping depends on order.
    for (const auto* rel : {&rel_t, &rel_p})
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
          for (std::size_t c = 0; c < k; ++c)
            if ((*rel)[a][b] == Relation::Close && (*rel)[b][c] == Relation::Close &&
                (*rel)[a][c] != Relation::Close)
              problems.push_back("closeness between clusters is not transitive");
  }
  if (!problems.empty()) {
    std::sort(problems.begin(), problems.end());
    problems.erase(std::unique(problems.begin(), problems.end()), problems.end());
    std::string msg = "infeasible scenario:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw InfeasibleScenario(msg);
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto symmetric = [&](double bound) { return bound * (2.0 * unit(rng) - 1.0); };

  // Base descriptor sets per visual group.
  std::map<std::size_t, std::vector<std::vector<double>>> bases;
  for (const auto& c : spec.clusters) {
    if (!c.base_descriptors.empty()) {
      bases.emplace(c.visual_group, c.base_descriptors);
      continue;
    }
    if (bases.contains(c.visual_group)) continue;
    std::vector<std::vector<double>> base(spec.descriptors_per_photo, std::vector<double>(spec.descriptor_dim));
    for (auto& row : base)
      for (auto& x : row) x = unit(rng);
    bases.emplace(c.visual_group, std::move(base));
  }

  std::vector<LabeledSubmission> out;
  out.reserve(spec.total());
  std::size_t serial = 0;
  for (std::size_t ci = 0; ci < spec.clusters.size(); ++ci) {
    const auto& c = spec.clusters[ci];
    const auto& base = bases.at(c.visual_group);
    for (std::size_t m = 0; m < c.size; ++m) {
      LabeledSubmission ls;
      ls.cluster = ci;
      ls.intended_class = spec.true_class;
      Submission& s = ls.submission;
      ++serial;
      std::ostringstream id;
      id << "s" << (serial < 10 ? "00" : serial < 100 ? "0" : "") << serial;
      s.submission_id = id.str();
      s.worker_id = "w" + std::to_string((serial - 1) % spec.n_workers + 1);
      s.captured_at = c.time + static_cast<Timestamp>(std::llround(symmetric(spec.jitter.seconds)));
      const double half = spec.jitter.km / std::numbers::sqrt2;
      s.location = detail::offset_km(c.center, symmetric(half), symmetric(half), radius);
      auto rows = base;
      for (auto& row : rows)
        for (auto& x : row) x += symmetric(spec.jitter.descriptor);
      s.keypoints = KeypointSet(rows);
      out.push_back(std::move(ls));
    }
  }

  // False submissions keep their cluster's context but look like another class.
  const auto n_false = static_cast<std::size_t>(std::llround(spec.false_rate * static_cast<double>(out.size())));
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<ClassId> others;
  for (const auto& c : registry.classes())
    if (c.id != spec.true_class) others.push_back(c.id);
  for (std::size_t i = 0; i < n_false && !others.empty(); ++i) {
    auto& ls = out[order[i]];
    ls.injected_false = true;
    ls.intended_class = others[static_cast<std::size_t>(unit(rng) * static_cast<double>(others.size())) % others.size()];
  }

  for (auto& ls : out) {
    const auto& centroid = model.centroids().at(ls.intended_class);
    ls.submission.global_feature.resize(centroid.size());
    for (std::size_t i = 0; i < centroid.size(); ++i)
      ls.submission.global_feature[i] = centroid[i] + symmetric(spec.feature_noise);
  }

  if (options.enforce_margins) {
    if (auto k_min = detail::layer_threshold(spec.layers, LayerKind::Visual)) {
      const MatchParams params;
      for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = 0; j < out.size(); ++j) {
          if (i == j) continue;
          const auto matches = static_cast<double>(
              match_keypoints(out[i].submission.keypoints, out[j].submission.keypoints, params.ratio));
          const bool same = spec.clusters[out[i].cluster].visual_group == spec.clusters[out[j].cluster].visual_group;
          if (same ? matches < *k_min : matches > *k_min / 2.0)
            throw InfeasibleScenario("infeasible scenario: descriptor jitter breaks the visual margin between " +
                                     out[i].submission.submission_id + " and " + out[j].submission.submission_id);
        }
    }
  }

  if (spec.shuffle) std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// Task request covering the stream's capture window.
inline Json scenario_task_request(const ScenarioSpec& spec, const std::vector<LabeledSubmission>& stream,
                                  const std::string& task_id = "sim") {
  Timestamp lo = detail::kScenarioEpoch;
  Timestamp hi = detail::kScenarioEpoch + 1;
  if (!stream.empty()) {
    lo = hi = stream.front().submission.captured_at;
    for (const auto& ls : stream) {
      lo = std::min(lo, ls.submission.captured_at);
      hi = std::max(hi, ls.submission.captured_at);
    }
  }
  Json layers = Json::array();
  for (const auto& l : spec.layers) layers.push_back(encode(l));
  Json j{{"task_id", task_id},
         {"name", "simulated scenario " + std::to_string(spec.seed)},
         {"mode", to_string(spec.mode)},
         {"layers", std::move(layers)},
         {"opened_at", lo - 1},
         {"deadline", hi + 1},
         {"representative_policy", to_string(spec.policy)}};
  if (spec.mode == TaskMode::Online) j["expected_class"] = spec.true_class;
  return j;
}

struct Metrics {
  std::size_t submissions = 0;
  std::size_t accepted = 0;
  std::size_t rejected_false = 0;
  std::size_t injected_false = 0;
  std::size_t true_rejected = 0;
  double false_rejection_accuracy = 1.0;
  std::size_t groups_found = 0;
  std::size_t ground_truth_groups = 0;
  double redundancy_ratio = 0.0;
  std::optional<std::size_t> oracle_size;
  std::optional<double> coverage_ratio;
  ClassId determined_class = 0;
  std::vector<std::vector<std::string>> partition;  // leaf groups, canonicalised

  Json to_json() const {
    return Json{{"submissions", submissions},
                {"accepted", accepted},
                {"rejected_false", rejected_false},
                {"injected_false", injected_false},
                {"true_rejected", true_rejected},
                {"false_rejection_accuracy", false_rejection_accuracy},
                {"groups_found", groups_found},
                {"ground_truth_groups", ground_truth_groups},
                {"redundancy_ratio", redundancy_ratio},
                {"oracle_size", oracle_size ? Json(*oracle_size) : Json(nullptr)},
                {"coverage_ratio", coverage_ratio ? Json(*coverage_ratio) : Json(nullptr)},
                {"determined_class", determined_class}};
  }

  std::string table() const {
    std::ostringstream os;
    auto row = [&](const std::string& k, const std::string& v) {
      os << "  " << k << std::string(k.size() < 26 ? 26 - k.size() : 1, ' ') << v << "\n";
    };
    row("submissions", std::to_string(submissions));
    row("accepted", std::to_string(accepted));
    row("rejected_false", std::to_string(rejected_false));
    row("injected_false", std::to_string(injected_false));
    row("true_rejected", std::to_string(true_rejected));
    row("false_rejection_accuracy", std::to_string(false_rejection_accuracy));
    row("groups_found", std::to_string(groups_found));
    row("ground_truth_groups", std::to_string(ground_truth_groups));
    row("redundancy_ratio", std::to_string(redundancy_ratio));
    row("oracle_size", oracle_size ? std::to_string(*oracle_size) : "n/a");
    row("coverage_ratio", coverage_ratio ? std::to_string(*coverage_ratio) : "n/a");
    row("determined_class", std::to_string(determined_class));
    return os.str();
  }
};

/// Runs the stream through a fresh in-memory platform (prediction, then
/// aggregation per the task's mode) and scores the result against the
/// generator's ground truth and, when small enough, the exact oracle.
inline Metrics evaluate(const ScenarioSpec& spec, const std::vector<LabeledSubmission>& stream,
                        const ClassifierModel& model, const ClassRegistry& registry, const Config& config = {}) {
  const Json request = scenario_task_request(spec, stream);
  const Timestamp start = request.at("opened_at").get<Timestamp>();
  Platform platform(registry, std::make_shared<ReferencePredictor>(model), config, [start] { return start; });
  const std::string task_id = platform.create_task(request).task.task_id;

  for (const auto& ls : stream) {
    Json payload = encode(ls.submission);
    payload["task_id"] = task_id;
    platform.submit(task_id, payload);
  }
  const AggregationReport report = platform.close_task(task_id);
  const TaskState st = platform.task_state(task_id);

  Metrics m;
  m.submissions = stream.size();
  m.accepted = report.total_accepted;
  m.rejected_false = report.rejected_false;
  m.groups_found = report.representatives.size();
  m.redundancy_ratio = report.redundancy_ratio;
  m.determined_class = report.determined_class;

  std::map<std::string, Decision> decision;
  for (const auto& v : st.verdicts) decision[v.submission_id] = v.decision;
  std::size_t caught = 0;
  std::set<std::size_t> truth_clusters;
  for (const auto& ls : stream) {
    const bool rejected = decision.at(ls.submission.submission_id) == Decision::RejectedFalse;
    if (ls.injected_false) {
      ++m.injected_false;
      if (rejected) ++caught;
    } else {
      if (rejected) ++m.true_rejected;
      truth_clusters.insert(ls.cluster);
    }
  }
  m.false_rejection_accuracy =
      m.injected_false == 0 ? 1.0 : static_cast<double>(caught) / static_cast<double>(m.injected_false);
  m.ground_truth_groups = report.no_event ? 0 : truth_clusters.size();

  const auto& members = st.tree.members();
  if (!members.empty() && members.size() <= kMaxOracleVertices) {
    const auto g = build_graph(members, st.task.layers, config.match_params());
    m.oracle_size = max_independent_set(g).size;
    m.coverage_ratio = coverage_ratio(m.groups_found, *m.oracle_size);
  }

  m.partition = st.tree.partition();
  for (auto& group : m.partition) std::sort(group.begin(), group.end());
  std::sort(m.partition.begin(), m.partition.end());
  return m;
}

/// A random scenario that satisfies every margin: clusters sit in a few
/// well-separated time slots and places, and share base descriptors only when
/// they already differ in time or place.
inline ScenarioSpec random_margin_scenario(std::uint64_t seed, std::size_t max_submissions = 24) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 1);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

  ScenarioSpec spec;
  spec.seed = seed;
  spec.true_class = static_cast<ClassId>(pick(3));
  const std::size_t clusters = 1 + pick(6);
  const GeoPoint places[] = {{36.8065, 10.1815}, {36.8500, 10.1815}, {36.8065, 10.2500}, {36.7600, 10.1000}};

  std::size_t remaining = max_submissions;
  struct Slot {
    std::size_t time_bin, place, visual;
  };
  std::vector<Slot> used;
  for (std::size_t c = 0; c < clusters && remaining > 0; ++c) {
    Slot slot{};
    for (int attempt = 0; attempt < 64; ++attempt) {
      slot.time_bin = pick(3);
      slot.place = pick(4);
      slot.visual = 100 + c;  // own descriptors by default
      if (!used.empty() && pick(3) == 0) slot.visual = used[pick(used.size())].visual;
      // Shared descriptors are only safe when time or place already separates.
      bool ok = true;
      for (const auto& u : used)
        if (u.time_bin == slot.time_bin && u.place == slot.place && u.visual == slot.visual) ok = false;
      if (ok) break;
      slot.visual = 100 + c;
    }
    used.push_back(slot);
    const std::size_t size = std::min<std::size_t>(1 + pick(5), remaining);
    remaining -= size;
    ClusterPlan plan;
    plan.size = size;
    plan.center = places[slot.place];
    plan.time = detail::kScenarioEpoch + static_cast<Timestamp>(slot.time_bin) * 3600;
    plan.visual_group = slot.visual;
    spec.clusters.push_back(std::move(plan));
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Scenario files

inline ScenarioSpec decode_scenario(const Json& j, const ClassRegistry& registry) {
  ScenarioSpec s;
  s.seed = j.value("seed", s.seed);
  s.n_workers = j.value("n_workers", s.n_workers);
  if (j.contains("n_submissions")) s.n_submissions = j.at("n_submissions").get<std::size_t>();
  if (j.contains("true_class")) {
    const auto& tc = j.at("true_class");
    if (tc.is_string()) {
      auto id = registry.find(tc.get<std::string>());
      if (!id) throw ValidationError({"unknown true_class " + tc.dump()});
      s.true_class = *id;
    } else {
      s.true_class = tc.get<ClassId>();
    }
  }
  s.false_rate = j.value("false_rate", s.false_rate);
  if (j.contains("mode")) {
    auto m = parse_mode(j.at("mode").get<std::string>());
    if (!m) throw ValidationError({"unknown mode"});
    s.mode = *m;
  }
  if (j.contains("representative_policy")) {
    auto p = parse_policy(j.at("representative_policy").get<std::string>());
    if (!p) throw ValidationError({"unknown representative_policy"});
    s.policy = *p;
  }
  if (j.contains("layers")) {
    s.layers.clear();
    for (const auto& l : j.at("layers")) {
      auto kind = parse_layer_kind(l.at("kind").get<std::string>());
      if (!kind) throw ValidationError({"unknown layer kind"});
      s.layers.push_back({*kind, l.value("threshold", kDefaultMinMatches)});
    }
  }
  for (const auto& c : j.at("clusters")) {
    ClusterPlan p;
    p.size = c.at("size").get<std::size_t>();
    p.center = GeoPoint(c.at("center").at("lat").get<double>(), c.at("center").at("lon").get<double>());
    p.time = c.at("time").get<Timestamp>();
    p.visual_group = c.value("visual_group", s.clusters.size());
    if (c.contains("base_descriptors")) p.base_descriptors = c.at("base_descriptors").get<std::vector<std::vector<double>>>();
    s.clusters.push_back(std::move(p));
  }
  if (j.contains("jitter")) {
    const auto& jt = j.at("jitter");
    s.jitter.seconds = jt.value("seconds", s.jitter.seconds);
    s.jitter.km = jt.value("km", s.jitter.km);
    s.jitter.descriptor = jt.value("descriptor", s.jitter.descriptor);
  }
  s.safety_factor = j.value("safety_factor", s.safety_factor);
  s.descriptors_per_photo = j.value("descriptors_per_photo", s.descriptors_per_photo);
  s.descriptor_dim = j.value("descriptor_dim", s.descriptor_dim);
  s.feature_noise = j.value("feature_noise", s.feature_noise);
  s.shuffle = j.value("shuffle", s.shuffle);
  return s;
}

}  // namespace photoreport
