#pragma once

// The crowdsourcing platform: task lifecycle, submission ingestion, per-mode
// orchestration of prediction and aggregation, the append-only event log and
// recovery from it.
//
// Every state change is first appended to the log and then applied through
// the same deterministic apply_* functions that replay uses, so replaying a
// log prefix rebuilds exactly the state that prefix produced. Predictions are
// logged with their submission; replay never calls the predictor.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <unistd.h>

#include "photoreport/atree.hpp"
#include "photoreport/codec.hpp"
#include "photoreport/config.hpp"
#include "photoreport/predictor.hpp"
#include "photoreport/ptp.hpp"

namespace photoreport {

/// Failure surfaced to API callers, with an HTTP-style status.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, std::vector<std::string> details = {})
      : std::runtime_error(code), status_(status), code_(std::move(code)), details_(std::move(details)) {}

  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

  Json body() const { return Json{{"error", code_}, {"details", details_}}; }

 private:
  int status_;
  std::string code_;
  std::vector<std::string> details_;
};

struct Counters {
  std::size_t received = 0;
  std::size_t accepted = 0;
  std::size_t rejected_false = 0;
};

struct DeferredEntry {
  Submission submission;
  Verdict verdict;
};

/// Everything the platform knows about one task.
struct TaskState {
  Task task;
  ATree tree;
  std::vector<DeferredEntry> deferred;
  Counters counters;
  std::vector<Verdict> verdicts;  // arrival order; offline ones are rewritten at close
  std::optional<AggregationReport> report;
  std::unordered_set<std::string> submission_ids;

  Json snapshot() const {
    Json verdict_feed = Json::array();
    for (const auto& v : verdicts) verdict_feed.push_back(encode(v));
    return Json{{"task", encode(task)},
                {"counters",
                 {{"received", counters.received},
                  {"accepted", counters.accepted},
                  {"rejected_false", counters.rejected_false},
                  {"deferred", deferred.size()}}},
                {"tree", tree.snapshot()},
                {"verdicts", std::move(verdict_feed)},
                {"report", report ? encode(*report) : Json(nullptr)}};
  }
};

struct SubmitOutcome {
  Verdict verdict;
  std::optional<LeafPath> path;

  Json to_json() const {
    Json j = encode(verdict);
    if (path) j["group_path"] = Json{{"branch", path->branch}, {"group", path->group}};
    return j;
  }
};

// ---------------------------------------------------------------------------
// Deterministic state transitions, shared by live ingestion and replay.

inline TaskState apply_create(const Task& task, const MatchParams& params) {
  TaskState st{task, ATree(task.task_id, task.layers, params), {}, {}, {}, std::nullopt, {}};
  return st;
}

inline SubmitOutcome apply_submit(TaskState& st, const Submission& s, const PredictOutcome& prediction,
                                  const ClassRegistry& registry) {
  if (st.task.status == TaskStatus::Closed) throw std::logic_error("submit to closed task " + st.task.task_id);
  if (!st.submission_ids.insert(s.submission_id).second)
    throw std::logic_error("duplicate submission " + s.submission_id);
  ++st.counters.received;

  SubmitOutcome out;
  if (!prediction) {
    out.verdict = {s.submission_id, registry.normal_id(), 0.0, Decision::RejectedFalse, kPredictorUnavailable};
    ++st.counters.rejected_false;
  } else if (st.task.mode == TaskMode::Online) {
    out.verdict = judge_online(st.task, s.submission_id, *prediction);
    if (out.verdict.decision == Decision::Accepted) {
      out.path = st.tree.insert(s);
      ++st.counters.accepted;
    } else {
      ++st.counters.rejected_false;
    }
  } else {
    out.verdict = judge_offline_defer(st.task, s.submission_id, *prediction);
    st.deferred.push_back({s, out.verdict});
  }
  st.verdicts.push_back(out.verdict);
  return out;
}

/// Closes the task and produces its report. Offline tasks are voted on first
/// and the survivors replayed through the tree in original arrival order.
/// Closing a closed task returns the stored report.
inline const AggregationReport& apply_close(TaskState& st, const ClassRegistry& registry) {
  if (st.report) return *st.report;

  AggregationReport r;
  r.task_id = st.task.task_id;
  if (st.task.mode == TaskMode::Online) {
    r.determined_class = st.task.expected_class.value_or(registry.normal_id());
  } else {
    std::vector<Verdict> pending;
    pending.reserve(st.deferred.size());
    for (const auto& d : st.deferred) pending.push_back(d.verdict);
    auto resolution = resolve_offline(pending, registry);
    r.determined_class = resolution.determined_class;
    r.no_event = resolution.no_event;

    std::unordered_map<std::string, const Verdict*> final_by_id;
    for (std::size_t i = 0; i < st.deferred.size(); ++i) {
      const Verdict& v = resolution.verdicts[i];
      final_by_id.emplace(v.submission_id, &v);
      if (v.decision == Decision::Accepted) {
        st.tree.insert(st.deferred[i].submission);
        ++st.counters.accepted;
      } else {
        ++st.counters.rejected_false;
      }
    }
    for (auto& v : st.verdicts)
      if (auto it = final_by_id.find(v.submission_id); it != final_by_id.end()) v = *it->second;
    st.deferred.clear();
  }

  const Handover h = st.tree.handover(st.task.representative_policy);
  r.representatives = h.representatives;
  r.group_sizes = h.group_sizes;
  r.redundancy_ratio = h.redundancy_ratio;
  r.total_accepted = st.counters.accepted;
  r.rejected_false = st.counters.rejected_false;

  st.task.status = TaskStatus::Closed;
  st.tree.seal();
  st.report = std::move(r);
  return *st.report;
}

// ---------------------------------------------------------------------------
// Append-only log

inline constexpr const char* kLogFileName = "events.jsonl";

/// Line-delimited JSON log. Each append is flushed and fsync'ed before it
/// returns.
class EventLog {
 public:
  explicit EventLog(const std::filesystem::path& file) : path_(file) {
    file_ = std::fopen(file.c_str(), "ab");
    if (file_ == nullptr) throw std::runtime_error("cannot open log " + file.string());
  }
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;
  ~EventLog() {
    if (file_ != nullptr) std::fclose(file_);
  }

  void append(const Json& record) {
    const std::string line = record.dump() + "\n";
    std::lock_guard lock(mutex_);
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0)
      throw std::runtime_error("log write failed: " + path_.string());
    ::fsync(::fileno(file_));
  }

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
  std::mutex mutex_;
};

struct RecoveryReport {
  std::size_t records_applied = 0;
  bool truncated = false;
  std::size_t valid_bytes = 0;     // length of the replayable prefix
  std::size_t stopped_at_line = 0;  // 1-based line of the first bad record, 0 if none
  std::string warning;
};

// ---------------------------------------------------------------------------

using Clock = std::function<Timestamp()>;

inline Timestamp system_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct CreateResult {
  Task task;
  std::vector<std::string> warnings;
};

class Platform {
 public:
  Platform(ClassRegistry registry, std::shared_ptr<Predictor> predictor, Config config = {},
           Clock clock = system_now)
      : registry_(std::move(registry)),
        predictor_(std::move(predictor)),
        config_(std::move(config)),
        clock_(std::move(clock)) {}

  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  /// Replays `dir`'s log, trims any invalid tail, and appends to it from then
  /// on. Must be called before the platform serves requests.
  RecoveryReport attach_store(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto file = dir / kLogFileName;
    RecoveryReport rep = replay(file);
    if (rep.truncated) std::filesystem::resize_file(file, rep.valid_bytes);
    log_ = std::make_unique<EventLog>(file);
    return rep;
  }

  const ClassRegistry& registry() const noexcept { return registry_; }
  const Config& config() const noexcept { return config_; }
  Timestamp now() const { return clock_(); }

  CreateResult create_task(Json request) {
    if (!request.is_object()) throw ApiError(400, "invalid_task", {"expected a JSON object"});
    const Timestamp now = clock_();
    if (!request.contains("opened_at") || request["opened_at"].is_null()) request["opened_at"] = now;

    ValidatedTask v;
    try {
      v = validate_task(request, registry_, config_.k_min);
    } catch (const ValidationError& e) {
      throw ApiError(400, "invalid_task", e.issues());
    }
    if (v.task.deadline <= now) throw ApiError(400, "invalid_task", {"deadline is in the past"});
    v.task.status = TaskStatus::Open;

    std::unique_lock lock(tasks_mutex_);
    if (v.task.task_id.empty()) {
      std::size_t k = tasks_.size() + 1;
      while (tasks_.contains("task-" + std::to_string(k))) ++k;
      v.task.task_id = "task-" + std::to_string(k);
    } else if (tasks_.contains(v.task.task_id)) {
      throw ApiError(409, "duplicate_task", {"task " + v.task.task_id + " already exists"});
    }
    append(Json{{"op", "create"}, {"task", encode(v.task)}});
    insert_task(v.task);
    return {std::move(v.task), std::move(v.warnings)};
  }

  SubmitOutcome submit(const std::string& task_id, const Json& payload) {
    Submission s;
    try {
      s = decode_submission(payload);
    } catch (const ValidationError& e) {
      throw ApiError(400, "invalid_submission", e.issues());
    }
    if (s.task_id.empty()) s.task_id = task_id;
    if (s.task_id != task_id)
      throw ApiError(400, "invalid_submission", {"payload task_id does not match the addressed task"});

    auto slot = find(task_id);
    {
      std::lock_guard lock(slot->mutex);
      check_admissible(slot->state, s);
    }

    // Classification runs outside the task's critical section.
    PredictOutcome prediction;
    try {
      prediction = predictor_->predict(task_id, s.submission_id, s.global_feature);
    } catch (const ProtocolError& e) {
      throw ApiError(502, "predictor_protocol_error", {e.what()});
    } catch (const std::invalid_argument& e) {
      throw ApiError(400, "invalid_submission", {e.what()});
    }

    std::lock_guard lock(slot->mutex);
    check_admissible(slot->state, s);
    append(Json{{"op", "submit"},
                {"task_id", task_id},
                {"submission", encode(s)},
                {"prediction", prediction ? encode(*prediction) : Json(nullptr)}});
    return apply_submit(slot->state, s, prediction, registry_);
  }

  AggregationReport close_task(const std::string& task_id) {
    auto slot = find(task_id);
    std::lock_guard lock(slot->mutex);
    if (slot->state.report) return *slot->state.report;
    append(Json{{"op", "close"}, {"task_id", task_id}});
    return apply_close(slot->state, registry_);
  }

  /// Closes every open task whose deadline has passed; returns their ids.
  std::vector<std::string> tick(Timestamp now) {
    std::vector<std::string> due;
    {
      std::shared_lock lock(tasks_mutex_);
      for (const auto& [id, slot] : tasks_) {
        std::lock_guard task_lock(slot->mutex);
        if (slot->state.task.status == TaskStatus::Open && slot->state.task.deadline <= now) due.push_back(id);
      }
    }
    for (const auto& id : due) close_task(id);
    return due;
  }

  Json get_status(const std::string& task_id) const {
    auto slot = find(task_id);
    std::lock_guard lock(slot->mutex);
    return slot->state.snapshot();
  }

  /// Stored report; 404-class error while the task is still open.
  AggregationReport get_report(const std::string& task_id) const {
    auto slot = find(task_id);
    std::lock_guard lock(slot->mutex);
    if (!slot->state.report) throw ApiError(404, "report_not_ready", {"task " + task_id + " is still open"});
    return *slot->state.report;
  }

  /// Copy of one task's full state, taken under its lock.
  TaskState task_state(const std::string& task_id) const {
    auto slot = find(task_id);
    std::lock_guard lock(slot->mutex);
    return slot->state;
  }

  std::vector<std::string> task_ids() const {
    std::shared_lock lock(tasks_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : tasks_) ids.push_back(id);
    return ids;
  }

  /// All task snapshots keyed by id.
  Json snapshot() const {
    Json out = Json::object();
    std::shared_lock lock(tasks_mutex_);
    for (const auto& [id, slot] : tasks_) {
      std::lock_guard task_lock(slot->mutex);
      out[id] = slot->state.snapshot();
    }
    return out;
  }

  /// Applies one log record. Throws on records that do not fit the current
  /// state, which replay treats as corruption.
  void apply_record(const Json& rec) {
    const std::string op = rec.at("op").get<std::string>();
    if (op == "create") {
      Task task = validate_task(rec.at("task"), registry_, config_.k_min).task;
      std::unique_lock lock(tasks_mutex_);
      if (tasks_.contains(task.task_id)) throw std::logic_error("duplicate create for " + task.task_id);
      insert_task(task);
    } else if (op == "submit") {
      auto slot = find(rec.at("task_id").get<std::string>());
      Submission s = decode_submission(rec.at("submission"));
      PredictOutcome p;
      if (const auto& pj = rec.at("prediction"); !pj.is_null())
        p = Prediction{pj.at("class").get<ClassId>(), pj.at("confidence").get<double>()};
      std::lock_guard lock(slot->mutex);
      apply_submit(slot->state, s, p, registry_);
    } else if (op == "close") {
      auto slot = find(rec.at("task_id").get<std::string>());
      std::lock_guard lock(slot->mutex);
      apply_close(slot->state, registry_);
    } else {
      throw std::invalid_argument("unknown log op '" + op + "'");
    }
  }

  /// Applies every valid record of a log file, stopping at the first
  /// truncated or corrupt one. A missing file is an empty log.
  RecoveryReport replay(const std::filesystem::path& file) {
    RecoveryReport rep;
    std::ifstream in(file, std::ios::binary);
    if (!in) return rep;
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < data.size()) {
      ++line_no;
      const auto nl = data.find('\n', pos);
      auto fail = [&](const std::string& why) {
        rep.truncated = true;
        rep.stopped_at_line = line_no;
        rep.warning = "log record " + std::to_string(line_no) + " at byte " + std::to_string(pos) + ": " + why +
                      "; recovered " + std::to_string(rep.records_applied) + " records";
      };
      if (nl == std::string::npos) {
        fail("truncated record");
        break;
      }
      try {
        apply_record(Json::parse(data.substr(pos, nl - pos)));
      } catch (const std::exception& e) {
        fail(e.what());
        break;
      }
      ++rep.records_applied;
      pos = nl + 1;
      rep.valid_bytes = pos;
    }
    return rep;
  }

 private:
  struct Slot {
    explicit Slot(TaskState s) : state(std::move(s)) {}
    mutable std::mutex mutex;
    TaskState state;
  };

  std::shared_ptr<Slot> find(const std::string& task_id) const {
    std::shared_lock lock(tasks_mutex_);
    auto it = tasks_.find(task_id);
    if (it == tasks_.end()) throw ApiError(404, "unknown_task", {"no task " + task_id});
    return it->second;
  }

  void insert_task(const Task& task) {
    tasks_.emplace(task.task_id, std::make_shared<Slot>(apply_create(task, config_.match_params())));
  }

  static void check_admissible(const TaskState& st, const Submission& s) {
    if (st.task.status == TaskStatus::Closed) throw ApiError(409, "task_closed", {"task " + st.task.task_id + " is closed"});
    if (s.captured_at < st.task.opened_at || s.captured_at > st.task.deadline)
      throw ApiError(400, "outside_task_window", {"captured_at outside [opened_at, deadline]"});
    if (st.submission_ids.contains(s.submission_id))
      throw ApiError(409, "duplicate_submission", {"submission " + s.submission_id + " already received"});
  }

  void append(const Json& record) {
    if (log_) log_->append(record);
  }

  ClassRegistry registry_;
  std::shared_ptr<Predictor> predictor_;
  Config config_;
  Clock clock_;
  std::unique_ptr<EventLog> log_;
  mutable std::shared_mutex tasks_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> tasks_;
};

/// Rebuilds platform state from a store directory without writing to it.
/// The returned platform has no predictor; it serves reads and closes only.
inline std::pair<std::unique_ptr<Platform>, RecoveryReport> recover(const std::filesystem::path& dir,
                                                                    ClassRegistry registry, Config config = {}) {
  auto platform = std::make_unique<Platform>(std::move(registry), nullptr, std::move(config));
  RecoveryReport rep = platform->replay(dir / kLogFileName);
  return {std::move(platform), rep};
}

}  // namespace photoreport
