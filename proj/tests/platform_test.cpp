#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "photoreport/platform.hpp"
#include "support/oracles.hpp"

namespace photoreport {
namespace {

namespace fs = std::filesystem;

const ClassRegistry kRegistry = ClassRegistry::standard();
constexpr Timestamp kNow = 1'700'000'000;

std::shared_ptr<Predictor> reference() {
  return std::make_shared<ReferencePredictor>(ClassifierModel::axis_aligned(kRegistry, 8));
}

std::vector<double> feature_of(ClassId c) {
  std::vector<double> f(8, 0.0);
  f[c] = 10.0;
  return f;
}

Json task_request(const std::string& mode, std::optional<std::string> expected = "fire",
                  Json layers = {{{"kind", "VISUAL"}, {"threshold", 10}}}) {
  Json j{{"mode", mode}, {"layers", layers}, {"opened_at", kNow}, {"deadline", kNow + 3600}};
  if (expected) j["expected_class"] = *expected;
  return j;
}

Json payload(const Submission& s, ClassId cls) {
  Json j = encode(s);
  j.erase("task_id");
  j["global_feature"] = feature_of(cls);
  return j;
}

Json payload(std::string id, ClassId cls, Timestamp t = kNow + 10) {
  return payload(testing::make_submission(std::move(id), t), cls);
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("photoreport-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct Fixture : ::testing::Test {
  Platform platform{kRegistry, reference(), Config{}, [] { return kNow; }};
};

TEST_F(Fixture, CreateValidOnlineTask) {
  auto r = platform.create_task(task_request("ONLINE"));
  EXPECT_EQ(r.task.task_id, "task-1");
  EXPECT_EQ(r.task.status, TaskStatus::Open);
  EXPECT_EQ(platform.get_status("task-1")["tree"]["node_count"], 1);
}

TEST_F(Fixture, OfflineTaskWithExpectedClassWarns) {
  auto r = platform.create_task(task_request("OFFLINE", "flood"));
  EXPECT_FALSE(r.task.expected_class.has_value());
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("ignored"), std::string::npos);
}

TEST_F(Fixture, RejectsPastDeadlineAndInvalidTasks) {
  auto past = task_request("ONLINE");
  past["opened_at"] = kNow - 100;
  past["deadline"] = kNow - 1;
  try {
    platform.create_task(past);
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 400);
  }
  EXPECT_THROW(platform.create_task(task_request("ONLINE", std::nullopt)), ApiError);
  auto dup = task_request("ONLINE");
  dup["task_id"] = "x";
  platform.create_task(dup);
  try {
    platform.create_task(dup);
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 409);
  }
}

TEST_F(Fixture, OnlineSubmitAcceptsAndRejects) {
  platform.create_task(task_request("ONLINE"));
  auto ok = platform.submit("task-1", payload("s1", 0));
  EXPECT_EQ(ok.verdict.decision, Decision::Accepted);
  ASSERT_TRUE(ok.path.has_value());
  EXPECT_TRUE(ok.to_json().contains("group_path"));
  auto bad = platform.submit("task-1", payload("s2", 3));
  EXPECT_EQ(bad.verdict.decision, Decision::RejectedFalse);
  EXPECT_FALSE(bad.path.has_value());
}

TEST_F(Fixture, OfflineSubmitDefers) {
  platform.create_task(task_request("OFFLINE", std::nullopt));
  EXPECT_EQ(platform.submit("task-1", payload("s1", 2)).verdict.decision, Decision::Deferred);
  EXPECT_EQ(platform.get_status("task-1")["counters"]["deferred"], 1);
}

TEST_F(Fixture, SubmitErrors) {
  platform.create_task(task_request("ONLINE"));
  auto status_of = [&](auto&& fn) {
    try {
      fn();
    } catch (const ApiError& e) {
      return e.status();
    }
    return 0;
  };
  EXPECT_EQ(status_of([&] { platform.submit("nope", payload("s1", 0)); }), 404);
  EXPECT_EQ(status_of([&] { platform.submit("task-1", payload("s1", 0, kNow - 5)); }), 400);
  EXPECT_EQ(status_of([&] { platform.submit("task-1", Json{{"submission_id", "x"}}); }), 400);
  auto wrong_dim = payload("s1", 0);
  wrong_dim["global_feature"] = {1.0, 2.0};
  EXPECT_EQ(status_of([&] { platform.submit("task-1", wrong_dim); }), 400);
  platform.submit("task-1", payload("s1", 0));
  EXPECT_EQ(status_of([&] { platform.submit("task-1", payload("s1", 0)); }), 409);
  platform.close_task("task-1");
  EXPECT_EQ(status_of([&] { platform.submit("task-1", payload("s2", 0)); }), 409);
}

TEST_F(Fixture, OnlineCloseHandsOverLastOfEachGroup) {
  auto t = testing::visual_triple();
  platform.create_task(task_request("ONLINE"));
  platform.submit("task-1", payload(t.a, 0));
  platform.submit("task-1", payload(t.b, 0));
  platform.submit("task-1", payload(t.c, 0));
  auto report = platform.close_task("task-1");
  EXPECT_EQ(report.representatives, (std::vector<std::string>{"B", "C"}));
  EXPECT_EQ(report.group_sizes, (std::vector<std::size_t>{2, 1}));
  EXPECT_DOUBLE_EQ(report.redundancy_ratio, 1.0 / 3.0);
  EXPECT_EQ(report.determined_class, 0u);
  EXPECT_EQ(platform.close_task("task-1"), report);
  EXPECT_EQ(platform.get_report("task-1"), report);
}

TEST_F(Fixture, OfflineNormalPluralityReportsNoEvent) {
  platform.create_task(task_request("OFFLINE", std::nullopt));
  platform.submit("task-1", payload("s1", 3));
  platform.submit("task-1", payload("s2", 3));
  platform.submit("task-1", payload("s3", 0));
  auto report = platform.close_task("task-1");
  EXPECT_EQ(report.determined_class, kRegistry.normal_id());
  EXPECT_TRUE(report.no_event);
  EXPECT_TRUE(report.representatives.empty());
  EXPECT_EQ(report.rejected_false, 3u);
}

TEST_F(Fixture, OfflineCloseReplaysSurvivorsInArrivalOrder) {
  auto t = testing::visual_triple();
  platform.create_task(task_request("OFFLINE", std::nullopt));
  platform.submit("task-1", payload(t.b, 1));
  platform.submit("task-1", payload("noise", 2));
  platform.submit("task-1", payload(t.a, 1));
  platform.submit("task-1", payload(t.c, 1));
  auto report = platform.close_task("task-1");
  EXPECT_EQ(report.determined_class, 1u);
  EXPECT_EQ(report.total_accepted, 3u);
  EXPECT_EQ(report.rejected_false, 1u);

  // Same as an online task with a perfect classifier over the accepted subsequence.
  ATree reference_tree("task-1", {{LayerKind::Visual, 10}});
  for (const auto* s : {&t.b, &t.a, &t.c}) reference_tree.insert(*s);
  EXPECT_EQ(report.representatives, reference_tree.handover(RepresentativePolicy::Last).representatives);

  auto status = platform.get_status("task-1");
  EXPECT_EQ(status["counters"]["deferred"], 0);
  for (const auto& v : status["verdicts"]) EXPECT_NE(v["decision"], "DEFERRED");
}

TEST_F(Fixture, FreshStatusAndAfterThreeAccepted) {
  platform.create_task(task_request("ONLINE"));
  auto fresh = platform.get_status("task-1");
  EXPECT_EQ(fresh["counters"]["received"], 0);
  EXPECT_EQ(fresh["counters"]["accepted"], 0);
  EXPECT_TRUE(fresh["tree"]["root"]["children"].empty());
  EXPECT_TRUE(fresh["report"].is_null());
  for (int i = 0; i < 3; ++i) platform.submit("task-1", payload("s" + std::to_string(i), 0));
  auto st = platform.get_status("task-1");
  EXPECT_EQ(st["counters"]["received"], 3);
  EXPECT_EQ(st["counters"]["accepted"], 3);
  EXPECT_EQ(st["tree"]["insertion_log"].size(), 3u);
  EXPECT_THROW(platform.get_status("zzz"), ApiError);
  EXPECT_THROW(platform.get_report("task-1"), ApiError);
}

TEST_F(Fixture, ConcurrentSubmitsKeepCountersConsistent) {
  platform.create_task(task_request("ONLINE"));
  std::atomic<bool> stop{false};
  std::atomic<int> bad_snapshots{0};
  std::thread reader([&] {
    while (!stop) {
      auto c = platform.get_status("task-1")["counters"];
      if (c["received"].get<int>() != c["accepted"].get<int>() + c["rejected_false"].get<int>() + c["deferred"].get<int>())
        ++bad_snapshots;
    }
  });
  std::vector<std::thread> writers;
  for (int w = 0; w < 4; ++w)
    writers.emplace_back([&, w] {
      for (int i = 0; i < 25; ++i)
        platform.submit("task-1", payload("w" + std::to_string(w) + "-" + std::to_string(i), (i % 3 == 0) ? 3 : 0));
    });
  for (auto& t : writers) t.join();
  stop = true;
  reader.join();
  EXPECT_EQ(bad_snapshots, 0);
  auto c = platform.get_status("task-1")["counters"];
  EXPECT_EQ(c["received"], 100);
  EXPECT_EQ(c["accepted"].get<int>() + c["rejected_false"].get<int>(), 100);
}

TEST_F(Fixture, TickClosesExpiredTasks) {
  auto req = task_request("ONLINE");
  req["deadline"] = kNow + 5;
  platform.create_task(req);
  platform.create_task(task_request("ONLINE"));
  EXPECT_TRUE(platform.tick(kNow + 4).empty());
  EXPECT_EQ(platform.tick(kNow + 5), std::vector<std::string>{"task-1"});
  EXPECT_NO_THROW(platform.get_report("task-1"));
  EXPECT_THROW(platform.get_report("task-2"), ApiError);
}

TEST(PredictorUnavailable, RejectsAfterBoundedRetries) {
  auto down = std::make_shared<ExternalPredictor>(
      [](const std::string&) -> std::string { throw TransportError("down"); }, kRegistry,
      RetryPolicy{3, std::chrono::milliseconds(0)});
  Platform p(kRegistry, down, Config{}, [] { return kNow; });
  p.create_task(task_request("ONLINE"));
  auto out = p.submit("task-1", payload("s1", 0));
  EXPECT_EQ(out.verdict.decision, Decision::RejectedFalse);
  EXPECT_EQ(out.verdict.reason, "predictor_unavailable");
}

TEST(PredictorProtocol, BadResponseIs502AndNotIngested) {
  auto liar = std::make_shared<ExternalPredictor>(
      [](const std::string&) -> std::string { return R"({"submission_id":"s1","class":0,"confidence":1.3})"; },
      kRegistry, RetryPolicy{1, std::chrono::milliseconds(0)});
  Platform p(kRegistry, liar, Config{}, [] { return kNow; });
  p.create_task(task_request("ONLINE"));
  try {
    p.submit("task-1", payload("s1", 0));
    FAIL();
  } catch (const ApiError& e) {
    EXPECT_EQ(e.status(), 502);
  }
  EXPECT_EQ(p.get_status("task-1")["counters"]["received"], 0);
}

// --- persistence -------------------------------------------------------------

TEST(Recovery, EmptyStoreHasNoTasks) {
  TempDir dir;
  auto [platform, rep] = recover(dir.path(), kRegistry);
  EXPECT_TRUE(platform->task_ids().empty());
  EXPECT_EQ(rep.records_applied, 0u);
  EXPECT_FALSE(rep.truncated);
}

TEST(Recovery, CreatePlusFiveSubmitsReplaysExactly) {
  TempDir dir;
  Json before;
  {
    Platform live(kRegistry, reference(), Config{}, [] { return kNow; });
    live.attach_store(dir.path());
    live.create_task(task_request("ONLINE", "fire", {{{"kind", "TIME"}, {"threshold", 5}}}));
    for (int i = 0; i < 5; ++i) live.submit("task-1", payload("s" + std::to_string(i), i % 2 ? 0 : 3, kNow + i * 4));
    before = live.snapshot();
  }
  auto [restored, rep] = recover(dir.path(), kRegistry);
  EXPECT_EQ(rep.records_applied, 6u);
  EXPECT_EQ(restored->snapshot().dump(), before.dump());
}

TEST(Recovery, TruncatedRecordStopsAtPreviousOne) {
  TempDir dir;
  Json after_two;
  {
    Platform live(kRegistry, reference(), Config{}, [] { return kNow; });
    live.attach_store(dir.path());
    live.create_task(task_request("ONLINE"));
    live.submit("task-1", payload("s1", 0));
    after_two = live.snapshot();
    live.submit("task-1", payload("s2", 0));
  }
  const auto file = dir.path() / kLogFileName;
  fs::resize_file(file, fs::file_size(file) - 7);

  auto [restored, rep] = recover(dir.path(), kRegistry);
  EXPECT_TRUE(rep.truncated);
  EXPECT_EQ(rep.records_applied, 2u);
  EXPECT_EQ(rep.stopped_at_line, 3u);
  EXPECT_FALSE(rep.warning.empty());
  EXPECT_EQ(restored->snapshot().dump(), after_two.dump());

  // Re-attaching trims the bad tail so new records follow valid ones.
  Platform resumed(kRegistry, reference(), Config{}, [] { return kNow; });
  auto rep2 = resumed.attach_store(dir.path());
  EXPECT_TRUE(rep2.truncated);
  resumed.submit("task-1", payload("s3", 0));
  auto [again, rep3] = recover(dir.path(), kRegistry);
  EXPECT_FALSE(rep3.truncated);
  EXPECT_EQ(again->snapshot().dump(), resumed.snapshot().dump());
}

TEST(Recovery, CorruptMiddleRecordStopsThere) {
  TempDir dir;
  {
    Platform live(kRegistry, reference(), Config{}, [] { return kNow; });
    live.attach_store(dir.path());
    live.create_task(task_request("ONLINE"));
  }
  {
    std::ofstream out(dir.path() / kLogFileName, std::ios::app);
    out << "{\"op\":\"submit\",\"task_id\":\"task-1\"}\n";
    out << "{\"op\":\"close\",\"task_id\":\"task-1\"}\n";
  }
  auto [restored, rep] = recover(dir.path(), kRegistry);
  EXPECT_EQ(rep.records_applied, 1u);
  EXPECT_EQ(rep.stopped_at_line, 2u);
  EXPECT_EQ(restored->get_status("task-1")["task"]["state"], "OPEN");
}

}  // namespace
}  // namespace photoreport
