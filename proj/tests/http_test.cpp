#include <gtest/gtest.h>

#include <thread>

#include "photoreport/http_api.hpp"
#include "support/oracles.hpp"

namespace photoreport {
namespace {

const ClassRegistry kRegistry = ClassRegistry::standard();
constexpr Timestamp kNow = 1'700'000'000;

class HttpApi : public ::testing::Test {
 protected:
  void SetUp() override {
    register_routes(server_, platform_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  std::pair<int, Json> post(const std::string& path, const std::string& body) {
    auto r = client_->Post(path, body, "application/json");
    EXPECT_TRUE(r);
    return {r->status, Json::parse(r->body)};
  }
  std::pair<int, Json> post(const std::string& path, const Json& body) { return post(path, body.dump()); }
  std::pair<int, Json> get(const std::string& path) {
    auto r = client_->Get(path);
    EXPECT_TRUE(r);
    return {r->status, Json::parse(r->body)};
  }

  static Json submission(const std::string& id, ClassId cls) {
    auto s = testing::make_submission(id, kNow + 5);
    s.global_feature.assign(8, 0.0);
    s.global_feature[cls] = 10.0;
    Json j = encode(s);
    j.erase("task_id");
    return j;
  }

  Platform platform_{kRegistry,
                     std::make_shared<ReferencePredictor>(ClassifierModel::axis_aligned(kRegistry, 8)),
                     Config{},
                     [] { return kNow; }};
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

const Json kTask = {{"mode", "ONLINE"},
                    {"expected_class", "fire"},
                    {"layers", {{{"kind", "TIME"}, {"threshold", 60}}}},
                    {"deadline", kNow + 600}};

TEST_F(HttpApi, FullLifecycle) {
  auto [cs, created] = post("/tasks", kTask);
  ASSERT_EQ(cs, 201);
  const std::string id = created["task_id"];
  EXPECT_EQ(created["task"]["state"], "OPEN");

  auto [s1, v1] = post("/tasks/" + id + "/submissions", submission("a", 0));
  EXPECT_EQ(s1, 200);
  EXPECT_EQ(v1["decision"], "ACCEPTED");
  EXPECT_TRUE(v1.contains("group_path"));

  auto [s2, v2] = post("/tasks/" + id + "/submissions", submission("b", 3));
  EXPECT_EQ(s2, 200);
  EXPECT_EQ(v2["decision"], "REJECTED_FALSE");

  auto [gs, status] = get("/tasks/" + id);
  EXPECT_EQ(gs, 200);
  EXPECT_EQ(status["counters"]["received"], 2);
  EXPECT_EQ(status["counters"]["accepted"], 1);

  auto [rs0, not_ready] = get("/tasks/" + id + "/report");
  EXPECT_EQ(rs0, 404);
  EXPECT_EQ(not_ready["error"], "report_not_ready");

  auto [cl, report] = post("/tasks/" + id + "/close", std::string{});
  EXPECT_EQ(cl, 200);
  EXPECT_EQ(report["representatives"], Json::array({"a"}));

  auto [rs, stored] = get("/tasks/" + id + "/report");
  EXPECT_EQ(rs, 200);
  EXPECT_EQ(stored, report);

  auto [late, err] = post("/tasks/" + id + "/submissions", submission("c", 0));
  EXPECT_EQ(late, 409);
  EXPECT_EQ(err["error"], "task_closed");
}

TEST_F(HttpApi, ErrorStatuses) {
  auto bad = kTask;
  bad.erase("expected_class");
  auto [s1, e1] = post("/tasks", bad);
  EXPECT_EQ(s1, 400);
  EXPECT_EQ(e1["error"], "invalid_task");
  EXPECT_FALSE(e1["details"].empty());

  auto [s2, e2] = post("/tasks", std::string("{not json"));
  EXPECT_EQ(s2, 400);

  auto [s3, e3] = get("/tasks/missing");
  EXPECT_EQ(s3, 404);
  EXPECT_EQ(e3["error"], "unknown_task");

  auto [s4, e4] = post("/tasks/missing/submissions", submission("a", 0));
  EXPECT_EQ(s4, 404);

  auto [cs, created] = post("/tasks", kTask);
  const std::string id = created["task_id"];
  auto [s5, e5] = post("/tasks/" + id + "/submissions", Json{{"submission_id", "x"}});
  EXPECT_EQ(s5, 400);
  EXPECT_EQ(e5["error"], "invalid_submission");

  post("/tasks/" + id + "/submissions", submission("a", 0));
  auto [s6, e6] = post("/tasks/" + id + "/submissions", submission("a", 0));
  EXPECT_EQ(s6, 409);
  EXPECT_EQ(e6["error"], "duplicate_submission");
}

}  // namespace
}  // namespace photoreport
