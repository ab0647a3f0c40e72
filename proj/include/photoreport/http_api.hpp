#pragma once

// HTTP binding of the platform:
//
//   POST /tasks                      create a task            201
//   POST /tasks/{id}/submissions     ingest one submission    200
//   GET  /tasks/{id}                 counters + tree snapshot 200
//   POST /tasks/{id}/close           close, return report     200
//   GET  /tasks/{id}/report          stored report            200, 404 while open
//
// Errors carry {"error": code, "details": [...]}.

#include <functional>
#include <string>

#include "httplib.h"
#include "photoreport/platform.hpp"

namespace photoreport {

namespace detail {

inline void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void guarded(httplib::Response& res, const std::function<void()>& handler) {
  try {
    handler();
  } catch (const ApiError& e) {
    send_json(res, e.status(), e.body());
  } catch (const Json::exception& e) {
    send_json(res, 400, Json{{"error", "malformed_json"}, {"details", {e.what()}}});
  } catch (const std::exception& e) {
    send_json(res, 500, Json{{"error", "internal"}, {"details", {e.what()}}});
  }
}

}  // namespace detail

inline void register_routes(httplib::Server& server, Platform& platform) {
  using detail::guarded;
  using detail::send_json;

  server.Post("/tasks", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto created = platform.create_task(Json::parse(req.body));
      send_json(res, 201,
                Json{{"task_id", created.task.task_id}, {"task", encode(created.task)}, {"warnings", created.warnings}});
    });
  });

  server.Post("/tasks/:id/submissions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto outcome = platform.submit(req.path_params.at("id"), Json::parse(req.body));
      send_json(res, 200, outcome.to_json());
    });
  });

  server.Get("/tasks/:id", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, platform.get_status(req.path_params.at("id"))); });
  });

  server.Post("/tasks/:id/close", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, encode(platform.close_task(req.path_params.at("id")))); });
  });

  server.Get("/tasks/:id/report", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, encode(platform.get_report(req.path_params.at("id")))); });
  });
}

}  // namespace photoreport
