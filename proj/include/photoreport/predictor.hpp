#pragma once

// Predictor plug-in boundary. The platform asks a Predictor for a class per
// submission; the reference implementation is the in-process nearest-centroid
// model, the external one speaks a one-line-per-request JSON protocol.

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>

#include "photoreport/codec.hpp"
#include "photoreport/ptp.hpp"

namespace photoreport {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kPredictorUnavailable = "predictor_unavailable";

/// Sends one request line (without the trailing newline) and returns one
/// response line. Throws TransportError when the peer cannot be reached.
using LineTransport = std::function<std::string(const std::string&)>;

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{100};
};

/// nullopt means the predictor could not be reached.
using PredictOutcome = std::optional<Prediction>;

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PredictOutcome predict(const std::string& task_id, const std::string& submission_id,
                                 std::span<const double> feature) = 0;
};

class ReferencePredictor final : public Predictor {
 public:
  explicit ReferencePredictor(ClassifierModel model) : model_(std::move(model)) {}

  PredictOutcome predict(const std::string&, const std::string&, std::span<const double> feature) override {
    return classify(model_, feature);
  }

  const ClassifierModel& model() const noexcept { return model_; }

 private:
  ClassifierModel model_;
};

inline std::string encode_predict_request(const std::string& task_id, const std::string& submission_id,
                                          std::span<const double> feature) {
  Json j{{"task_id", task_id},
         {"submission_id", submission_id},
         {"feature", std::vector<double>(feature.begin(), feature.end())}};
  return j.dump();
}

/// Validates a response line against the request it answers.
inline Prediction decode_predict_response(const std::string& line, const std::string& submission_id,
                                          const ClassRegistry& registry) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw ProtocolError(std::string("malformed predictor response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("submission_id") || !j.contains("class") || !j.contains("confidence"))
    throw ProtocolError("predictor response lacks submission_id/class/confidence");
  if (!j["submission_id"].is_string() || j["submission_id"].get<std::string>() != submission_id)
    throw ProtocolError("predictor response echoes the wrong submission_id");
  if (!j["class"].is_number_integer() || j["class"].get<std::int64_t>() < 0 ||
      !registry.contains(j["class"].get<ClassId>()))
    throw ProtocolError("predictor returned an unregistered class " + j["class"].dump());
  if (!j["confidence"].is_number()) throw ProtocolError("predictor confidence is not a number");
  const double conf = j["confidence"].get<double>();
  if (!(conf >= 0.0 && conf <= 1.0)) throw ProtocolError("predictor confidence outside [0,1]");
  return {j["class"].get<ClassId>(), conf};
}

/// One request/response exchange. Transport failures propagate as
/// TransportError, bad responses as ProtocolError.
inline Prediction predict_external(const LineTransport& transport, const std::string& task_id,
                                   const std::string& submission_id, std::span<const double> feature,
                                   const ClassRegistry& registry) {
  const std::string response = transport(encode_predict_request(task_id, submission_id, feature));
  return decode_predict_response(response, submission_id, registry);
}

class ExternalPredictor final : public Predictor {
 public:
  ExternalPredictor(LineTransport transport, ClassRegistry registry, RetryPolicy retry = {})
      : transport_(std::move(transport)), registry_(std::move(registry)), retry_(retry) {}

  /// Retries transport failures up to the policy's attempt count. Protocol
  /// errors are not retried.
  PredictOutcome predict(const std::string& task_id, const std::string& submission_id,
                         std::span<const double> feature) override {
    for (int attempt = 0; attempt < retry_.attempts; ++attempt) {
      try {
        return predict_external(transport_, task_id, submission_id, feature, registry_);
      } catch (const TransportError&) {
        if (attempt + 1 < retry_.attempts && retry_.backoff.count() > 0)
          std::this_thread::sleep_for(retry_.backoff * (attempt + 1));
      }
    }
    return std::nullopt;
  }

 private:
  LineTransport transport_;
  ClassRegistry registry_;
  RetryPolicy retry_;
};

}  // namespace photoreport
