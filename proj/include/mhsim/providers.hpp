#pragma once

// Hosted chat-completion providers. Request/response field mapping:
//
//   provider_a  POST /v1beta/models/<model>:generateContent
//               header x-goog-api-key: <key>
//               {"contents":[{"role":"user","parts":[{"text":<prompt>}]}],
//                "generationConfig":{"temperature":T,"maxOutputTokens":N}}
//               reply text = concat(candidates[0].content.parts[*].text)
//
//   provider_b  POST /v1/chat/completions
//               header Authorization: Bearer <key>
//               {"model":M,"messages":[{"role":"user","content":<prompt>}],
//                "temperature":T,"max_tokens":N}
//               reply text = choices[0].message.content
//
//   provider_c  POST /v1/messages
//               headers x-api-key: <key>, anthropic-version: 2023-06-01
//               {"model":M,"max_tokens":N,"temperature":T,
//                "messages":[{"role":"user","content":<prompt>}]}
//               reply text = concat(content[*].text where type == "text")
//
// Status handling: 401/403 -> AuthError, other 4xx except 408/429 ->
// AuthError (request configuration), everything else non-2xx and transport
// failures -> TransportError (retried by query()).

#include <condition_variable>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "mhsim/backend.hpp"
#include "mhsim/error.hpp"

namespace mhsim {

struct HttpRequest {
  std::string path;
  std::map<std::string, std::string> headers;
  std::string body;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Throws TransportError when no HTTP response could be obtained.
  virtual HttpResponse post(const std::string& base_url, const HttpRequest& request, double timeout_seconds) = 0;
};

inline HttpRequest build_provider_request(const BackendConfig& cfg, std::string_view prompt, const std::string& api_key) {
  HttpRequest req;
  req.headers["Content-Type"] = "application/json";
  json body;
  switch (cfg.provider) {
    case Provider::kProviderA:
      req.path = "/v1beta/models/" + cfg.model_name + ":generateContent";
      req.headers["x-goog-api-key"] = api_key;
      body = {{"contents", json::array({{{"role", "user"}, {"parts", json::array({{{"text", prompt}}})}}})},
              {"generationConfig", {{"temperature", cfg.temperature}, {"maxOutputTokens", cfg.max_tokens}}}};
      break;
    case Provider::kProviderB:
      req.path = "/v1/chat/completions";
      req.headers["Authorization"] = "Bearer " + api_key;
      body = {{"model", cfg.model_name},
              {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
              {"temperature", cfg.temperature},
              {"max_tokens", cfg.max_tokens}};
      break;
    case Provider::kProviderC:
      req.path = "/v1/messages";
      req.headers["x-api-key"] = api_key;
      req.headers["anthropic-version"] = "2023-06-01";
      body = {{"model", cfg.model_name},
              {"max_tokens", cfg.max_tokens},
              {"temperature", cfg.temperature},
              {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
      break;
    case Provider::kSynthetic:
      throw ConfigError("synthetic backend has no HTTP mapping");
  }
  req.body = body.dump();
  return req;
}

inline std::string extract_provider_text(Provider provider, const HttpResponse& response) {
  if (response.status == 401 || response.status == 403) {
    throw AuthError("provider rejected credentials (HTTP " + std::to_string(response.status) + ")");
  }
  if (response.status >= 400 && response.status < 500 && response.status != 408 && response.status != 429) {
    throw AuthError("provider rejected request (HTTP " + std::to_string(response.status) + "): " +
                    response.body.substr(0, 200));
  }
  if (response.status < 200 || response.status >= 300) {
    throw TransportError("provider returned HTTP " + std::to_string(response.status));
  }
  const json j = json::parse(response.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw TransportError("provider returned malformed JSON");

  std::string text;
  try {
    switch (provider) {
      case Provider::kProviderA:
        for (const auto& part : j.at("candidates").at(0).at("content").at("parts")) {
          text += part.value("text", "");
        }
        break;
      case Provider::kProviderB: {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_string()) text = content.get<std::string>();
        break;
      }
      case Provider::kProviderC:
        for (const auto& block : j.at("content")) {
          if (block.value("type", "") == "text") text += block.value("text", "");
        }
        break;
      case Provider::kSynthetic:
        throw ConfigError("synthetic backend has no HTTP mapping");
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("provider reply lacks expected fields: ") + e.what());
  }
  return text;
}

class Semaphore {
 public:
  explicit Semaphore(int permits) : permits_(permits) {}
  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return permits_ > 0; });
    --permits_;
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      ++permits_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int permits_;
};

class HttpBackend final : public Backend {
 public:
  HttpBackend(BackendConfig config, std::shared_ptr<Transport> transport)
      : config_(std::move(config)), transport_(std::move(transport)), in_flight_(config_.max_in_flight) {
    config_.validate();
    if (config_.provider == Provider::kSynthetic) throw ConfigError("HttpBackend requires a hosted provider");
    if (config_.base_url.empty()) config_.base_url = default_base_url(config_.provider);
  }

  const BackendConfig& config() const override { return config_; }

  std::string complete(const QueryRequest& request) override {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key) {
      throw AuthError("backend " + config_.backend_id + ": environment variable " + config_.api_key_env + " is not set");
    }
    const HttpRequest req = build_provider_request(config_, request.prompt, key);
    in_flight_.acquire();
    HttpResponse resp;
    try {
      resp = transport_->post(config_.base_url, req, config_.request_timeout);
    } catch (...) {
      in_flight_.release();
      throw;
    }
    in_flight_.release();
    return extract_provider_text(config_.provider, resp);
  }

 private:
  BackendConfig config_;
  std::shared_ptr<Transport> transport_;
  Semaphore in_flight_;
};

}  // namespace mhsim
