#pragma once

// cpp-httplib transport for the hosted providers. Kept out of the umbrella
// header; include it only where real network access is wanted.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <chrono>
#include <string>

#include "mhsim/providers.hpp"

namespace mhsim {

class HttplibTransport final : public Transport {
 public:
  HttpResponse post(const std::string& base_url, const HttpRequest& request, double timeout_seconds) override {
    httplib::Client client(base_url);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(timeout_seconds));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
      if (k == "Content-Type") content_type = v;
      else headers.emplace(k, v);
    }
    auto result = client.Post(request.path, headers, request.body, content_type);
    if (!result) throw TransportError("HTTP request to " + base_url + " failed: " + httplib::to_string(result.error()));
    return {result->status, result->body};
  }
};

}  // namespace mhsim
