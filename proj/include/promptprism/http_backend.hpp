#pragma once

// Live backend for OpenAI-compatible chat-completion endpoints. Kept apart
// from the rest of the library because it pulls in the HTTP client and TLS.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <string>
#include <utility>

#include "promptprism/errors.hpp"
#include "promptprism/llm_gateway.hpp"

namespace promptprism {

struct HttpBackendConfig {
  std::string name = "http";
  std::string base_url = "https://api.openai.com/v1";  // scheme://host[:port][/path]
  std::string model;
  std::string api_key_env = "PROMPTPRISM_API_KEY";
  int timeout_seconds = 120;
};

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.base_url.find("://");
    if (scheme_end == std::string::npos) throw Error(Errc::InvalidConfig, "base_url needs a scheme: " + cfg_.base_url);
    const auto path_start = cfg_.base_url.find('/', scheme_end + 3);
    origin_ = cfg_.base_url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
    path_ += "/chat/completions";
  }

  std::string name() const override { return cfg_.name; }

  std::string complete(const ChatRequest& req) override {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (!key || !*key) {
      throw BackendFailure(false, "environment variable " + cfg_.api_key_env + " is not set", Errc::AuthMissing);
    }
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_output_tokens;
    if (req.seed) body["seed"] = *req.seed;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : req.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});

    httplib::Client client(origin_);
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    client.set_bearer_token_auth(key);
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) throw BackendFailure(true, "request failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500) {
      throw BackendFailure(true, "HTTP " + std::to_string(res->status));
    }
    if (res->status == 401 || res->status == 403) {
      throw BackendFailure(false, "HTTP " + std::to_string(res->status) + ": credentials rejected", Errc::AuthMissing);
    }
    if (res->status != 200) {
      throw BackendFailure(false, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      const auto& content = j.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendFailure(false, std::string("unexpected response body: ") + e.what());
    }
  }

 private:
  HttpBackendConfig cfg_;
  std::string origin_;
  std::string path_;
};

}  // namespace promptprism
