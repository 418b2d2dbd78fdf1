#pragma once

// Chat backend seam: request digests, a deterministic mock, and a gateway
// that adds retries, a call budget, bounded concurrency, rate limiting and a
// transcript log.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "promptprism/digest.hpp"
#include "promptprism/errors.hpp"
#include "promptprism/prompt_model.hpp"

namespace promptprism {

inline constexpr std::string_view kMockBackend = "mock";

struct ChatRequest {
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::optional<std::int64_t> seed;
  std::string backend = std::string(kMockBackend);

  void validate() const {
    if (messages.empty()) throw Error(Errc::InvalidConfig, "chat request needs at least one message");
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
      throw Error(Errc::InvalidConfig, "temperature must lie in [0, 2]");
    }
    if (max_output_tokens <= 0) throw Error(Errc::InvalidConfig, "max_output_tokens must be positive");
  }

  static ChatRequest user(std::string content, double temperature = 0.0, std::optional<std::int64_t> seed = {}) {
    ChatRequest r;
    r.messages.push_back(Message{std::string(kRoleUser), std::move(content)});
    r.temperature = temperature;
    r.seed = seed;
    return r;
  }
};

/// Canonical JSON of everything that determines the completion. The backend
/// name is left out so a transcript recorded live replays through the mock.
inline nlohmann::json canonical_request(const ChatRequest& req) {
  nlohmann::json j;
  j["messages"] = nlohmann::json::array();
  for (const auto& m : req.messages) j["messages"].push_back({{"role", m.role}, {"content", m.content}});
  j["temperature"] = req.temperature;
  j["max_output_tokens"] = req.max_output_tokens;
  j["seed"] = req.seed ? nlohmann::json(*req.seed) : nlohmann::json(nullptr);
  return j;
}

inline std::string request_digest(const ChatRequest& req) { return sha256_hex(canonical_request(req).dump()); }

struct BackendRecord {
  std::string digest;
  std::string backend;
  std::string response;
  double latency_ms = 0;
  int retries = 0;
  std::string timestamp;  // ISO-8601 UTC

  nlohmann::json to_json() const {
    return {{"digest", digest},         {"backend", backend}, {"response", response},
            {"latency_ms", latency_ms}, {"retries", retries}, {"timestamp", timestamp}};
  }

  static BackendRecord from_json(const nlohmann::json& j) {
    BackendRecord r;
    r.digest = j.at("digest").get<std::string>();
    r.response = j.at("response").get<std::string>();
    r.backend = j.value("backend", "");
    r.latency_ms = j.value("latency_ms", 0.0);
    r.retries = j.value("retries", 0);
    r.timestamp = j.value("timestamp", "");
    return r;
  }
};

/// Failure reported by a backend. Transient failures (connection errors,
/// throttling, server errors) are retried by the gateway.
class BackendFailure : public Error {
 public:
  BackendFailure(bool transient, const std::string& message, Errc code = Errc::BackendError)
      : Error(code, message), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string name() const = 0;
  virtual std::string complete(const ChatRequest& req) = 0;
};

/// Deterministic backend keyed by request digest. Each digest holds a queue
/// of responses; the last one repeats once the queue is drained. Requests
/// with no canned entry go to the fallback responder when one is set.
class MockBackend : public ChatBackend {
 public:
  using Responder = std::function<std::string(const ChatRequest&)>;

  explicit MockBackend(std::string name = std::string(kMockBackend)) : name_(std::move(name)) {}

  std::string name() const override { return name_; }

  void add(const std::string& digest, std::string response) {
    std::lock_guard lock(mu_);
    canned_[digest].push_back(std::move(response));
  }

  void add(const ChatRequest& req, std::string response) { add(request_digest(req), std::move(response)); }

  void set_fallback(Responder responder) {
    std::lock_guard lock(mu_);
    fallback_ = std::move(responder);
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return canned_.size();
  }

  /// Fixture file: a JSON object mapping digest to a response string or to
  /// an array of responses.
  void load_fixture(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(Errc::InvalidConfig, "mock fixture must be a JSON object of digest -> response");
    for (const auto& [digest, value] : j.items()) {
      if (value.is_string()) {
        add(digest, value.get<std::string>());
      } else if (value.is_array()) {
        for (const auto& v : value) add(digest, v.get<std::string>());
      } else {
        throw Error(Errc::InvalidConfig, "mock fixture entry '" + digest + "' must be a string or array");
      }
    }
  }

  void load_fixture_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::InvalidConfig, "cannot open mock fixture '" + path + "'");
    try {
      load_fixture(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::InvalidConfig, "mock fixture '" + path + "': " + e.what());
    }
  }

  /// Queues every transcript record in file order, so a replay yields the
  /// same responses in the same order as the recorded run.
  void load_transcript(std::istream& in) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto rec = BackendRecord::from_json(nlohmann::json::parse(line));
        add(rec.digest, std::move(rec.response));
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::MalformedRecord, "transcript line " + std::to_string(n) + ": " + e.what());
      }
    }
  }

  std::string complete(const ChatRequest& req) override {
    const std::string digest = request_digest(req);
    Responder fallback;
    {
      std::lock_guard lock(mu_);
      auto it = canned_.find(digest);
      if (it != canned_.end() && !it->second.empty()) {
        auto& queue = it->second;
        std::string out = queue.front();
        if (queue.size() > 1) queue.pop_front();
        return out;
      }
      fallback = fallback_;
    }
    if (fallback) return fallback(req);
    throw BackendFailure(false, "mock backend has no response for digest " + digest);
  }

 private:
  std::string name_;
  mutable std::mutex mu_;
  std::map<std::string, std::deque<std::string>> canned_;
  Responder fallback_;
};

/// Token bucket: `rate` tokens per second, holding at most `burst`.
class TokenBucket {
 public:
  TokenBucket(double rate, double burst)
      : rate_(rate), burst_(std::max(1.0, burst)), tokens_(std::max(1.0, burst)), last_(Clock::now()) {}

  /// Blocks until one token is available. A non-positive rate never blocks.
  void acquire() {
    if (rate_ <= 0) return;
    while (true) {
      std::chrono::duration<double> wait{};
      {
        std::lock_guard lock(mu_);
        const auto now = Clock::now();
        tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
        last_ = now;
        if (tokens_ >= 1.0) {
          tokens_ -= 1.0;
          return;
        }
        wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      }
      std::this_thread::sleep_for(wait);
    }
  }

 private:
  using Clock = std::chrono::steady_clock;
  double rate_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mu_;
};

struct GatewayOptions {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::milliseconds max_backoff{8000};
  std::optional<std::size_t> call_cap;
  std::ptrdiff_t max_in_flight = 4;
  double requests_per_second = 0;  // 0 disables rate limiting
  double burst = 1;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit Gateway(GatewayOptions opts = {})
      : opts_(opts),
        slots_(std::max<std::ptrdiff_t>(1, std::min<std::ptrdiff_t>(opts.max_in_flight, 1024))),
        bucket_(opts.requests_per_second, opts.burst),
        sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void register_backend(std::shared_ptr<ChatBackend> backend) {
    std::lock_guard lock(mu_);
    backends_[backend->name()] = std::move(backend);
  }

  bool has_backend(const std::string& name) const {
    std::lock_guard lock(mu_);
    return backends_.count(name) > 0;
  }

  /// Replaces the backoff sleep, e.g. to record delays in tests.
  void set_sleeper(Sleeper s) { sleep_ = std::move(s); }

  /// Every completed call is also written here as one JSON line.
  void set_transcript_sink(std::ostream* sink) {
    std::lock_guard lock(log_mu_);
    sink_ = sink;
  }

  std::string chat(const ChatRequest& req) {
    req.validate();
    std::shared_ptr<ChatBackend> backend;
    {
      std::lock_guard lock(mu_);
      auto it = backends_.find(req.backend);
      if (it == backends_.end()) throw Error(Errc::BackendUnavailable, "no backend registered as '" + req.backend + "'");
      backend = it->second;
      if (opts_.call_cap && calls_ >= *opts_.call_cap) {
        throw Error(Errc::BudgetExceeded, "call cap of " + std::to_string(*opts_.call_cap) + " reached");
      }
      ++calls_;
    }

    slots_.acquire();
    struct Release {
      std::counting_semaphore<1024>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const std::string digest = request_digest(req);
    const auto start = std::chrono::steady_clock::now();
    int retries = 0;
    auto delay = opts_.initial_backoff;
    std::string response;
    while (true) {
      bucket_.acquire();
      try {
        response = backend->complete(req);
        break;
      } catch (const BackendFailure& f) {
        if (!f.transient()) throw;
        if (retries >= opts_.max_retries) {
          throw Error(Errc::BackendUnavailable,
                      "giving up after " + std::to_string(retries + 1) + " attempts: " + f.what());
        }
      }
      ++retries;
      sleep_(delay);
      delay = std::min(opts_.max_backoff, delay * 2);
    }

    BackendRecord rec;
    rec.digest = digest;
    rec.backend = backend->name();
    rec.response = response;
    rec.retries = retries;
    rec.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    rec.timestamp = utc_timestamp();
    {
      std::lock_guard lock(log_mu_);
      if (sink_) *sink_ << rec.to_json().dump() << '\n' << std::flush;
      transcript_.push_back(std::move(rec));
    }
    return response;
  }

  std::vector<BackendRecord> transcript() const {
    std::lock_guard lock(log_mu_);
    return transcript_;
  }

  /// Digest over (request digest, response) pairs in sorted order, so it is
  /// independent of timing and of completion order under concurrency.
  std::string transcript_digest() const {
    std::vector<std::pair<std::string, std::string>> pairs;
    {
      std::lock_guard lock(log_mu_);
      for (const auto& r : transcript_) pairs.emplace_back(r.digest, r.response);
    }
    std::sort(pairs.begin(), pairs.end());
    Sha256 h;
    for (const auto& [d, r] : pairs) h.field(d).field(r);
    return h.hex();
  }

  std::size_t calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  const GatewayOptions& options() const { return opts_; }

 private:
  GatewayOptions opts_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
  std::size_t calls_ = 0;
  std::counting_semaphore<1024> slots_;
  TokenBucket bucket_;
  Sleeper sleep_;
  mutable std::mutex log_mu_;
  std::vector<BackendRecord> transcript_;
  std::ostream* sink_ = nullptr;
};

}  // namespace promptprism
