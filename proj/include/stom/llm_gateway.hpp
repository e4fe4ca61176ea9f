#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stom/error.hpp"

namespace stom {

/// Connection settings for an OpenAI-compatible chat-completions endpoint.
/// The API key is referenced by environment variable name only.
struct GatewayConfig {
  std::string base_url;
  std::string model;
  std::string api_key_env;
  double temperature = 0.0;
  int max_tokens = 512;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double backoff_base_seconds = 1.0;
  int max_in_flight = 4;

  void validate() const;

  /// `temperature` is mandatory in the file; every other field has a default.
  static GatewayConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::optional<double> temperature;
  std::optional<int> max_tokens;

  /// Messages nonempty and the first one is a system message.
  void validate() const;
};

struct TokenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string content;
  std::string finish_reason;
  TokenUsage usage;
  double latency_ms = 0.0;
};

nlohmann::json to_json(const ChatResponse& response);
ChatResponse chat_response_from_json(const nlohmann::json& j);

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

struct HttpReply {
  int status = 0;
  std::string body;
};

/// Raw POST of a JSON body. Throws Error{Timeout} or Error{TransportError}.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpReply post_json(const std::string& url, const std::multimap<std::string, std::string>& headers,
                              const std::string& body, double timeout_seconds) = 0;
};

/// cpp-httplib backed transport; https needs OpenSSL support compiled in.
std::shared_ptr<HttpTransport> make_default_transport();

/// Caps the number of concurrent requests.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int capacity);

  class Slot {
   public:
    explicit Slot(InFlightLimiter& owner);
    ~Slot();
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    InFlightLimiter& owner_;
  };

  int capacity() const noexcept { return capacity_; }

 private:
  int capacity_;
  int in_use_ = 0;
  std::mutex mutex_;
  std::condition_variable cv_;
};

using Sleeper = std::function<void(std::chrono::duration<double>)>;

/// Talks to the endpoint, retrying transport failures, 429 and 5xx with
/// exponential backoff. Other 4xx statuses fail immediately.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(GatewayConfig config, std::shared_ptr<HttpTransport> transport = nullptr,
                          Sleeper sleeper = nullptr);

  ChatResponse complete(const ChatRequest& request) override;

  const GatewayConfig& config() const noexcept { return config_; }

 private:
  GatewayConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
  InFlightLimiter limiter_;
};

ChatResponse chat_complete(const GatewayConfig& config, const ChatRequest& request);

/// Fills sampling parameters from the config where the request leaves them unset.
ChatRequest resolve_request(const ChatRequest& request, const GatewayConfig& config);

/// Wire body for the chat-completions POST. Keys are emitted sorted, so the
/// dump is canonical for a given logical request.
nlohmann::json canonical_request(const std::string& model, const ChatRequest& resolved);

/// Hex SHA-256 of the canonical request.
std::string request_hash(const std::string& model, const ChatRequest& resolved);

enum class GatewayMode { Live, Record, Replay };

GatewayMode gateway_mode_from_string(const std::string& text);
std::string to_string(GatewayMode mode);

/// Record persists (request hash -> response) as <store>/<hash>.json;
/// Replay serves those files and never touches the inner client.
class RecordReplayClient : public ChatClient {
 public:
  RecordReplayClient(GatewayMode mode, std::filesystem::path store, GatewayConfig config,
                     std::shared_ptr<ChatClient> inner);

  ChatResponse complete(const ChatRequest& request) override;

  GatewayMode mode() const noexcept { return mode_; }

 private:
  GatewayMode mode_;
  std::filesystem::path store_;
  GatewayConfig config_;
  std::shared_ptr<ChatClient> inner_;
  std::mutex write_mutex_;
};

/// Assembles the client stack for a mode. Replay mode builds no network client.
std::shared_ptr<ChatClient> make_gateway(GatewayMode mode, const GatewayConfig& config,
                                         const std::optional<std::filesystem::path>& store,
                                         std::shared_ptr<HttpTransport> transport = nullptr);

}  // namespace stom
