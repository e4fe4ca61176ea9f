#include "stom/llm_gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <httplib.h>

namespace stom {

using nlohmann::json;

void GatewayConfig::validate() const {
  if (base_url.empty()) throw Error(ErrorKind::ConfigError, "gateway.base_url is required");
  if (model.empty()) throw Error(ErrorKind::ConfigError, "gateway.model is required");
  if (!(timeout_seconds > 0.0)) throw Error(ErrorKind::ConfigError, "gateway.timeout_seconds must be > 0");
  if (max_retries < 0) throw Error(ErrorKind::ConfigError, "gateway.max_retries must be >= 0");
  if (!(temperature >= 0.0)) throw Error(ErrorKind::ConfigError, "gateway.temperature must be >= 0");
  if (max_tokens <= 0) throw Error(ErrorKind::ConfigError, "gateway.max_tokens must be > 0");
  if (backoff_base_seconds < 0.0) throw Error(ErrorKind::ConfigError, "gateway.backoff_base_seconds must be >= 0");
  if (max_in_flight < 1) throw Error(ErrorKind::ConfigError, "gateway.max_in_flight must be >= 1");
}

GatewayConfig GatewayConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "gateway config must be a JSON object");
  auto require = [&](const char* key) -> const json& {
    if (!j.contains(key)) throw Error(ErrorKind::ConfigError, std::string("gateway.") + key + " is required");
    return j.at(key);
  };
  GatewayConfig cfg;
  try {
    cfg.base_url = require("base_url").get<std::string>();
    cfg.model = require("model").get<std::string>();
    cfg.temperature = require("temperature").get<double>();
    cfg.api_key_env = j.value("api_key_env", std::string{});
    cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
    cfg.timeout_seconds = j.value("timeout_seconds", cfg.timeout_seconds);
    cfg.max_retries = j.value("max_retries", cfg.max_retries);
    cfg.backoff_base_seconds = j.value("backoff_base_seconds", cfg.backoff_base_seconds);
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("gateway: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json GatewayConfig::to_json() const {
  return {{"base_url", base_url},
          {"model", model},
          {"api_key_env", api_key_env},
          {"temperature", temperature},
          {"max_tokens", max_tokens},
          {"timeout_seconds", timeout_seconds},
          {"max_retries", max_retries},
          {"backoff_base_seconds", backoff_base_seconds},
          {"max_in_flight", max_in_flight}};
}

void ChatRequest::validate() const {
  if (messages.empty()) throw Error(ErrorKind::PreconditionViolation, "chat request has no messages");
  if (messages.front().role != "system") {
    throw Error(ErrorKind::PreconditionViolation, "first chat message must have the system role");
  }
}

json to_json(const ChatResponse& response) {
  return {{"content", response.content},
          {"finish_reason", response.finish_reason},
          {"usage", {{"prompt_tokens", response.usage.prompt_tokens},
                     {"completion_tokens", response.usage.completion_tokens}}},
          {"latency_ms", response.latency_ms}};
}

ChatResponse chat_response_from_json(const json& j) {
  ChatResponse r;
  r.content = j.at("content").get<std::string>();
  r.finish_reason = j.value("finish_reason", std::string{});
  if (j.contains("usage")) {
    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
    r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
  }
  r.latency_ms = j.value("latency_ms", 0.0);
  return r;
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::ConfigError, "base_url lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport : public HttpTransport {
 public:
  HttpReply post_json(const std::string& url, const std::multimap<std::string, std::string>& headers,
                      const std::string& body, double timeout_seconds) override {
    const auto parts = split_url(url);
    httplib::Client client(parts.origin);
    const auto secs = static_cast<time_t>(timeout_seconds);
    const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers h(headers.begin(), headers.end());
    auto result = client.Post(parts.path, h, body, "application/json");
    if (!result) {
      const auto err = result.error();
      const auto what = httplib::to_string(err);
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
        throw Error(ErrorKind::Timeout, what);
      }
      throw Error(ErrorKind::TransportError, what);
    }
    return {result->status, result->body};
  }
};

std::string excerpt(const std::string& body) { return body.size() > 200 ? body.substr(0, 200) + "..." : body; }

ChatResponse parse_completion(const std::string& body) {
  try {
    const auto j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    r.content = choice.at("message").at("content").get<std::string>();
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
      r.finish_reason = choice["finish_reason"].get<std::string>();
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ApiError, "status 200 with malformed completion body: " + excerpt(body));
  }
}

}  // namespace

std::shared_ptr<HttpTransport> make_default_transport() { return std::make_shared<HttplibTransport>(); }

InFlightLimiter::InFlightLimiter(int capacity) : capacity_(capacity < 1 ? 1 : capacity) {}

InFlightLimiter::Slot::Slot(InFlightLimiter& owner) : owner_(owner) {
  std::unique_lock lock(owner_.mutex_);
  owner_.cv_.wait(lock, [&] { return owner_.in_use_ < owner_.capacity_; });
  ++owner_.in_use_;
}

InFlightLimiter::Slot::~Slot() {
  {
    std::lock_guard lock(owner_.mutex_);
    --owner_.in_use_;
  }
  owner_.cv_.notify_one();
}

HttpChatClient::HttpChatClient(GatewayConfig config, std::shared_ptr<HttpTransport> transport, Sleeper sleeper)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : make_default_transport()),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); })),
      limiter_(config_.max_in_flight) {
  config_.validate();
}

ChatResponse HttpChatClient::complete(const ChatRequest& request) {
  request.validate();
  const ChatRequest resolved = resolve_request(request, config_);
  const std::string body = canonical_request(config_.model, resolved).dump();

  std::multimap<std::string, std::string> headers;
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorKind::ConfigError, "environment variable " + config_.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  std::string base = config_.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  const std::string url = base + "/chat/completions";

  InFlightLimiter::Slot slot(limiter_);
  std::optional<Error> last;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = config_.backoff_base_seconds * std::pow(2.0, attempt - 1);
      spdlog::warn("gateway: retry {}/{} after {:.2f}s ({})", attempt, config_.max_retries, delay,
                   last ? last->what() : "");
      sleeper_(std::chrono::duration<double>(delay));
    }
    const auto start = std::chrono::steady_clock::now();
    HttpReply reply;
    try {
      reply = transport_->post_json(url, headers, body, config_.timeout_seconds);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Timeout && e.kind() != ErrorKind::TransportError) throw;
      last = e;
      continue;
    }
    const double latency =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (reply.status >= 200 && reply.status < 300) {
      auto response = parse_completion(reply.body);
      response.latency_ms = latency;
      return response;
    }
    Error api(ErrorKind::ApiError, "status " + std::to_string(reply.status) + ": " + excerpt(reply.body));
    if (reply.status == 429 || reply.status >= 500) {
      last = api;
      continue;
    }
    throw api;
  }
  if (config_.max_retries == 0 && last) throw *last;
  throw Error(ErrorKind::RetriesExhausted, "gave up after " + std::to_string(config_.max_retries) +
                                               " retries; last error: " + (last ? last->what() : "none"));
}

ChatResponse chat_complete(const GatewayConfig& config, const ChatRequest& request) {
  HttpChatClient client(config);
  return client.complete(request);
}

ChatRequest resolve_request(const ChatRequest& request, const GatewayConfig& config) {
  ChatRequest out = request;
  if (!out.temperature) out.temperature = config.temperature;
  if (!out.max_tokens) out.max_tokens = config.max_tokens;
  return out;
}

json canonical_request(const std::string& model, const ChatRequest& resolved) {
  json messages = json::array();
  for (const auto& m : resolved.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json j = {{"model", model}, {"messages", messages}};
  if (resolved.temperature) j["temperature"] = *resolved.temperature;
  if (resolved.max_tokens) j["max_tokens"] = *resolved.max_tokens;
  return j;
}

std::string request_hash(const std::string& model, const ChatRequest& resolved) {
  const std::string text = canonical_request(model, resolved).dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

GatewayMode gateway_mode_from_string(const std::string& text) {
  if (text == "live") return GatewayMode::Live;
  if (text == "record") return GatewayMode::Record;
  if (text == "replay") return GatewayMode::Replay;
  throw Error(ErrorKind::ConfigError, "unknown gateway mode '" + text + "' (expected live|record|replay)");
}

std::string to_string(GatewayMode mode) {
  switch (mode) {
    case GatewayMode::Live: return "live";
    case GatewayMode::Record: return "record";
    case GatewayMode::Replay: return "replay";
  }
  return "live";
}

RecordReplayClient::RecordReplayClient(GatewayMode mode, std::filesystem::path store, GatewayConfig config,
                                       std::shared_ptr<ChatClient> inner)
    : mode_(mode), store_(std::move(store)), config_(std::move(config)), inner_(std::move(inner)) {
  if (mode_ != GatewayMode::Live && store_.empty()) {
    throw Error(ErrorKind::ConfigError, "record/replay mode requires a store path");
  }
  if (mode_ != GatewayMode::Replay && !inner_) {
    throw Error(ErrorKind::ConfigError, "live/record mode requires an underlying client");
  }
  if (mode_ == GatewayMode::Record) std::filesystem::create_directories(store_);
}

ChatResponse RecordReplayClient::complete(const ChatRequest& request) {
  request.validate();
  if (mode_ == GatewayMode::Live) return inner_->complete(request);

  const ChatRequest resolved = resolve_request(request, config_);
  const std::string hash = request_hash(config_.model, resolved);
  const auto file = store_ / (hash + ".json");

  if (mode_ == GatewayMode::Replay) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::ReplayMiss, "no recorded response for request " + hash);
    try {
      return chat_response_from_json(json::parse(in).at("response"));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ReplayMiss, "unreadable recording " + file.string() + ": " + e.what());
    }
  }

  ChatResponse response = inner_->complete(resolved);
  const json entry = {{"request", canonical_request(config_.model, resolved)}, {"response", to_json(response)}};
  std::lock_guard lock(write_mutex_);
  const auto tmp = store_ / (hash + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << entry.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, file);
  return response;
}

std::shared_ptr<ChatClient> make_gateway(GatewayMode mode, const GatewayConfig& config,
                                         const std::optional<std::filesystem::path>& store,
                                         std::shared_ptr<HttpTransport> transport) {
  if (mode == GatewayMode::Live) return std::make_shared<HttpChatClient>(config, std::move(transport));
  if (!store) throw Error(ErrorKind::ConfigError, to_string(mode) + " mode requires a replay store path");
  std::shared_ptr<ChatClient> inner;
  if (mode == GatewayMode::Record) inner = std::make_shared<HttpChatClient>(config, std::move(transport));
  return std::make_shared<RecordReplayClient>(mode, *store, config, std::move(inner));
}

}  // namespace stom
