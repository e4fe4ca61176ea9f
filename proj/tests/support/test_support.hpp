#pragma once

#include <atomic>
#include <cmath>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "stom/core_types.hpp"
#include "stom/likelihood.hpp"
#include "stom/llm_gateway.hpp"
#include "stom/simulator.hpp"

namespace stom::testing {

inline HypothesisSet make_set(std::size_t k, const std::string& scenario = "test") {
  std::vector<IntentionHypothesis> hs;
  for (std::size_t i = 0; i < k; ++i) {
    hs.push_back({"h" + std::to_string(i + 1), "Intention number " + std::to_string(i + 1), {}});
  }
  return HypothesisSet(std::move(hs), scenario);
}

/// Uniform point on the simplex via normalized exponentials. `sparsity` is the
/// chance that a coordinate is forced to zero (at least one stays positive).
inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t k, double sparsity = 0.0) {
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution zero(sparsity);
  std::vector<double> w(k);
  double sum = 0.0;
  for (auto& x : w) {
    x = zero(rng) ? 0.0 : expo(rng);
    sum += x;
  }
  if (sum == 0.0) {
    w[rng() % k] = 1.0;
    sum = 1.0;
  }
  for (auto& x : w) x /= sum;
  return w;
}

inline std::vector<double> random_likelihoods(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<double> u(kLikelihoodFloor, 1.0);
  std::vector<double> l(k);
  for (auto& x : l) x = u(rng);
  return l;
}

/// A tabular scenario whose classifier and sampler agree by construction:
/// class j's single template is "signal cj here" and its regex is \bcj\b.
struct GeneratedScenario {
  Scenario scenario;
  nlohmann::json table_json;
  std::vector<std::vector<double>> table;  // [hypothesis][class]
  std::size_t true_index = 0;
  int partner_turns = 0;
};

inline std::string class_name(std::size_t j) { return "c" + std::to_string(j); }
inline std::string class_text(std::size_t j) { return "signal c" + std::to_string(j) + " here"; }

inline GeneratedScenario generate_tabular_scenario(std::mt19937_64& rng, std::size_t k, int partner_turns,
                                                   const std::string& id) {
  GeneratedScenario g;
  const std::size_t classes = k + 1;
  std::uniform_real_distribution<double> cell(0.05, 1.0);
  nlohmann::json classifier = nlohmann::json::object();
  nlohmann::json table = nlohmann::json::object();
  nlohmann::json class_names = nlohmann::json::array();
  PartnerUtteranceModel model;
  for (std::size_t j = 0; j < classes; ++j) {
    class_names.push_back(class_name(j));
    classifier[class_name(j)] = nlohmann::json::array({"\\b" + class_name(j) + "\\b"});
    model.classes.push_back({class_name(j), {{class_text(j), ActionKind::Speak}}});
  }
  const auto set = make_set(k, id);
  g.table.assign(k, std::vector<double>(classes));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < classes; ++j) {
      g.table[i][j] = cell(rng);
      table[set[i].id][class_name(j)] = g.table[i][j];
    }
    model.distribution[set[i].id] = random_simplex(rng, classes);
  }
  g.table_json = {{"classes", class_names}, {"classifier", classifier}, {"table", table}};
  g.true_index = rng() % k;
  g.partner_turns = partner_turns;

  Scenario& s = g.scenario;
  s.id = id;
  s.context = "Generated scenario " + id;
  s.hypotheses = set;
  s.true_intent = set[g.true_index].id;
  s.max_turns = 2 * partner_turns;
  s.partner_first = true;
  s.prior_mode = PriorMode::Explicit;
  s.prior_weights = random_simplex(rng, k);
  for (auto& w : s.prior_weights) w += 0.01;  // keep every prior entry positive
  s.partner_model = model;
  s.validate();
  return g;
}

/// prior_0 * prod L over the observed class sequence, normalized once at the
/// end, in long double.
inline std::vector<long double> brute_force_posterior(const std::vector<double>& prior0,
                                                      const std::vector<std::vector<double>>& table,
                                                      const std::vector<std::size_t>& class_sequence) {
  std::vector<long double> w(prior0.size());
  long double total = 0.0L;
  for (std::size_t i = 0; i < w.size(); ++i) {
    long double x = prior0[i];
    for (std::size_t c : class_sequence) x *= static_cast<long double>(table[i][c]);
    w[i] = x;
  }
  for (auto x : w) total += x;
  for (auto& x : w) x /= total;
  return w;
}

inline std::vector<double> normalized(std::vector<double> raw) {
  double s = 0.0;
  for (double x : raw) s += x;
  for (auto& x : raw) x /= s;
  return raw;
}

/// Scoped temporary directory.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "stom") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Transport that replays a queue of canned replies and records every call.
class FakeTransport : public HttpTransport {
 public:
  struct Call {
    std::string url;
    std::multimap<std::string, std::string> headers;
    std::string body;
  };

  void push(int status, std::string body) { replies_.push_back({status, std::move(body)}); }
  void push_throw(ErrorKind kind) { replies_.push_back({-static_cast<int>(kind) - 1, ""}); }

  HttpReply post_json(const std::string& url, const std::multimap<std::string, std::string>& headers,
                      const std::string& body, double) override {
    std::lock_guard lock(mutex_);
    calls.push_back({url, headers, body});
    if (replies_.empty()) throw Error(ErrorKind::TransportError, "fake transport has no reply queued");
    auto r = replies_.front();
    replies_.pop_front();
    if (r.status < 0) throw Error(static_cast<ErrorKind>(-r.status - 1), "injected failure");
    return r;
  }

  std::vector<Call> calls;

 private:
  std::deque<HttpReply> replies_;
  std::mutex mutex_;
};

inline std::string completion_body(const std::string& content, int prompt_tokens = 10, int completion_tokens = 5) {
  return nlohmann::json{{"choices", {{{"index", 0},
                                      {"message", {{"role", "assistant"}, {"content", content}}},
                                      {"finish_reason", "stop"}}}},
                        {"usage", {{"prompt_tokens", prompt_tokens}, {"completion_tokens", completion_tokens}}}}
      .dump();
}

/// ChatClient driven by a callback; counts calls.
class FakeChat : public ChatClient {
 public:
  using Handler = std::function<std::string(const ChatRequest&, int call)>;
  explicit FakeChat(Handler handler) : handler_(std::move(handler)) {}

  ChatResponse complete(const ChatRequest& request) override {
    const int n = calls++;
    requests.push_back(request);
    ChatResponse r;
    r.content = handler_(request, n);
    r.finish_reason = "stop";
    return r;
  }

  std::atomic<int> calls{0};
  std::vector<ChatRequest> requests;

 private:
  Handler handler_;
};

inline GatewayConfig test_gateway_config(const std::string& base_url = "http://127.0.0.1:9") {
  GatewayConfig c;
  c.base_url = base_url;
  c.model = "test-model";
  c.api_key_env = "STOM_TEST_API_KEY";
  c.temperature = 0.0;
  c.max_retries = 3;
  c.backoff_base_seconds = 0.001;
  c.timeout_seconds = 5;
  return c;
}

}  // namespace stom::testing
