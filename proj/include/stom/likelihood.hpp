#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stom/assets.hpp"
#include "stom/core_types.hpp"
#include "stom/llm_gateway.hpp"

namespace stom {

inline constexpr double kLikelihoodFloor = 1e-6;

/// Per-hypothesis P(observation | hypothesis), index-aligned with a
/// HypothesisSet. Values are unnormalized likelihoods in [1e-6, 1].
struct LikelihoodVector {
  std::vector<double> values;
  std::string provider_name;
  std::optional<std::string> raw_response;

  std::size_t size() const noexcept { return values.size(); }
};

/// Clamps into [kLikelihoodFloor, 1]; NaN maps to the floor. Logs a warning
/// for every adjusted entry. Idempotent.
std::vector<double> clamp_likelihoods(std::span<const double> values);

LikelihoodVector make_likelihood_vector(std::span<const double> raw, std::string provider_name,
                                        std::optional<std::string> raw_response = std::nullopt);

/// All ones: carries no information.
LikelihoodVector uniform_likelihood(std::size_t size, std::string provider_name);

/// Renders the visible dialogue as numbered lines, keeping the last `window`
/// observations and marking elided ones. Empty history renders "(no turns yet)".
std::string render_history(const DialogueHistory& history, std::size_t window);
std::string render_observation(const Observation& obs);

/// The likelihood-model interface. Implementations throw Error{ProviderFailure}
/// when they cannot produce a vector; the belief engine then substitutes a
/// uniform one.
class LikelihoodProvider {
 public:
  virtual ~LikelihoodProvider() = default;
  virtual std::string name() const = 0;
  virtual LikelihoodVector estimate(const DialogueHistory& history, const Observation& obs,
                                    const HypothesisSet& set) const = 0;
};

/// Dense (hypothesis, utterance class) -> probability table plus a regex
/// classifier. Classes are tried in declaration order; the first class with a
/// matching pattern (case-insensitive regex search) wins.
class LikelihoodTable {
 public:
  static LikelihoodTable from_json(const nlohmann::json& j);
  static LikelihoodTable load(const std::filesystem::path& path);

  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::optional<std::string> classify(std::string_view text) const;

  /// Throws ProviderFailure when the pair is absent.
  double probability(std::string_view hypothesis_id, std::string_view utterance_class) const;

  /// Every hypothesis of `set` has a row covering every class. Throws ConfigError otherwise.
  void check_dense_for(const HypothesisSet& set) const;

  nlohmann::json to_json() const;

 private:
  struct ClassRule {
    std::string name;
    std::vector<std::string> patterns;
    std::vector<std::regex> compiled;
  };

  std::vector<std::string> classes_;
  std::vector<ClassRule> rules_;
  std::map<std::string, std::map<std::string, double, std::less<>>, std::less<>> table_;
};

class TabularProvider : public LikelihoodProvider {
 public:
  explicit TabularProvider(LikelihoodTable table) : table_(std::move(table)) {}

  std::string name() const override { return "tabular"; }
  LikelihoodVector estimate(const DialogueHistory& history, const Observation& obs,
                            const HypothesisSet& set) const override;

  const LikelihoodTable& table() const noexcept { return table_; }

 private:
  LikelihoodTable table_;
};

struct KeywordWeight {
  std::string keyword;
  double weight = 0.0;
};

/// Keyword lists per hypothesis id, plus the logistic bias b.
struct KeywordModel {
  std::map<std::string, std::vector<KeywordWeight>, std::less<>> keywords;
  double bias = 0.0;

  static KeywordModel from_json(const nlohmann::json& j);
  static KeywordModel load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// Sum of weights of keywords that occur as whole words (case-insensitive).
/// A multi-word keyword matches a contiguous run of words.
double keyword_score(std::string_view text, std::span<const KeywordWeight> keywords);

/// L_i = logistic(score_i - bias), clamped.
LikelihoodVector keyword_estimate(const Observation& obs, const HypothesisSet& set, const KeywordModel& model);

class KeywordProvider : public LikelihoodProvider {
 public:
  explicit KeywordProvider(KeywordModel model) : model_(std::move(model)) {}

  std::string name() const override { return "keyword"; }
  LikelihoodVector estimate(const DialogueHistory& history, const Observation& obs,
                            const HypothesisSet& set) const override;

 private:
  KeywordModel model_;
};

struct LlmProviderOptions {
  int max_parse_retries = 2;
  std::size_t history_window = 20;
  std::string prompt_template{assets::kLikelihoodScoring};

  static LlmProviderOptions from_json(const nlohmann::json& j);
};

/// Strips markdown code fences and returns the first balanced JSON object.
/// Throws ParseError when there is none.
std::string extract_json_object(std::string_view text);

/// Reads {"<id>": number | {"score": number, ...}} for every hypothesis.
/// Throws MissingHypothesisScore or ParseError. Values are not clamped here.
std::vector<double> parse_likelihood_scores(std::string_view response, const HypothesisSet& set);

/// Builds the scoring request (system + user message) for one observation.
ChatRequest build_likelihood_request(const DialogueHistory& history, const Observation& obs,
                                     const HypothesisSet& set, const LlmProviderOptions& options);

class LlmLikelihoodProvider : public LikelihoodProvider {
 public:
  LlmLikelihoodProvider(std::shared_ptr<ChatClient> gateway, LlmProviderOptions options = {});

  std::string name() const override { return "llm"; }
  LikelihoodVector estimate(const DialogueHistory& history, const Observation& obs,
                            const HypothesisSet& set) const override;

  const LlmProviderOptions& options() const noexcept { return options_; }

 private:
  std::shared_ptr<ChatClient> gateway_;
  LlmProviderOptions options_;
};

}  // namespace stom
