#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "stom/belief_engine.hpp"
#include "stom/core_types.hpp"
#include "stom/likelihood.hpp"
#include "stom/llm_gateway.hpp"
#include "stom/policy.hpp"

namespace stom {

inline constexpr int kMinEpisodeTurns = 2;
inline constexpr int kMaxEpisodeTurns = 100;

struct UtteranceTemplate {
  std::string text;
  ActionKind action = ActionKind::Speak;
};

struct UtteranceClass {
  std::string name;
  std::vector<UtteranceTemplate> templates;
};

/// Per-intent categorical distribution over utterance classes; each class
/// holds one or more templates picked uniformly.
struct PartnerUtteranceModel {
  std::vector<UtteranceClass> classes;
  std::map<std::string, std::vector<double>, std::less<>> distribution;  // aligned with `classes`

  /// Every row sums to 1 within 1e-9 and every class has a template.
  void validate() const;

  static PartnerUtteranceModel from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Scenario {
  std::string id;
  std::string context;
  AgentBrief focal;
  AgentBrief partner;
  std::optional<HypothesisSet> hypotheses;
  bool elicit_hypotheses = false;
  std::size_t hypothesis_count = 4;
  std::optional<std::string> true_intent;
  int max_turns = 10;
  bool partner_first = true;
  PriorMode prior_mode = PriorMode::Uniform;
  std::vector<double> prior_weights;
  std::optional<PartnerUtteranceModel> partner_model;
  /// Default provider config files by provider name ("tabular", "keyword", "llm").
  /// Relative entries resolve against the scenario file's directory in load().
  std::map<std::string, std::filesystem::path> provider_configs;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  static Scenario from_json(const nlohmann::json& j);
  static Scenario load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

class PartnerAgent {
 public:
  virtual ~PartnerAgent() = default;
  virtual std::string kind() const = 0;
  virtual Observation act(const DialogueHistory& history, int turn) = 0;
};

class FocalAgent {
 public:
  virtual ~FocalAgent() = default;
  virtual std::string kind() const = 0;
  virtual Observation act(const std::string& prompt, const PolicyDirective& directive,
                          const DialogueHistory& history, int turn) = 0;
};

/// Samples utterances from the true intent's class distribution with its own
/// mt19937_64. Each turn draws u1 for the class and u2 for the template, both
/// as (next() >> 11) * 2^-53.
class ScriptedPartner : public PartnerAgent {
 public:
  ScriptedPartner(PartnerUtteranceModel model, std::string true_intent, std::uint64_t seed);

  std::string kind() const override { return "scripted"; }
  Observation act(const DialogueHistory& history, int turn) override;

  /// Class name of the most recent utterance.
  const std::string& last_class() const noexcept { return last_class_; }

 private:
  double next_uniform();

  PartnerUtteranceModel model_;
  std::string true_intent_;
  std::vector<double> row_;
  std::mt19937_64 rng_;
  std::string last_class_;
};

/// Partner played by an LLM that is told its private intention.
class LlmPartner : public PartnerAgent {
 public:
  LlmPartner(std::shared_ptr<ChatClient> gateway, std::string scenario, AgentBrief brief, std::string intent,
             std::size_t history_window = 20);

  std::string kind() const override { return "llm"; }
  Observation act(const DialogueHistory& history, int turn) override;

 private:
  std::shared_ptr<ChatClient> gateway_;
  std::string scenario_;
  AgentBrief brief_;
  std::string intent_;
  std::size_t history_window_;
};

/// Deterministic stand-in for the acting LLM: one canned line per policy mode.
class ScriptedFocalAgent : public FocalAgent {
 public:
  std::string kind() const override { return "scripted"; }
  Observation act(const std::string& prompt, const PolicyDirective& directive, const DialogueHistory& history,
                  int turn) override;
};

class LlmFocalAgent : public FocalAgent {
 public:
  explicit LlmFocalAgent(std::shared_ptr<ChatClient> gateway);

  std::string kind() const override { return "llm"; }
  Observation act(const std::string& prompt, const PolicyDirective& directive, const DialogueHistory& history,
                  int turn) override;

 private:
  std::shared_ptr<ChatClient> gateway_;
};

/// Turns an LLM reply into an action: "LEAVE" ends the conversation.
Observation observation_from_reply(const std::string& reply, Speaker speaker, int turn);

struct EpisodeAgents {
  std::shared_ptr<PartnerAgent> partner;
  std::shared_ptr<FocalAgent> focal;
  std::shared_ptr<const LikelihoodProvider> provider;
  std::shared_ptr<const PriorProvider> prior_provider;  // needed for elicited priors
  std::shared_ptr<ChatClient> hypothesis_gateway;       // needed for elicited hypothesis sets
};

struct EpisodeOptions {
  RegimeThresholds thresholds;
  std::size_t history_window = 20;
  std::uint64_t seed = 0;
  /// Extra fields copied into the transcript's config snapshot.
  nlohmann::json config_extra = nlohmann::json::object();
};

struct EpisodeTurn {
  Observation observation;
  std::optional<BeliefTraceEntry> trace;   // partner turns only
  std::optional<PolicyMode> policy_mode;   // focal turns only
};

struct RegimeOccupancy {
  double high = 0.0;
  double medium = 0.0;
  double low = 0.0;
};

/// Proxy metrics against the partner's ground-truth intent. These are not
/// benchmark scores.
struct EpisodeMetrics {
  std::optional<int> turns_to_argmax_correct;
  std::optional<double> final_true_intent_mass;
  std::optional<double> mean_brier;
  std::vector<double> confidence_trajectory;
  RegimeOccupancy regime_occupancy;
  int partner_turns = 0;
  int total_turns = 0;
  double final_confidence = 0.0;
  std::string final_argmax;
};

nlohmann::json to_json(const EpisodeMetrics& metrics);
EpisodeMetrics metrics_from_json(const nlohmann::json& j);

struct EpisodeRecord {
  std::string scenario_id;
  nlohmann::json config;
  std::optional<HypothesisSet> hypotheses;
  std::optional<BeliefState> initial_belief;
  std::string prior_source;
  bool prior_fallback_used = false;
  std::optional<std::string> true_intent;
  std::vector<EpisodeTurn> turns;
  EpisodeMetrics metrics;
  bool aborted = false;
  std::string abort_reason;

  std::vector<const BeliefTraceEntry*> trace_entries() const;
  std::optional<BeliefState> final_belief() const;
};

EpisodeMetrics compute_metrics(const HypothesisSet& set, const BeliefState& initial,
                               const std::vector<EpisodeTurn>& turns, std::optional<std::size_t> true_index,
                               const RegimeThresholds& thresholds);

/// Alternating two-agent dialogue. Partner turns update the belief; focal turns
/// build the policy prompt from it. Stops at max_turns or a Leave action.
/// Gateway failures end the episode early with `aborted` set.
EpisodeRecord run_episode(const Scenario& scenario, const EpisodeAgents& agents, const EpisodeOptions& options);

/// True iff the final belief puts at least 0.99 on the true intent.
/// Throws NotApplicable when the true intent is unknown.
bool convergence_check(const EpisodeRecord& record);

inline constexpr double kConvergenceMass = 0.99;

using AgentFactory = std::function<EpisodeAgents(const Scenario& scenario, std::uint64_t seed)>;

struct BatchOptions {
  int repetitions = 1;
  int parallelism = 1;
  std::uint64_t seed_base = 0;
  RegimeThresholds thresholds;
  std::size_t history_window = 20;
  nlohmann::json config_extra = nlohmann::json::object();
  std::optional<std::filesystem::path> out_dir;
};

struct BatchEpisodeResult {
  std::string scenario_id;
  int repetition = 0;
  std::uint64_t seed = 0;
  std::optional<EpisodeRecord> record;
  bool aborted = false;
  std::string error;
  std::string file;
};

struct BatchSummary {
  nlohmann::json summary;
  std::vector<BatchEpisodeResult> episodes;
  int aborted = 0;
};

/// Runs every scenario `repetitions` times with seed = seed_base + repetition,
/// up to `parallelism` episodes at a time. Results keep job order, so output
/// bytes do not depend on scheduling. Writes one JSONL per episode plus
/// summary.json when `out_dir` is set.
BatchSummary run_batch(const std::vector<Scenario>& scenarios, const AgentFactory& factory,
                       const BatchOptions& options);

std::string episode_file_name(const std::string& scenario_id, int repetition);

}  // namespace stom
