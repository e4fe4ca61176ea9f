#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stom/core_types.hpp"
#include "stom/likelihood.hpp"
#include "stom/llm_gateway.hpp"
#include "stom/policy.hpp"

namespace stom {

/// Proposes raw (unnormalized) prior weights for a hypothesis set.
class PriorProvider {
 public:
  virtual ~PriorProvider() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> propose(const HypothesisSet& set, std::string_view scenario) const = 0;
};

/// Asks the LLM for a weight per hypothesis given the scenario.
class LlmPriorProvider : public PriorProvider {
 public:
  explicit LlmPriorProvider(std::shared_ptr<ChatClient> gateway);
  std::string name() const override { return "llm"; }
  std::vector<double> propose(const HypothesisSet& set, std::string_view scenario) const override;

 private:
  std::shared_ptr<ChatClient> gateway_;
};

enum class PriorMode { Uniform, Explicit, Elicited };

std::string_view to_string(PriorMode mode);

struct PriorSpec {
  PriorMode mode = PriorMode::Uniform;
  std::vector<double> raw_weights;
  std::shared_ptr<const PriorProvider> provider;
  std::string source_note;

  static PriorSpec uniform(std::string note = "uniform default");
  static PriorSpec explicit_weights(std::vector<double> raw, std::string note = "scenario file");
  static PriorSpec elicited(std::shared_ptr<const PriorProvider> provider, std::string note = "elicited");
};

struct InitResult {
  BeliefState belief;
  bool fallback_used = false;
  std::string source;
};

/// Builds B_0. An elicitation failure falls back to uniform and is logged,
/// never raised.
InitResult initialize(const HypothesisSet& set, const PriorSpec& spec, std::string_view scenario);

/// Asks the LLM for `count` candidate partner intentions. Throws ProviderFailure
/// when the reply cannot be turned into a valid HypothesisSet.
HypothesisSet generate_hypotheses(ChatClient& gateway, std::string_view scenario, std::string_view goal,
                                  std::size_t count, std::string scenario_id);

struct UpdateResult {
  BeliefState posterior;
  bool degenerate = false;
};

/// posterior_i = prior_i L_i / sum_j prior_j L_j, turn + 1. Likelihoods must
/// already lie in [1e-6, 1]. A zero (or non-finite) product mass returns the
/// prior weights unchanged with `degenerate` set.
UpdateResult bayes_update(const BeliefState& prior, std::span<const double> likelihoods);
UpdateResult bayes_update(const BeliefState& prior, const LikelihoodVector& likelihoods);

/// Raw normalized product, used to re-check stored trace entries. Returns the
/// prior when the product mass is zero.
std::vector<double> reconstruct_posterior(std::span<const double> prior, std::span<const double> likelihoods);

struct BeliefTraceEntry {
  int turn = 0;
  BeliefState prior = BeliefState::from_distribution({0.5, 0.5});
  LikelihoodVector likelihoods;
  BeliefState posterior = BeliefState::from_distribution({0.5, 0.5});
  double entropy_nats = 0.0;
  double confidence = 0.0;
  RegimeLabel regime = RegimeLabel::Low;
  std::string provider_name;
  bool fallback_used = false;
  bool degenerate_update = false;
};

nlohmann::json to_json(const BeliefTraceEntry& entry);
BeliefTraceEntry trace_entry_from_json(const nlohmann::json& j);

/// Largest per-component gap between the stored posterior and the one
/// re-derived from the stored prior and likelihoods.
double reconstruction_error(const BeliefTraceEntry& entry);

struct StepResult {
  BeliefState posterior;
  BeliefTraceEntry entry;
};

/// One partner observation through the likelihood model and Bayes rule.
/// `history` holds the turns before `obs`. A ProviderFailure is absorbed by
/// substituting a uniform likelihood (posterior = prior) and flagging
/// `fallback_used`. Self observations are rejected with PreconditionViolation.
StepResult step(const HypothesisSet& set, const BeliefState& belief, const DialogueHistory& history,
                const Observation& obs, const LikelihoodProvider& provider, const RegimeThresholds& thresholds);

}  // namespace stom
