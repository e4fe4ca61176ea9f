#include "stom/belief_engine.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "stom/assets.hpp"

namespace stom {

using nlohmann::json;

std::string_view to_string(PriorMode mode) {
  switch (mode) {
    case PriorMode::Uniform: return "uniform";
    case PriorMode::Explicit: return "explicit";
    case PriorMode::Elicited: return "elicited";
  }
  return "uniform";
}

PriorSpec PriorSpec::uniform(std::string note) { return {PriorMode::Uniform, {}, nullptr, std::move(note)}; }

PriorSpec PriorSpec::explicit_weights(std::vector<double> raw, std::string note) {
  return {PriorMode::Explicit, std::move(raw), nullptr, std::move(note)};
}

PriorSpec PriorSpec::elicited(std::shared_ptr<const PriorProvider> provider, std::string note) {
  return {PriorMode::Elicited, {}, std::move(provider), std::move(note)};
}

InitResult initialize(const HypothesisSet& set, const PriorSpec& spec, std::string_view scenario) {
  switch (spec.mode) {
    case PriorMode::Uniform:
      return {uniform_belief(set), false, "uniform"};
    case PriorMode::Explicit:
      return {belief_from_weights(set, spec.raw_weights), false, "explicit"};
    case PriorMode::Elicited:
      if (!spec.provider) {
        throw Error(ErrorKind::ConfigError, "elicited prior requires a prior provider");
      }
      try {
        const auto raw = spec.provider->propose(set, scenario);
        return {belief_from_weights(set, raw), false, "elicited:" + spec.provider->name()};
      } catch (const Error& e) {
        spdlog::warn("prior elicitation failed, using uniform prior: {}", e.what());
        return {uniform_belief(set), true, "uniform-fallback"};
      }
  }
  return {uniform_belief(set), false, "uniform"};
}

LlmPriorProvider::LlmPriorProvider(std::shared_ptr<ChatClient> gateway) : gateway_(std::move(gateway)) {
  if (!gateway_) throw Error(ErrorKind::ConfigError, "llm prior provider requires a gateway");
}

std::vector<double> LlmPriorProvider::propose(const HypothesisSet& set, std::string_view scenario) const {
  std::string hypotheses;
  json example = json::object();
  for (const auto& h : set.hypotheses()) {
    hypotheses += "- " + h.id + ": " + h.description + "\n";
    example[h.id] = 1.0;
  }
  ChatRequest request;
  request.messages.push_back({"system", "You are a careful analyst of social dialogue. You always answer with strict JSON."});
  request.messages.push_back({"user", assets::render(assets::text(assets::kPriorElicitation),
                                                     {{"scenario", std::string(scenario)},
                                                      {"hypotheses", hypotheses},
                                                      {"format_example", example.dump()}})});
  ChatResponse response;
  try {
    response = gateway_->complete(request);
  } catch (const Error& e) {
    if (!e.is_gateway_error()) throw;
    throw Error(ErrorKind::ProviderFailure, std::string("prior elicitation: ") + e.what());
  }
  // Same reply shape as likelihood scoring, without the [0, 1] cap.
  try {
    return parse_likelihood_scores(response.content, set);
  } catch (const Error& e) {
    throw Error(ErrorKind::ProviderFailure, std::string("prior elicitation: ") + e.what());
  }
}

HypothesisSet generate_hypotheses(ChatClient& gateway, std::string_view scenario, std::string_view goal,
                                  std::size_t count, std::string scenario_id) {
  ChatRequest request;
  request.messages.push_back({"system", "You are a careful analyst of social dialogue. You always answer with strict JSON."});
  request.messages.push_back({"user", assets::render(assets::text(assets::kHypothesisGeneration),
                                                     {{"count", std::to_string(count)},
                                                      {"scenario", std::string(scenario)},
                                                      {"goal", std::string(goal)}})});
  ChatResponse response;
  try {
    response = gateway.complete(request);
  } catch (const Error& e) {
    if (!e.is_gateway_error()) throw;
    throw Error(ErrorKind::ProviderFailure, std::string("hypothesis generation: ") + e.what());
  }
  try {
    const auto open = response.content.find('[');
    const auto close = response.content.rfind(']');
    if (open == std::string::npos || close == std::string::npos || close < open) {
      throw Error(ErrorKind::ParseError, "no JSON array in reply");
    }
    auto list = json::parse(response.content.substr(open, close - open + 1)).get<std::vector<IntentionHypothesis>>();
    return HypothesisSet(std::move(list), std::move(scenario_id));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProviderFailure, std::string("hypothesis generation: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::ProviderFailure, std::string("hypothesis generation: ") + e.what());
  }
}

std::vector<double> reconstruct_posterior(std::span<const double> prior, std::span<const double> likelihoods) {
  if (prior.size() != likelihoods.size()) {
    throw Error(ErrorKind::LengthMismatch, "likelihood vector not aligned with belief");
  }
  std::vector<double> out(prior.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    out[i] = prior[i] * likelihoods[i];
    mass += out[i];
  }
  if (!(mass > 0.0) || !std::isfinite(mass)) return {prior.begin(), prior.end()};
  for (double& w : out) w /= mass;
  return out;
}

UpdateResult bayes_update(const BeliefState& prior, std::span<const double> likelihoods) {
  if (likelihoods.size() != prior.size()) {
    throw Error(ErrorKind::LengthMismatch, "likelihood vector has " + std::to_string(likelihoods.size()) +
                                               " entries, belief has " + std::to_string(prior.size()));
  }
  for (double l : likelihoods) {
    if (!(l >= kLikelihoodFloor && l <= 1.0)) {
      throw Error(ErrorKind::PreconditionViolation, "likelihood " + std::to_string(l) + " is not clamped to [1e-6, 1]");
    }
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < prior.size(); ++i) mass += prior[i] * likelihoods[i];
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    spdlog::warn("degenerate belief update at turn {}: product mass {}", prior.turn(), mass);
    return {prior.with_turn(prior.turn() + 1), true};
  }
  return {BeliefState::from_distribution(reconstruct_posterior(prior.weights(), likelihoods), prior.turn() + 1),
          false};
}

UpdateResult bayes_update(const BeliefState& prior, const LikelihoodVector& likelihoods) {
  return bayes_update(prior, std::span<const double>(likelihoods.values));
}

json to_json(const BeliefTraceEntry& entry) {
  json lh = {{"values", entry.likelihoods.values}, {"provider", entry.likelihoods.provider_name}};
  lh["raw_response"] = entry.likelihoods.raw_response ? json(*entry.likelihoods.raw_response) : json(nullptr);
  return {{"turn", entry.turn},
          {"prior", to_json(entry.prior)},
          {"likelihoods", lh},
          {"posterior", to_json(entry.posterior)},
          {"entropy_nats", entry.entropy_nats},
          {"confidence", entry.confidence},
          {"regime", to_string(entry.regime)},
          {"provider_name", entry.provider_name},
          {"fallback_used", entry.fallback_used},
          {"degenerate_update", entry.degenerate_update}};
}

BeliefTraceEntry trace_entry_from_json(const json& j) {
  BeliefTraceEntry e;
  try {
    e.turn = j.at("turn").get<int>();
    e.prior = belief_from_json(j.at("prior"));
    const auto& lh = j.at("likelihoods");
    e.likelihoods.values = lh.at("values").get<std::vector<double>>();
    e.likelihoods.provider_name = lh.value("provider", std::string{});
    if (lh.contains("raw_response") && lh["raw_response"].is_string()) {
      e.likelihoods.raw_response = lh["raw_response"].get<std::string>();
    }
    e.posterior = belief_from_json(j.at("posterior"));
    e.entropy_nats = j.at("entropy_nats").get<double>();
    e.confidence = j.at("confidence").get<double>();
    e.regime = regime_from_string(j.at("regime").get<std::string>());
    e.provider_name = j.at("provider_name").get<std::string>();
    e.fallback_used = j.at("fallback_used").get<bool>();
    e.degenerate_update = j.value("degenerate_update", false);
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::ParseError, std::string("trace entry: ") + ex.what());
  }
  return e;
}

double reconstruction_error(const BeliefTraceEntry& entry) {
  const auto expected = reconstruct_posterior(entry.prior.weights(), entry.likelihoods.values);
  if (expected.size() != entry.posterior.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    worst = std::max(worst, std::abs(expected[i] - entry.posterior[i]));
  }
  return worst;
}

StepResult step(const HypothesisSet& set, const BeliefState& belief, const DialogueHistory& history,
                const Observation& obs, const LikelihoodProvider& provider, const RegimeThresholds& thresholds) {
  if (obs.speaker != Speaker::Partner) {
    throw Error(ErrorKind::PreconditionViolation, "belief updates fire only on partner observations");
  }
  if (belief.size() != set.size()) throw Error(ErrorKind::LengthMismatch, "belief not aligned with hypothesis set");
  obs.validate();

  BeliefTraceEntry entry;
  entry.turn = obs.turn;
  entry.prior = belief;
  entry.provider_name = provider.name();
  try {
    entry.likelihoods = provider.estimate(history, obs, set);
    if (entry.likelihoods.size() != set.size()) {
      throw Error(ErrorKind::ProviderFailure, "provider returned a misaligned likelihood vector");
    }
    entry.likelihoods.values = clamp_likelihoods(entry.likelihoods.values);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ProviderFailure) throw;
    spdlog::warn("likelihood provider '{}' failed on turn {}, treating observation as uninformative: {}",
                 provider.name(), obs.turn, e.what());
    entry.likelihoods = uniform_likelihood(set.size(), provider.name());
    entry.fallback_used = true;
  }

  auto update = bayes_update(belief, entry.likelihoods);
  entry.posterior = update.posterior;
  entry.degenerate_update = update.degenerate;
  entry.entropy_nats = entropy(update.posterior);
  entry.confidence = confidence(update.posterior);
  entry.regime = classify_regime(entry.confidence, thresholds);
  return {std::move(update.posterior), std::move(entry)};
}

}  // namespace stom
