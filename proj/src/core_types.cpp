#include "stom/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace stom {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidHypothesisSet: return "InvalidHypothesisSet";
    case ErrorKind::InvalidBelief: return "InvalidBelief";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NegativeWeight: return "NegativeWeight";
    case ErrorKind::ZeroMass: return "ZeroMass";
    case ErrorKind::SingletonSpace: return "SingletonSpace";
    case ErrorKind::InvalidObservation: return "InvalidObservation";
    case ErrorKind::PreconditionViolation: return "PreconditionViolation";
    case ErrorKind::ProviderFailure: return "ProviderFailure";
    case ErrorKind::MissingHypothesisScore: return "MissingHypothesisScore";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::TransportError: return "TransportError";
    case ErrorKind::ApiError: return "ApiError";
    case ErrorKind::RetriesExhausted: return "RetriesExhausted";
    case ErrorKind::ReplayMiss: return "ReplayMiss";
    case ErrorKind::NotApplicable: return "NotApplicable";
    case ErrorKind::VerificationFailure: return "VerificationFailure";
  }
  return "Unknown";
}

HypothesisSet::HypothesisSet(std::vector<IntentionHypothesis> hypotheses, std::string scenario_id)
    : hypotheses_(std::move(hypotheses)), scenario_id_(std::move(scenario_id)) {
  if (hypotheses_.size() < kMinHypotheses || hypotheses_.size() > kMaxHypotheses) {
    throw Error(ErrorKind::InvalidHypothesisSet,
                "hypothesis count " + std::to_string(hypotheses_.size()) + " outside [2, 16]");
  }
  std::set<std::string, std::less<>> seen;
  for (const auto& h : hypotheses_) {
    if (h.id.empty()) throw Error(ErrorKind::InvalidHypothesisSet, "empty hypothesis id");
    if (h.description.empty()) {
      throw Error(ErrorKind::InvalidHypothesisSet, "hypothesis '" + h.id + "' has no description");
    }
    if (!seen.insert(h.id).second) {
      throw Error(ErrorKind::InvalidHypothesisSet, "duplicate hypothesis id '" + h.id + "'");
    }
  }
}

std::optional<std::size_t> HypothesisSet::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < hypotheses_.size(); ++i) {
    if (hypotheses_[i].id == id) return i;
  }
  return std::nullopt;
}

BeliefState BeliefState::from_distribution(std::vector<double> weights, int turn) {
  if (turn < 0) throw Error(ErrorKind::InvalidBelief, "negative turn index");
  if (weights.empty()) throw Error(ErrorKind::InvalidBelief, "empty weight vector");
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw Error(ErrorKind::NegativeWeight, "weights must be finite and >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > kNormalizationTolerance) {
    throw Error(ErrorKind::InvalidBelief, "weights sum to " + std::to_string(sum));
  }
  return BeliefState(std::move(weights), turn);
}

BeliefState BeliefState::with_turn(int turn) const { return from_distribution(weights_, turn); }

std::string_view to_string(Speaker speaker) { return speaker == Speaker::Self ? "self" : "partner"; }

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::Speak: return "speak";
    case ActionKind::NonVerbal: return "nonverbal";
    case ActionKind::Leave: return "leave";
  }
  return "speak";
}

Speaker speaker_from_string(std::string_view text) {
  if (text == "self") return Speaker::Self;
  if (text == "partner") return Speaker::Partner;
  throw Error(ErrorKind::ParseError, "unknown speaker '" + std::string(text) + "'");
}

ActionKind action_kind_from_string(std::string_view text) {
  if (text == "speak") return ActionKind::Speak;
  if (text == "nonverbal") return ActionKind::NonVerbal;
  if (text == "leave") return ActionKind::Leave;
  throw Error(ErrorKind::ParseError, "unknown action kind '" + std::string(text) + "'");
}

void Observation::validate() const {
  if (content.empty() && action_kind != ActionKind::Leave) {
    throw Error(ErrorKind::InvalidObservation, "empty content on turn " + std::to_string(turn));
  }
}

void DialogueHistory::append(Observation observation) {
  observation.validate();
  if (!observations_.empty() && observation.turn <= observations_.back().turn) {
    throw Error(ErrorKind::InvalidObservation,
                "turn " + std::to_string(observation.turn) + " does not follow turn " +
                    std::to_string(observations_.back().turn));
  }
  observations_.push_back(std::move(observation));
}

BeliefState uniform_belief(const HypothesisSet& set) {
  const double w = 1.0 / static_cast<double>(set.size());
  return BeliefState::from_distribution(std::vector<double>(set.size(), w), 0);
}

BeliefState belief_from_weights(const HypothesisSet& set, std::span<const double> raw) {
  if (raw.size() != set.size()) {
    throw Error(ErrorKind::LengthMismatch, "expected " + std::to_string(set.size()) + " weights, got " +
                                               std::to_string(raw.size()));
  }
  double sum = 0.0;
  for (double w : raw) {
    if (!std::isfinite(w) || w < 0.0) throw Error(ErrorKind::NegativeWeight, "raw prior weights must be >= 0");
    sum += w;
  }
  if (sum <= 0.0) throw Error(ErrorKind::ZeroMass, "raw prior weights are all zero");
  std::vector<double> weights(raw.begin(), raw.end());
  for (double& w : weights) w /= sum;
  return BeliefState::from_distribution(std::move(weights), 0);
}

BeliefState point_mass(const HypothesisSet& set, std::size_t index) {
  if (index >= set.size()) throw Error(ErrorKind::LengthMismatch, "point mass index out of range");
  std::vector<double> weights(set.size(), 0.0);
  weights[index] = 1.0;
  return BeliefState::from_distribution(std::move(weights), 0);
}

namespace {

double log_in(LogBase base, double x) { return base == LogBase::Two ? std::log2(x) : std::log(x); }

}  // namespace

double entropy(const BeliefState& belief, LogBase base) {
  double h = 0.0;
  for (double w : belief.weights()) {
    if (w > 0.0) h -= w * log_in(base, w);
  }
  return std::max(h, 0.0);
}

double confidence(const BeliefState& belief, LogBase base) {
  const std::size_t k = belief.size();
  if (k < 2) throw Error(ErrorKind::SingletonSpace, "confidence undefined for a single hypothesis");
  // log k - H(b) written as sum_i w_i log(k w_i): exact zero for uniform
  // weights and exact log k for a point mass.
  const double kd = static_cast<double>(k);
  double gap = 0.0;
  for (double w : belief.weights()) {
    if (w > 0.0) gap += w * log_in(base, kd * w);
  }
  return std::clamp(gap / log_in(base, kd), 0.0, 1.0);
}

IntentEstimate argmax_intent(const BeliefState& belief, const HypothesisSet& set) {
  if (belief.size() != set.size()) throw Error(ErrorKind::LengthMismatch, "belief not aligned with hypothesis set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < belief.size(); ++i) {
    if (belief[i] > belief[best]) best = i;
  }
  return {set[best].id, belief[best], best};
}

void to_json(nlohmann::json& j, const IntentionHypothesis& h) {
  j = {{"id", h.id}, {"description", h.description}, {"tags", h.tags}};
}

void from_json(const nlohmann::json& j, IntentionHypothesis& h) {
  h.id = j.at("id").get<std::string>();
  h.description = j.at("description").get<std::string>();
  h.tags = j.value("tags", std::vector<std::string>{});
}

nlohmann::json to_json(const HypothesisSet& set) {
  return {{"scenario_id", set.scenario_id()}, {"hypotheses", set.hypotheses()}};
}

HypothesisSet hypothesis_set_from_json(const nlohmann::json& j) {
  return HypothesisSet(j.at("hypotheses").get<std::vector<IntentionHypothesis>>(),
                       j.value("scenario_id", std::string{}));
}

nlohmann::json to_json(const BeliefState& belief) {
  return {{"weights", std::vector<double>(belief.weights().begin(), belief.weights().end())},
          {"turn", belief.turn()}};
}

BeliefState belief_from_json(const nlohmann::json& j) {
  return BeliefState::from_distribution(j.at("weights").get<std::vector<double>>(), j.at("turn").get<int>());
}

nlohmann::json to_json(const Observation& obs) {
  return {{"speaker", to_string(obs.speaker)},
          {"content", obs.content},
          {"turn", obs.turn},
          {"action", to_string(obs.action_kind)}};
}

Observation observation_from_json(const nlohmann::json& j) {
  Observation obs;
  obs.speaker = speaker_from_string(j.at("speaker").get<std::string>());
  obs.content = j.at("content").get<std::string>();
  obs.turn = j.at("turn").get<int>();
  obs.action_kind = action_kind_from_string(j.at("action").get<std::string>());
  obs.validate();
  return obs;
}

}  // namespace stom
