#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stom/error.hpp"

namespace stom {

inline constexpr std::size_t kMinHypotheses = 2;
inline constexpr std::size_t kMaxHypotheses = 16;
inline constexpr double kNormalizationTolerance = 1e-9;

struct IntentionHypothesis {
  std::string id;
  std::string description;
  std::vector<std::string> tags;

  bool operator==(const IntentionHypothesis&) const = default;
};

/// The finite intention space. Ordering is fixed at construction; every
/// BeliefState and LikelihoodVector is index-aligned with it.
class HypothesisSet {
 public:
  HypothesisSet(std::vector<IntentionHypothesis> hypotheses, std::string scenario_id);

  std::size_t size() const noexcept { return hypotheses_.size(); }
  const IntentionHypothesis& operator[](std::size_t i) const { return hypotheses_.at(i); }
  const std::vector<IntentionHypothesis>& hypotheses() const noexcept { return hypotheses_; }
  const std::string& scenario_id() const noexcept { return scenario_id_; }

  std::optional<std::size_t> index_of(std::string_view id) const;

  bool operator==(const HypothesisSet&) const = default;

 private:
  std::vector<IntentionHypothesis> hypotheses_;
  std::string scenario_id_;
};

/// Normalized probability vector over a HypothesisSet at time index `turn`.
class BeliefState {
 public:
  /// Accepts weights that are already a distribution (within 1e-9).
  static BeliefState from_distribution(std::vector<double> weights, int turn = 0);

  std::span<const double> weights() const noexcept { return weights_; }
  double operator[](std::size_t i) const { return weights_.at(i); }
  std::size_t size() const noexcept { return weights_.size(); }
  int turn() const noexcept { return turn_; }

  BeliefState with_turn(int turn) const;

  bool operator==(const BeliefState&) const = default;

 private:
  BeliefState(std::vector<double> weights, int turn) : weights_(std::move(weights)), turn_(turn) {}

  std::vector<double> weights_;
  int turn_ = 0;
};

enum class Speaker { Self, Partner };
enum class ActionKind { Speak, NonVerbal, Leave };

std::string_view to_string(Speaker speaker);
std::string_view to_string(ActionKind kind);
Speaker speaker_from_string(std::string_view text);
ActionKind action_kind_from_string(std::string_view text);

struct Observation {
  Speaker speaker = Speaker::Partner;
  std::string content;
  int turn = 0;
  ActionKind action_kind = ActionKind::Speak;

  /// Throws InvalidObservation if content is empty for a non-Leave action.
  void validate() const;

  bool operator==(const Observation&) const = default;
};

class DialogueHistory {
 public:
  DialogueHistory() = default;
  explicit DialogueHistory(std::string context) : context_(std::move(context)) {}

  /// Turns must be strictly increasing.
  void append(Observation observation);

  const std::vector<Observation>& observations() const noexcept { return observations_; }
  const std::string& context() const noexcept { return context_; }
  bool empty() const noexcept { return observations_.empty(); }
  std::size_t size() const noexcept { return observations_.size(); }

 private:
  std::string context_;
  std::vector<Observation> observations_;
};

BeliefState uniform_belief(const HypothesisSet& set);

/// Normalizes `raw` into a distribution. Throws LengthMismatch, NegativeWeight or ZeroMass.
BeliefState belief_from_weights(const HypothesisSet& set, std::span<const double> raw);

/// Point mass on hypothesis `index`.
BeliefState point_mass(const HypothesisSet& set, std::size_t index);

enum class LogBase { Natural, Two };

/// Shannon entropy with 0 ln 0 = 0. Natural log unless told otherwise.
double entropy(const BeliefState& belief, LogBase base = LogBase::Natural);

/// 1 - H(b)/log|Θ|, in [0, 1]. Uniform gives exactly 0 and a point mass exactly 1.
double confidence(const BeliefState& belief, LogBase base = LogBase::Natural);

struct IntentEstimate {
  std::string id;
  double probability = 0.0;
  std::size_t index = 0;
};

/// Most likely hypothesis; ties go to the lowest index.
IntentEstimate argmax_intent(const BeliefState& belief, const HypothesisSet& set);

void to_json(nlohmann::json& j, const IntentionHypothesis& h);
void from_json(const nlohmann::json& j, IntentionHypothesis& h);
nlohmann::json to_json(const HypothesisSet& set);
HypothesisSet hypothesis_set_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BeliefState& belief);
BeliefState belief_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Observation& obs);
Observation observation_from_json(const nlohmann::json& j);

}  // namespace stom
