#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stom/core_types.hpp"

namespace stom {

/// 0 < tau_low < tau_high < 1.
struct RegimeThresholds {
  double tau_low = 0.3;
  double tau_high = 0.7;

  void validate() const;

  static RegimeThresholds from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  bool operator==(const RegimeThresholds&) const = default;
};

enum class RegimeLabel { High, Medium, Low };
enum class PolicyMode { GoalDirected, Balanced, InfoGathering };

std::string_view to_string(RegimeLabel label);
std::string_view to_string(PolicyMode mode);
RegimeLabel regime_from_string(std::string_view text);

/// High iff c > tau_high, Low iff c < tau_low, Medium otherwise (both
/// boundaries belong to Medium).
RegimeLabel classify_regime(double confidence, const RegimeThresholds& thresholds);

PolicyMode mode_for(RegimeLabel label);

struct RankedHypothesis {
  std::string id;
  double probability = 0.0;
};

struct PolicyDirective {
  PolicyMode mode = PolicyMode::InfoGathering;
  RegimeLabel regime = RegimeLabel::Low;
  std::optional<std::string> target_intent;  // set iff GoalDirected
  std::vector<RankedHypothesis> ranked_hypotheses;
  double confidence = 0.0;
  std::string guidance_text;
  std::string guidance_template_id;
};

PolicyDirective make_directive(const BeliefState& belief, const HypothesisSet& set,
                               const RegimeThresholds& thresholds);

/// Hypothesis indices ordered by probability, descending; ties keep index order.
std::vector<std::size_t> rank_indices(const BeliefState& belief);

/// Percentages in tenths of a percent, rounded by largest remainder so that
/// they always add up to exactly 100.0%.
std::vector<int> percent_tenths(const BeliefState& belief);

/// The "Theory of Mind" block appended to the acting agent's prompt.
std::string serialize_tom_section(const BeliefState& belief, const HypothesisSet& set,
                                  const PolicyDirective& directive);

struct AgentBrief {
  std::string name = "the focal agent";
  std::string profile;
  std::string goal;
};

std::string build_policy_prompt(std::string_view scenario, const AgentBrief& agent, const DialogueHistory& history,
                                std::string_view tom_section, const PolicyDirective& directive,
                                std::size_t history_window = 20);

}  // namespace stom
