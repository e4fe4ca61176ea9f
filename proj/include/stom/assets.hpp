#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace stom::assets {

// Stable identifiers; transcripts record them so a run can be matched to the
// exact prompt text it used.
inline constexpr std::string_view kLikelihoodScoring = "likelihood_scoring.v1";
inline constexpr std::string_view kLikelihoodFormatReminder = "likelihood_format_reminder.v1";
inline constexpr std::string_view kPriorElicitation = "prior_elicitation.v1";
inline constexpr std::string_view kHypothesisGeneration = "hypothesis_generation.v1";
inline constexpr std::string_view kPolicyPrompt = "policy_prompt.v1";
inline constexpr std::string_view kGuidanceGoalDirected = "guidance.goal_directed.v1";
inline constexpr std::string_view kGuidanceBalanced = "guidance.balanced.v1";
inline constexpr std::string_view kGuidanceInfoGathering = "guidance.info_gathering.v1";
inline constexpr std::string_view kPartnerPrompt = "partner_prompt.v1";

/// Text of a registered asset. Throws Error{ConfigError} for unknown ids.
std::string_view text(std::string_view id);

std::vector<std::string_view> ids();

/// Replaces every `{{name}}` with vars[name]. Unknown placeholders are left intact.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace stom::assets
