#include "stom/assets.hpp"

#include <array>
#include <utility>

#include "stom/error.hpp"

namespace stom::assets {
namespace {

constexpr std::string_view kLikelihoodScoringText =
    R"(You estimate how likely a dialogue partner's latest action is under each hypothesis about the partner's hidden intention.

Scenario:
{{scenario}}

Hypotheses about the partner's intention:
{{hypotheses}}

Dialogue so far:
{{history}}

Partner's latest action:
{{observation}}

For EACH hypothesis, judge how probable this exact action would be if the partner truly held that intention. Consider:
- semantic alignment between the action and the intention,
- strategic consistency with pursuing that intention,
- contextual appropriateness given the dialogue so far.
Score each hypothesis independently on [0, 1]; the scores do not need to sum to 1.

Reply with a single JSON object and nothing else, using every hypothesis id as a key:
{{format_example}})";

constexpr std::string_view kLikelihoodFormatReminderText =
    R"(Your previous reply could not be used: {{problem}}
Reply again with ONLY a JSON object that has exactly these keys: {{ids}}.
Each value must be an object {"score": <number between 0 and 1>, "rationale": "<one line>"}.)";

constexpr std::string_view kPriorElicitationText =
    R"(Before the conversation starts, estimate how plausible each hypothesis about the partner's intention is.

Scenario:
{{scenario}}

Hypotheses:
{{hypotheses}}

Reason about the scenario and whether the partner's goal is likely complementary or adversarial to yours. Reply with ONLY a JSON object mapping each hypothesis id to a nonnegative weight, e.g. {{format_example}})";

constexpr std::string_view kHypothesisGenerationText =
    R"(Read the scenario below and list {{count}} distinct, plausible intentions the other participant might hold.

Scenario:
{{scenario}}

Your own goal:
{{goal}}

Reply with ONLY a JSON array of objects {"id": "<short token>", "description": "<one sentence>"}.)";

constexpr std::string_view kPolicyPromptText =
    R"(## Role and scenario
You are {{agent_name}} in the following social scenario.
{{scenario}}

## Your goal
{{goal}}

## Dialogue history
{{history}}

{{tom_section}}

## Guidance for your next turn
{{guidance}}

## Response format
Reply with exactly one utterance to say next, as plain text. If you want to end the conversation, reply with the single word LEAVE.)";

constexpr std::string_view kGuidanceGoalDirectedText =
    "Your partner's most likely intention: {{target}}. Pursue your goal directly and decisively, adapting your approach to that intention.";

constexpr std::string_view kGuidanceBalancedText =
    "Keep advancing your goal, but weave in a light question or remark that would help tell the leading possibilities apart.";

constexpr std::string_view kGuidanceInfoGatheringText =
    "You are still unsure what your partner wants. Ask a natural, conversational question that invites them to share their aims; avoid sounding like an interrogation.";

constexpr std::string_view kPartnerPromptText =
    R"(You are {{agent_name}} in the following social scenario.
{{scenario}}

Your private intention (never state it outright): {{intent}}

Dialogue so far:
{{history}}

Reply with exactly one utterance to say next, as plain text. If you want to end the conversation, reply with the single word LEAVE.)";

constexpr std::array<std::pair<std::string_view, std::string_view>, 9> kRegistry{{
    {kLikelihoodScoring, kLikelihoodScoringText},
    {kLikelihoodFormatReminder, kLikelihoodFormatReminderText},
    {kPriorElicitation, kPriorElicitationText},
    {kHypothesisGeneration, kHypothesisGenerationText},
    {kPolicyPrompt, kPolicyPromptText},
    {kGuidanceGoalDirected, kGuidanceGoalDirectedText},
    {kGuidanceBalanced, kGuidanceBalancedText},
    {kGuidanceInfoGathering, kGuidanceInfoGatheringText},
    {kPartnerPrompt, kPartnerPromptText},
}};

}  // namespace

std::string_view text(std::string_view id) {
  for (const auto& [key, value] : kRegistry) {
    if (key == id) return value;
  }
  throw Error(ErrorKind::ConfigError, "unknown text asset '" + std::string(id) + "'");
}

std::vector<std::string_view> ids() {
  std::vector<std::string_view> out;
  for (const auto& entry : kRegistry) out.push_back(entry.first);
  return out;
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + 2, close - open - 2));
    if (auto it = vars.find(name); it != vars.end()) {
      out.append(it->second);
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

}  // namespace stom::assets
