#include "stom/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "stom/assets.hpp"
#include "stom/likelihood.hpp"

namespace stom {

using nlohmann::json;

void RegimeThresholds::validate() const {
  if (!(tau_low > 0.0 && tau_low < tau_high && tau_high < 1.0)) {
    throw Error(ErrorKind::ConfigError, "thresholds must satisfy 0 < tau_low < tau_high < 1 (got " +
                                            std::to_string(tau_low) + ", " + std::to_string(tau_high) + ")");
  }
}

RegimeThresholds RegimeThresholds::from_json(const json& j) {
  RegimeThresholds th;
  try {
    th.tau_low = j.value("tau_low", th.tau_low);
    th.tau_high = j.value("tau_high", th.tau_high);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("thresholds: ") + e.what());
  }
  th.validate();
  return th;
}

json RegimeThresholds::to_json() const { return {{"tau_low", tau_low}, {"tau_high", tau_high}}; }

std::string_view to_string(RegimeLabel label) {
  switch (label) {
    case RegimeLabel::High: return "High";
    case RegimeLabel::Medium: return "Medium";
    case RegimeLabel::Low: return "Low";
  }
  return "Low";
}

std::string_view to_string(PolicyMode mode) {
  switch (mode) {
    case PolicyMode::GoalDirected: return "GoalDirected";
    case PolicyMode::Balanced: return "Balanced";
    case PolicyMode::InfoGathering: return "InfoGathering";
  }
  return "InfoGathering";
}

RegimeLabel regime_from_string(std::string_view text) {
  if (text == "High") return RegimeLabel::High;
  if (text == "Medium") return RegimeLabel::Medium;
  if (text == "Low") return RegimeLabel::Low;
  throw Error(ErrorKind::ParseError, "unknown regime '" + std::string(text) + "'");
}

RegimeLabel classify_regime(double confidence, const RegimeThresholds& thresholds) {
  if (confidence > thresholds.tau_high) return RegimeLabel::High;
  if (confidence < thresholds.tau_low) return RegimeLabel::Low;
  return RegimeLabel::Medium;
}

PolicyMode mode_for(RegimeLabel label) {
  switch (label) {
    case RegimeLabel::High: return PolicyMode::GoalDirected;
    case RegimeLabel::Medium: return PolicyMode::Balanced;
    case RegimeLabel::Low: return PolicyMode::InfoGathering;
  }
  return PolicyMode::InfoGathering;
}

std::vector<std::size_t> rank_indices(const BeliefState& belief) {
  std::vector<std::size_t> order(belief.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return belief[a] > belief[b]; });
  return order;
}

std::vector<int> percent_tenths(const BeliefState& belief) {
  const std::size_t n = belief.size();
  std::vector<int> tenths(n);
  std::vector<double> remainder(n);
  int total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = belief[i] * 1000.0;
    tenths[i] = static_cast<int>(std::floor(exact));
    remainder[i] = exact - tenths[i];
    total += tenths[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  // belief sums to 1 within 1e-9, so the shortfall is at most n
  for (std::size_t k = 0; total < 1000 && k < n; ++k, ++total) ++tenths[order[k]];
  return tenths;
}

namespace {

std::string strip_final_period(std::string text) {
  while (!text.empty() && (text.back() == '.' || text.back() == ' ')) text.pop_back();
  return text;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

}  // namespace

PolicyDirective make_directive(const BeliefState& belief, const HypothesisSet& set,
                               const RegimeThresholds& thresholds) {
  if (belief.size() != set.size()) throw Error(ErrorKind::LengthMismatch, "belief not aligned with hypothesis set");
  PolicyDirective d;
  d.confidence = confidence(belief);
  d.regime = classify_regime(d.confidence, thresholds);
  d.mode = mode_for(d.regime);
  for (std::size_t i : rank_indices(belief)) d.ranked_hypotheses.push_back({set[i].id, belief[i]});

  switch (d.mode) {
    case PolicyMode::GoalDirected: {
      const auto best = argmax_intent(belief, set);
      d.target_intent = best.id;
      d.guidance_template_id = assets::kGuidanceGoalDirected;
      d.guidance_text = assets::render(assets::text(assets::kGuidanceGoalDirected),
                                       {{"target", strip_final_period(set[best.index].description)}});
      break;
    }
    case PolicyMode::Balanced:
      d.guidance_template_id = assets::kGuidanceBalanced;
      d.guidance_text = std::string(assets::text(assets::kGuidanceBalanced));
      break;
    case PolicyMode::InfoGathering:
      d.guidance_template_id = assets::kGuidanceInfoGathering;
      d.guidance_text = std::string(assets::text(assets::kGuidanceInfoGathering));
      break;
  }
  return d;
}

std::string serialize_tom_section(const BeliefState& belief, const HypothesisSet& set,
                                  const PolicyDirective& directive) {
  if (belief.size() != set.size()) throw Error(ErrorKind::LengthMismatch, "belief not aligned with hypothesis set");
  const auto tenths = percent_tenths(belief);
  std::string out = "## Theory of Mind: what your partner may intend\n";
  for (std::size_t i : rank_indices(belief)) {
    out += "- " + set[i].description + " — " + std::to_string(tenths[i] / 10) + "." +
           std::to_string(tenths[i] % 10) + "%\n";
  }
  std::string regime(to_string(directive.regime));
  std::transform(regime.begin(), regime.end(), regime.begin(), [](unsigned char c) { return std::tolower(c); });
  out += "Confidence: " + format_fixed(directive.confidence, 2) + " (" + regime + "). " + directive.guidance_text;
  return out;
}

std::string build_policy_prompt(std::string_view scenario, const AgentBrief& agent, const DialogueHistory& history,
                                std::string_view tom_section, const PolicyDirective& directive,
                                std::size_t history_window) {
  std::string role(scenario);
  if (!agent.profile.empty()) role += "\nAbout you: " + agent.profile;
  return assets::render(assets::text(assets::kPolicyPrompt),
                        {{"agent_name", agent.name},
                         {"scenario", role},
                         {"goal", agent.goal.empty() ? "(no explicit goal)" : agent.goal},
                         {"history", render_history(history, history_window)},
                         {"tom_section", std::string(tom_section)},
                         {"guidance", directive.guidance_text}});
}

}  // namespace stom
