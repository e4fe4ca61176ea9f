#include "stom/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "stom/assets.hpp"
#include "stom/transcript.hpp"

namespace stom {

using nlohmann::json;

namespace {

Error config_error(const std::string& scenario_id, const std::string& message) {
  return Error(ErrorKind::ConfigError, "scenario '" + scenario_id + "': " + message);
}

UtteranceTemplate template_from_json(const json& j) {
  if (j.is_string()) return {j.get<std::string>(), ActionKind::Speak};
  return {j.at("text").get<std::string>(), action_kind_from_string(j.value("action", std::string("speak")))};
}

json template_to_json(const UtteranceTemplate& t) {
  if (t.action == ActionKind::Speak) return t.text;
  return {{"text", t.text}, {"action", to_string(t.action)}};
}

AgentBrief brief_from_json(const json& j) {
  AgentBrief b;
  b.name = j.value("name", b.name);
  b.profile = j.value("profile", std::string{});
  b.goal = j.value("goal", std::string{});
  return b;
}

json brief_to_json(const AgentBrief& b) { return {{"name", b.name}, {"profile", b.profile}, {"goal", b.goal}}; }

}  // namespace

void PartnerUtteranceModel::validate() const {
  if (classes.empty()) throw Error(ErrorKind::ConfigError, "partner model has no utterance classes");
  for (const auto& c : classes) {
    if (c.templates.empty()) throw Error(ErrorKind::ConfigError, "utterance class '" + c.name + "' has no templates");
    for (const auto& t : c.templates) {
      if (t.text.empty() && t.action != ActionKind::Leave) {
        throw Error(ErrorKind::ConfigError, "utterance class '" + c.name + "' has an empty template");
      }
    }
  }
  for (const auto& [intent, row] : distribution) {
    if (row.size() != classes.size()) {
      throw Error(ErrorKind::ConfigError, "distribution for '" + intent + "' is not aligned with the classes");
    }
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw Error(ErrorKind::ConfigError, "negative probability in distribution for '" + intent + "'");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kNormalizationTolerance) {
      throw Error(ErrorKind::ConfigError, "distribution for '" + intent + "' sums to " + std::to_string(sum));
    }
  }
}

PartnerUtteranceModel PartnerUtteranceModel::from_json(const json& j) {
  PartnerUtteranceModel m;
  try {
    for (const auto& c : j.at("classes")) {
      UtteranceClass cls{c.at("name").get<std::string>(), {}};
      for (const auto& t : c.at("templates")) cls.templates.push_back(template_from_json(t));
      m.classes.push_back(std::move(cls));
    }
    for (const auto& [intent, row] : j.at("distribution").items()) {
      std::vector<double> probs(m.classes.size(), 0.0);
      for (const auto& [cls, p] : row.items()) {
        auto it = std::find_if(m.classes.begin(), m.classes.end(), [&](const auto& c) { return c.name == cls; });
        if (it == m.classes.end()) {
          throw Error(ErrorKind::ConfigError, "distribution for '" + intent + "' names unknown class '" + cls + "'");
        }
        probs[static_cast<std::size_t>(it - m.classes.begin())] = p.get<double>();
      }
      m.distribution[intent] = std::move(probs);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("partner_model: ") + e.what());
  }
  m.validate();
  return m;
}

json PartnerUtteranceModel::to_json() const {
  json classes_json = json::array();
  for (const auto& c : classes) {
    json templates = json::array();
    for (const auto& t : c.templates) templates.push_back(template_to_json(t));
    classes_json.push_back({{"name", c.name}, {"templates", templates}});
  }
  json dist = json::object();
  for (const auto& [intent, row] : distribution) {
    for (std::size_t i = 0; i < row.size(); ++i) dist[intent][classes[i].name] = row[i];
  }
  return {{"classes", classes_json}, {"distribution", dist}};
}

void Scenario::validate() const {
  if (id.empty()) throw Error(ErrorKind::ConfigError, "scenario.id is required");
  if (max_turns < kMinEpisodeTurns || max_turns > kMaxEpisodeTurns) {
    throw config_error(id, "max_turns " + std::to_string(max_turns) + " outside [2, 100]");
  }
  if (!hypotheses && !elicit_hypotheses) throw config_error(id, "needs hypotheses or elicit_hypotheses");
  if (hypotheses && elicit_hypotheses) throw config_error(id, "hypotheses and elicit_hypotheses are exclusive");
  if (elicit_hypotheses && (hypothesis_count < kMinHypotheses || hypothesis_count > kMaxHypotheses)) {
    throw config_error(id, "hypothesis_count outside [2, 16]");
  }
  if (true_intent) {
    if (!hypotheses) throw config_error(id, "true_intent requires a fixed hypothesis set");
    if (!hypotheses->index_of(*true_intent)) throw config_error(id, "true_intent '" + *true_intent + "' is not in the hypothesis set");
  }
  if (prior_mode == PriorMode::Explicit) {
    if (!hypotheses) throw config_error(id, "explicit prior requires a fixed hypothesis set");
    try {
      belief_from_weights(*hypotheses, prior_weights);
    } catch (const Error& e) {
      throw config_error(id, std::string("prior.weights: ") + e.what());
    }
  }
  if (partner_model) {
    partner_model->validate();
    if (hypotheses) {
      for (const auto& h : hypotheses->hypotheses()) {
        if (!partner_model->distribution.contains(h.id)) {
          throw config_error(id, "partner_model.distribution lacks hypothesis '" + h.id + "'");
        }
      }
    }
  }
}

Scenario Scenario::from_json(const json& j) {
  Scenario s;
  try {
    s.id = j.at("id").get<std::string>();
    s.context = j.value("context", std::string{});
    if (j.contains("focal")) s.focal = brief_from_json(j["focal"]);
    if (j.contains("partner")) s.partner = brief_from_json(j["partner"]);
    if (j.contains("hypotheses")) {
      s.hypotheses = HypothesisSet(j["hypotheses"].get<std::vector<IntentionHypothesis>>(), s.id);
    }
    s.elicit_hypotheses = j.value("elicit_hypotheses", false);
    s.hypothesis_count = j.value("hypothesis_count", s.hypothesis_count);
    if (j.contains("true_intent") && !j["true_intent"].is_null()) s.true_intent = j["true_intent"].get<std::string>();
    s.max_turns = j.value("max_turns", s.max_turns);
    s.partner_first = j.value("partner_first", true);
    if (j.contains("prior")) {
      const auto mode = j["prior"].value("mode", std::string("uniform"));
      if (mode == "uniform") {
        s.prior_mode = PriorMode::Uniform;
      } else if (mode == "explicit") {
        s.prior_mode = PriorMode::Explicit;
        s.prior_weights = j["prior"].at("weights").get<std::vector<double>>();
      } else if (mode == "elicited") {
        s.prior_mode = PriorMode::Elicited;
      } else {
        throw config_error(s.id, "prior.mode '" + mode + "' is not uniform|explicit|elicited");
      }
    }
    if (j.contains("partner_model")) s.partner_model = PartnerUtteranceModel::from_json(j["partner_model"]);
    if (j.contains("provider_configs")) {
      for (const auto& [name, path] : j["provider_configs"].items()) s.provider_configs[name] = path.get<std::string>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("scenario: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    throw Error(ErrorKind::ConfigError, std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open scenario file " + path.string());
  Scenario s;
  try {
    s = from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
  for (auto& [name, file] : s.provider_configs) {
    if (file.is_relative()) file = path.parent_path() / file;
  }
  return s;
}

json Scenario::to_json() const {
  json j = {{"id", id},
            {"context", context},
            {"focal", brief_to_json(focal)},
            {"partner", brief_to_json(partner)},
            {"max_turns", max_turns},
            {"partner_first", partner_first}};
  if (hypotheses) j["hypotheses"] = hypotheses->hypotheses();
  if (elicit_hypotheses) {
    j["elicit_hypotheses"] = true;
    j["hypothesis_count"] = hypothesis_count;
  }
  if (true_intent) j["true_intent"] = *true_intent;
  json prior = {{"mode", to_string(prior_mode)}};
  if (prior_mode == PriorMode::Explicit) prior["weights"] = prior_weights;
  j["prior"] = prior;
  if (partner_model) j["partner_model"] = partner_model->to_json();
  for (const auto& [name, file] : provider_configs) j["provider_configs"][name] = file.string();
  return j;
}

ScriptedPartner::ScriptedPartner(PartnerUtteranceModel model, std::string true_intent, std::uint64_t seed)
    : model_(std::move(model)), true_intent_(std::move(true_intent)), rng_(seed) {
  model_.validate();
  const auto it = model_.distribution.find(true_intent_);
  if (it == model_.distribution.end()) {
    throw Error(ErrorKind::ConfigError, "partner model has no distribution for intent '" + true_intent_ + "'");
  }
  row_ = it->second;
}

double ScriptedPartner::next_uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

Observation ScriptedPartner::act(const DialogueHistory&, int turn) {
  const double u_class = next_uniform();
  const double u_template = next_uniform();
  std::size_t chosen = row_.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < row_.size(); ++i) {
    acc += row_[i];
    if (u_class < acc) {
      chosen = i;
      break;
    }
  }
  const auto& cls = model_.classes[chosen];
  const auto pick = std::min(cls.templates.size() - 1,
                             static_cast<std::size_t>(u_template * static_cast<double>(cls.templates.size())));
  last_class_ = cls.name;
  const auto& t = cls.templates[pick];
  return {Speaker::Partner, t.text, turn, t.action};
}

Observation observation_from_reply(const std::string& reply, Speaker speaker, int turn) {
  const auto first = reply.find_first_not_of(" \t\r\n\"'");
  const auto last = reply.find_last_not_of(" \t\r\n\"'.!");
  std::string trimmed = first == std::string::npos ? std::string{} : reply.substr(first, last - first + 1);
  std::string upper = trimmed;
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "LEAVE") return {speaker, "", turn, ActionKind::Leave};
  if (trimmed.empty()) return {speaker, "(stays silent)", turn, ActionKind::NonVerbal};
  const auto end = reply.find_last_not_of(" \t\r\n");
  return {speaker, reply.substr(first, end - first + 1), turn, ActionKind::Speak};
}

LlmPartner::LlmPartner(std::shared_ptr<ChatClient> gateway, std::string scenario, AgentBrief brief,
                       std::string intent, std::size_t history_window)
    : gateway_(std::move(gateway)),
      scenario_(std::move(scenario)),
      brief_(std::move(brief)),
      intent_(std::move(intent)),
      history_window_(history_window) {
  if (!gateway_) throw Error(ErrorKind::ConfigError, "llm partner requires a gateway");
}

Observation LlmPartner::act(const DialogueHistory& history, int turn) {
  // The partner sees the dialogue from its own side.
  DialogueHistory flipped(history.context());
  for (auto obs : history.observations()) {
    obs.speaker = obs.speaker == Speaker::Self ? Speaker::Partner : Speaker::Self;
    flipped.append(std::move(obs));
  }
  std::string scenario = scenario_;
  if (!brief_.profile.empty()) scenario += "\nAbout you: " + brief_.profile;
  ChatRequest request;
  request.messages.push_back({"system", "You are role-playing a character in a conversation. Stay in character."});
  request.messages.push_back({"user", assets::render(assets::text(assets::kPartnerPrompt),
                                                     {{"agent_name", brief_.name},
                                                      {"scenario", scenario},
                                                      {"intent", intent_},
                                                      {"history", render_history(flipped, history_window_)}})});
  const auto response = gateway_->complete(request);
  return observation_from_reply(response.content, Speaker::Partner, turn);
}

Observation ScriptedFocalAgent::act(const std::string&, const PolicyDirective& directive, const DialogueHistory&,
                                    int turn) {
  switch (directive.mode) {
    case PolicyMode::GoalDirected:
      return {Speaker::Self, "Given what you've told me, here is what I'd like to propose.", turn, ActionKind::Speak};
    case PolicyMode::Balanced:
      return {Speaker::Self, "That makes sense. Out of curiosity, what matters most to you here?", turn,
              ActionKind::Speak};
    case PolicyMode::InfoGathering:
      return {Speaker::Self, "Before we go further, could you tell me a bit about what you're hoping for?", turn,
              ActionKind::Speak};
  }
  return {Speaker::Self, "I see.", turn, ActionKind::Speak};
}

LlmFocalAgent::LlmFocalAgent(std::shared_ptr<ChatClient> gateway) : gateway_(std::move(gateway)) {
  if (!gateway_) throw Error(ErrorKind::ConfigError, "llm focal agent requires a gateway");
}

Observation LlmFocalAgent::act(const std::string& prompt, const PolicyDirective&, const DialogueHistory&, int turn) {
  ChatRequest request;
  request.messages.push_back({"system", "You are a socially skilled conversational agent. Stay in character."});
  request.messages.push_back({"user", prompt});
  const auto response = gateway_->complete(request);
  return observation_from_reply(response.content, Speaker::Self, turn);
}

json to_json(const EpisodeMetrics& m) {
  auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
  return {{"turns_to_argmax_correct", opt(m.turns_to_argmax_correct)},
          {"final_true_intent_mass", opt(m.final_true_intent_mass)},
          {"mean_brier", opt(m.mean_brier)},
          {"confidence_trajectory", m.confidence_trajectory},
          {"regime_occupancy", {{"High", m.regime_occupancy.high},
                                {"Medium", m.regime_occupancy.medium},
                                {"Low", m.regime_occupancy.low}}},
          {"partner_turns", m.partner_turns},
          {"total_turns", m.total_turns},
          {"final_confidence", m.final_confidence},
          {"final_argmax", m.final_argmax}};
}

EpisodeMetrics metrics_from_json(const json& j) {
  EpisodeMetrics m;
  try {
    if (!j.at("turns_to_argmax_correct").is_null()) m.turns_to_argmax_correct = j["turns_to_argmax_correct"].get<int>();
    if (!j.at("final_true_intent_mass").is_null()) m.final_true_intent_mass = j["final_true_intent_mass"].get<double>();
    if (!j.at("mean_brier").is_null()) m.mean_brier = j["mean_brier"].get<double>();
    m.confidence_trajectory = j.at("confidence_trajectory").get<std::vector<double>>();
    const auto& occ = j.at("regime_occupancy");
    m.regime_occupancy = {occ.at("High").get<double>(), occ.at("Medium").get<double>(), occ.at("Low").get<double>()};
    m.partner_turns = j.at("partner_turns").get<int>();
    m.total_turns = j.at("total_turns").get<int>();
    m.final_confidence = j.at("final_confidence").get<double>();
    m.final_argmax = j.at("final_argmax").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("metrics: ") + e.what());
  }
  return m;
}

std::vector<const BeliefTraceEntry*> EpisodeRecord::trace_entries() const {
  std::vector<const BeliefTraceEntry*> out;
  for (const auto& t : turns) {
    if (t.trace) out.push_back(&*t.trace);
  }
  return out;
}

std::optional<BeliefState> EpisodeRecord::final_belief() const {
  for (auto it = turns.rbegin(); it != turns.rend(); ++it) {
    if (it->trace) return it->trace->posterior;
  }
  return initial_belief;
}

EpisodeMetrics compute_metrics(const HypothesisSet& set, const BeliefState& initial,
                               const std::vector<EpisodeTurn>& turns, std::optional<std::size_t> true_index,
                               const RegimeThresholds& thresholds) {
  EpisodeMetrics m;
  m.total_turns = static_cast<int>(turns.size());

  std::vector<std::pair<int, const BeliefState*>> beliefs{{0, &initial}};
  int high = 0, medium = 0, low = 0;
  for (const auto& t : turns) {
    if (!t.trace) continue;
    ++m.partner_turns;
    beliefs.emplace_back(t.trace->turn, &t.trace->posterior);
    switch (t.trace->regime) {
      case RegimeLabel::High: ++high; break;
      case RegimeLabel::Medium: ++medium; break;
      case RegimeLabel::Low: ++low; break;
    }
  }
  for (const auto& [turn, b] : beliefs) m.confidence_trajectory.push_back(confidence(*b));

  const BeliefState& final = *beliefs.back().second;
  m.final_confidence = m.confidence_trajectory.back();
  m.final_argmax = argmax_intent(final, set).id;

  if (m.partner_turns > 0) {
    const double n = m.partner_turns;
    m.regime_occupancy = {high / n, medium / n, low / n};
  } else {
    switch (classify_regime(m.final_confidence, thresholds)) {
      case RegimeLabel::High: m.regime_occupancy.high = 1.0; break;
      case RegimeLabel::Medium: m.regime_occupancy.medium = 1.0; break;
      case RegimeLabel::Low: m.regime_occupancy.low = 1.0; break;
    }
  }

  if (!true_index) return m;
  const std::size_t star = *true_index;
  m.final_true_intent_mass = final[star];

  // first index from which the argmax stays on the true intent
  std::optional<std::size_t> settled;
  for (std::size_t k = beliefs.size(); k-- > 0;) {
    if (argmax_intent(*beliefs[k].second, set).index != star) break;
    settled = k;
  }
  if (settled) m.turns_to_argmax_correct = beliefs[*settled].first;

  auto brier = [&](const BeliefState& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double d = b[i] - (i == star ? 1.0 : 0.0);
      s += d * d;
    }
    return s;
  };
  if (beliefs.size() == 1) {
    m.mean_brier = brier(initial);
  } else {
    double total = 0.0;
    for (std::size_t k = 1; k < beliefs.size(); ++k) total += brier(*beliefs[k].second);
    m.mean_brier = total / static_cast<double>(beliefs.size() - 1);
  }
  return m;
}

EpisodeRecord run_episode(const Scenario& scenario, const EpisodeAgents& agents, const EpisodeOptions& options) {
  scenario.validate();
  options.thresholds.validate();
  if (!agents.partner || !agents.focal || !agents.provider) {
    throw Error(ErrorKind::ConfigError, "episode needs a partner, a focal agent and a likelihood provider");
  }

  EpisodeRecord record;
  record.scenario_id = scenario.id;
  record.true_intent = scenario.true_intent;
  record.config = {{"thresholds", options.thresholds.to_json()},
                   {"provider", agents.provider->name()},
                   {"partner_agent", agents.partner->kind()},
                   {"focal_agent", agents.focal->kind()},
                   {"seed", options.seed},
                   {"history_window", options.history_window},
                   {"max_turns", scenario.max_turns},
                   {"partner_first", scenario.partner_first},
                   {"prior_mode", to_string(scenario.prior_mode)}};
  json template_ids = json::array();
  for (auto id : assets::ids()) template_ids.push_back(id);
  record.config["templates"] = template_ids;
  for (const auto& [k, v] : options.config_extra.items()) record.config[k] = v;

  auto finish = [&](const BeliefState& initial) {
    std::optional<std::size_t> star;
    if (scenario.true_intent) star = record.hypotheses->index_of(*scenario.true_intent);
    record.metrics = compute_metrics(*record.hypotheses, initial, record.turns, star, options.thresholds);
  };

  try {
    if (scenario.hypotheses) {
      record.hypotheses = *scenario.hypotheses;
    } else {
      if (!agents.hypothesis_gateway) {
        throw Error(ErrorKind::ConfigError, "scenario '" + scenario.id + "' elicits hypotheses but no gateway is configured");
      }
      record.hypotheses = generate_hypotheses(*agents.hypothesis_gateway, scenario.context, scenario.focal.goal,
                                              scenario.hypothesis_count, scenario.id);
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ProviderFailure && !e.is_gateway_error()) throw;
    record.aborted = true;
    record.abort_reason = e.what();
    return record;
  }
  const HypothesisSet& set = *record.hypotheses;

  PriorSpec prior;
  switch (scenario.prior_mode) {
    case PriorMode::Uniform: prior = PriorSpec::uniform("scenario"); break;
    case PriorMode::Explicit: prior = PriorSpec::explicit_weights(scenario.prior_weights, "scenario"); break;
    case PriorMode::Elicited:
      if (!agents.prior_provider) {
        throw Error(ErrorKind::ConfigError, "scenario '" + scenario.id + "' elicits a prior but no prior provider is configured");
      }
      prior = PriorSpec::elicited(agents.prior_provider, "scenario");
      break;
  }
  const auto init = initialize(set, prior, scenario.context);
  record.initial_belief = init.belief;
  record.prior_source = init.source;
  record.prior_fallback_used = init.fallback_used;

  DialogueHistory history(scenario.context);
  BeliefState belief = init.belief;
  bool partner_next = scenario.partner_first;
  try {
    for (int turn = 1; turn <= scenario.max_turns; ++turn, partner_next = !partner_next) {
      EpisodeTurn entry;
      if (partner_next) {
        entry.observation = agents.partner->act(history, turn);
        entry.observation.speaker = Speaker::Partner;
        entry.observation.turn = turn;
        auto result = step(set, belief, history, entry.observation, *agents.provider, options.thresholds);
        belief = result.posterior;
        entry.trace = std::move(result.entry);
      } else {
        const auto directive = make_directive(belief, set, options.thresholds);
        const auto tom = serialize_tom_section(belief, set, directive);
        const auto prompt =
            build_policy_prompt(scenario.context, scenario.focal, history, tom, directive, options.history_window);
        entry.observation = agents.focal->act(prompt, directive, history, turn);
        entry.observation.speaker = Speaker::Self;
        entry.observation.turn = turn;
        entry.policy_mode = directive.mode;
      }
      history.append(entry.observation);
      const bool leave = entry.observation.action_kind == ActionKind::Leave;
      record.turns.push_back(std::move(entry));
      if (leave) break;
    }
  } catch (const Error& e) {
    if (!e.is_gateway_error()) throw;
    spdlog::error("episode '{}' aborted: {}", scenario.id, e.what());
    record.aborted = true;
    record.abort_reason = e.what();
  }
  finish(init.belief);
  return record;
}

bool convergence_check(const EpisodeRecord& record) {
  if (!record.true_intent || !record.metrics.final_true_intent_mass) {
    throw Error(ErrorKind::NotApplicable, "convergence needs a known true intent");
  }
  return *record.metrics.final_true_intent_mass >= kConvergenceMass;
}

std::string episode_file_name(const std::string& scenario_id, int repetition) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", repetition);
  return scenario_id + "__rep" + buf + ".jsonl";
}

namespace {

struct Accumulator {
  std::vector<double> values;
  void add(double v) { values.push_back(v); }
  json to_json() const {
    const double n = static_cast<double>(values.size());
    if (values.empty()) return {{"n", 0}, {"mean", nullptr}, {"std", nullptr}};
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    return {{"n", values.size()}, {"mean", mean}, {"std", sd}};
  }
};

struct Aggregate {
  int episodes = 0;
  int aborted = 0;
  int converged = 0;
  int convergence_applicable = 0;
  std::map<std::string, Accumulator> metrics;

  void add(const BatchEpisodeResult& r) {
    ++episodes;
    if (r.aborted || !r.record) {
      ++aborted;
      return;
    }
    const auto& m = r.record->metrics;
    if (m.final_true_intent_mass) {
      metrics["final_true_intent_mass"].add(*m.final_true_intent_mass);
      ++convergence_applicable;
      if (*m.final_true_intent_mass >= kConvergenceMass) ++converged;
    }
    if (m.mean_brier) metrics["mean_brier"].add(*m.mean_brier);
    if (m.turns_to_argmax_correct) metrics["turns_to_argmax_correct"].add(*m.turns_to_argmax_correct);
    metrics["final_confidence"].add(m.final_confidence);
    metrics["partner_turns"].add(m.partner_turns);
    metrics["total_turns"].add(m.total_turns);
    metrics["occupancy_high"].add(m.regime_occupancy.high);
    metrics["occupancy_medium"].add(m.regime_occupancy.medium);
    metrics["occupancy_low"].add(m.regime_occupancy.low);
  }

  json to_json() const {
    json j = {{"episodes", episodes}, {"aborted", aborted}, {"n", episodes - aborted}};
    json ms = json::object();
    for (const auto& [name, acc] : metrics) ms[name] = acc.to_json();
    j["metrics"] = ms;
    j["converged"] = converged;
    j["convergence_rate"] =
        convergence_applicable > 0 ? json(static_cast<double>(converged) / convergence_applicable) : json(nullptr);
    return j;
  }
};

}  // namespace

BatchSummary run_batch(const std::vector<Scenario>& scenarios, const AgentFactory& factory,
                       const BatchOptions& options) {
  if (options.repetitions < 1) throw Error(ErrorKind::ConfigError, "repetitions must be >= 1");
  if (options.parallelism < 1) throw Error(ErrorKind::ConfigError, "parallelism must be >= 1");
  options.thresholds.validate();
  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

  std::vector<BatchEpisodeResult> results;
  for (const auto& s : scenarios) {
    for (int rep = 0; rep < options.repetitions; ++rep) {
      BatchEpisodeResult r;
      r.scenario_id = s.id;
      r.repetition = rep;
      r.seed = options.seed_base + static_cast<std::uint64_t>(rep);
      results.push_back(std::move(r));
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < results.size(); i = next++) {
      auto& r = results[i];
      const auto& scenario = scenarios[i / static_cast<std::size_t>(options.repetitions)];
      EpisodeOptions eo;
      eo.thresholds = options.thresholds;
      eo.history_window = options.history_window;
      eo.seed = r.seed;
      eo.config_extra = options.config_extra;
      eo.config_extra["repetition"] = r.repetition;
      try {
        r.record = run_episode(scenario, factory(scenario, r.seed), eo);
        r.aborted = r.record->aborted;
        r.error = r.record->abort_reason;
      } catch (const std::exception& e) {
        spdlog::error("episode {} rep {} failed: {}", r.scenario_id, r.repetition, e.what());
        r.aborted = true;
        r.error = e.what();
      }
      if (options.out_dir) {
        r.file = (*options.out_dir / episode_file_name(r.scenario_id, r.repetition)).string();
        if (r.record) {
          save_transcript(*r.record, r.file);
        } else {
          std::ofstream out(r.file, std::ios::trunc);
          out << json{{"kind", "error"}, {"scenario_id", r.scenario_id}, {"repetition", r.repetition},
                      {"seed", r.seed}, {"error", r.error}}.dump()
              << '\n';
        }
      }
    }
  };
  const int threads = std::min<int>(options.parallelism, static_cast<int>(results.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  Aggregate overall;
  std::map<std::string, Aggregate> per_scenario;
  json episodes = json::array();
  BatchSummary summary;
  for (const auto& r : results) {
    overall.add(r);
    per_scenario[r.scenario_id].add(r);
    if (r.aborted) ++summary.aborted;
    json e = {{"scenario_id", r.scenario_id}, {"repetition", r.repetition}, {"seed", r.seed}, {"aborted", r.aborted}};
    if (!r.error.empty()) e["error"] = r.error;
    if (!r.file.empty()) e["file"] = std::filesystem::path(r.file).filename().string();
    episodes.push_back(e);
  }
  json scenarios_json = json::object();
  for (const auto& [id, agg] : per_scenario) scenarios_json[id] = agg.to_json();
  summary.summary = {{"kind", "batch_summary"},
                     {"seed_base", options.seed_base},
                     {"repetitions", options.repetitions},
                     {"thresholds", options.thresholds.to_json()},
                     {"overall", overall.to_json()},
                     {"scenarios", scenarios_json},
                     {"episodes", episodes},
                     {"note", "proxy metrics against scripted ground truth; not benchmark scores"}};
  for (const auto& [k, v] : options.config_extra.items()) summary.summary["config"][k] = v;
  summary.episodes = std::move(results);
  if (options.out_dir) {
    std::ofstream out(*options.out_dir / "summary.json", std::ios::trunc);
    out << summary.summary.dump(2) << '\n';
  }
  return summary;
}

}  // namespace stom
