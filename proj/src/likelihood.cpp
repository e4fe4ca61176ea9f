#include "stom/likelihood.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace stom {

using nlohmann::json;

std::vector<double> clamp_likelihoods(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = out[i];
    if (std::isnan(v) || v < kLikelihoodFloor) {
      out[i] = kLikelihoodFloor;
    } else if (v > 1.0) {
      out[i] = 1.0;
    } else {
      continue;
    }
    spdlog::warn("likelihood[{}] = {} clamped to {}", i, v, out[i]);
  }
  return out;
}

LikelihoodVector make_likelihood_vector(std::span<const double> raw, std::string provider_name,
                                        std::optional<std::string> raw_response) {
  return {clamp_likelihoods(raw), std::move(provider_name), std::move(raw_response)};
}

LikelihoodVector uniform_likelihood(std::size_t size, std::string provider_name) {
  return {std::vector<double>(size, 1.0), std::move(provider_name), std::nullopt};
}

std::string render_observation(const Observation& obs) {
  const std::string who = obs.speaker == Speaker::Self ? "You" : "Partner";
  std::string line = "[turn " + std::to_string(obs.turn) + "] " + who;
  switch (obs.action_kind) {
    case ActionKind::Speak: return line + ": " + obs.content;
    case ActionKind::NonVerbal: return line + " (non-verbal): " + obs.content;
    case ActionKind::Leave:
      return obs.content.empty() ? line + " left the conversation." : line + " left the conversation: " + obs.content;
  }
  return line;
}

std::string render_history(const DialogueHistory& history, std::size_t window) {
  const auto& obs = history.observations();
  if (obs.empty()) return "(no turns yet)";
  std::string out;
  std::size_t first = 0;
  if (obs.size() > window) {
    first = obs.size() - window;
    out += "[... " + std::to_string(first) + " earlier turns omitted ...]\n";
  }
  for (std::size_t i = first; i < obs.size(); ++i) {
    out += render_observation(obs[i]);
    if (i + 1 < obs.size()) out += '\n';
  }
  return out;
}

namespace {

void require_partner(const Observation& obs) {
  if (obs.speaker != Speaker::Partner) {
    throw Error(ErrorKind::PreconditionViolation, "likelihoods are only defined for partner observations");
  }
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'') {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
}

}  // namespace

LikelihoodTable LikelihoodTable::from_json(const json& j) {
  LikelihoodTable t;
  try {
    t.classes_ = j.at("classes").get<std::vector<std::string>>();
    if (t.classes_.empty()) throw Error(ErrorKind::ConfigError, "likelihood table declares no classes");
    const auto& classifier = j.at("classifier");
    for (const auto& name : t.classes_) {
      ClassRule rule{name, {}, {}};
      if (classifier.contains(name)) rule.patterns = classifier.at(name).get<std::vector<std::string>>();
      for (const auto& p : rule.patterns) {
        try {
          rule.compiled.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
        } catch (const std::regex_error& e) {
          throw Error(ErrorKind::ConfigError, "classifier pattern '" + p + "' for class '" + name + "': " + e.what());
        }
      }
      t.rules_.push_back(std::move(rule));
    }
    for (const auto& [cls, patterns] : classifier.items()) {
      if (std::find(t.classes_.begin(), t.classes_.end(), cls) == t.classes_.end()) {
        throw Error(ErrorKind::ConfigError, "classifier names undeclared class '" + cls + "'");
      }
    }
    for (const auto& [hyp, row] : j.at("table").items()) {
      for (const auto& [cls, prob] : row.items()) {
        const double p = prob.get<double>();
        if (!(p > 0.0 && p <= 1.0)) {
          throw Error(ErrorKind::ConfigError, "table[" + hyp + "][" + cls + "] = " + std::to_string(p) +
                                                  " outside (0, 1]");
        }
        t.table_[hyp][cls] = p;
      }
      for (const auto& cls : t.classes_) {
        if (!t.table_[hyp].contains(cls)) {
          throw Error(ErrorKind::ConfigError, "table row '" + hyp + "' lacks class '" + cls + "'");
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("likelihood table: ") + e.what());
  }
  return t;
}

LikelihoodTable LikelihoodTable::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

std::optional<std::string> LikelihoodTable::classify(std::string_view text) const {
  const std::string s(text);
  for (const auto& rule : rules_) {
    for (const auto& re : rule.compiled) {
      if (std::regex_search(s, re)) return rule.name;
    }
  }
  return std::nullopt;
}

double LikelihoodTable::probability(std::string_view hypothesis_id, std::string_view utterance_class) const {
  const auto row = table_.find(hypothesis_id);
  if (row != table_.end()) {
    const auto cell = row->second.find(utterance_class);
    if (cell != row->second.end()) return cell->second;
  }
  throw Error(ErrorKind::ProviderFailure, "likelihood table has no entry for (" + std::string(hypothesis_id) +
                                              ", " + std::string(utterance_class) + ")");
}

void LikelihoodTable::check_dense_for(const HypothesisSet& set) const {
  for (const auto& h : set.hypotheses()) {
    if (!table_.contains(h.id)) throw Error(ErrorKind::ConfigError, "likelihood table has no row for '" + h.id + "'");
  }
}

json LikelihoodTable::to_json() const {
  json classifier = json::object();
  for (const auto& rule : rules_) classifier[rule.name] = rule.patterns;
  json table = json::object();
  for (const auto& [hyp, row] : table_) {
    for (const auto& [cls, p] : row) table[hyp][cls] = p;
  }
  return {{"classes", classes_}, {"classifier", classifier}, {"table", table}};
}

LikelihoodVector TabularProvider::estimate(const DialogueHistory&, const Observation& obs,
                                           const HypothesisSet& set) const {
  require_partner(obs);
  const auto cls = table_.classify(obs.content);
  if (!cls) throw Error(ErrorKind::ProviderFailure, "no utterance class matches \"" + obs.content + "\"");
  std::vector<double> values;
  values.reserve(set.size());
  for (const auto& h : set.hypotheses()) values.push_back(table_.probability(h.id, *cls));
  return make_likelihood_vector(values, name());
}

KeywordModel KeywordModel::from_json(const json& j) {
  KeywordModel model;
  try {
    model.bias = j.value("bias", 0.0);
    for (const auto& [hyp, list] : j.at("keywords").items()) {
      auto& entries = model.keywords[hyp];
      for (const auto& [kw, weight] : list.items()) {
        if (words(kw).empty()) throw Error(ErrorKind::ConfigError, "keyword '" + kw + "' has no word characters");
        entries.push_back({kw, weight.get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("keyword model: ") + e.what());
  }
  return model;
}

KeywordModel KeywordModel::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

json KeywordModel::to_json() const {
  json kw = json::object();
  for (const auto& [hyp, list] : keywords) {
    kw[hyp] = json::object();
    for (const auto& entry : list) kw[hyp][entry.keyword] = entry.weight;
  }
  return {{"bias", bias}, {"keywords", kw}};
}

double keyword_score(std::string_view text, std::span<const KeywordWeight> keywords) {
  const auto tokens = words(text);
  double score = 0.0;
  for (const auto& entry : keywords) {
    const auto needle = words(entry.keyword);
    if (needle.empty() || needle.size() > tokens.size()) continue;
    const auto hit = std::search(tokens.begin(), tokens.end(), needle.begin(), needle.end());
    if (hit != tokens.end()) score += entry.weight;
  }
  return score;
}

LikelihoodVector keyword_estimate(const Observation& obs, const HypothesisSet& set, const KeywordModel& model) {
  require_partner(obs);
  std::vector<double> values;
  values.reserve(set.size());
  for (const auto& h : set.hypotheses()) {
    const auto it = model.keywords.find(h.id);
    if (it == model.keywords.end()) {
      throw Error(ErrorKind::ConfigError, "keyword model has no keyword list for '" + h.id + "'");
    }
    const double score = keyword_score(obs.content, it->second);
    values.push_back(1.0 / (1.0 + std::exp(-(score - model.bias))));
  }
  return make_likelihood_vector(values, "keyword");
}

LikelihoodVector KeywordProvider::estimate(const DialogueHistory&, const Observation& obs,
                                           const HypothesisSet& set) const {
  return keyword_estimate(obs, set, model_);
}

LlmProviderOptions LlmProviderOptions::from_json(const json& j) {
  LlmProviderOptions o;
  try {
    o.max_parse_retries = j.value("max_parse_retries", o.max_parse_retries);
    o.history_window = j.value("history_window", o.history_window);
    o.prompt_template = j.value("prompt_template", o.prompt_template);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("llm provider options: ") + e.what());
  }
  if (o.max_parse_retries < 0) throw Error(ErrorKind::ConfigError, "max_parse_retries must be >= 0");
  assets::text(o.prompt_template);
  return o;
}

std::string extract_json_object(std::string_view text) {
  std::string cleaned;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    const auto start = line.find_first_not_of(" \t");
    if (start != std::string::npos && line.compare(start, 3, "```") == 0) continue;
    cleaned += line;
    cleaned += '\n';
  }
  for (std::size_t open = cleaned.find('{'); open != std::string::npos; open = cleaned.find('{', open + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < cleaned.size(); ++i) {
      const char c = cleaned[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        return cleaned.substr(open, i - open + 1);
      }
    }
  }
  throw Error(ErrorKind::ParseError, "no JSON object found in response");
}

std::vector<double> parse_likelihood_scores(std::string_view response, const HypothesisSet& set) {
  json j;
  try {
    j = json::parse(extract_json_object(response));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("invalid JSON: ") + e.what());
  }
  if (j.contains("scores") && j["scores"].is_object() && !j.contains(set[0].id)) j = j["scores"];
  std::vector<double> scores;
  scores.reserve(set.size());
  for (const auto& h : set.hypotheses()) {
    if (!j.contains(h.id)) throw Error(ErrorKind::MissingHypothesisScore, "no score for hypothesis '" + h.id + "'");
    const json* value = &j[h.id];
    if (value->is_object()) {
      if (!value->contains("score")) {
        throw Error(ErrorKind::MissingHypothesisScore, "entry for '" + h.id + "' has no score");
      }
      value = &(*value)["score"];
    }
    if (!value->is_number()) throw Error(ErrorKind::ParseError, "score for '" + h.id + "' is not a number");
    scores.push_back(value->get<double>());
  }
  return scores;
}

ChatRequest build_likelihood_request(const DialogueHistory& history, const Observation& obs,
                                     const HypothesisSet& set, const LlmProviderOptions& options) {
  std::string hypotheses;
  json example = json::object();
  for (const auto& h : set.hypotheses()) {
    hypotheses += "- " + h.id + ": " + h.description + "\n";
    example[h.id] = {{"score", 0.5}, {"rationale", "one line"}};
  }
  if (!hypotheses.empty()) hypotheses.pop_back();
  const std::string user = assets::render(assets::text(options.prompt_template),
                                          {{"scenario", history.context().empty() ? "(none given)" : history.context()},
                                           {"hypotheses", hypotheses},
                                           {"history", render_history(history, options.history_window)},
                                           {"observation", render_observation(obs)},
                                           {"format_example", example.dump()}});
  ChatRequest request;
  request.messages.push_back(
      {"system", "You are a careful analyst of social dialogue. You always answer with strict JSON."});
  request.messages.push_back({"user", user});
  return request;
}

LlmLikelihoodProvider::LlmLikelihoodProvider(std::shared_ptr<ChatClient> gateway, LlmProviderOptions options)
    : gateway_(std::move(gateway)), options_(std::move(options)) {
  if (!gateway_) throw Error(ErrorKind::ConfigError, "llm provider requires a gateway");
}

LikelihoodVector LlmLikelihoodProvider::estimate(const DialogueHistory& history, const Observation& obs,
                                                 const HypothesisSet& set) const {
  require_partner(obs);
  ChatRequest request = build_likelihood_request(history, obs, set, options_);
  std::string ids;
  for (const auto& h : set.hypotheses()) ids += (ids.empty() ? "" : ", ") + h.id;

  for (int attempt = 0; attempt <= options_.max_parse_retries; ++attempt) {
    ChatResponse response;
    try {
      response = gateway_->complete(request);
    } catch (const Error& e) {
      if (!e.is_gateway_error()) throw;
      throw Error(ErrorKind::ProviderFailure, std::string("gateway failed: ") + e.what());
    }
    try {
      const auto scores = parse_likelihood_scores(response.content, set);
      return make_likelihood_vector(scores, name(), response.content);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ParseError && e.kind() != ErrorKind::MissingHypothesisScore) throw;
      spdlog::warn("llm likelihood: unusable response (attempt {}/{}): {}", attempt + 1,
                   options_.max_parse_retries + 1, e.what());
      request.messages.push_back({"assistant", response.content});
      request.messages.push_back(
          {"user", assets::render(assets::text(assets::kLikelihoodFormatReminder), {{"problem", e.what()}, {"ids", ids}})});
    }
  }
  throw Error(ErrorKind::ProviderFailure, "no parseable likelihood response after " +
                                              std::to_string(options_.max_parse_retries + 1) + " attempts");
}

}  // namespace stom
