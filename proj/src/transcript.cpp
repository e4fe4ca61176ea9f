#include "stom/transcript.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace stom {

using nlohmann::json;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string write_transcript(const EpisodeRecord& record) {
  std::string out;
  auto emit = [&](const json& j) {
    out += j.dump();
    out += '\n';
  };
  emit({{"kind", "meta"},
        {"schema", kTranscriptSchema},
        {"scenario_id", record.scenario_id},
        {"config", record.config},
        {"hypotheses", record.hypotheses ? to_json(*record.hypotheses) : json(nullptr)},
        {"initial_belief", record.initial_belief ? to_json(*record.initial_belief) : json(nullptr)},
        {"prior_source", record.prior_source},
        {"prior_fallback_used", record.prior_fallback_used},
        {"true_intent", record.true_intent ? json(*record.true_intent) : json(nullptr)}});
  for (const auto& t : record.turns) {
    json turn = to_json(t.observation);
    turn["kind"] = "turn";
    if (t.policy_mode) turn["policy_mode"] = to_string(*t.policy_mode);
    emit(turn);
    if (t.trace) {
      json trace = to_json(*t.trace);
      trace["kind"] = "trace";
      emit(trace);
    }
  }
  emit({{"kind", "metrics"},
        {"metrics", to_json(record.metrics)},
        {"aborted", record.aborted},
        {"abort_reason", record.abort_reason},
        {"proxy_metrics_note", "proxy metrics against scripted ground truth; not benchmark scores"}});
  return out;
}

void save_transcript(const EpisodeRecord& record, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::ConfigError, "cannot write " + path.string());
  out << write_transcript(record);
}

std::vector<json> parse_jsonl(std::string_view text) {
  std::vector<json> lines;
  std::istringstream in{std::string(text)};
  int number = 0;
  for (std::string line; std::getline(in, line);) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      lines.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(number) + ": " + e.what());
    }
  }
  return lines;
}

EpisodeRecord read_transcript(std::string_view text) {
  const auto lines = parse_jsonl(text);
  if (lines.empty()) throw Error(ErrorKind::ParseError, "empty transcript");
  const auto& meta = lines.front();
  if (meta.value("kind", std::string{}) != "meta") throw Error(ErrorKind::ParseError, "first line is not a meta record");

  EpisodeRecord r;
  try {
    r.scenario_id = meta.at("scenario_id").get<std::string>();
    r.config = meta.at("config");
    if (!meta.at("hypotheses").is_null()) r.hypotheses = hypothesis_set_from_json(meta["hypotheses"]);
    if (!meta.at("initial_belief").is_null()) r.initial_belief = belief_from_json(meta["initial_belief"]);
    r.prior_source = meta.value("prior_source", std::string{});
    r.prior_fallback_used = meta.value("prior_fallback_used", false);
    if (meta.contains("true_intent") && meta["true_intent"].is_string()) r.true_intent = meta["true_intent"].get<std::string>();

    bool saw_metrics = false;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto& line = lines[i];
      const auto kind = line.at("kind").get<std::string>();
      if (kind == "turn") {
        EpisodeTurn t;
        t.observation = observation_from_json(line);
        if (line.contains("policy_mode")) {
          const auto mode = line["policy_mode"].get<std::string>();
          if (mode == "GoalDirected") t.policy_mode = PolicyMode::GoalDirected;
          else if (mode == "Balanced") t.policy_mode = PolicyMode::Balanced;
          else t.policy_mode = PolicyMode::InfoGathering;
        }
        r.turns.push_back(std::move(t));
      } else if (kind == "trace") {
        if (r.turns.empty()) throw Error(ErrorKind::ParseError, "trace record before any turn");
        r.turns.back().trace = trace_entry_from_json(line);
      } else if (kind == "metrics") {
        r.metrics = metrics_from_json(line.at("metrics"));
        r.aborted = line.at("aborted").get<bool>();
        r.abort_reason = line.value("abort_reason", std::string{});
        saw_metrics = true;
      } else {
        throw Error(ErrorKind::ParseError, "unknown record kind '" + kind + "'");
      }
    }
    if (!saw_metrics) throw Error(ErrorKind::ParseError, "transcript has no metrics record");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("transcript: ") + e.what());
  }
  return r;
}

EpisodeRecord load_transcript(const std::filesystem::path& path) { return read_transcript(read_text_file(path)); }

namespace {

class Checker {
 public:
  std::vector<std::string> problems;

  void fail(std::size_t line, const std::string& what) {
    problems.push_back("line " + std::to_string(line) + ": " + what);
  }

  bool field(std::size_t line, const json& j, const char* key, json::value_t type, bool nullable = false) {
    if (!j.contains(key)) {
      fail(line, std::string("missing field '") + key + "'");
      return false;
    }
    const auto& v = j[key];
    if (nullable && v.is_null()) return true;
    const bool ok = type == json::value_t::number_float ? v.is_number()
                    : type == json::value_t::number_integer ? v.is_number_integer()
                                                            : v.type() == type;
    if (!ok) fail(line, std::string("field '") + key + "' has the wrong type");
    return ok;
  }

  void distribution(std::size_t line, const json& j, const char* key, std::size_t k) {
    if (!field(line, j, key, json::value_t::object)) return;
    const auto& b = j[key];
    if (!field(line, b, "weights", json::value_t::array) || !field(line, b, "turn", json::value_t::number_integer)) return;
    double sum = 0.0;
    for (const auto& w : b["weights"]) {
      if (!w.is_number() || w.get<double>() < 0.0) {
        fail(line, std::string(key) + " has a non-numeric or negative weight");
        return;
      }
      sum += w.get<double>();
    }
    if (k != 0 && b["weights"].size() != k) fail(line, std::string(key) + " is not aligned with the hypothesis set");
    if (std::abs(sum - 1.0) > kNormalizationTolerance) fail(line, std::string(key) + " does not sum to 1");
  }
};

}  // namespace

std::vector<std::string> validate_transcript(std::string_view text) {
  Checker c;
  std::vector<json> lines;
  try {
    lines = parse_jsonl(text);
  } catch (const Error& e) {
    return {e.what()};
  }
  if (lines.size() < 2) return {"transcript needs at least a meta and a metrics record"};

  using vt = json::value_t;
  const auto& meta = lines.front();
  std::size_t k = 0;
  if (!meta.is_object() || meta.value("kind", std::string{}) != "meta") {
    c.fail(1, "first record must have kind 'meta'");
  } else {
    if (meta.value("schema", std::string{}) != kTranscriptSchema) c.fail(1, "unknown schema identifier");
    c.field(1, meta, "scenario_id", vt::string);
    c.field(1, meta, "config", vt::object);
    c.field(1, meta, "prior_source", vt::string);
    c.field(1, meta, "prior_fallback_used", vt::boolean);
    c.field(1, meta, "true_intent", vt::string, true);
    if (c.field(1, meta, "hypotheses", vt::object, true) && meta["hypotheses"].is_object()) {
      try {
        k = hypothesis_set_from_json(meta["hypotheses"]).size();
      } catch (const std::exception& e) {
        c.fail(1, std::string("invalid hypothesis set: ") + e.what());
      }
    }
    if (meta.contains("initial_belief") && !meta["initial_belief"].is_null()) c.distribution(1, meta, "initial_belief", k);
  }

  int last_turn = 0;
  bool expect_trace = false;
  int pending_turn = 0;
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    const std::size_t n = i + 1;
    const auto& line = lines[i];
    const auto kind = line.is_object() ? line.value("kind", std::string{}) : std::string{};
    if (kind == "turn") {
      if (expect_trace) c.fail(n, "partner turn " + std::to_string(pending_turn) + " has no trace record");
      if (!c.field(n, line, "turn", vt::number_integer) || !c.field(n, line, "speaker", vt::string) ||
          !c.field(n, line, "action", vt::string) || !c.field(n, line, "content", vt::string)) {
        expect_trace = false;
        continue;
      }
      const int turn = line["turn"].get<int>();
      if (turn <= last_turn) c.fail(n, "turn indices must increase strictly");
      last_turn = turn;
      const auto speaker = line["speaker"].get<std::string>();
      const auto action = line["action"].get<std::string>();
      if (speaker != "self" && speaker != "partner") c.fail(n, "speaker must be self or partner");
      if (action != "speak" && action != "nonverbal" && action != "leave") c.fail(n, "unknown action");
      if (action != "leave" && line["content"].get<std::string>().empty()) c.fail(n, "empty content");
      expect_trace = speaker == "partner";
      pending_turn = turn;
    } else if (kind == "trace") {
      if (!expect_trace) c.fail(n, "trace record does not follow a partner turn");
      expect_trace = false;
      if (c.field(n, line, "turn", vt::number_integer) && line["turn"].get<int>() != pending_turn) {
        c.fail(n, "trace turn does not match its partner turn");
      }
      c.distribution(n, line, "prior", k);
      c.distribution(n, line, "posterior", k);
      if (c.field(n, line, "likelihoods", vt::object) && c.field(n, line["likelihoods"], "values", vt::array)) {
        const auto& values = line["likelihoods"]["values"];
        if (k != 0 && values.size() != k) c.fail(n, "likelihoods are not aligned with the hypothesis set");
        for (const auto& v : values) {
          if (!v.is_number() || v.get<double>() < kLikelihoodFloor || v.get<double>() > 1.0) {
            c.fail(n, "likelihood outside [1e-6, 1]");
            break;
          }
        }
      }
      c.field(n, line, "entropy_nats", vt::number_float);
      c.field(n, line, "confidence", vt::number_float);
      if (c.field(n, line, "regime", vt::string)) {
        const auto r = line["regime"].get<std::string>();
        if (r != "High" && r != "Medium" && r != "Low") c.fail(n, "unknown regime label");
      }
      c.field(n, line, "provider_name", vt::string);
      c.field(n, line, "fallback_used", vt::boolean);
    } else {
      c.fail(n, "record kind must be 'turn' or 'trace' between meta and metrics");
    }
  }
  if (expect_trace) c.fail(lines.size(), "partner turn " + std::to_string(pending_turn) + " has no trace record");

  const std::size_t n = lines.size();
  const auto& last = lines.back();
  if (!last.is_object() || last.value("kind", std::string{}) != "metrics") {
    c.fail(n, "last record must have kind 'metrics'");
  } else {
    c.field(n, last, "aborted", vt::boolean);
    c.field(n, last, "abort_reason", vt::string);
    if (c.field(n, last, "metrics", vt::object)) {
      const auto& m = last["metrics"];
      c.field(n, m, "turns_to_argmax_correct", vt::number_integer, true);
      c.field(n, m, "final_true_intent_mass", vt::number_float, true);
      c.field(n, m, "mean_brier", vt::number_float, true);
      c.field(n, m, "confidence_trajectory", vt::array);
      c.field(n, m, "partner_turns", vt::number_integer);
      c.field(n, m, "total_turns", vt::number_integer);
      c.field(n, m, "final_confidence", vt::number_float);
      c.field(n, m, "final_argmax", vt::string);
      if (c.field(n, m, "regime_occupancy", vt::object) && k != 0) {
        double sum = 0.0;
        for (const char* key : {"High", "Medium", "Low"}) {
          if (c.field(n, m["regime_occupancy"], key, vt::number_float)) sum += m["regime_occupancy"][key].get<double>();
        }
        if (std::abs(sum - 1.0) > kNormalizationTolerance) c.fail(n, "regime occupancy does not sum to 1");
      }
    }
  }
  return c.problems;
}

}  // namespace stom
