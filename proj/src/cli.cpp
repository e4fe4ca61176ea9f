#include "stom/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "stom/transcript.hpp"

namespace stom::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_relative() ? base / path : path).lexically_normal();
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

bool RunConfig::needs_gateway() const { return provider == "llm" || partner == "llm" || focal == "llm"; }

void RunConfig::validate() const {
  if (scenarios.empty()) throw Error(ErrorKind::ConfigError, "config.scenario (or config.scenarios) is required");
  if (provider != "tabular" && provider != "keyword" && provider != "llm") {
    throw Error(ErrorKind::ConfigError, "config.provider must be tabular|keyword|llm, got '" + provider + "'");
  }
  if (partner != "scripted" && partner != "llm") throw Error(ErrorKind::ConfigError, "config.partner must be scripted|llm");
  if (focal != "scripted" && focal != "llm") throw Error(ErrorKind::ConfigError, "config.focal must be scripted|llm");
  if (repetitions < 1) throw Error(ErrorKind::ConfigError, "config.repetitions must be >= 1");
  if (parallelism < 1) throw Error(ErrorKind::ConfigError, "config.parallelism must be >= 1");
  thresholds.validate();
  if (needs_gateway() && !gateway) {
    throw Error(ErrorKind::ConfigError, "config.gateway is required when an llm provider or agent is selected");
  }
  if (gateway_mode != GatewayMode::Live && !replay_store) {
    throw Error(ErrorKind::ConfigError, "config.replay_store is required for gateway mode " + to_string(gateway_mode));
  }
}

RunConfig RunConfig::load(const fs::path& path, const Overrides& overrides) {
  const json j = read_json(path);
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, path.string() + ": config must be a JSON object");
  const fs::path base = path.parent_path();
  RunConfig c;
  try {
    if (j.contains("scenario")) c.scenarios.push_back(resolve(base, j["scenario"].get<std::string>()));
    if (j.contains("scenarios")) {
      for (const auto& s : j["scenarios"]) c.scenarios.push_back(resolve(base, s.get<std::string>()));
    }
    c.provider = j.value("provider", c.provider);
    if (j.contains("provider_config")) c.provider_config = resolve(base, j["provider_config"].get<std::string>());
    if (j.contains("thresholds")) c.thresholds = RegimeThresholds::from_json(j["thresholds"]);
    c.seed = j.value("seed", c.seed);
    c.repetitions = j.value("repetitions", c.repetitions);
    c.parallelism = j.value("parallelism", c.parallelism);
    if (j.contains("out")) c.out_dir = resolve(base, j["out"].get<std::string>());
    c.history_window = j.value("history_window", c.history_window);
    c.partner = j.value("partner", c.partner);
    c.focal = j.value("focal", c.focal);
    if (j.contains("gateway")) {
      c.gateway = GatewayConfig::from_json(j["gateway"]);
    } else if (j.contains("gateway_config")) {
      c.gateway = GatewayConfig::from_json(read_json(resolve(base, j["gateway_config"].get<std::string>())));
    }
    if (j.contains("gateway_mode")) c.gateway_mode = gateway_mode_from_string(j["gateway_mode"].get<std::string>());
    if (j.contains("replay_store")) c.replay_store = resolve(base, j["replay_store"].get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.provider) c.provider = *overrides.provider;
  if (overrides.gateway_mode) c.gateway_mode = gateway_mode_from_string(*overrides.gateway_mode);
  if (overrides.out_dir) c.out_dir = *overrides.out_dir;
  if (overrides.parallelism) c.parallelism = *overrides.parallelism;
  c.validate();
  return c;
}

AgentAssembler::AgentAssembler(const RunConfig& config, std::shared_ptr<HttpTransport> transport)
    : config_(config) {
  if (config_.gateway) {
    gateway_ = make_gateway(config_.gateway_mode, *config_.gateway, config_.replay_store, std::move(transport));
  }
}

EpisodeAgents AgentAssembler::operator()(const Scenario& scenario, std::uint64_t seed) const {
  EpisodeAgents agents;
  auto provider_file = [&](const std::string& name) -> std::optional<fs::path> {
    if (config_.provider_config) return config_.provider_config;
    if (auto it = scenario.provider_configs.find(name); it != scenario.provider_configs.end()) return it->second;
    return std::nullopt;
  };

  if (config_.provider == "tabular") {
    const auto file = provider_file("tabular");
    if (!file) throw Error(ErrorKind::ConfigError, "config.provider_config is required for the tabular provider");
    auto table = LikelihoodTable::load(*file);
    if (scenario.hypotheses) table.check_dense_for(*scenario.hypotheses);
    agents.provider = std::make_shared<TabularProvider>(std::move(table));
  } else if (config_.provider == "keyword") {
    const auto file = provider_file("keyword");
    if (!file) throw Error(ErrorKind::ConfigError, "config.provider_config is required for the keyword provider");
    agents.provider = std::make_shared<KeywordProvider>(KeywordModel::load(*file));
  } else {
    LlmProviderOptions options;
    options.history_window = config_.history_window;
    if (const auto file = provider_file("llm")) options = LlmProviderOptions::from_json(read_json(*file));
    agents.provider = std::make_shared<LlmLikelihoodProvider>(gateway_, options);
  }

  if (config_.partner == "scripted") {
    if (!scenario.partner_model) {
      throw Error(ErrorKind::ConfigError, "scenario '" + scenario.id + "' has no partner_model for a scripted partner");
    }
    if (!scenario.true_intent) {
      throw Error(ErrorKind::ConfigError, "scenario '" + scenario.id + "' needs true_intent for a scripted partner");
    }
    agents.partner = std::make_shared<ScriptedPartner>(*scenario.partner_model, *scenario.true_intent, seed);
  } else {
    std::string intent = scenario.partner.goal;
    if (scenario.true_intent && scenario.hypotheses) {
      intent = (*scenario.hypotheses)[*scenario.hypotheses->index_of(*scenario.true_intent)].description;
    }
    if (intent.empty()) {
      throw Error(ErrorKind::ConfigError, "scenario '" + scenario.id + "' needs true_intent or partner.goal for an llm partner");
    }
    agents.partner = std::make_shared<LlmPartner>(gateway_, scenario.context, scenario.partner, intent,
                                                  config_.history_window);
  }

  if (config_.focal == "scripted") {
    agents.focal = std::make_shared<ScriptedFocalAgent>();
  } else {
    agents.focal = std::make_shared<LlmFocalAgent>(gateway_);
  }

  if (scenario.prior_mode == PriorMode::Elicited) {
    if (!gateway_) throw Error(ErrorKind::ConfigError, "scenario '" + scenario.id + "' elicits a prior; config.gateway is required");
    agents.prior_provider = std::make_shared<LlmPriorProvider>(gateway_);
  }
  if (scenario.elicit_hypotheses) {
    if (!gateway_) throw Error(ErrorKind::ConfigError, "scenario '" + scenario.id + "' elicits hypotheses; config.gateway is required");
    agents.hypothesis_gateway = gateway_;
  }
  return agents;
}

namespace {

json config_extra(const RunConfig& c) {
  json extra = json::object();
  if (c.gateway) {
    extra["llm_model"] = c.gateway->model;
    extra["llm_temperature"] = c.gateway->temperature;
  }
  return extra;
}

void print_episode_summary(const EpisodeRecord& r, const fs::path& transcript, std::ostream& out) {
  const auto& m = r.metrics;
  std::string argmax = m.final_argmax;
  if (const auto b = r.final_belief(); b && r.hypotheses) {
    if (auto idx = r.hypotheses->index_of(m.final_argmax)) argmax += " (p=" + fixed((*b)[*idx], 3) + ")";
  }
  RegimeThresholds th;
  if (r.config.contains("thresholds")) th = RegimeThresholds::from_json(r.config["thresholds"]);
  out << std::left;
  out << std::setw(16) << "scenario" << r.scenario_id << '\n';
  out << std::setw(16) << "turns" << m.total_turns << " (" << m.partner_turns << " partner)\n";
  out << std::setw(16) << "final argmax" << argmax << '\n';
  out << std::setw(16) << "confidence" << fixed(m.final_confidence, 3) << " ("
      << to_string(classify_regime(m.final_confidence, th)) << ")\n";
  out << std::setw(16) << "occupancy" << "High " << fixed(m.regime_occupancy.high, 2) << "  Medium "
      << fixed(m.regime_occupancy.medium, 2) << "  Low " << fixed(m.regime_occupancy.low, 2) << '\n';
  if (m.final_true_intent_mass) {
    out << std::setw(16) << "true intent" << *r.true_intent << " (mass " << fixed(*m.final_true_intent_mass, 4)
        << ")\n";
  }
  if (r.aborted) out << std::setw(16) << "ABORTED" << r.abort_reason << '\n';
  out << std::setw(16) << "transcript" << transcript.string() << '\n';
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::ConfigError:
      case ErrorKind::ParseError:
      case ErrorKind::InvalidHypothesisSet:
      case ErrorKind::InvalidBelief:
      case ErrorKind::LengthMismatch:
      case ErrorKind::NegativeWeight:
      case ErrorKind::ZeroMass:
        return kExitConfig;
      default:
        return kExitAborted;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitAborted;
  }
}

}  // namespace

int cmd_run(const fs::path& config_path, const Overrides& overrides, std::ostream& out, std::ostream& err,
            std::shared_ptr<HttpTransport> transport) {
  return guarded(err, [&] {
    const auto config = RunConfig::load(config_path, overrides);
    if (config.scenarios.size() != 1) {
      throw Error(ErrorKind::ConfigError, "run takes exactly one scenario; use batch for several");
    }
    const auto scenario = Scenario::load(config.scenarios.front());
    AgentAssembler assemble(config, std::move(transport));
    EpisodeOptions options;
    options.thresholds = config.thresholds;
    options.history_window = config.history_window;
    options.seed = config.seed;
    options.config_extra = config_extra(config);
    const auto record = run_episode(scenario, assemble(scenario, config.seed), options);
    const auto file = config.out_dir / (scenario.id + ".jsonl");
    save_transcript(record, file);
    print_episode_summary(record, file, out);
    return record.aborted ? kExitAborted : kExitOk;
  });
}

int cmd_batch(const fs::path& config_path, const Overrides& overrides, std::ostream& out, std::ostream& err,
              std::shared_ptr<HttpTransport> transport) {
  return guarded(err, [&] {
    const auto config = RunConfig::load(config_path, overrides);
    std::vector<Scenario> scenarios;
    for (const auto& p : config.scenarios) scenarios.push_back(Scenario::load(p));
    AgentAssembler assemble(config, std::move(transport));
    BatchOptions options;
    options.repetitions = config.repetitions;
    options.parallelism = config.parallelism;
    options.seed_base = config.seed;
    options.thresholds = config.thresholds;
    options.history_window = config.history_window;
    options.config_extra = config_extra(config);
    options.out_dir = config.out_dir;
    const auto summary = run_batch(scenarios, std::cref(assemble), options);

    out << std::left << std::setw(24) << "scenario" << std::setw(6) << "n" << std::setw(9) << "aborted"
        << std::setw(14) << "true mass" << std::setw(14) << "brier" << std::setw(11) << "converged" << "confidence\n";
    auto mean = [](const json& agg, const char* key) -> std::string {
      if (!agg["metrics"].contains(key) || agg["metrics"][key]["mean"].is_null()) return "-";
      return fixed(agg["metrics"][key]["mean"].get<double>(), 3) + "±" + fixed(agg["metrics"][key]["std"].get<double>(), 3);
    };
    for (const auto& [id, agg] : summary.summary["scenarios"].items()) {
      out << std::setw(24) << id << std::setw(6) << agg["n"].get<int>() << std::setw(9) << agg["aborted"].get<int>()
          << std::setw(14) << mean(agg, "final_true_intent_mass") << std::setw(14) << mean(agg, "mean_brier")
          << std::setw(11) << agg["converged"].get<int>() << mean(agg, "final_confidence") << '\n';
    }
    out << "episodes " << summary.episodes.size() << ", aborted " << summary.aborted << ", summary "
        << (config.out_dir / "summary.json").string() << '\n';
    return summary.aborted > 0 ? kExitAborted : kExitOk;
  });
}

int cmd_replay(const fs::path& transcript, std::ostream& out, std::ostream& err) {
  std::vector<json> lines;
  try {
    const auto text = read_text_file(transcript);
    lines = parse_jsonl(text);
    if (lines.empty()) throw Error(ErrorKind::ConfigError, transcript.string() + " is empty");
    if (lines.front().value("kind", std::string{}) != "meta") {
      throw Error(ErrorKind::ConfigError, transcript.string() + " does not start with a meta record");
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  const auto& meta = lines.front();
  RegimeThresholds th;
  try {
    if (meta.contains("config") && meta["config"].contains("thresholds")) {
      th = RegimeThresholds::from_json(meta["config"]["thresholds"]);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  std::optional<std::vector<double>> previous;
  if (meta.contains("initial_belief") && meta["initial_belief"].is_object()) {
    previous = meta["initial_belief"].value("weights", std::vector<double>{});
  }
  int failures = 0;
  int checked = 0;
  auto fail = [&](int turn, const std::string& what) {
    ++failures;
    err << "turn " << turn << ": " << what << '\n';
  };
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.value("kind", std::string{}) != "trace") continue;
    ++checked;
    const int turn = line.value("turn", -1);
    try {
      const auto prior = line.at("prior").at("weights").get<std::vector<double>>();
      const auto lh = line.at("likelihoods").at("values").get<std::vector<double>>();
      const auto posterior = line.at("posterior").at("weights").get<std::vector<double>>();
      for (double l : lh) {
        if (!(l >= kLikelihoodFloor && l <= 1.0)) fail(turn, "likelihood " + std::to_string(l) + " outside [1e-6, 1]");
      }
      if (previous && previous->size() == prior.size()) {
        for (std::size_t k = 0; k < prior.size(); ++k) {
          if (std::abs((*previous)[k] - prior[k]) > kNormalizationTolerance) {
            fail(turn, "prior does not continue from the previous belief");
            break;
          }
        }
      }
      const auto expected = reconstruct_posterior(prior, lh);
      if (expected.size() != posterior.size()) throw Error(ErrorKind::LengthMismatch, "posterior length");
      double worst = 0.0;
      for (std::size_t k = 0; k < expected.size(); ++k) worst = std::max(worst, std::abs(expected[k] - posterior[k]));
      if (worst > kNormalizationTolerance) {
        fail(turn, "posterior differs from prior x likelihood by " + std::to_string(worst));
      }
      double sum = 0.0;
      for (double w : posterior) sum += w;
      if (std::abs(sum - 1.0) > kNormalizationTolerance || posterior.size() < 2) {
        fail(turn, "posterior is not a distribution");
      } else {
        const auto b = BeliefState::from_distribution(posterior);
        const double h = entropy(b);
        const double c = confidence(b);
        if (std::abs(h - line.at("entropy_nats").get<double>()) > kNormalizationTolerance) fail(turn, "entropy mismatch");
        if (std::abs(c - line.at("confidence").get<double>()) > kNormalizationTolerance) fail(turn, "confidence mismatch");
        const auto regime = to_string(classify_regime(c, th));
        if (regime != line.at("regime").get<std::string>()) fail(turn, "regime mismatch");
        out << "turn " << std::setw(3) << turn << "  confidence " << fixed(c, 4) << "  " << std::setw(6) << regime
            << "  [";
        for (std::size_t k = 0; k < posterior.size(); ++k) out << (k ? ", " : "") << fixed(posterior[k], 4);
        out << "]\n";
      }
      previous = posterior;
    } catch (const std::exception& e) {
      fail(turn, std::string("malformed trace record: ") + e.what());
    }
  }
  if (failures > 0) {
    out << "verification FAILED: " << failures << " problem(s) across " << checked << " trace records\n";
    return kExitVerification;
  }
  out << "verified " << checked << " trace records\n";
  return kExitOk;
}

InspectFormat inspect_format_from_string(const std::string& text) {
  if (text == "table") return InspectFormat::Table;
  if (text == "json") return InspectFormat::Json;
  if (text == "csv") return InspectFormat::Csv;
  throw Error(ErrorKind::ConfigError, "unknown format '" + text + "' (expected table|json|csv)");
}

int cmd_inspect(const fs::path& transcript, InspectFormat format, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto text = read_text_file(transcript);
    if (parse_jsonl(text).empty()) throw Error(ErrorKind::ConfigError, transcript.string() + " is empty");
    const auto record = read_transcript(text);
    if (!record.hypotheses || !record.initial_belief) {
      throw Error(ErrorKind::ConfigError, "transcript has no belief trajectory (episode aborted before initialization)");
    }
    const auto& set = *record.hypotheses;
    RegimeThresholds th;
    if (record.config.contains("thresholds")) th = RegimeThresholds::from_json(record.config["thresholds"]);

    struct Row {
      int turn;
      std::vector<double> weights;
      double entropy;
      double confidence;
      std::string regime;
    };
    std::vector<Row> rows;
    auto add = [&](int turn, const BeliefState& b) {
      const double c = confidence(b);
      rows.push_back({turn, {b.weights().begin(), b.weights().end()}, entropy(b), c,
                      std::string(to_string(classify_regime(c, th)))});
    };
    add(0, *record.initial_belief);
    for (const auto* e : record.trace_entries()) add(e->turn, e->posterior);

    switch (format) {
      case InspectFormat::Csv: {
        out << "turn";
        for (const auto& h : set.hypotheses()) out << ',' << h.id;
        out << ",entropy,confidence,regime\n";
        for (const auto& r : rows) {
          out << r.turn;
          for (double w : r.weights) out << ',' << fixed(w, 9);
          out << ',' << fixed(r.entropy, 9) << ',' << fixed(r.confidence, 9) << ',' << r.regime << '\n';
        }
        break;
      }
      case InspectFormat::Json: {
        json traj = json::array();
        for (const auto& r : rows) {
          traj.push_back({{"turn", r.turn}, {"weights", r.weights}, {"entropy_nats", r.entropy},
                          {"confidence", r.confidence}, {"regime", r.regime}});
        }
        json ids = json::array();
        for (const auto& h : set.hypotheses()) ids.push_back(h.id);
        out << json{{"scenario_id", record.scenario_id}, {"hypotheses", ids}, {"trajectory", traj},
                    {"metrics", to_json(record.metrics)}, {"aborted", record.aborted}}.dump(2)
            << '\n';
        break;
      }
      case InspectFormat::Table: {
        out << std::left << std::setw(6) << "turn";
        for (const auto& h : set.hypotheses()) out << std::setw(10) << h.id.substr(0, 9);
        out << std::setw(10) << "entropy" << std::setw(12) << "confidence" << "regime\n";
        for (const auto& r : rows) {
          out << std::setw(6) << r.turn;
          for (double w : r.weights) out << std::setw(10) << fixed(w, 4);
          out << std::setw(10) << fixed(r.entropy, 4) << std::setw(12) << fixed(r.confidence, 4) << r.regime << '\n';
        }
        const auto& m = record.metrics;
        out << "\nfinal argmax " << m.final_argmax << ", partner turns " << m.partner_turns;
        if (m.final_true_intent_mass) out << ", true-intent mass " << fixed(*m.final_true_intent_mass, 4);
        if (m.turns_to_argmax_correct) out << ", argmax settled at turn " << *m.turns_to_argmax_correct;
        out << '\n';
        break;
      }
    }
    return kExitOk;
  });
}

}  // namespace stom::cli
