#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stom/llm_gateway.hpp"
#include "stom/policy.hpp"
#include "stom/simulator.hpp"

namespace stom::cli {

// Exit-code taxonomy shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitAborted = 2;
inline constexpr int kExitVerification = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> provider;
  std::optional<std::string> gateway_mode;
  std::optional<std::filesystem::path> out_dir;
  std::optional<int> parallelism;
};

/// Parsed --config file. Relative paths resolve against the file's directory.
struct RunConfig {
  std::vector<std::filesystem::path> scenarios;
  std::string provider = "tabular";
  std::optional<std::filesystem::path> provider_config;
  RegimeThresholds thresholds;
  std::uint64_t seed = 0;
  int repetitions = 1;
  int parallelism = 1;
  std::filesystem::path out_dir = "runs";
  std::size_t history_window = 20;
  std::string partner = "scripted";
  std::string focal = "scripted";
  std::optional<GatewayConfig> gateway;
  GatewayMode gateway_mode = GatewayMode::Live;
  std::optional<std::filesystem::path> replay_store;

  /// Throws Error{ConfigError} naming the offending field.
  void validate() const;
  bool needs_gateway() const;

  static RunConfig load(const std::filesystem::path& path, const Overrides& overrides = {});
};

/// Builds per-episode agents from a config; shares one gateway across episodes.
class AgentAssembler {
 public:
  explicit AgentAssembler(const RunConfig& config, std::shared_ptr<HttpTransport> transport = nullptr);

  EpisodeAgents operator()(const Scenario& scenario, std::uint64_t seed) const;

  std::shared_ptr<ChatClient> gateway() const { return gateway_; }

 private:
  const RunConfig& config_;
  std::shared_ptr<ChatClient> gateway_;
};

int cmd_run(const std::filesystem::path& config_path, const Overrides& overrides, std::ostream& out,
            std::ostream& err, std::shared_ptr<HttpTransport> transport = nullptr);
int cmd_batch(const std::filesystem::path& config_path, const Overrides& overrides, std::ostream& out,
              std::ostream& err, std::shared_ptr<HttpTransport> transport = nullptr);

/// Re-derives every posterior from its stored prior and likelihoods, plus the
/// stored entropy, confidence and regime. Exit 0 iff everything matches to 1e-9.
int cmd_replay(const std::filesystem::path& transcript, std::ostream& out, std::ostream& err);

enum class InspectFormat { Table, Json, Csv };
InspectFormat inspect_format_from_string(const std::string& text);

int cmd_inspect(const std::filesystem::path& transcript, InspectFormat format, std::ostream& out, std::ostream& err);

}  // namespace stom::cli
