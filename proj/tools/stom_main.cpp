#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "stom/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stochastic theory-of-mind belief tracking for two-agent dialogue"};
  app.require_subcommand(1);

  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  stom::cli::Overrides overrides;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> provider;
  std::optional<std::string> gateway_mode;
  std::optional<std::string> out_dir;
  std::optional<int> parallelism;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the seed");
    sub->add_option("--provider", provider, "Override the likelihood provider")
        ->check(CLI::IsMember({"tabular", "keyword", "llm"}));
    sub->add_option("--gateway-mode", gateway_mode, "live|record|replay")
        ->check(CLI::IsMember({"live", "record", "replay"}));
    sub->add_option("--out", out_dir, "Output directory");
  };

  auto* run = app.add_subcommand("run", "Run one episode and write its transcript");
  add_common(run);
  auto* batch = app.add_subcommand("batch", "Run scenarios x repetitions and aggregate metrics");
  add_common(batch);
  batch->add_option("--parallelism", parallelism, "Episodes in flight")->check(CLI::PositiveNumber);

  std::string transcript;
  auto* replay = app.add_subcommand("replay", "Re-verify every belief update in a transcript");
  replay->add_option("transcript", transcript, "Transcript JSONL")->required()->check(CLI::ExistingFile);

  std::string format = "table";
  auto* inspect = app.add_subcommand("inspect", "Print the belief trajectory of a transcript");
  inspect->add_option("transcript", transcript, "Transcript JSONL")->required()->check(CLI::ExistingFile);
  inspect->add_option("--format", format, "table|json|csv")
      ->check(CLI::IsMember({"table", "json", "csv"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : stom::cli::kExitConfig;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("stom"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  overrides.seed = seed;
  overrides.provider = provider;
  overrides.gateway_mode = gateway_mode;
  if (out_dir) overrides.out_dir = *out_dir;
  overrides.parallelism = parallelism;

  if (*run) return stom::cli::cmd_run(config, overrides, std::cout, std::cerr);
  if (*batch) return stom::cli::cmd_batch(config, overrides, std::cout, std::cerr);
  if (*replay) return stom::cli::cmd_replay(transcript, std::cout, std::cerr);
  return stom::cli::cmd_inspect(transcript, stom::cli::inspect_format_from_string(format), std::cout, std::cerr);
}
