#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stom/simulator.hpp"

namespace stom {

inline constexpr std::string_view kTranscriptSchema = "stom.transcript/1";

/// JSONL: one "meta" line, then a "turn" line per turn (each partner turn
/// followed by its "trace" line), then one "metrics" line. Keys are sorted, so
/// identical records give identical bytes.
std::string write_transcript(const EpisodeRecord& record);
void save_transcript(const EpisodeRecord& record, const std::filesystem::path& path);

/// Splits non-empty lines and parses each. ParseError names the line number.
std::vector<nlohmann::json> parse_jsonl(std::string_view text);

EpisodeRecord read_transcript(std::string_view text);
EpisodeRecord load_transcript(const std::filesystem::path& path);

/// Structural check against the published line schema. Returns one message
/// per problem; empty means valid.
std::vector<std::string> validate_transcript(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace stom
