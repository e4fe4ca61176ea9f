#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "stom/cli.hpp"
#include "stom/transcript.hpp"
#include "test_support.hpp"

using namespace stom;
using namespace stom::testing;
using nlohmann::json;

namespace {

const std::filesystem::path kData = STOM_DATA_DIR;

/// Runs the tabular supplier scenario and returns the transcript text.
std::string sample_transcript(const TempDir& dir) {
  cli::Overrides o;
  o.out_dir = dir.path();
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_run(kData / "configs/run_tabular.json", o, out, err), cli::kExitOk) << err.str();
  return read_text_file(dir / "supplier_negotiation.jsonl");
}

std::string join(const std::vector<json>& lines) {
  std::string s;
  for (const auto& l : lines) s += l.dump() + "\n";
  return s;
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
  for (const auto& p : problems) {
    if (p.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST(Transcript, WriteReadRoundTripIsByteIdentical) {
  TempDir dir("tr");
  const auto text = sample_transcript(dir);
  const auto record = read_transcript(text);
  EXPECT_EQ(record.scenario_id, "supplier_negotiation");
  EXPECT_EQ(record.true_intent, "lower_price");
  ASSERT_TRUE(record.hypotheses.has_value());
  EXPECT_EQ(record.hypotheses->size(), 3u);
  EXPECT_FALSE(record.turns.empty());
  EXPECT_EQ(write_transcript(record), text);
}

TEST(Transcript, LineLayout) {
  TempDir dir("tr");
  const auto lines = parse_jsonl(sample_transcript(dir));
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines.front()["kind"], "meta");
  EXPECT_EQ(lines.front()["schema"], std::string(kTranscriptSchema));
  EXPECT_EQ(lines.back()["kind"], "metrics");
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    if (lines[i]["kind"] == "turn" && lines[i]["speaker"] == "partner") {
      ASSERT_EQ(lines[i + 1]["kind"], "trace");
      EXPECT_EQ(lines[i + 1]["turn"], lines[i]["turn"]);
    }
  }
}

TEST(Transcript, GeneratedOutputValidates) {
  TempDir dir("tr");
  const auto problems = validate_transcript(sample_transcript(dir));
  EXPECT_TRUE(problems.empty()) << problems.front();
}

TEST(Transcript, ValidatorFlagsBrokenRecords) {
  TempDir dir("tr");
  const auto lines = parse_jsonl(sample_transcript(dir));
  std::size_t trace_at = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i]["kind"] == "trace") {
      trace_at = i;
      break;
    }
  }
  ASSERT_NE(trace_at, 0u);

  auto l = lines;
  l[trace_at]["likelihoods"]["values"][0] = 0.0;
  EXPECT_TRUE(mentions(validate_transcript(join(l)), "likelihood outside"));

  l = lines;
  l[trace_at]["posterior"]["weights"][0] = 5.0;
  EXPECT_TRUE(mentions(validate_transcript(join(l)), "does not sum to 1"));

  l = lines;
  l[trace_at]["regime"] = "Extreme";
  EXPECT_TRUE(mentions(validate_transcript(join(l)), "unknown regime"));

  l = lines;
  l.erase(l.begin() + static_cast<std::ptrdiff_t>(trace_at));
  EXPECT_TRUE(mentions(validate_transcript(join(l)), "has no trace record"));

  l = lines;
  l.front()["schema"] = "other/9";
  EXPECT_TRUE(mentions(validate_transcript(join(l)), "line 1: unknown schema"));

  l = lines;
  l.pop_back();
  EXPECT_TRUE(mentions(validate_transcript(join(l)), "last record must have kind 'metrics'"));

  EXPECT_FALSE(validate_transcript("").empty());
}

TEST(Transcript, ParseErrorsNameTheLine) {
  try {
    parse_jsonl("{\"kind\": \"meta\"}\n\n{not json}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(read_transcript("{\"kind\": \"turn\"}\n"), Error);
  EXPECT_THROW(read_transcript(""), Error);
}

TEST(Transcript, MissingMetricsIsParseError) {
  TempDir dir("tr");
  auto lines = parse_jsonl(sample_transcript(dir));
  lines.pop_back();
  try {
    read_transcript(join(lines));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
  }
}

TEST(Transcript, SchemaDocumentListsEveryKind) {
  const auto schema = json::parse(read_text_file(kData.parent_path() / "docs/transcript.schema.json"));
  const auto text = schema.dump();
  for (const char* kind : {"meta", "turn", "trace", "metrics"}) {
    EXPECT_NE(text.find(std::string("\"") + kind + "\""), std::string::npos) << kind;
  }
  EXPECT_NE(text.find(std::string(kTranscriptSchema)), std::string::npos);
}
