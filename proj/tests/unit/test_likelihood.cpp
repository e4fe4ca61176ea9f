#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "stom/likelihood.hpp"
#include "test_support.hpp"

using namespace stom;
using namespace stom::testing;
using nlohmann::json;

namespace {

Observation partner(std::string text, int turn = 1) { return {Speaker::Partner, std::move(text), turn, ActionKind::Speak}; }

HypothesisSet bargain_set() {
  return HypothesisSet({{"bargain", "Wants a bargain", {}}, {"browse", "Is just browsing", {}}}, "shop");
}

LikelihoodTable bargain_table() {
  return LikelihoodTable::from_json(json::parse(R"({
    "classes": ["price_question", "small_talk"],
    "classifier": {"price_question": ["how much", "\\bprice\\b"], "small_talk": ["weather", "\\bnice\\b"]},
    "table": {"bargain": {"price_question": 0.8, "small_talk": 0.3},
              "browse": {"price_question": 0.4, "small_talk": 0.6}}
  })"));
}

}  // namespace

TEST(Clamp, Contract) {
  const auto out = clamp_likelihoods(std::vector<double>{1.7, 0.0, 0.5, -3.0, std::nan(""), 1e-6, 1.0});
  EXPECT_EQ(out, (std::vector<double>{1.0, 1e-6, 0.5, 1e-6, 1e-6, 1e-6, 1.0}));
}

TEST(Clamp, Idempotent) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  for (int n = 0; n < 200; ++n) {
    std::vector<double> v(1 + rng() % 10);
    for (auto& x : v) x = u(rng);
    const auto once = clamp_likelihoods(v);
    EXPECT_EQ(clamp_likelihoods(once), once);
  }
}

TEST(Tabular, TableLookup) {
  const TabularProvider provider(bargain_table());
  const auto set = bargain_set();
  const auto l = provider.estimate(DialogueHistory{}, partner("So how much is this one?"), set);
  EXPECT_EQ(l.values, (std::vector<double>{0.8, 0.4}));
  EXPECT_EQ(l.provider_name, "tabular");
  EXPECT_EQ(provider.table().classify("Nice WEATHER today"), "small_talk");
}

TEST(Tabular, DeterministicAndFailureModes) {
  const TabularProvider provider(bargain_table());
  const auto set = bargain_set();
  const auto a = provider.estimate(DialogueHistory{}, partner("What's the price?"), set);
  const auto b = provider.estimate(DialogueHistory{}, partner("What's the price?"), set);
  EXPECT_EQ(a.values, b.values);
  try {
    provider.estimate(DialogueHistory{}, partner("Hmm."), set);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProviderFailure);
  }
  try {
    provider.estimate(DialogueHistory{}, {Speaker::Self, "price?", 1, ActionKind::Speak}, set);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PreconditionViolation);
  }
}

TEST(Tabular, FirstDeclaredClassWins) {
  const auto t = bargain_table();
  EXPECT_EQ(t.classify("nice price"), "price_question");
}

TEST(Tabular, RejectsBadConfig) {
  EXPECT_THROW(LikelihoodTable::from_json(json::parse(R"({"classes": ["a"], "classifier": {"a": ["("]},
                                                         "table": {"h": {"a": 0.5}}})")),
               Error);
  const auto t = bargain_table();
  try {
    t.check_dense_for(make_set(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
}

TEST(Tabular, JsonRoundTrip) {
  const auto t = bargain_table();
  EXPECT_EQ(LikelihoodTable::from_json(t.to_json()).to_json(), t.to_json());
}

TEST(Keyword, ZeroMatchesIsUniform) {
  KeywordModel m;
  m.bias = 1.0;
  m.keywords["h1"] = {{"apple", 2.0}};
  m.keywords["h2"] = {{"pear", 1.0}};
  const auto l = keyword_estimate(partner("nothing relevant"), make_set(2), m);
  EXPECT_EQ(l.values[0], l.values[1]);
}

TEST(Keyword, LogisticMidpointAndDerivedValue) {
  KeywordModel m;
  m.bias = 0.0;
  m.keywords["h1"] = {{"deal", 2.0}};
  m.keywords["h2"] = {{"zzz", 1.0}};
  m.keywords["h3"] = {};
  const auto l = keyword_estimate(partner("Let's make a deal"), make_set(3), m);
  EXPECT_NEAR(l.values[0], 0.880797077977882, 1e-12);  // logistic(2), tests/oracles/derived_values.py
  EXPECT_EQ(l.values[1], 0.5);
  EXPECT_EQ(l.values[2], 0.5);

  m.bias = 2.0;
  EXPECT_EQ(keyword_estimate(partner("deal"), make_set(3), m).values[0], 0.5);
}

TEST(Keyword, WholeWordCaseInsensitive) {
  const std::vector<KeywordWeight> kw{{"deal", 1.0}, {"long haul", 2.0}, {"can't", 0.5}};
  EXPECT_EQ(keyword_score("DEAL!", kw), 1.0);
  EXPECT_EQ(keyword_score("ideally dealer", kw), 0.0);
  EXPECT_EQ(keyword_score("in it for the Long   haul", kw), 2.0);
  EXPECT_EQ(keyword_score("long, well, haul", kw), 0.0);
  EXPECT_EQ(keyword_score("I can't", kw), 0.5);
  EXPECT_EQ(keyword_score("deal deal deal", kw), 1.0);
}

TEST(Keyword, PermutationSymmetry) {
  std::mt19937_64 rng(8);
  const std::vector<std::string> vocab{"alpha", "beta", "gamma", "delta", "omega"};
  for (int n = 0; n < 100; ++n) {
    const std::size_t k = 2 + rng() % 5;
    const auto set = make_set(k);
    KeywordModel m;
    m.bias = 0.5;
    for (const auto& h : set.hypotheses()) {
      for (const auto& w : vocab) {
        if (rng() % 2) m.keywords[h.id].push_back({w, static_cast<double>(rng() % 5)});
      }
      m.keywords[h.id];
    }
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<IntentionHypothesis> hs;
    for (auto p : perm) hs.push_back(set[p]);
    const HypothesisSet permuted(hs, "p");
    const auto obs = partner("alpha and gamma then omega");
    const auto base = keyword_estimate(obs, set, m).values;
    const auto moved = keyword_estimate(obs, permuted, m).values;
    for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(moved[i], base[perm[i]]);
  }
}

TEST(Keyword, MissingListIsConfigError) {
  KeywordModel m;
  m.keywords["h1"] = {};
  try {
    keyword_estimate(partner("x"), make_set(2), m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
}

TEST(Keyword, JsonRoundTrip) {
  const auto m = KeywordModel::from_json(json::parse(R"({"bias": 1.5, "keywords": {"h1": {"x": 1}, "h2": {"y z": 2}}})"));
  EXPECT_EQ(m.bias, 1.5);
  EXPECT_EQ(KeywordModel::from_json(m.to_json()).to_json(), m.to_json());
}

TEST(ExtractJson, FencesAndNoise) {
  EXPECT_EQ(extract_json_object("```json\n{\"a\": 1}\n```"), "{\"a\": 1}");
  EXPECT_EQ(extract_json_object("Sure! {\"a\": {\"b\": \"}\"}} trailing"), "{\"a\": {\"b\": \"}\"}}");
  EXPECT_THROW(extract_json_object("no braces"), Error);
}

TEST(ParseScores, Shapes) {
  const auto set = make_set(3);
  EXPECT_EQ(parse_likelihood_scores(R"({"h1":0.9,"h2":0.2,"h3":0.1})", set), (std::vector<double>{0.9, 0.2, 0.1}));
  EXPECT_EQ(parse_likelihood_scores(R"({"h1":{"score":0.9,"rationale":"x"},"h2":{"score":0.2},"h3":0.1})", set),
            (std::vector<double>{0.9, 0.2, 0.1}));
  EXPECT_EQ(parse_likelihood_scores(R"({"scores":{"h1":1,"h2":0,"h3":0.5}})", set), (std::vector<double>{1, 0, 0.5}));
  try {
    parse_likelihood_scores(R"({"h1":0.9,"h3":0.1})", set);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingHypothesisScore);
  }
  try {
    parse_likelihood_scores(R"({"h1":"high","h2":0.2,"h3":0.1})", set);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
  }
}

TEST(LlmProvider, WellFormedResponse) {
  auto chat = std::make_shared<FakeChat>([](const ChatRequest&, int) { return R"({"h1":0.9,"h2":0.2,"h3":0.1})"; });
  const LlmLikelihoodProvider provider(chat);
  const auto l = provider.estimate(DialogueHistory("ctx"), partner("hello"), make_set(3));
  EXPECT_EQ(l.values, (std::vector<double>{0.9, 0.2, 0.1}));
  EXPECT_EQ(l.raw_response, R"({"h1":0.9,"h2":0.2,"h3":0.1})");
  EXPECT_EQ(chat->calls, 1);
  const auto& prompt = chat->requests[0].messages.back().content;
  EXPECT_NE(prompt.find("h2: Intention number 2"), std::string::npos);
  EXPECT_NE(prompt.find("[turn 1] Partner: hello"), std::string::npos);
}

TEST(LlmProvider, FencedResponseAndClamp) {
  auto chat = std::make_shared<FakeChat>([](const ChatRequest&, int) {
    return "```json\n{\"h1\": 1.4, \"h2\": 0, \"h3\": 0.3}\n```";
  });
  const auto l = LlmLikelihoodProvider(chat).estimate(DialogueHistory{}, partner("x"), make_set(3));
  EXPECT_EQ(l.values, (std::vector<double>{1.0, 1e-6, 0.3}));
}

TEST(LlmProvider, RetriesWithReminderThenSucceeds) {
  auto chat = std::make_shared<FakeChat>([](const ChatRequest&, int call) -> std::string {
    return call == 0 ? R"({"h1": 0.5, "h3": 0.5})" : R"({"h1": 0.5, "h2": 0.4, "h3": 0.5})";
  });
  const auto l = LlmLikelihoodProvider(chat).estimate(DialogueHistory{}, partner("x"), make_set(3));
  EXPECT_EQ(l.values[1], 0.4);
  ASSERT_EQ(chat->calls, 2);
  const auto& retry = chat->requests[1].messages;
  ASSERT_EQ(retry.size(), 4u);
  EXPECT_EQ(retry[2].role, "assistant");
  EXPECT_NE(retry[3].content.find("h1, h2, h3"), std::string::npos);
}

TEST(LlmProvider, ExhaustionIsProviderFailure) {
  auto chat = std::make_shared<FakeChat>([](const ChatRequest&, int) { return R"({"h1": 0.5})"; });
  LlmProviderOptions options;
  options.max_parse_retries = 2;
  try {
    LlmLikelihoodProvider(chat, options).estimate(DialogueHistory{}, partner("x"), make_set(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProviderFailure);
  }
  EXPECT_EQ(chat->calls, 3);
}

TEST(LlmProvider, GatewayErrorIsProviderFailure) {
  auto chat = std::make_shared<FakeChat>([](const ChatRequest&, int) -> std::string {
    throw Error(ErrorKind::Timeout, "slow");
  });
  try {
    LlmLikelihoodProvider(chat).estimate(DialogueHistory{}, partner("x"), make_set(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProviderFailure);
  }
}

TEST(RenderHistory, EmptyAndWindow) {
  EXPECT_EQ(render_history(DialogueHistory{}, 20), "(no turns yet)");
  DialogueHistory h;
  for (int t = 1; t <= 25; ++t) h.append({t % 2 ? Speaker::Partner : Speaker::Self, "line " + std::to_string(t), t});
  const auto text = render_history(h, 20);
  EXPECT_EQ(text.rfind("[... 5 earlier turns omitted ...]", 0), 0u);
  EXPECT_EQ(text.find("line 5\n"), std::string::npos);
  EXPECT_NE(text.find("[turn 6] You: line 6"), std::string::npos);
  EXPECT_NE(text.find("[turn 25] Partner: line 25"), std::string::npos);
}
