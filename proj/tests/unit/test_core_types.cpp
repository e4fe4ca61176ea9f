#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stom/core_types.hpp"
#include "test_support.hpp"

using namespace stom;
using stom::testing::make_set;
using stom::testing::random_simplex;

namespace {

// Frozen from tests/oracles/derived_values.py (50-digit mpmath).
constexpr double kEntropy721 = 0.801818552543337;
constexpr double kLn3 = 1.09861228866811;
constexpr double kConfidence721 = 0.270153300837902;
constexpr double kConfidence90505 = 0.64100375035347;

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no stom::Error thrown";
  return ErrorKind::VerificationFailure;
}

double sum(std::span<const double> w) { return std::accumulate(w.begin(), w.end(), 0.0); }

}  // namespace

TEST(HypothesisSet, RejectsBadCounts) {
  EXPECT_EQ(kind_of([] { make_set(1); }), ErrorKind::InvalidHypothesisSet);
  EXPECT_EQ(kind_of([] { make_set(17); }), ErrorKind::InvalidHypothesisSet);
  EXPECT_NO_THROW(make_set(2));
  EXPECT_NO_THROW(make_set(16));
}

TEST(HypothesisSet, RejectsDuplicateAndEmptyFields) {
  EXPECT_EQ(kind_of([] { HypothesisSet({{"a", "x", {}}, {"a", "y", {}}}, "s"); }), ErrorKind::InvalidHypothesisSet);
  EXPECT_EQ(kind_of([] { HypothesisSet({{"", "x", {}}, {"b", "y", {}}}, "s"); }), ErrorKind::InvalidHypothesisSet);
  EXPECT_EQ(kind_of([] { HypothesisSet({{"a", "", {}}, {"b", "y", {}}}, "s"); }), ErrorKind::InvalidHypothesisSet);
}

TEST(HypothesisSet, IndexOf) {
  const auto set = make_set(3);
  EXPECT_EQ(set.index_of("h2"), 1u);
  EXPECT_FALSE(set.index_of("nope").has_value());
}

TEST(UniformBelief, Examples) {
  const auto b4 = uniform_belief(make_set(4));
  for (double w : b4.weights()) EXPECT_EQ(w, 0.25);
  const auto b2 = uniform_belief(make_set(2));
  EXPECT_EQ(b2[0], 0.5);
  EXPECT_EQ(b2[1], 0.5);
  const auto b3 = uniform_belief(make_set(3));
  EXPECT_NEAR(sum(b3.weights()), 1.0, 1e-9);
  EXPECT_EQ(b3.turn(), 0);
}

TEST(BeliefFromWeights, Examples) {
  const auto set = make_set(3);
  const auto b = belief_from_weights(set, std::vector<double>{2, 1, 1});
  EXPECT_DOUBLE_EQ(b[0], 0.5);
  EXPECT_DOUBLE_EQ(b[1], 0.25);
  EXPECT_DOUBLE_EQ(b[2], 0.25);
  const auto same = belief_from_weights(set, std::vector<double>{0.5, 0.3, 0.2});
  EXPECT_NEAR(same[0], 0.5, 1e-15);
  EXPECT_NEAR(same[1], 0.3, 1e-15);
  EXPECT_NEAR(same[2], 0.2, 1e-15);
}

TEST(BeliefFromWeights, Errors) {
  const auto set = make_set(3);
  EXPECT_EQ(kind_of([&] { belief_from_weights(set, std::vector<double>{0, 0, 0}); }), ErrorKind::ZeroMass);
  EXPECT_EQ(kind_of([&] { belief_from_weights(set, std::vector<double>{1, -1, 1}); }), ErrorKind::NegativeWeight);
  EXPECT_EQ(kind_of([&] { belief_from_weights(set, std::vector<double>{1, 1}); }), ErrorKind::LengthMismatch);
}

TEST(BeliefState, RejectsUnnormalized) {
  EXPECT_EQ(kind_of([] { BeliefState::from_distribution({0.5, 0.6}); }), ErrorKind::InvalidBelief);
  EXPECT_NO_THROW(BeliefState::from_distribution({0.5, 0.5 + 5e-10}));
  EXPECT_EQ(kind_of([] { BeliefState::from_distribution({0.5, 0.5}, -1); }), ErrorKind::InvalidBelief);
}

TEST(Entropy, Examples) {
  const auto set = make_set(3);
  EXPECT_EQ(entropy(point_mass(set, 0)), 0.0);
  EXPECT_NEAR(entropy(uniform_belief(set)), kLn3, 1e-12);
  EXPECT_NEAR(entropy(BeliefState::from_distribution({0.7, 0.2, 0.1})), kEntropy721, 1e-12);
}

TEST(Confidence, Examples) {
  EXPECT_NEAR(confidence(BeliefState::from_distribution({0.7, 0.2, 0.1})), kConfidence721, 1e-12);
  EXPECT_NEAR(confidence(BeliefState::from_distribution({0.9, 0.05, 0.05})), kConfidence90505, 1e-12);
}

TEST(Confidence, ExactExtremes) {
  for (std::size_t k = 2; k <= 16; ++k) {
    const auto set = make_set(k);
    EXPECT_EQ(confidence(uniform_belief(set)), 0.0) << "k=" << k;
    for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(confidence(point_mass(set, i)), 1.0) << "k=" << k;
  }
}

TEST(Confidence, SingletonGuard) {
  EXPECT_EQ(kind_of([] { confidence(BeliefState::from_distribution({1.0})); }), ErrorKind::SingletonSpace);
}

TEST(Properties, EntropyAndConfidenceBoundsOnRandomSimplex) {
  std::mt19937_64 rng(20240611);
  for (int n = 0; n < 2000; ++n) {
    const std::size_t k = 2 + rng() % 15;
    const auto b = BeliefState::from_distribution(random_simplex(rng, k, n % 3 == 0 ? 0.3 : 0.0));
    const double h = entropy(b);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(k)) + 1e-12);
    const double c = confidence(b);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
    EXPECT_NEAR(c, 1.0 - h / std::log(static_cast<double>(k)), 1e-12);
  }
}

TEST(Properties, LogBaseInvariance) {
  std::mt19937_64 rng(7);
  for (int n = 0; n < 1000; ++n) {
    const auto b = BeliefState::from_distribution(random_simplex(rng, 2 + rng() % 15));
    EXPECT_NEAR(confidence(b, LogBase::Natural), confidence(b, LogBase::Two), 1e-12);
    EXPECT_NEAR(entropy(b, LogBase::Two), entropy(b) / std::log(2.0), 1e-12);
  }
}

TEST(ArgmaxIntent, Examples) {
  const auto set = make_set(3);
  auto e = argmax_intent(BeliefState::from_distribution({0.2, 0.5, 0.3}), set);
  EXPECT_EQ(e.id, "h2");
  EXPECT_EQ(e.probability, 0.5);
  e = argmax_intent(BeliefState::from_distribution({0.4, 0.4, 0.2}), set);
  EXPECT_EQ(e.id, "h1");
  EXPECT_EQ(e.index, 0u);
  e = argmax_intent(point_mass(set, 2), set);
  EXPECT_EQ(e.id, "h3");
  EXPECT_EQ(e.probability, 1.0);
}

TEST(ArgmaxIntent, PermutationEquivariant) {
  std::mt19937_64 rng(99);
  for (int n = 0; n < 300; ++n) {
    const std::size_t k = 2 + rng() % 7;
    const auto set = make_set(k);
    const auto w = random_simplex(rng, k);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<IntentionHypothesis> hs;
    std::vector<double> pw;
    for (auto p : perm) {
      hs.push_back(set[p]);
      pw.push_back(w[p]);
    }
    const HypothesisSet permuted(hs, "p");
    EXPECT_EQ(argmax_intent(BeliefState::from_distribution(w), set).id,
              argmax_intent(BeliefState::from_distribution(pw), permuted).id);
  }
}

TEST(DialogueHistory, RequiresIncreasingTurns) {
  DialogueHistory h("ctx");
  h.append({Speaker::Partner, "hello", 1, ActionKind::Speak});
  EXPECT_EQ(kind_of([&] { h.append({Speaker::Self, "again", 1, ActionKind::Speak}); }),
            ErrorKind::InvalidObservation);
  EXPECT_EQ(kind_of([&] { h.append({Speaker::Self, "", 2, ActionKind::Speak}); }), ErrorKind::InvalidObservation);
  h.append({Speaker::Self, "", 2, ActionKind::Leave});
  EXPECT_EQ(h.size(), 2u);
}

TEST(Json, RoundTrips) {
  const auto set = HypothesisSet({{"a", "Alpha", {"x", "y"}}, {"b", "Beta", {}}}, "scn");
  const auto j = to_json(set);
  EXPECT_EQ(j["scenario_id"], "scn");
  EXPECT_EQ(hypothesis_set_from_json(j), set);

  const auto b = BeliefState::from_distribution({0.25, 0.75}, 4);
  const auto bj = to_json(b);
  EXPECT_TRUE(bj.contains("weights"));
  EXPECT_EQ(bj["turn"], 4);
  EXPECT_EQ(belief_from_json(bj), b);

  const Observation o{Speaker::Partner, "hi", 3, ActionKind::NonVerbal};
  EXPECT_EQ(observation_from_json(to_json(o)), o);
  EXPECT_EQ(to_json(o)["action"], "nonverbal");
}
