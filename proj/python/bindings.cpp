#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "stom/belief_engine.hpp"
#include "stom/cli.hpp"
#include "stom/likelihood.hpp"
#include "stom/policy.hpp"
#include "stom/transcript.hpp"

namespace py = pybind11;
using namespace stom;

namespace {

using Hypotheses = std::vector<std::pair<std::string, std::string>>;

HypothesisSet make_set(const Hypotheses& hypotheses) {
  std::vector<IntentionHypothesis> hs;
  for (const auto& [id, description] : hypotheses) hs.push_back({id, description, {}});
  return HypothesisSet(std::move(hs), "python");
}

RegimeThresholds thresholds(double tau_low, double tau_high) {
  RegimeThresholds t{tau_low, tau_high};
  t.validate();
  return t;
}

std::vector<double> estimate(const LikelihoodProvider& provider, const Hypotheses& hypotheses,
                             const std::string& utterance) {
  const Observation obs{Speaker::Partner, utterance, 1, ActionKind::Speak};
  return clamp_likelihoods(provider.estimate(DialogueHistory{}, obs, make_set(hypotheses)).values);
}

py::tuple run_cli(int (*cmd)(const std::filesystem::path&, const cli::Overrides&, std::ostream&, std::ostream&,
                             std::shared_ptr<HttpTransport>),
                  const std::filesystem::path& config, std::optional<std::uint64_t> seed,
                  std::optional<std::filesystem::path> out_dir, std::optional<std::string> provider) {
  cli::Overrides o;
  o.seed = seed;
  o.out_dir = std::move(out_dir);
  o.provider = std::move(provider);
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = cmd(config, o, out, err, nullptr);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bayesian belief tracking over a partner's intentions";
  py::register_exception<Error>(m, "StomError", PyExc_ValueError);

  m.attr("LIKELIHOOD_FLOOR") = kLikelihoodFloor;

  m.def("entropy", [](const std::vector<double>& w) { return entropy(BeliefState::from_distribution(w)); },
        py::arg("weights"), "Shannon entropy in nats.");
  m.def("confidence", [](const std::vector<double>& w) { return confidence(BeliefState::from_distribution(w)); },
        py::arg("weights"), "1 - H/ln k.");
  m.def(
      "bayes_update",
      [](const std::vector<double>& prior, const std::vector<double>& likelihoods) {
        const auto r = bayes_update(BeliefState::from_distribution(prior), likelihoods);
        const auto w = r.posterior.weights();
        return std::vector<double>(w.begin(), w.end());
      },
      py::arg("prior"), py::arg("likelihoods"));
  m.def("clamp_likelihoods", [](const std::vector<double>& raw) { return clamp_likelihoods(raw); }, py::arg("raw"));
  m.def(
      "classify_regime",
      [](double c, double tau_low, double tau_high) {
        return std::string(to_string(classify_regime(c, thresholds(tau_low, tau_high))));
      },
      py::arg("confidence"), py::arg("tau_low") = 0.3, py::arg("tau_high") = 0.7);
  m.def(
      "serialize",
      [](const std::vector<double>& weights, const Hypotheses& hypotheses, double tau_low, double tau_high) {
        const auto set = make_set(hypotheses);
        const auto b = BeliefState::from_distribution(weights);
        return serialize_tom_section(b, set, make_directive(b, set, thresholds(tau_low, tau_high)));
      },
      py::arg("weights"), py::arg("hypotheses"), py::arg("tau_low") = 0.3, py::arg("tau_high") = 0.7,
      "Theory-of-mind prompt section for a belief over (id, description) pairs.");

  py::class_<TabularProvider>(m, "TabularProvider")
      .def(py::init([](const std::filesystem::path& path) { return TabularProvider(LikelihoodTable::load(path)); }),
           py::arg("path"))
      .def("estimate", [](const TabularProvider& p, const Hypotheses& h, const std::string& u) { return estimate(p, h, u); },
           py::arg("hypotheses"), py::arg("utterance"));
  py::class_<KeywordProvider>(m, "KeywordProvider")
      .def(py::init([](const std::filesystem::path& path) { return KeywordProvider(KeywordModel::load(path)); }),
           py::arg("path"))
      .def("estimate", [](const KeywordProvider& p, const Hypotheses& h, const std::string& u) { return estimate(p, h, u); },
           py::arg("hypotheses"), py::arg("utterance"));

  m.def(
      "run",
      [](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
         std::optional<std::filesystem::path> out_dir, std::optional<std::string> provider) {
        return run_cli(&cli::cmd_run, config, seed, std::move(out_dir), std::move(provider));
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out_dir") = py::none(), py::arg("provider") = py::none(),
      "Runs one episode from a config file. Returns (exit_code, stdout, stderr).");
  m.def(
      "batch",
      [](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
         std::optional<std::filesystem::path> out_dir, std::optional<std::string> provider) {
        return run_cli(&cli::cmd_batch, config, seed, std::move(out_dir), std::move(provider));
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out_dir") = py::none(), py::arg("provider") = py::none());
  m.def(
      "replay",
      [](const std::filesystem::path& transcript) {
        std::ostringstream out, err;
        const int code = cli::cmd_replay(transcript, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("transcript"));
  m.def("validate_transcript", [](const std::string& text) { return validate_transcript(text); }, py::arg("text"),
        "Schema problems in a transcript; empty when valid.");
}
