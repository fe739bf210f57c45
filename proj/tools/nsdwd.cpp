// Command-line front end: distributions, analysis, experiment runs and bound
// verification. Exit status 0 on success, 1 on validation or I/O errors,
// 2 when a bound check fails.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "nsd/analysis.hpp"
#include "nsd/distributions.hpp"
#include "nsd/errors.hpp"
#include "nsd/harness.hpp"
#include "nsd/objective.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kBoundFailure = 2;

void writeDistribution(const nsd::TokenDistribution& dist, const std::string& out) {
  if (out.empty() || out == "-") {
    nsd::writeDistributionCsv(std::cout, dist);
    return;
  }
  std::ofstream file(out);
  if (!file) throw nsd::IoError("cannot write " + out);
  nsd::writeDistributionCsv(file, dist);
}

nsd::BoundForm parseForm(const std::string& form) {
  if (form == "theorem") return nsd::BoundForm::TheoremT2;
  if (form == "corollary") return nsd::BoundForm::CorollaryT1;
  throw std::invalid_argument("--form must be 'theorem' or 'corollary'");
}

void printRunSummary(const nlohmann::json& manifest) {
  fmt::print("{:<20} {:<7} {:<6} {:>12} {:>10} {:>14}\n", "run", "method", "norm", "final loss",
             "lambda/lr", "C (theorem)");
  for (const auto& run : manifest.at("runs")) {
    const std::string status = run.at("status").get<std::string>();
    if (status != "ok") {
      fmt::print("{:<20} {:<7} {}\n", run.at("name").get<std::string>(),
                 run.at("method").get<std::string>(), status);
      continue;
    }
    const bool nsd = run.at("method") == "nsdwd";
    std::string constant = "-";
    if (nsd && run.at("bound").contains("theorem_constant")) {
      constant = fmt::format("{:.6g}", run.at("bound").at("theorem_constant").get<double>());
    }
    fmt::print("{:<20} {:<7} {:<6} {:>12.6g} {:>10.4g} {:>14}\n", run.at("name").get<std::string>(),
               run.at("method").get<std::string>(),
               nsd ? run.at("run").at("geometry").get<std::string>() : "-",
               run.at("final_loss").get<double>(),
               nsd ? run.at("lambda").get<double>() : run.at("learning_rate").get<double>(),
               constant);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Normalized steepest descent with weight decay on softmax unigram objectives"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::optional<std::uint64_t> seedOverride;
  std::string out;

  auto* genDist = app.add_subcommand("gen-dist", "Write the 1/k power-law distribution as CSV");
  std::int64_t genD = 0;
  genDist->add_option("--d", genD, "Vocabulary size")->required();
  genDist->add_option("--out", out, "Output CSV (default stdout)");

  auto* ingest = app.add_subcommand("ingest", "Unigram distribution of a whitespace-tokenized corpus");
  std::string input = "-";
  std::optional<std::size_t> maxVocab;
  ingest->add_option("--input", input, "Corpus path or '-' for stdin");
  ingest->add_option("--max-vocab", maxVocab, "Keep the most frequent tokens only");
  ingest->add_option("--out", out, "Output CSV (default stdout)");

  auto* analyzeCmd = app.add_subcommand("analyze", "Print the closed-form constants for a power law");
  std::int64_t analyzeD = 0;
  std::string objective = "softmax_unigram";
  std::string jsonOut;
  std::size_t samples = 32;
  analyzeCmd->add_option("--d", analyzeD, "Vocabulary size")->required();
  analyzeCmd->add_option("--objective", objective, "softmax_unigram or additive_logistic");
  analyzeCmd->add_option("--seed", seed, "Sampling seed");
  analyzeCmd->add_option("--samples", samples, "Random Hessians per smoothness estimate");
  analyzeCmd->add_option("--json", jsonOut, "Also write the report as JSON");

  auto* runCmd = app.add_subcommand("run", "Run an experiment config");
  std::string configPath;
  runCmd->add_option("--config", configPath, "Experiment JSON")->required();
  runCmd->add_option("--seed", seedOverride, "Override the config seed");
  runCmd->add_option("--out", out, "Override the output directory");

  auto* verifyCmd = app.add_subcommand("verify", "Check convergence bounds for a finished run");
  std::string manifestPath;
  std::string form = "theorem";
  verifyCmd->add_option("--manifest", manifestPath, "manifest.json of a run")->required();
  verifyCmd->add_option("--form", form, "theorem (C/(t+2)) or corollary (C/(t+1))");

  auto* reportCmd = app.add_subcommand("report", "Summarize a finished run");
  reportCmd->add_option("--manifest", manifestPath, "manifest.json of a run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*genDist) {
      if (genD <= 0) throw std::invalid_argument("--d must be at least 1");
      writeDistribution(nsd::powerLawDistribution(static_cast<std::size_t>(genD)), out);
    } else if (*ingest) {
      if (input == "-") {
        writeDistribution(nsd::ingestCorpus(std::cin, maxVocab), out);
      } else {
        std::ifstream file(input, std::ios::binary);
        if (!file) throw nsd::IoError("cannot read " + input);
        writeDistribution(nsd::ingestCorpus(file, maxVocab), out);
      }
    } else if (*analyzeCmd) {
      if (analyzeD <= 0) throw std::invalid_argument("--d must be at least 1");
      const nsd::Objective obj(nsd::objectiveKindFromString(objective),
                               nsd::powerLawDistribution(static_cast<std::size_t>(analyzeD)));
      const nsd::AnalysisReport report = nsd::analyze(obj, seed, samples);
      std::cout << nsd::formatReportTable(report);
      if (!jsonOut.empty()) {
        std::ofstream file(jsonOut);
        if (!file) throw nsd::IoError("cannot write " + jsonOut);
        file << nlohmann::json(report).dump(2) << '\n';
      }
    } else if (*runCmd) {
      nsd::ExperimentConfig cfg = nsd::loadExperimentConfig(configPath);
      if (seedOverride) cfg.seed = *seedOverride;
      if (!out.empty()) cfg.outputDir = out;
      const nsd::ExperimentResult result = nsd::runExperiment(cfg);
      printRunSummary(result.manifest);
      std::cout << "manifest: " << result.manifestPath.string() << '\n';
    } else if (*verifyCmd) {
      const nsd::BoundReport report = nsd::verifyManifest(manifestPath, parseForm(form));
      std::cout << nsd::formatBoundReport(report);
      return report.allPass() ? kOk : kBoundFailure;
    } else if (*reportCmd) {
      std::ifstream file(manifestPath);
      if (!file) throw nsd::IoError("cannot read " + manifestPath);
      const auto manifest = nlohmann::json::parse(file);
      std::cout << nsd::formatReportTable(manifest.at("analysis").get<nsd::AnalysisReport>()) << '\n';
      printRunSummary(manifest);
      const nsd::BoundReport bounds = nsd::verifyManifest(manifestPath, nsd::BoundForm::TheoremT2);
      std::cout << '\n' << nsd::formatBoundReport(bounds);
      std::cout << nsd::formatBoundReport(nsd::verifyManifest(manifestPath, nsd::BoundForm::CorollaryT1));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kOk;
}
