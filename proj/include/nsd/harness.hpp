#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "nsd/analysis.hpp"
#include "nsd/distributions.hpp"
#include "nsd/geometry.hpp"
#include "nsd/objective.hpp"
#include "nsd/optimizers.hpp"

namespace nsd {

struct DistributionSpec {
  enum class Kind { PowerLaw, Corpus };
  Kind kind = Kind::PowerLaw;
  std::size_t d = 0;
  std::filesystem::path corpusPath;
  std::optional<std::size_t> maxVocab;
};

struct OptimizerSpec {
  std::string name;
  std::string method;  // nsdwd | gd | adam
  std::size_t iterations = 0;
  Eigen::VectorXd theta0;  // empty = zero

  // nsdwd
  NormGeometry geometry = NormGeometry::linf();
  std::optional<double> lambda;  // empty = 1 / min |theta*| for the geometry
  double etaCoeff = 2.0;
  std::size_t scheduleOrigin = 1;

  // gd / adam
  std::optional<double> learningRate;  // empty = grid search
  BaselineHyper hyper;
};

struct ExperimentConfig {
  ObjectiveKind objective = ObjectiveKind::SoftmaxUnigram;
  DistributionSpec distribution;
  std::vector<OptimizerSpec> optimizers;
  std::uint64_t seed = 0;
  std::size_t analysisSamples = 32;
  std::filesystem::path outputDir = "out";
};

/// Parses and validates an experiment document. Relative corpus paths are
/// resolved against `baseDir`. Throws std::invalid_argument on bad input.
ExperimentConfig parseExperimentConfig(const nlohmann::json& doc,
                                       const std::filesystem::path& baseDir = {});
ExperimentConfig loadExperimentConfig(const std::filesystem::path& path);
nlohmann::json toJson(const ExperimentConfig& cfg);

TokenDistribution buildDistribution(const DistributionSpec& spec);

/// Minimizer used for the f* = 0 sanity check.
Eigen::VectorXd materializedMinimizer(const Objective& obj);

struct ExperimentResult {
  std::filesystem::path manifestPath;
  nlohmann::json manifest;
};

/// Runs every optimizer (concurrently), writes `<name>.csv`, `<name>.json`
/// (config echo) and `<name>.theta.csv` for each, then `manifest.json`.
/// Divergent runs are recorded in the manifest without output files.
ExperimentResult runExperiment(const ExperimentConfig& cfg);

enum class BoundForm { TheoremT2, CorollaryT1 };

const char* toString(BoundForm form);

struct BoundCheck {
  std::string name;
  std::string geometry;
  double constant = 0.0;
  std::size_t denominatorOffset = 2;
  double worstRatio = 0.0;  // max_t loss_t (t + offset) / C
  bool pass = false;
  std::optional<std::size_t> firstViolation;
};

struct BoundReport {
  BoundForm form = BoundForm::TheoremT2;
  std::vector<BoundCheck> checks;
  bool allPass() const;
};

/// C for the requested form. TheoremT2 uses 2L(1 + B lambda)^2 / lambda^2
/// with B = max(1/lambda, |theta0|) and L the proven upper smoothness;
/// CorollaryT1 uses the closed-form corollary constants over (t + 1).
/// Throws ConfigMismatchError when the bound's preconditions do not hold
/// for the run (lambda above 1 / min norm, wrong dimension, not NSD-WD).
double boundConstant(const RunSpec& spec, const AnalysisReport& report, BoundForm form);

BoundCheck verifyBound(const std::string& name, const RunLog& log, const AnalysisReport& report,
                       BoundForm form);

struct NamedRun {
  std::string name;
  RunLog log;
};

BoundReport verifyBounds(const std::vector<NamedRun>& runs, const AnalysisReport& report,
                         BoundForm form);

// Reloads CSVs and sidecars referenced by a manifest; baselines are skipped.
BoundReport verifyManifest(const std::filesystem::path& manifestPath, BoundForm form);

std::string formatBoundReport(const BoundReport& report);

}  // namespace nsd
