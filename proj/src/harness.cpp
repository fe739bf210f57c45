#include "nsd/harness.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "nsd/errors.hpp"

namespace nsd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kBoundSlack = 1e-9;
constexpr double kLambdaSlack = 1e-12;
constexpr double kFStarTolerance = 1e-10;

bool validRunName(const std::string& name) {
  static const std::regex pattern("[A-Za-z0-9_-]+");
  return std::regex_match(name, pattern);
}

std::size_t positiveCount(const json& j, const char* key) {
  const auto value = j.at(key).get<std::int64_t>();
  if (value <= 0) throw std::invalid_argument(fmt::format("'{}' must be positive", key));
  return static_cast<std::size_t>(value);
}

Eigen::VectorXd parseTheta0(const json& opt) {
  if (!opt.contains("theta0")) return {};
  const json& t = opt.at("theta0");
  if (t.is_string()) {
    if (t.get<std::string>() != "zero") throw std::invalid_argument("theta0 must be \"zero\" or a list");
    return {};
  }
  const auto values = t.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

OptimizerSpec parseOptimizer(const json& j) {
  OptimizerSpec spec;
  spec.name = j.at("name").get<std::string>();
  if (!validRunName(spec.name)) {
    throw std::invalid_argument("optimizer name '" + spec.name + "' must match [A-Za-z0-9_-]+");
  }
  spec.method = j.at("method").get<std::string>();
  const auto iterations = j.at("iterations").get<std::int64_t>();
  if (iterations < 0) throw std::invalid_argument("'iterations' must be nonnegative");
  spec.iterations = static_cast<std::size_t>(iterations);
  spec.theta0 = parseTheta0(j);

  if (spec.method == "nsdwd") {
    spec.geometry = NormGeometry::fromString(j.at("geometry").get<std::string>());
    const json& lambda = j.value("lambda", json("optimal"));
    if (lambda.is_string()) {
      if (lambda.get<std::string>() != "optimal") {
        throw std::invalid_argument("lambda must be a number or \"optimal\"");
      }
    } else {
      spec.lambda = lambda.get<double>();
      if (!(*spec.lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    }
    spec.etaCoeff = j.value("eta_coeff", 2.0);
    if (!(spec.etaCoeff > 0.0)) throw std::invalid_argument("eta_coeff must be positive");
    spec.scheduleOrigin = j.value("schedule_origin", std::size_t{1});
  } else if (spec.method == "gd" || spec.method == "adam") {
    const json& lr = j.value("learning_rate", json("grid"));
    if (lr.is_string()) {
      if (lr.get<std::string>() != "grid") {
        throw std::invalid_argument("learning_rate must be a number or \"grid\"");
      }
    } else {
      spec.learningRate = lr.get<double>();
      if (*spec.learningRate < 0.0) throw std::invalid_argument("learning_rate must be >= 0");
    }
    spec.hyper.beta1 = j.value("beta1", spec.hyper.beta1);
    spec.hyper.beta2 = j.value("beta2", spec.hyper.beta2);
    spec.hyper.epsilon = j.value("epsilon", spec.hyper.epsilon);
    spec.hyper.weightDecay = j.value("weight_decay", 0.0);
  } else {
    throw std::invalid_argument("unknown optimizer method '" + spec.method + "'");
  }
  return spec;
}

json optimizerToJson(const OptimizerSpec& s) {
  json j{{"name", s.name}, {"method", s.method}, {"iterations", s.iterations}};
  if (s.theta0.size() > 0) {
    j["theta0"] = std::vector<double>(s.theta0.begin(), s.theta0.end());
  } else {
    j["theta0"] = "zero";
  }
  if (s.method == "nsdwd") {
    j["geometry"] = s.geometry.name();
    j["lambda"] = s.lambda ? json(*s.lambda) : json("optimal");
    j["eta_coeff"] = s.etaCoeff;
    j["schedule_origin"] = s.scheduleOrigin;
  } else {
    j["learning_rate"] = s.learningRate ? json(*s.learningRate) : json("grid");
    j["weight_decay"] = s.hyper.weightDecay;
    if (s.method == "adam") {
      j["beta1"] = s.hyper.beta1;
      j["beta2"] = s.hyper.beta2;
      j["epsilon"] = s.hyper.epsilon;
    }
  }
  return j;
}

void writeFile(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << contents;
  if (!out) throw IoError("failed writing " + path.string());
}

json readJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

struct RunResult {
  std::optional<RunLog> log;
  std::optional<std::size_t> divergedAt;
  std::optional<GridSearchResult> grid;
  double lambda = 0.0;
};

RunResult executeOptimizer(const Objective& obj, const OptimizerSpec& spec,
                           const AnalysisReport& report) {
  RunResult result;
  try {
    if (spec.method == "nsdwd") {
      NsdwdConfig cfg;
      cfg.geometry = spec.geometry;
      cfg.lambda = spec.lambda ? *spec.lambda : 1.0 / report.minNorm(spec.geometry);
      cfg.etaCoeff = spec.etaCoeff;
      cfg.iterations = spec.iterations;
      cfg.theta0 = spec.theta0;
      cfg.scheduleOrigin = spec.scheduleOrigin;
      result.lambda = cfg.lambda;
      result.log = runNsdwd(obj, cfg);
    } else {
      const BaselineKind kind = spec.method == "gd" ? BaselineKind::GD : BaselineKind::Adam;
      BaselineHyper hyper = spec.hyper;
      if (spec.learningRate) {
        hyper.learningRate = *spec.learningRate;
      } else {
        result.grid = gridSearchBaseline(obj, kind, hyper, spec.iterations);
        hyper = result.grid->best;
      }
      result.log = runBaseline(obj, kind, hyper, spec.iterations, spec.theta0);
    }
  } catch (const DivergenceError& e) {
    result.log.reset();
    result.divergedAt = e.iteration();
  }
  return result;
}

double corollaryConstant(const RunSpec& spec, const AnalysisReport& report) {
  const bool sign = spec.geometry->kind() == NormGeometry::Kind::Linf;
  if (sign) return 8.0 * report.minNormLinf * report.minNormLinf;
  if (report.kind == ObjectiveKind::SoftmaxUnigram) return static_cast<double>(report.d);
  return 4.0 * report.minNormL2 * report.minNormL2;
}

}  // namespace

ExperimentConfig parseExperimentConfig(const json& doc, const fs::path& baseDir) {
  try {
    ExperimentConfig cfg;
    cfg.objective = objectiveKindFromString(doc.value("objective", std::string("softmax_unigram")));

    const json& dist = doc.at("distribution");
    const auto type = dist.at("type").get<std::string>();
    if (type == "power_law") {
      cfg.distribution.kind = DistributionSpec::Kind::PowerLaw;
      cfg.distribution.d = positiveCount(dist, "d");
    } else if (type == "corpus") {
      cfg.distribution.kind = DistributionSpec::Kind::Corpus;
      fs::path p = dist.at("path").get<std::string>();
      cfg.distribution.corpusPath = p.is_relative() && !baseDir.empty() ? baseDir / p : p;
      if (dist.contains("max_vocab")) cfg.distribution.maxVocab = positiveCount(dist, "max_vocab");
    } else {
      throw std::invalid_argument("unknown distribution type '" + type + "'");
    }

    cfg.seed = doc.value("seed", std::uint64_t{0});
    cfg.analysisSamples = doc.value("analysis_samples", std::size_t{32});
    cfg.outputDir = doc.value("output_dir", std::string("out"));

    std::set<std::string> names;
    for (const json& opt : doc.value("optimizers", json::array())) {
      OptimizerSpec spec = parseOptimizer(opt);
      if (!names.insert(spec.name).second) {
        throw std::invalid_argument("duplicate optimizer name '" + spec.name + "'");
      }
      cfg.optimizers.push_back(std::move(spec));
    }
    return cfg;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("invalid experiment config: ") + e.what());
  }
}

ExperimentConfig loadExperimentConfig(const fs::path& path) {
  json doc;
  try {
    doc = readJsonFile(path);
  } catch (const IoError& e) {
    throw std::invalid_argument(e.what());
  }
  return parseExperimentConfig(doc, path.parent_path());
}

json toJson(const ExperimentConfig& cfg) {
  json dist;
  if (cfg.distribution.kind == DistributionSpec::Kind::PowerLaw) {
    dist = {{"type", "power_law"}, {"d", cfg.distribution.d}};
  } else {
    dist = {{"type", "corpus"}, {"path", cfg.distribution.corpusPath.string()}};
    if (cfg.distribution.maxVocab) dist["max_vocab"] = *cfg.distribution.maxVocab;
  }
  json opts = json::array();
  for (const auto& o : cfg.optimizers) opts.push_back(optimizerToJson(o));
  return json{{"objective", toString(cfg.objective)},
              {"distribution", dist},
              {"seed", cfg.seed},
              {"analysis_samples", cfg.analysisSamples},
              {"output_dir", cfg.outputDir.string()},
              {"optimizers", opts}};
}

TokenDistribution buildDistribution(const DistributionSpec& spec) {
  if (spec.kind == DistributionSpec::Kind::PowerLaw) return powerLawDistribution(spec.d);
  std::ifstream in(spec.corpusPath, std::ios::binary);
  if (!in) throw IoError("cannot read corpus " + spec.corpusPath.string());
  return ingestCorpus(in, spec.maxVocab);
}

Eigen::VectorXd materializedMinimizer(const Objective& obj) {
  if (obj.kind() == ObjectiveKind::AdditiveLogistic) return altInverse(obj.distribution().probs());
  return minNormL2(obj.distribution()).thetaStar;
}

ExperimentResult runExperiment(const ExperimentConfig& cfg) {
  const Objective obj(cfg.objective, buildDistribution(cfg.distribution));
  for (const auto& spec : cfg.optimizers) {
    if (spec.theta0.size() != 0 && static_cast<std::size_t>(spec.theta0.size()) != obj.paramDim()) {
      throw std::invalid_argument("theta0 of '" + spec.name + "' has the wrong dimension");
    }
  }

  const double fStarLoss = obj.loss(materializedMinimizer(obj));
  if (!(fStarLoss < kFStarTolerance)) {
    throw NumericError(fmt::format("loss at the materialized minimizer is {}", fStarLoss));
  }
  const AnalysisReport report = analyze(obj, cfg.seed, cfg.analysisSamples);

  std::error_code ec;
  fs::create_directories(cfg.outputDir, ec);
  if (ec || !fs::is_directory(cfg.outputDir)) {
    throw IoError("cannot create output directory " + cfg.outputDir.string());
  }

  std::vector<std::future<RunResult>> pending;
  pending.reserve(cfg.optimizers.size());
  for (const auto& spec : cfg.optimizers) {
    pending.push_back(std::async(std::launch::async, [&obj, &spec, &report] {
      return executeOptimizer(obj, spec, report);
    }));
  }

  json runs = json::array();
  for (std::size_t i = 0; i < cfg.optimizers.size(); ++i) {
    const OptimizerSpec& spec = cfg.optimizers[i];
    RunResult result = pending[i].get();
    json entry{{"name", spec.name}, {"method", spec.method}, {"config", optimizerToJson(spec)}};
    if (result.grid) {
      json trials = json::array();
      for (const auto& t : result.grid->trials) {
        trials.push_back({{"learning_rate", t.learningRate},
                          {"final_loss", t.diverged ? json(nullptr) : json(t.finalLoss)},
                          {"diverged", t.diverged}});
      }
      entry["grid"] = trials;
    }
    if (!result.log) {
      entry["status"] = "diverged";
      entry["diverged_at"] = *result.divergedAt;
      entry["csv"] = nullptr;
      runs.push_back(entry);
      continue;
    }
    const RunLog& log = *result.log;
    const std::string csvName = spec.name + ".csv";
    const std::string sidecarName = spec.name + ".json";
    const std::string thetaName = spec.name + ".theta.csv";

    std::ostringstream csvText, thetaText;
    writeRunLogCsv(csvText, log);
    writeParametersCsv(thetaText, log.finalTheta);
    json sidecar{{"name", spec.name}, {"run", log.spec}, {"wall_seconds", log.wallSeconds}};
    if (log.convergedAt) sidecar["converged_at"] = *log.convergedAt;
    writeFile(cfg.outputDir / csvName, csvText.str());
    writeFile(cfg.outputDir / thetaName, thetaText.str());
    writeFile(cfg.outputDir / sidecarName, sidecar.dump(2) + "\n");

    entry["status"] = "ok";
    entry["csv"] = csvName;
    entry["sidecar"] = sidecarName;
    entry["theta"] = thetaName;
    entry["records"] = log.records.size();
    entry["final_loss"] = log.records.back().loss;
    entry["run"] = log.spec;
    if (log.convergedAt) entry["converged_at"] = *log.convergedAt;
    if (log.spec.method == "nsdwd") {
      entry["lambda"] = result.lambda;
      entry["lambda_rule"] = spec.lambda ? "explicit" : "optimal";
      try {
        entry["bound"] = {{"theorem_constant", boundConstant(log.spec, report, BoundForm::TheoremT2)},
                          {"theorem_offset", 2}};
        // The corollary closed forms are specific to the 1/k power law.
        if (cfg.distribution.kind == DistributionSpec::Kind::PowerLaw) {
          entry["bound"]["corollary_constant"] = boundConstant(log.spec, report, BoundForm::CorollaryT1);
          entry["bound"]["corollary_offset"] = 1;
        }
      } catch (const ConfigMismatchError& e) {
        entry["bound"] = {{"not_applicable", e.what()}};
      }
    } else {
      entry["learning_rate"] = log.spec.baseline->learningRate;
    }
    runs.push_back(entry);
  }

  ExperimentResult out;
  out.manifest = json{{"config", toJson(cfg)},
                      {"analysis", report},
                      {"f_star_check", {{"loss_at_minimizer", fStarLoss}, {"tolerance", kFStarTolerance}}},
                      {"runs", runs}};
  out.manifestPath = cfg.outputDir / "manifest.json";
  writeFile(out.manifestPath, out.manifest.dump(2) + "\n");
  return out;
}

const char* toString(BoundForm form) {
  return form == BoundForm::TheoremT2 ? "theorem" : "corollary";
}

bool BoundReport::allPass() const {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

double boundConstant(const RunSpec& spec, const AnalysisReport& report, BoundForm form) {
  if (spec.method != "nsdwd" || !spec.geometry) {
    throw ConfigMismatchError("bounds apply only to normalized steepest descent with weight decay");
  }
  const std::size_t expectedDim =
      report.kind == ObjectiveKind::SoftmaxUnigram ? report.d : report.d - 1;
  if (spec.paramDim != expectedDim) {
    throw ConfigMismatchError(fmt::format("run has dimension {} but the analysis expects {}",
                                          spec.paramDim, expectedDim));
  }
  const NormGeometry g = *spec.geometry;
  const double minNorm = report.minNorm(g);
  if (spec.lambda * minNorm > 1.0 + kLambdaSlack) {
    throw ConfigMismatchError(fmt::format(
        "lambda = {} exceeds 1 / min|theta*| = {} for the {} geometry", spec.lambda,
        minNorm > 0 ? 1.0 / minNorm : INFINITY, g.name()));
  }
  if (form == BoundForm::CorollaryT1) return corollaryConstant(spec, report);

  if (spec.etaCoeff != 2.0) {
    throw ConfigMismatchError("the theorem bound requires eta_t = 2 / (lambda (t + 1))");
  }
  const double theta0Norm = g.kind() == NormGeometry::Kind::L2 ? spec.theta0L2 : spec.theta0Linf;
  const double b = std::max(1.0 / spec.lambda, theta0Norm);
  const double l = report.smoothnessUpper(g);
  const double factor = 1.0 + b * spec.lambda;
  return 2.0 * l * factor * factor / (spec.lambda * spec.lambda);
}

BoundCheck verifyBound(const std::string& name, const RunLog& log, const AnalysisReport& report,
                       BoundForm form) {
  BoundCheck check;
  check.name = name;
  check.geometry = log.spec.geometry ? log.spec.geometry->name() : "";
  check.constant = boundConstant(log.spec, report, form);
  check.denominatorOffset = form == BoundForm::TheoremT2 ? 2 : 1;
  check.worstRatio = 0.0;
  for (const auto& r : log.records) {
    const double ratio = r.loss * static_cast<double>(r.t + check.denominatorOffset) / check.constant;
    if (!(ratio <= 1.0 + kBoundSlack) && !check.firstViolation) check.firstViolation = r.t;
    if (!(ratio <= check.worstRatio)) check.worstRatio = ratio;
  }
  check.pass = !check.firstViolation;
  return check;
}

BoundReport verifyBounds(const std::vector<NamedRun>& runs, const AnalysisReport& report,
                         BoundForm form) {
  BoundReport out;
  out.form = form;
  for (const auto& run : runs) out.checks.push_back(verifyBound(run.name, run.log, report, form));
  return out;
}

BoundReport verifyManifest(const fs::path& manifestPath, BoundForm form) {
  const json manifest = readJsonFile(manifestPath);
  const fs::path dir = manifestPath.parent_path();
  AnalysisReport report;
  std::vector<NamedRun> runs;
  try {
    report = manifest.at("analysis").get<AnalysisReport>();
    if (form == BoundForm::CorollaryT1 &&
        manifest.at("config").at("distribution").at("type").get<std::string>() != "power_law") {
      throw ConfigMismatchError("corollary bounds apply only to the power-law distribution");
    }
    for (const json& entry : manifest.at("runs")) {
      if (entry.at("status").get<std::string>() != "ok") continue;
      if (entry.at("method").get<std::string>() != "nsdwd") continue;
      NamedRun run;
      run.name = entry.at("name").get<std::string>();
      run.log.spec = readJsonFile(dir / entry.at("sidecar").get<std::string>()).at("run").get<RunSpec>();
      const fs::path csvPath = dir / entry.at("csv").get<std::string>();
      std::ifstream in(csvPath);
      if (!in) throw IoError("cannot read " + csvPath.string());
      run.log.records = readRunLogCsv(in);
      runs.push_back(std::move(run));
    }
  } catch (const json::exception& e) {
    throw IoError(manifestPath.string() + ": " + e.what());
  }
  BoundReport out = verifyBounds(runs, report, form);
  // Diverged NSD-WD runs cannot satisfy any bound.
  for (const json& entry : manifest.at("runs")) {
    if (entry.at("status").get<std::string>() == "diverged" &&
        entry.at("method").get<std::string>() == "nsdwd") {
      BoundCheck failed;
      failed.name = entry.at("name").get<std::string>();
      failed.firstViolation = entry.at("diverged_at").get<std::size_t>();
      failed.worstRatio = INFINITY;
      out.checks.push_back(failed);
    }
  }
  return out;
}

std::string formatBoundReport(const BoundReport& report) {
  std::string out = fmt::format("bound verification ({} form, C/(t+{}))\n", toString(report.form),
                                report.form == BoundForm::TheoremT2 ? 2 : 1);
  out += fmt::format("  {:<20} {:<6} {:>14} {:>14}  {}\n", "run", "norm", "C", "worst ratio",
                     "result");
  for (const auto& c : report.checks) {
    out += fmt::format("  {:<20} {:<6} {:>14.6g} {:>14.6g}  {}", c.name, c.geometry, c.constant,
                       c.worstRatio, c.pass ? "PASS" : "FAIL");
    if (c.firstViolation) out += fmt::format(" (first violation at t={})", *c.firstViolation);
    out += '\n';
  }
  return out;
}

}  // namespace nsd
