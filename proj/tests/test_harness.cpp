#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nsd/errors.hpp"
#include "nsd/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nsd_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json twoRunDoc(std::size_t d, std::size_t iterations, const std::string& objective = "softmax_unigram") {
  return json{{"objective", objective},
              {"distribution", {{"type", "power_law"}, {"d", d}}},
              {"optimizers",
               {{{"name", "sign_wd"}, {"method", "nsdwd"}, {"geometry", "linf"}, {"iterations", iterations}},
                {{"name", "normgd_wd"}, {"method", "nsdwd"}, {"geometry", "l2"}, {"iterations", iterations}}}}};
}

nsd::ExperimentConfig configIn(const json& doc, const fs::path& dir) {
  auto cfg = nsd::parseExperimentConfig(doc);
  cfg.outputDir = dir;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing defaults") {
  const auto cfg = nsd::parseExperimentConfig(twoRunDoc(50, 100));
  CHECK((cfg.objective == nsd::ObjectiveKind::SoftmaxUnigram));
  CHECK(cfg.distribution.d == 50);
  REQUIRE(cfg.optimizers.size() == 2);
  CHECK_FALSE(cfg.optimizers[0].lambda);
  CHECK(cfg.optimizers[0].etaCoeff == 2.0);
  CHECK(cfg.optimizers[0].scheduleOrigin == 1);
  CHECK(cfg.optimizers[0].theta0.size() == 0);
  CHECK((cfg.optimizers[1].geometry == nsd::NormGeometry::l2()));

  const auto again = nsd::parseExperimentConfig(nsd::toJson(cfg));
  CHECK(nsd::toJson(again) == nsd::toJson(cfg));
}

TEST_CASE("config parsing rejects bad input") {
  auto bad = [](auto mutate) {
    json doc = twoRunDoc(10, 10);
    mutate(doc);
    return doc;
  };
  CHECK_THROWS_AS(nsd::parseExperimentConfig(bad([](json& j) { j["distribution"]["d"] = 0; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::parseExperimentConfig(bad([](json& j) { j["distribution"]["type"] = "zipf"; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::parseExperimentConfig(bad([](json& j) { j["objective"] = "cross_entropy"; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::parseExperimentConfig(bad([](json& j) { j["optimizers"][1]["name"] = "sign_wd"; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::parseExperimentConfig(bad([](json& j) { j["optimizers"][0]["name"] = "a/b"; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::parseExperimentConfig(bad([](json& j) { j["optimizers"][0]["lambda"] = -1.0; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::parseExperimentConfig(bad([](json& j) { j["optimizers"][0]["geometry"] = "l1"; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::parseExperimentConfig(bad([](json& j) { j["optimizers"][0]["method"] = "sgd"; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::parseExperimentConfig(bad([](json& j) { j["optimizers"][0]["iterations"] = -3; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::parseExperimentConfig(bad([](json& j) { j.erase("distribution"); })),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::loadExperimentConfig("/nonexistent/config.json"), std::invalid_argument);
}

TEST_CASE("experiment writes one set of files per optimizer") {
  const fs::path dir = scratch("files");
  const auto result = nsd::runExperiment(configIn(twoRunDoc(100, 300), dir));
  CHECK(fs::exists(dir / "manifest.json"));
  const json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest == result.manifest);
  REQUIRE(manifest["runs"].size() == 2);
  CHECK(manifest["runs"][0]["name"] == "sign_wd");
  CHECK(manifest["runs"][1]["name"] == "normgd_wd");
  for (const auto& run : manifest["runs"]) {
    CHECK(run["status"] == "ok");
    for (const char* key : {"csv", "sidecar", "theta"}) CHECK(fs::exists(dir / run[key].get<std::string>()));
    CHECK(run["records"] == 301);
    CHECK(run["lambda_rule"] == "optimal");
    CHECK(run["bound"]["theorem_offset"] == 2);
  }
  CHECK(manifest["f_star_check"]["loss_at_minimizer"].get<double>() < 1e-10);
  CHECK(manifest["analysis"]["d"] == 100);

  std::ifstream csv(dir / "sign_wd.csv");
  const auto records = nsd::readRunLogCsv(csv);
  CHECK(records.size() == 301);
  CHECK(records.front().loss > records.back().loss);
}

TEST_CASE("empty optimizer list writes only the manifest") {
  const fs::path dir = scratch("empty");
  json doc = twoRunDoc(20, 10);
  doc["optimizers"] = json::array();
  nsd::runExperiment(configIn(doc, dir));
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& entry : fs::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  CHECK(json::parse(slurp(dir / "manifest.json"))["runs"].empty());
}

TEST_CASE("repeated runs are byte-identical") {
  json doc = twoRunDoc(200, 500);
  doc["optimizers"].push_back({{"name", "adam"}, {"method", "adam"}, {"iterations", 200}});
  const fs::path a = scratch("repeat_a");
  const fs::path b = scratch("repeat_b");
  nsd::runExperiment(configIn(doc, a));
  nsd::runExperiment(configIn(doc, b));
  for (const char* file : {"sign_wd.csv", "normgd_wd.csv", "adam.csv", "sign_wd.theta.csv"}) {
    INFO(file);
    CHECK(slurp(a / file) == slurp(b / file));
  }
}

TEST_CASE("bounds hold across dimensions") {
  for (std::size_t d : {10u, 100u, 1000u}) {
    for (const char* objective : {"softmax_unigram", "additive_logistic"}) {
      INFO("d=" << d << " " << objective);
      const fs::path dir = scratch(std::string("bounds_") + objective + std::to_string(d));
      const auto result = nsd::runExperiment(configIn(twoRunDoc(d, 3000, objective), dir));
      const auto theorem = nsd::verifyManifest(result.manifestPath, nsd::BoundForm::TheoremT2);
      const auto corollary = nsd::verifyManifest(result.manifestPath, nsd::BoundForm::CorollaryT1);
      REQUIRE(theorem.checks.size() == 2);
      CHECK(theorem.allPass());
      CHECK(corollary.allPass());
      for (const auto& check : theorem.checks) CHECK(check.worstRatio < 1.0);
    }
  }
}

TEST_CASE("corollary constants") {
  const nsd::Objective uni(nsd::ObjectiveKind::SoftmaxUnigram, nsd::powerLawDistribution(1000));
  const auto report = nsd::analyze(uni, 0, 2);
  nsd::RunSpec spec;
  spec.method = "nsdwd";
  spec.geometry = nsd::NormGeometry::linf();
  spec.lambda = 1.0 / report.minNormLinf;
  spec.etaCoeff = 2.0;
  spec.paramDim = 1000;
  CHECK(nsd::boundConstant(spec, report, nsd::BoundForm::CorollaryT1) ==
        doctest::Approx(2.0 * std::pow(std::log(1000.0), 2)).epsilon(1e-12));
  CHECK(nsd::boundConstant(spec, report, nsd::BoundForm::CorollaryT1) / 10001.0 ==
        doctest::Approx(0.009542461353).epsilon(1e-9));
  // Theorem form with theta0 = 0: 2 (1 + 1)^2 / lambda^2 = 8 |theta*|^2.
  CHECK(nsd::boundConstant(spec, report, nsd::BoundForm::TheoremT2) ==
        doctest::Approx(8.0 * report.minNormLinf * report.minNormLinf).epsilon(1e-12));

  spec.geometry = nsd::NormGeometry::l2();
  spec.lambda = 1.0 / report.minNormL2;
  CHECK(nsd::boundConstant(spec, report, nsd::BoundForm::CorollaryT1) == 1000.0);

  const nsd::Objective alt(nsd::ObjectiveKind::AdditiveLogistic, nsd::powerLawDistribution(1000));
  const auto altReport = nsd::analyze(alt, 0, 2);
  spec.paramDim = 999;
  spec.lambda = 1.0 / altReport.minNormL2;
  double sum = 0.0;
  for (int k = 1; k < 1000; ++k) sum += std::pow(std::log(k / 1000.0), 2);
  CHECK(nsd::boundConstant(spec, altReport, nsd::BoundForm::CorollaryT1) ==
        doctest::Approx(4.0 * sum).epsilon(1e-11));
  spec.geometry = nsd::NormGeometry::linf();
  spec.lambda = 1.0 / altReport.minNormLinf;
  CHECK(nsd::boundConstant(spec, altReport, nsd::BoundForm::CorollaryT1) ==
        doctest::Approx(8.0 * std::pow(std::log(1000.0), 2)).epsilon(1e-12));
}

TEST_CASE("bound preconditions are enforced") {
  const nsd::Objective obj(nsd::ObjectiveKind::SoftmaxUnigram, nsd::powerLawDistribution(50));
  const auto report = nsd::analyze(obj, 0, 2);
  nsd::RunSpec spec;
  spec.method = "nsdwd";
  spec.geometry = nsd::NormGeometry::linf();
  spec.lambda = 2.0 / report.minNormLinf;
  spec.etaCoeff = 2.0;
  spec.paramDim = 50;
  CHECK_THROWS_AS(nsd::boundConstant(spec, report, nsd::BoundForm::TheoremT2), nsd::ConfigMismatchError);
  spec.lambda = 1.0 / report.minNormLinf;
  spec.paramDim = 49;
  CHECK_THROWS_AS(nsd::boundConstant(spec, report, nsd::BoundForm::TheoremT2), nsd::ConfigMismatchError);
  spec.paramDim = 50;
  spec.etaCoeff = 1.0;
  CHECK_THROWS_AS(nsd::boundConstant(spec, report, nsd::BoundForm::TheoremT2), nsd::ConfigMismatchError);
  spec.method = "gd";
  CHECK_THROWS_AS(nsd::boundConstant(spec, report, nsd::BoundForm::CorollaryT1), nsd::ConfigMismatchError);
}

TEST_CASE("inflated losses are reported as violations") {
  const fs::path dir = scratch("inflated");
  const auto result = nsd::runExperiment(configIn(twoRunDoc(100, 500), dir));
  const nsd::AnalysisReport report = result.manifest["analysis"].get<nsd::AnalysisReport>();
  std::ifstream in(dir / "sign_wd.csv");
  nsd::RunLog log;
  log.records = nsd::readRunLogCsv(in);
  log.spec = result.manifest["runs"][0]["run"].get<nsd::RunSpec>();

  const auto clean = nsd::verifyBound("sign_wd", log, report, nsd::BoundForm::TheoremT2);
  CHECK(clean.pass);
  CHECK_FALSE(clean.firstViolation);

  for (auto& r : log.records) r.loss *= 1e3;
  const auto inflated = nsd::verifyBound("sign_wd", log, report, nsd::BoundForm::TheoremT2);
  CHECK_FALSE(inflated.pass);
  REQUIRE(inflated.firstViolation);
  CHECK(inflated.worstRatio > 1.0);
  CHECK(nsd::formatBoundReport({nsd::BoundForm::TheoremT2, {inflated}}).find("FAIL") != std::string::npos);
}

TEST_CASE("divergence is recorded in the manifest") {
  const fs::path dir = scratch("diverge");
  json doc = twoRunDoc(10, 50);
  doc["optimizers"] = {{{"name", "gd_huge"}, {"method", "gd"}, {"iterations", 50}, {"learning_rate", 1e308}}};
  const auto result = nsd::runExperiment(configIn(doc, dir));
  const auto& run = result.manifest["runs"][0];
  CHECK(run["status"] == "diverged");
  CHECK(run["diverged_at"].get<std::size_t>() <= 50);
  CHECK_FALSE(fs::exists(dir / "gd_huge.csv"));
}

TEST_CASE("explicit lambda above the optimum is rejected at verification") {
  const fs::path dir = scratch("biglambda");
  json doc = twoRunDoc(30, 100);
  doc["optimizers"][0]["lambda"] = 10.0;
  const auto result = nsd::runExperiment(configIn(doc, dir));
  CHECK(result.manifest["runs"][0]["bound"].contains("not_applicable"));
  CHECK_THROWS_AS(nsd::verifyManifest(result.manifestPath, nsd::BoundForm::TheoremT2),
                  nsd::ConfigMismatchError);
}

TEST_CASE("corpus experiments use only the theorem bound") {
  const fs::path dir = scratch("corpus");
  fs::create_directories(dir);
  {
    std::ofstream corpus(dir / "corpus.txt");
    for (int k = 1; k <= 30; ++k) {
      for (int rep = 0; rep < 60 / k + (k % 3); ++rep) corpus << "w" << k << ' ';
      corpus << '\n';
    }
  }
  json doc = twoRunDoc(1, 2000);
  doc["distribution"] = {{"type", "corpus"}, {"path", "corpus.txt"}};
  auto cfg = nsd::parseExperimentConfig(doc, dir);
  cfg.outputDir = dir / "out";
  const auto result = nsd::runExperiment(cfg);
  CHECK(result.manifest["analysis"]["d"] == 30);
  for (const auto& run : result.manifest["runs"]) {
    CHECK(run["bound"].contains("theorem_constant"));
    CHECK_FALSE(run["bound"].contains("corollary_constant"));
  }
  CHECK(nsd::verifyManifest(result.manifestPath, nsd::BoundForm::TheoremT2).allPass());
  CHECK_THROWS_AS(nsd::verifyManifest(result.manifestPath, nsd::BoundForm::CorollaryT1),
                  nsd::ConfigMismatchError);
}
