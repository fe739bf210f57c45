#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstring>
#include <cmath>
#include <random>
#include <sstream>

#include "nsd/analysis.hpp"
#include "nsd/distributions.hpp"
#include "nsd/errors.hpp"
#include "nsd/geometry.hpp"
#include "nsd/objective.hpp"
#include "nsd/optimizers.hpp"

using doctest::Approx;
using nsd::NormGeometry;
using nsd::Objective;
using nsd::ObjectiveKind;

namespace {

Objective unigram(std::size_t d) {
  return Objective(ObjectiveKind::SoftmaxUnigram, nsd::powerLawDistribution(d));
}

nsd::NsdwdConfig optimalConfig(const Objective& obj, NormGeometry g, std::size_t T) {
  nsd::NsdwdConfig cfg;
  cfg.geometry = g;
  const auto& dist = obj.distribution();
  const double minNorm = g == NormGeometry::l2() ? nsd::minNormL2(dist).normValue
                                                 : nsd::minNormLinf(dist).normValue;
  cfg.lambda = 1.0 / minNorm;
  cfg.etaCoeff = 2.0;
  cfg.iterations = T;
  return cfg;
}

}  // namespace

TEST_CASE("steepest directions") {
  const auto linf = NormGeometry::linf();
  const auto l2 = NormGeometry::l2();

  const auto s = linf.steepestDirection(Eigen::Vector2d(-1.0 / 6.0, 1.0 / 6.0));
  REQUIRE(s);
  CHECK((*s - Eigen::Vector2d(-1.0, 1.0)).norm() == 0.0);

  const auto n = l2.steepestDirection(Eigen::Vector2d(3.0, 4.0));
  REQUIRE(n);
  CHECK((*n)[0] == Approx(0.6));
  CHECK((*n)[1] == Approx(0.8));

  const Eigen::Vector3d g(0.0, 5.0, 0.0);
  const auto z = linf.steepestDirection(g);
  REQUIRE(z);
  CHECK((*z - Eigen::Vector3d(0.0, 1.0, 0.0)).norm() == 0.0);
  CHECK(linf.norm(*z) == 1.0);
  CHECK(g.dot(*z) == 5.0);
  CHECK(linf.dualNorm(g) == 5.0);

  CHECK_FALSE(linf.steepestDirection(Eigen::Vector3d::Zero()));
  CHECK_FALSE(l2.steepestDirection(Eigen::Vector3d::Constant(1e-15)));
  CHECK(NormGeometry::fromString("l2") == l2);
  CHECK_THROWS_AS(NormGeometry::fromString("l1"), std::invalid_argument);
}

TEST_CASE("steepest direction duality property") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  for (auto g : {NormGeometry::l2(), NormGeometry::linf()}) {
    for (int rep = 0; rep < 200; ++rep) {
      Eigen::VectorXd grad(1 + rep % 30);
      for (auto& x : grad) x = normal(rng);
      const auto dir = g.steepestDirection(grad);
      REQUIRE(dir);
      CHECK(g.norm(*dir) == Approx(1.0).epsilon(1e-14));
      CHECK(grad.dot(*dir) == Approx(g.dualNorm(grad)).epsilon(1e-13));
    }
  }
}

TEST_CASE("single NSD-WD step") {
  const Eigen::VectorXd next = nsd::nsdwdStep(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(2.0, -3.0),
                                              0.5, 1.0, NormGeometry::linf());
  CHECK(next[0] == Approx(-0.5));
  CHECK(next[1] == Approx(2.0));

  const Eigen::VectorXd noDecay = nsd::nsdwdStep(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(3.0, 4.0),
                                                 0.0, 0.5, NormGeometry::l2());
  CHECK(noDecay[0] == Approx(1.0 - 0.3));
  CHECK(noDecay[1] == Approx(2.0 - 0.4));

  const Eigen::VectorXd fromZero = nsd::nsdwdStep(Eigen::Vector3d::Zero(), Eigen::Vector3d(1.0, -2.0, 0.0),
                                                  7.0, 0.25, NormGeometry::linf());
  CHECK((fromZero - Eigen::Vector3d(-0.25, 0.25, 0.0)).norm() == 0.0);

  const Eigen::VectorXd stationary = nsd::nsdwdStep(Eigen::Vector2d(1.0, 1.0), Eigen::Vector2d::Zero(),
                                                    0.5, 1.0, NormGeometry::l2());
  CHECK((stationary - Eigen::Vector2d(0.5, 0.5)).norm() == 0.0);

  CHECK_THROWS_AS(nsd::nsdwdStep(Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones(), 0.5, 0.0,
                                 NormGeometry::l2()),
                  std::invalid_argument);
  CHECK_THROWS_AS(nsd::nsdwdStep(Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones(), -0.5, 1.0,
                                 NormGeometry::l2()),
                  std::invalid_argument);
}

TEST_CASE("learning-rate schedule") {
  CHECK(nsd::scheduleEta(0, 0.5, 2.0) == Approx(4.0));
  const double lambdaInf = 2.0 / std::log(1000.0);
  CHECK(nsd::scheduleEta(0, lambdaInf, 1.0) == Approx(3.453877639491069).epsilon(1e-12));
  double previous = INFINITY;
  for (std::size_t t = 0; t < 10000; t += 37) {
    const double eta = nsd::scheduleEta(t, 0.3, 2.0);
    CHECK(eta < previous);
    previous = eta;
  }
  CHECK(nsd::scheduleEta(100000000, 0.3, 2.0) < 1e-7);
  CHECK_THROWS_AS(nsd::scheduleEta(0, 0.0, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(nsd::scheduleEta(0, -1.0, 2.0), std::invalid_argument);
}

TEST_CASE("NSD-WD run shape") {
  const Objective obj = unigram(20);
  nsd::NsdwdConfig cfg = optimalConfig(obj, NormGeometry::linf(), 0);
  const nsd::RunLog empty = nsd::runNsdwd(obj, cfg);
  REQUIRE(empty.records.size() == 1);
  CHECK(empty.records[0].t == 0);
  CHECK(empty.records[0].loss == Approx(obj.loss(Eigen::VectorXd::Zero(20))));

  cfg.iterations = 50;
  const nsd::RunLog log = nsd::runNsdwd(obj, cfg);
  REQUIRE(log.records.size() == 51);
  for (std::size_t t = 0; t < log.records.size(); ++t) {
    CHECK(log.records[t].t == t);
    CHECK(std::isfinite(log.records[t].loss));
  }
  CHECK(log.spec.method == "nsdwd");
  CHECK(log.finalTheta.size() == 20);
  // The first update uses the schedule at counter 1, so lambda * eta_0 = 1.
  CHECK(log.records[0].eta * cfg.lambda == Approx(1.0));

  nsd::NsdwdConfig wrong = cfg;
  wrong.theta0 = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(nsd::runNsdwd(obj, wrong), std::invalid_argument);
}

TEST_CASE("full decay on the first step forgets theta0") {
  const Objective obj = unigram(8);
  nsd::NsdwdConfig cfg = optimalConfig(obj, NormGeometry::linf(), 1);
  const double eta0 = nsd::scheduleEta(cfg.scheduleOrigin, cfg.lambda, cfg.etaCoeff);
  REQUIRE(cfg.lambda * eta0 == Approx(1.0));
  cfg.theta0 = Eigen::VectorXd::LinSpaced(8, -3.0, 5.0);
  // theta_1 = -eta_0 * sign(grad(theta0)); recompute the direction independently.
  const Eigen::VectorXd g0 = obj.gradient(cfg.theta0);
  const Eigen::VectorXd expected = -eta0 * g0.array().sign().matrix();
  const nsd::RunLog log = nsd::runNsdwd(obj, cfg);
  CHECK((log.finalTheta - expected).lpNorm<Eigen::Infinity>() <= 1e-14);
}

TEST_CASE("NSD-WD is deterministic") {
  const Objective obj = unigram(300);
  const auto cfg = optimalConfig(obj, NormGeometry::l2(), 500);
  const nsd::RunLog a = nsd::runNsdwd(obj, cfg);
  const nsd::RunLog b = nsd::runNsdwd(obj, cfg);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    CHECK(std::memcmp(&a.records[t].loss, &b.records[t].loss, sizeof(double)) == 0);
  }
}

TEST_CASE("theorem bound and iterate norm bound along the run") {
  for (std::size_t d : {10u, 100u, 1000u}) {
    const Objective obj = unigram(d);
    for (auto g : {NormGeometry::linf(), NormGeometry::l2()}) {
      const auto cfg = optimalConfig(obj, g, 10000);
      const double minNorm = 1.0 / cfg.lambda;
      const double bound = nsd::complexity(1.0, minNorm);
      const nsd::RunLog log = nsd::runNsdwd(obj, cfg);
      std::size_t boundViolations = 0, normViolations = 0;
      for (const auto& r : log.records) {
        if (r.loss > bound / static_cast<double>(r.t + 2)) ++boundViolations;
        const double norm = g == NormGeometry::l2() ? r.paramL2 : r.paramLinf;
        if (norm > 1.0 / cfg.lambda + 1e-9) ++normViolations;
      }
      INFO("d=" << d << " geometry=" << g.name());
      CHECK(boundViolations == 0);
      CHECK(normViolations == 0);
    }
  }
}

TEST_CASE("sign descent beats normalized GD on the power law") {
  const Objective obj = unigram(1000);
  const auto sign = nsd::runNsdwd(obj, optimalConfig(obj, NormGeometry::linf(), 10000));
  const auto norm = nsd::runNsdwd(obj, optimalConfig(obj, NormGeometry::l2(), 10000));
  std::size_t worse = 0;
  for (std::size_t t = 100; t <= 10000; ++t) {
    if (!(sign.records[t].loss < norm.records[t].loss)) ++worse;
  }
  CHECK(worse == 0);
}

TEST_CASE("gradient descent baseline") {
  const Objective obj(ObjectiveKind::SoftmaxUnigram, nsd::distributionFromWeights({2.0, 1.0}));
  nsd::BaselineHyper hyper;
  hyper.learningRate = 1.0;
  const auto log = nsd::runBaseline(obj, nsd::BaselineKind::GD, hyper, 100);
  REQUIRE(log.records.size() == 101);
  // Strict descent until the loss reaches the rounding floor of the KL sum.
  for (std::size_t t = 1; t < log.records.size(); ++t) {
    if (log.records[t - 1].loss > 1e-14) {
      CHECK(log.records[t].loss < log.records[t - 1].loss);
    } else {
      CHECK(log.records[t].loss <= 1e-14);
    }
  }
  CHECK(log.records[1].loss < log.records[0].loss);

  hyper.learningRate = 0.0;
  const Eigen::VectorXd theta0 = Eigen::Vector2d(0.3, -0.7);
  for (auto kind : {nsd::BaselineKind::GD, nsd::BaselineKind::Adam}) {
    const auto frozen = nsd::runBaseline(obj, kind, hyper, 25, theta0);
    CHECK((frozen.finalTheta - theta0).norm() == 0.0);
    for (const auto& r : frozen.records) CHECK(r.paramL2 == Approx(theta0.norm()));
  }
}

TEST_CASE("Adam with a constant gradient moves like sign descent") {
  nsd::AdamState adam(4);
  nsd::BaselineHyper hyper;
  hyper.epsilon = 1e-12;
  const Eigen::Vector4d g(0.3, -2.0, 1e-3, -5e-2);
  for (int step = 0; step < 200; ++step) {
    const Eigen::VectorXd u = adam.step(g, hyper);
    CHECK((u - g.array().sign().matrix()).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("Adam baseline descends on the power law") {
  const Objective obj = unigram(100);
  nsd::BaselineHyper hyper;
  hyper.learningRate = 0.1;
  const auto log = nsd::runBaseline(obj, nsd::BaselineKind::Adam, hyper, 500);
  CHECK(log.records.back().loss < 0.1 * log.records.front().loss);
  CHECK(log.spec.method == "adam");
  CHECK_THROWS_AS(nsd::runBaseline(obj, nsd::BaselineKind::GD, {-1.0}, 5), std::invalid_argument);
}

TEST_CASE("learning-rate grid search") {
  const Objective obj = unigram(50);
  const auto result = nsd::gridSearchBaseline(obj, nsd::BaselineKind::GD, {}, 200);
  REQUIRE(result.trials.size() == 6);
  double best = INFINITY;
  for (const auto& t : result.trials) {
    if (!t.diverged) best = std::min(best, t.finalLoss);
  }
  CHECK(nsd::runBaseline(obj, nsd::BaselineKind::GD, result.best, 200).records.back().loss == best);
}

TEST_CASE("run log CSV round trip") {
  const Objective obj = unigram(30);
  const auto log = nsd::runNsdwd(obj, optimalConfig(obj, NormGeometry::linf(), 40));
  std::stringstream csv;
  nsd::writeRunLogCsv(csv, log);
  CHECK(csv.str().rfind("t,loss,grad_l2,grad_linf,param_l2,param_linf,eta\n", 0) == 0);
  const auto records = nsd::readRunLogCsv(csv);
  REQUIRE(records.size() == log.records.size());
  for (std::size_t t = 0; t < records.size(); ++t) {
    CHECK(records[t].t == log.records[t].t);
    CHECK(records[t].loss == log.records[t].loss);
    CHECK(records[t].eta == log.records[t].eta);
  }

  std::stringstream theta;
  nsd::writeParametersCsv(theta, log.finalTheta);
  CHECK(nsd::readParametersCsv(theta) == log.finalTheta);

  std::stringstream bad("step,loss\n0,1\n");
  CHECK_THROWS_AS(nsd::readRunLogCsv(bad), nsd::IoError);
}

TEST_CASE("run spec JSON round trip") {
  const Objective obj = unigram(12);
  const auto log = nsd::runNsdwd(obj, optimalConfig(obj, NormGeometry::l2(), 3));
  const nsd::RunSpec back = nlohmann::json(log.spec).get<nsd::RunSpec>();
  REQUIRE(back.geometry);
  CHECK(*back.geometry == NormGeometry::l2());
  CHECK(back.lambda == log.spec.lambda);
  CHECK(back.paramDim == 12);
}
