#include "nsd/optimizers.hpp"

#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "nsd/csv.hpp"
#include "nsd/errors.hpp"

namespace nsd {

namespace {

Eigen::VectorXd initialTheta(const Objective& obj, const Eigen::VectorXd& theta0) {
  if (theta0.size() == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obj.paramDim()));
  if (static_cast<std::size_t>(theta0.size()) != obj.paramDim()) {
    throw std::invalid_argument("theta0 dimension does not match the objective");
  }
  if (!theta0.allFinite()) throw std::invalid_argument("theta0 must be finite");
  return theta0;
}

IterationRecord makeRecord(std::size_t t, const LossAndGradient& eval, const Eigen::VectorXd& theta,
                           double eta) {
  IterationRecord rec;
  rec.t = t;
  rec.loss = eval.loss;
  rec.gradL2 = eval.gradient.norm();
  rec.gradLinf = eval.gradient.lpNorm<Eigen::Infinity>();
  rec.paramL2 = theta.norm();
  rec.paramLinf = theta.size() ? theta.lpNorm<Eigen::Infinity>() : 0.0;
  rec.eta = eta;
  return rec;
}

LossAndGradient evaluateChecked(const Objective& obj, const Eigen::VectorXd& theta, std::size_t t) {
  LossAndGradient eval = obj.evaluate(theta);
  if (!std::isfinite(eval.loss) || !eval.gradient.allFinite()) throw DivergenceError(t);
  // An iterate whose norm overflows cannot be logged meaningfully.
  if (!std::isfinite(theta.norm())) throw DivergenceError(t);
  return eval;
}

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

const char* toString(BaselineKind kind) { return kind == BaselineKind::GD ? "gd" : "adam"; }

void to_json(nlohmann::json& j, const RunSpec& spec) {
  j = nlohmann::json{{"method", spec.method},
                     {"iterations", spec.iterations},
                     {"param_dim", spec.paramDim},
                     {"theta0_l2", spec.theta0L2},
                     {"theta0_linf", spec.theta0Linf}};
  if (spec.geometry) {
    j["geometry"] = spec.geometry->name();
    j["lambda"] = spec.lambda;
    j["eta_coeff"] = spec.etaCoeff;
    j["schedule_origin"] = spec.scheduleOrigin;
  }
  if (spec.baseline) {
    j["learning_rate"] = spec.baseline->learningRate;
    j["weight_decay"] = spec.baseline->weightDecay;
    if (spec.method == "adam") {
      j["beta1"] = spec.baseline->beta1;
      j["beta2"] = spec.baseline->beta2;
      j["epsilon"] = spec.baseline->epsilon;
    }
  }
}

void from_json(const nlohmann::json& j, RunSpec& spec) {
  spec = RunSpec{};
  spec.method = j.at("method").get<std::string>();
  spec.iterations = j.at("iterations").get<std::size_t>();
  spec.paramDim = j.at("param_dim").get<std::size_t>();
  spec.theta0L2 = j.at("theta0_l2").get<double>();
  spec.theta0Linf = j.at("theta0_linf").get<double>();
  if (j.contains("geometry")) {
    spec.geometry = NormGeometry::fromString(j.at("geometry").get<std::string>());
    spec.lambda = j.at("lambda").get<double>();
    spec.etaCoeff = j.at("eta_coeff").get<double>();
    spec.scheduleOrigin = j.at("schedule_origin").get<std::size_t>();
  }
  if (j.contains("learning_rate")) {
    BaselineHyper hyper;
    hyper.learningRate = j.at("learning_rate").get<double>();
    hyper.weightDecay = j.value("weight_decay", 0.0);
    hyper.beta1 = j.value("beta1", hyper.beta1);
    hyper.beta2 = j.value("beta2", hyper.beta2);
    hyper.epsilon = j.value("epsilon", hyper.epsilon);
    spec.baseline = hyper;
  }
}

double scheduleEta(std::size_t t, double lambda, double etaCoeff) {
  if (!(lambda > 0.0)) throw std::invalid_argument("weight decay lambda must be positive");
  if (!(etaCoeff > 0.0)) throw std::invalid_argument("eta coefficient must be positive");
  return etaCoeff / (lambda * static_cast<double>(t + 1));
}

Eigen::VectorXd nsdwdStep(const Eigen::VectorXd& x, const Eigen::VectorXd& g, double lambda,
                          double eta, NormGeometry geometry) {
  if (!(eta > 0.0)) throw std::invalid_argument("step size must be positive");
  if (lambda < 0.0) throw std::invalid_argument("weight decay must be nonnegative");
  if (x.size() != g.size()) throw std::invalid_argument("iterate and gradient sizes differ");
  Eigen::VectorXd next = (1.0 - lambda * eta) * x;
  if (const auto direction = geometry.steepestDirection(g)) next -= eta * *direction;
  return next;
}

RunLog runNsdwd(const Objective& obj, const NsdwdConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw std::invalid_argument("weight decay lambda must be positive");
  if (!(cfg.etaCoeff > 0.0)) throw std::invalid_argument("eta coefficient must be positive");
  const auto start = Clock::now();
  Eigen::VectorXd theta = initialTheta(obj, cfg.theta0);

  RunLog log;
  log.spec.method = "nsdwd";
  log.spec.geometry = cfg.geometry;
  log.spec.lambda = cfg.lambda;
  log.spec.etaCoeff = cfg.etaCoeff;
  log.spec.scheduleOrigin = cfg.scheduleOrigin;
  log.spec.iterations = cfg.iterations;
  log.spec.paramDim = obj.paramDim();
  log.spec.theta0L2 = theta.norm();
  log.spec.theta0Linf = theta.size() ? theta.lpNorm<Eigen::Infinity>() : 0.0;
  log.records.reserve(cfg.iterations + 1);

  for (std::size_t t = 0;; ++t) {
    const LossAndGradient eval = evaluateChecked(obj, theta, t);
    const double eta = scheduleEta(t + cfg.scheduleOrigin, cfg.lambda, cfg.etaCoeff);
    log.records.push_back(makeRecord(t, eval, theta, eta));
    if (t == cfg.iterations) break;
    const auto direction = cfg.geometry.steepestDirection(eval.gradient);
    if (!direction) {
      log.convergedAt = t;
      break;
    }
    theta = (1.0 - cfg.lambda * eta) * theta - eta * *direction;
  }
  log.finalTheta = std::move(theta);
  log.wallSeconds = secondsSince(start);
  return log;
}

AdamState::AdamState(Eigen::Index dim)
    : m_(Eigen::VectorXd::Zero(dim)), v_(Eigen::VectorXd::Zero(dim)) {}

Eigen::VectorXd AdamState::step(const Eigen::VectorXd& g, const BaselineHyper& hyper) {
  ++steps_;
  m_ = hyper.beta1 * m_ + (1.0 - hyper.beta1) * g;
  v_ = hyper.beta2 * v_ + (1.0 - hyper.beta2) * g.cwiseProduct(g);
  const double k = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(hyper.beta1, k);
  const double c2 = 1.0 - std::pow(hyper.beta2, k);
  return ((m_.array() / c1) / ((v_.array() / c2).sqrt() + hyper.epsilon)).matrix();
}

RunLog runBaseline(const Objective& obj, BaselineKind kind, const BaselineHyper& hyper,
                   std::size_t iterations, const Eigen::VectorXd& theta0) {
  if (hyper.learningRate < 0.0) throw std::invalid_argument("learning rate must be nonnegative");
  if (kind == BaselineKind::Adam &&
      !(hyper.beta1 >= 0.0 && hyper.beta1 < 1.0 && hyper.beta2 >= 0.0 && hyper.beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  const auto start = Clock::now();
  Eigen::VectorXd theta = initialTheta(obj, theta0);

  RunLog log;
  log.spec.method = toString(kind);
  log.spec.baseline = hyper;
  log.spec.iterations = iterations;
  log.spec.paramDim = obj.paramDim();
  log.spec.theta0L2 = theta.norm();
  log.spec.theta0Linf = theta.size() ? theta.lpNorm<Eigen::Infinity>() : 0.0;
  log.records.reserve(iterations + 1);

  AdamState adam(theta.size());
  const double eta = hyper.learningRate;
  for (std::size_t t = 0;; ++t) {
    const LossAndGradient eval = evaluateChecked(obj, theta, t);
    log.records.push_back(makeRecord(t, eval, theta, eta));
    if (t == iterations) break;
    const Eigen::VectorXd update =
        kind == BaselineKind::GD ? eval.gradient : adam.step(eval.gradient, hyper);
    theta = (1.0 - eta * hyper.weightDecay) * theta - eta * update;
  }
  log.finalTheta = std::move(theta);
  log.wallSeconds = secondsSince(start);
  return log;
}

std::vector<double> defaultLearningRateGrid() { return {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2}; }

GridSearchResult gridSearchBaseline(const Objective& obj, BaselineKind kind, BaselineHyper hyper,
                                    std::size_t iterations, const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("learning-rate grid is empty");
  GridSearchResult result;
  double bestLoss = std::numeric_limits<double>::infinity();
  for (double lr : grid) {
    hyper.learningRate = lr;
    GridTrial trial{lr, std::numeric_limits<double>::infinity(), false};
    try {
      trial.finalLoss = runBaseline(obj, kind, hyper, iterations).records.back().loss;
    } catch (const DivergenceError&) {
      trial.diverged = true;
    }
    // Strict comparison keeps the smallest rate on ties.
    if (!trial.diverged && trial.finalLoss < bestLoss) {
      bestLoss = trial.finalLoss;
      result.best = hyper;
    }
    result.trials.push_back(trial);
  }
  if (!std::isfinite(bestLoss)) throw NumericError("every learning rate in the grid diverged");
  return result;
}

void writeRunLogCsv(std::ostream& out, const RunLog& log) {
  out << "t,loss,grad_l2,grad_linf,param_l2,param_linf,eta\n";
  for (const auto& r : log.records) {
    out << r.t << ',' << csv::formatDouble(r.loss) << ',' << csv::formatDouble(r.gradL2) << ','
        << csv::formatDouble(r.gradLinf) << ',' << csv::formatDouble(r.paramL2) << ','
        << csv::formatDouble(r.paramLinf) << ',' << csv::formatDouble(r.eta) << '\n';
  }
}

std::vector<IterationRecord> readRunLogCsv(std::istream& in) {
  const auto rows = csv::readTable(
      in, {"t", "loss", "grad_l2", "grad_linf", "param_l2", "param_linf", "eta"});
  std::vector<IterationRecord> records;
  records.reserve(rows.size());
  for (const auto& row : rows) {
    IterationRecord r;
    r.t = static_cast<std::size_t>(csv::parseDouble(row[0]));
    r.loss = csv::parseDouble(row[1]);
    r.gradL2 = csv::parseDouble(row[2]);
    r.gradLinf = csv::parseDouble(row[3]);
    r.paramL2 = csv::parseDouble(row[4]);
    r.paramLinf = csv::parseDouble(row[5]);
    r.eta = csv::parseDouble(row[6]);
    records.push_back(r);
  }
  return records;
}

void writeParametersCsv(std::ostream& out, const Eigen::VectorXd& theta) {
  out << "index,value\n";
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    out << i << ',' << csv::formatDouble(theta[i]) << '\n';
  }
}

Eigen::VectorXd readParametersCsv(std::istream& in) {
  const auto rows = csv::readTable(in, {"index", "value"});
  Eigen::VectorXd theta(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i][0] != std::to_string(i)) throw IoError("parameter CSV indices out of order");
    theta[static_cast<Eigen::Index>(i)] = csv::parseDouble(rows[i][1]);
  }
  return theta;
}

}  // namespace nsd
