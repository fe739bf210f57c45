#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "nsd/geometry.hpp"
#include "nsd/objective.hpp"

namespace nsd {

/// Normalized steepest descent with weight decay.
struct NsdwdConfig {
  NormGeometry geometry = NormGeometry::linf();
  double lambda = 1.0;
  // Numerator c of eta_t = c / (lambda (t + 1)).
  double etaCoeff = 2.0;
  std::size_t iterations = 0;
  // Empty means the zero vector.
  Eigen::VectorXd theta0;
  // Schedule counter handed to scheduleEta for the first update; 1 keeps
  // lambda * eta_t <= 1 for etaCoeff = 2, which the iterate-norm bound needs.
  std::size_t scheduleOrigin = 1;
};

enum class BaselineKind { GD, Adam };

const char* toString(BaselineKind kind);

struct BaselineHyper {
  double learningRate = 1e-1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled decay: theta <- (1 - lr * weightDecay) theta - lr * update.
  double weightDecay = 0.0;
};

/// Echo of the settings that produced a RunLog.
struct RunSpec {
  std::string method;  // "nsdwd", "gd" or "adam"
  std::optional<NormGeometry> geometry;
  double lambda = 0.0;
  double etaCoeff = 0.0;
  std::size_t scheduleOrigin = 0;
  std::optional<BaselineHyper> baseline;
  std::size_t iterations = 0;
  std::size_t paramDim = 0;
  double theta0L2 = 0.0;
  double theta0Linf = 0.0;
};

void to_json(nlohmann::json& j, const RunSpec& spec);
void from_json(const nlohmann::json& j, RunSpec& spec);

struct IterationRecord {
  std::size_t t = 0;
  double loss = 0.0;
  double gradL2 = 0.0;
  double gradLinf = 0.0;
  double paramL2 = 0.0;
  double paramLinf = 0.0;
  // Step size applied to leave iterate t.
  double eta = 0.0;
};

struct RunLog {
  RunSpec spec;
  std::vector<IterationRecord> records;
  Eigen::VectorXd finalTheta;
  // Set when the run stopped at an exactly stationary iterate.
  std::optional<std::size_t> convergedAt;
  double wallSeconds = 0.0;
};

/// c / (lambda (t + 1)); throws for lambda <= 0.
double scheduleEta(std::size_t t, double lambda, double etaCoeff);

/// (1 - lambda eta) x - eta * steepestDirection(g); the direction term is
/// dropped when g is stationary.
Eigen::VectorXd nsdwdStep(const Eigen::VectorXd& x, const Eigen::VectorXd& g, double lambda,
                          double eta, NormGeometry geometry);

/// Runs cfg.iterations NSD-WD steps and logs every iterate including theta0.
/// Deterministic. Throws DivergenceError when the loss turns non-finite.
RunLog runNsdwd(const Objective& obj, const NsdwdConfig& cfg);

/// Bias-corrected full-batch Adam moments.
class AdamState {
 public:
  explicit AdamState(Eigen::Index dim);
  // Returns the update direction m_hat / (sqrt(v_hat) + eps) for this step.
  Eigen::VectorXd step(const Eigen::VectorXd& g, const BaselineHyper& hyper);

 private:
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::size_t steps_ = 0;
};

RunLog runBaseline(const Objective& obj, BaselineKind kind, const BaselineHyper& hyper,
                   std::size_t iterations, const Eigen::VectorXd& theta0 = {});

struct GridTrial {
  double learningRate = 0.0;
  double finalLoss = 0.0;
  bool diverged = false;
};

struct GridSearchResult {
  BaselineHyper best;
  std::vector<GridTrial> trials;
};

/// Constant learning rates 10^k for k = -3..2, scored by final loss.
std::vector<double> defaultLearningRateGrid();

GridSearchResult gridSearchBaseline(const Objective& obj, BaselineKind kind, BaselineHyper hyper,
                                    std::size_t iterations,
                                    const std::vector<double>& grid = defaultLearningRateGrid());

// `t,loss,grad_l2,grad_linf,param_l2,param_linf,eta`
void writeRunLogCsv(std::ostream& out, const RunLog& log);
std::vector<IterationRecord> readRunLogCsv(std::istream& in);

// `index,value`
void writeParametersCsv(std::ostream& out, const Eigen::VectorXd& theta);
Eigen::VectorXd readParametersCsv(std::istream& in);

}  // namespace nsd
