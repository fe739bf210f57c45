#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "nsd/distributions.hpp"

namespace nsd {

enum class ObjectiveKind { SoftmaxUnigram, AdditiveLogistic };

const char* toString(ObjectiveKind kind);
ObjectiveKind objectiveKindFromString(const std::string& name);

/// exp(theta - max) / sum exp(theta - max).
Eigen::VectorXd softmaxStable(const Eigen::VectorXd& theta);
Eigen::VectorXd logSoftmax(const Eigen::VectorXd& theta);

/// Softmax over (theta_1, ..., theta_{d-1}, 0).
Eigen::VectorXd altTransform(const Eigen::VectorXd& theta);

/// (log(p_1/p_d), ..., log(p_{d-1}/p_d)); throws if any entry is zero.
Eigen::VectorXd altInverse(const Eigen::VectorXd& p);

/// diag(q) - q q^T. Dense; meant for small d.
Eigen::MatrixXd hessianFromProbs(const Eigen::VectorXd& q);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

/// KL(p || model(theta)) where the model is either a plain softmax over d
/// logits or the additive-logistic map over d-1 logits.
///
/// The minimum value is zero for both kinds since any strictly positive p is
/// reachable. Every entry point validates that theta has paramDim() entries
/// and throws std::invalid_argument otherwise.
class Objective {
 public:
  Objective(ObjectiveKind kind, TokenDistribution dist);

  ObjectiveKind kind() const noexcept { return kind_; }
  const TokenDistribution& distribution() const noexcept { return dist_; }
  std::size_t classCount() const noexcept { return dist_.size(); }
  std::size_t paramDim() const noexcept {
    return kind_ == ObjectiveKind::SoftmaxUnigram ? dist_.size() : dist_.size() - 1;
  }

  // Model probabilities over all d classes.
  Eigen::VectorXd probabilities(const Eigen::VectorXd& theta) const;

  double loss(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const;
  LossAndGradient evaluate(const Eigen::VectorXd& theta) const;

  // Hessian-vector product in O(d).
  Eigen::VectorXd hvp(const Eigen::VectorXd& theta, const Eigen::VectorXd& v) const;

 private:
  void checkDim(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd modelLogits(const Eigen::VectorXd& theta) const;

  ObjectiveKind kind_;
  TokenDistribution dist_;
  Eigen::VectorXd logP_;
};

}  // namespace nsd
