#include "nsd/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "nsd/numeric.hpp"

namespace nsd {

const char* toString(ObjectiveKind kind) {
  return kind == ObjectiveKind::SoftmaxUnigram ? "softmax_unigram" : "additive_logistic";
}

ObjectiveKind objectiveKindFromString(const std::string& name) {
  if (name == "softmax_unigram") return ObjectiveKind::SoftmaxUnigram;
  if (name == "additive_logistic") return ObjectiveKind::AdditiveLogistic;
  throw std::invalid_argument("unknown objective kind '" + name + "'");
}

Eigen::VectorXd logSoftmax(const Eigen::VectorXd& theta) {
  if (theta.size() == 0) throw std::invalid_argument("softmax of an empty vector");
  const double m = theta.maxCoeff();
  const Eigen::ArrayXd shifted = theta.array() - m;
  return (shifted - std::log(shifted.exp().sum())).matrix();
}

Eigen::VectorXd softmaxStable(const Eigen::VectorXd& theta) {
  if (theta.size() == 0) throw std::invalid_argument("softmax of an empty vector");
  const double m = theta.maxCoeff();
  Eigen::ArrayXd e = (theta.array() - m).exp();
  return (e / e.sum()).matrix();
}

Eigen::VectorXd altTransform(const Eigen::VectorXd& theta) {
  Eigen::VectorXd padded(theta.size() + 1);
  padded << theta, 0.0;
  return softmaxStable(padded);
}

Eigen::VectorXd altInverse(const Eigen::VectorXd& p) {
  if (p.size() < 2) throw std::invalid_argument("additive-logistic inverse needs d >= 2");
  if ((p.array() <= 0.0).any()) {
    throw std::invalid_argument("additive-logistic inverse needs strictly positive p");
  }
  const Eigen::Index n = p.size() - 1;
  return (p.head(n).array() / p[n]).log().matrix();
}

Eigen::MatrixXd hessianFromProbs(const Eigen::VectorXd& q) {
  if ((q.array() < 0.0).any()) throw std::invalid_argument("probabilities must be nonnegative");
  if (std::abs(compensatedSum(q) - 1.0) > 1e-10) {
    throw std::invalid_argument("probabilities must sum to 1");
  }
  Eigen::MatrixXd h = -q * q.transpose();
  h.diagonal() += q;
  return h;
}

Objective::Objective(ObjectiveKind kind, TokenDistribution dist)
    : kind_(kind), dist_(std::move(dist)), logP_(dist_.probs().array().log().matrix()) {
  if (kind_ == ObjectiveKind::AdditiveLogistic && dist_.size() < 2) {
    throw std::invalid_argument("additive-logistic objective needs d >= 2");
  }
}

void Objective::checkDim(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != paramDim()) {
    throw std::invalid_argument("parameter has dimension " + std::to_string(theta.size()) +
                                ", objective expects " + std::to_string(paramDim()));
  }
}

Eigen::VectorXd Objective::modelLogits(const Eigen::VectorXd& theta) const {
  if (kind_ == ObjectiveKind::SoftmaxUnigram) return theta;
  Eigen::VectorXd padded(theta.size() + 1);
  padded << theta, 0.0;
  return padded;
}

Eigen::VectorXd Objective::probabilities(const Eigen::VectorXd& theta) const {
  checkDim(theta);
  return softmaxStable(modelLogits(theta));
}

LossAndGradient Objective::evaluate(const Eigen::VectorXd& theta) const {
  checkDim(theta);
  const Eigen::VectorXd logQ = logSoftmax(modelLogits(theta));
  const Eigen::VectorXd& p = dist_.probs();
  CompensatedSum kl;
  for (Eigen::Index k = 0; k < p.size(); ++k) kl += p[k] * (logP_[k] - logQ[k]);
  LossAndGradient out;
  // Rounding can push an exact zero slightly negative.
  const double value = kl.value();
  out.loss = value < 0.0 ? 0.0 : value;
  const Eigen::Index n = theta.size();
  out.gradient = logQ.head(n).array().exp().matrix() - p.head(n);
  return out;
}

double Objective::loss(const Eigen::VectorXd& theta) const { return evaluate(theta).loss; }

Eigen::VectorXd Objective::gradient(const Eigen::VectorXd& theta) const {
  return evaluate(theta).gradient;
}

Eigen::VectorXd Objective::hvp(const Eigen::VectorXd& theta, const Eigen::VectorXd& v) const {
  checkDim(theta);
  if (v.size() != theta.size()) throw std::invalid_argument("direction has the wrong dimension");
  const Eigen::VectorXd q = softmaxStable(modelLogits(theta)).head(theta.size());
  return (q.array() * v.array()).matrix() - q * q.dot(v);
}

}  // namespace nsd
