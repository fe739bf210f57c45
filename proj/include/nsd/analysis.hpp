#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "nsd/distributions.hpp"
#include "nsd/geometry.hpp"
#include "nsd/objective.hpp"

namespace nsd {

// Minimal-norm member of {log p + c 1} for the softmax unigram objective.
struct MinNormSolution {
  NormGeometry::Kind normKind = NormGeometry::Kind::L2;
  double shift = 0.0;
  double normValue = 0.0;
  Eigen::VectorXd thetaStar;
};

// Shift c = -(max log p + min log p) / 2, norm = (max log p - min log p) / 2.
MinNormSolution minNormLinf(const TokenDistribution& dist);

// Shift c = -mean(log p), norm = |log p - mean(log p)|_2.
MinNormSolution minNormL2(const TokenDistribution& dist);

/// Variance of log k for k uniform on {1, ..., d}.
double varLogUniform(std::size_t d);

struct AltMinNorm {
  double linf = 0.0;
  double l2 = 0.0;
  Eigen::VectorXd thetaStar;
};

// The additive-logistic objective has the unique minimizer altInverse(p).
AltMinNorm minNormAlt(const TokenDistribution& dist);

/// 8 L |x*|^2.
double complexity(double smoothness, double minNorm);

/// Largest eigenvalue of diag(q) - q q^T (or of its leading (d-1) block when
/// `leadingBlock` is set) by power iteration. Throws NumericError if the
/// Rayleigh quotient has not settled after 10^4 iterations.
double softmaxHessianMaxEigenvalue(const Eigen::VectorXd& q, bool leadingBlock = false,
                                   std::uint64_t seed = 0);

/// max over sign vectors u of u^T H u = sum_k q_k - (q^T u)^2 on the chosen
/// block. Exhaustive for up to 20 coordinates, greedy balancing above.
double signVertexQuadraticMax(const Eigen::VectorXd& q, bool leadingBlock = false);

/// Supremum of the Hessian's l2 quadratic form over Dirichlet(1) samples and
/// the two-coordinate curve theta(t) = [t t -t ... -t] at t = 40.
double estimateL2Smoothness(std::size_t d, std::size_t nSamples, std::uint64_t seed,
                            ObjectiveKind kind = ObjectiveKind::SoftmaxUnigram);

/// Same supremum for the l-infinity ball, whose extreme points are sign
/// vectors. Includes the uniform distribution, which attains 1 for even d.
double estimateLinfSmoothness(std::size_t d, std::size_t nSamples, std::uint64_t seed,
                              ObjectiveKind kind = ObjectiveKind::SoftmaxUnigram);

struct SCurvePoint {
  double s = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

/// s(t) = e^t / (2 e^t + (d - 2) e^-t) with the eigenvalues s and s - 2 s^2
/// of the leading 2x2 Hessian block. Requires d >= 3.
SCurvePoint sCurve(double t, std::size_t d);

/// Probability vector with mass 1/2 on coordinates i and j.
Eigen::VectorXd pairProbabilities(std::size_t d, std::size_t i, std::size_t j);

/// alpha_i, alpha_j >= 1/4 and (alpha_i - 1/4)(alpha_j - 1/4) >= 1/16.
bool pairConstraintHolds(double alphaI, double alphaJ);

/// Every pair satisfies pairConstraintHolds.
bool satisfiesAllPairConstraints(const Eigen::VectorXd& alpha);

/// Minimum eigenvalue of diag(alpha) - hessianFromProbs(q).
double dominationMargin(const Eigen::VectorXd& alpha, const Eigen::VectorXd& q);

/// Brute-force minimum of trace(diag(alpha)) over the grid {0, step, ..., upper}^d
/// subject to every pair constraint. Returns +inf if nothing is feasible.
double gridSearchMinTrace(std::size_t d, double step = 1.0 / 64.0, double upper = 1.5);

struct AdaptiveSmoothnessCertificate {
  double lowerBound = 0.0;       // d / 2
  double halfMargin = 0.0;       // worst margin of alpha = 1/2 over all pairs
  bool halfDominates = false;    // halfMargin >= -1e-12
  std::size_t equivalenceSamples = 0;
  std::size_t equivalenceMismatches = 0;
  std::optional<double> gridMinTrace;  // d <= 4 only
};

/// Diagonal adaptive smoothness lower bound d/2 and the numeric checks behind
/// it: the pair-constraint/eigenvalue equivalence on random alpha, the
/// alpha = 1/2 certificate, and the brute-force grid for small d.
AdaptiveSmoothnessCertificate adaptiveSmoothnessLowerBound(std::size_t d, std::uint64_t seed = 0,
                                                           std::size_t equivalenceSamples = 200);

struct AnalysisReport {
  ObjectiveKind kind = ObjectiveKind::SoftmaxUnigram;
  std::size_t d = 0;
  double l2SmoothLower = 0.5;
  double l2SmoothUpper = 1.0;
  double linfSmooth = 1.0;
  // Sampled suprema; absent when the dimension is too small to estimate.
  std::optional<double> l2SmoothEstimate;
  std::optional<double> linfSmoothEstimate;
  double minNormL2 = 0.0;
  double minNormLinf = 0.0;
  double vd = 0.0;  // variance of log p over classes (V_d for the power law)
  double complexityL2 = 0.0;
  double complexityLinf = 0.0;
  std::optional<double> adaptiveLowerBound;  // softmax unigram only

  double minNorm(NormGeometry g) const {
    return g.kind() == NormGeometry::Kind::L2 ? minNormL2 : minNormLinf;
  }
  double smoothnessUpper(NormGeometry g) const {
    return g.kind() == NormGeometry::Kind::L2 ? l2SmoothUpper : linfSmooth;
  }
};

void to_json(nlohmann::json& j, const AnalysisReport& r);
void from_json(const nlohmann::json& j, AnalysisReport& r);

AnalysisReport analyze(const Objective& obj, std::uint64_t seed, std::size_t nSamples = 32);

std::string formatReportTable(const AnalysisReport& report);

}  // namespace nsd
