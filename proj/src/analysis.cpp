#include "nsd/analysis.hpp"

#include <algorithm>
#include <bit>
#include <functional>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "nsd/errors.hpp"
#include "nsd/numeric.hpp"

namespace nsd {

namespace {

constexpr std::size_t kMaxPowerIterations = 10000;
constexpr double kRayleighTolerance = 1e-15;
constexpr double kCurveT = 40.0;
constexpr std::size_t kExhaustiveSignLimit = 20;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t taskSeed(std::uint64_t master, std::uint64_t task) {
  return splitmix64(master ^ splitmix64(task));
}

Eigen::VectorXd sampleDirichletOnes(std::size_t d, std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(1.0);
  Eigen::VectorXd q(static_cast<Eigen::Index>(d));
  for (auto& v : q) v = expo(rng);
  return q / q.sum();
}

Eigen::VectorXd logPVector(const TokenDistribution& dist) {
  return dist.probs().array().log().matrix();
}

Eigen::VectorXd leading(const Eigen::VectorXd& q, bool leadingBlock) {
  return leadingBlock ? Eigen::VectorXd(q.head(q.size() - 1)) : q;
}

// Model probabilities on the curve theta(t) = [t t -t ... -t].
Eigen::VectorXd curveProbabilities(std::size_t d, ObjectiveKind kind, double t) {
  const std::size_t dim = kind == ObjectiveKind::SoftmaxUnigram ? d : d - 1;
  Eigen::VectorXd theta = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), -t);
  theta.head(std::min<Eigen::Index>(2, theta.size())).setConstant(t);
  return kind == ObjectiveKind::SoftmaxUnigram ? softmaxStable(theta) : altTransform(theta);
}

void checkEstimatorDim(std::size_t d, ObjectiveKind kind) {
  if (d < 2) throw std::invalid_argument("smoothness estimation needs d >= 2");
  if (kind == ObjectiveKind::AdditiveLogistic && d < 3) {
    throw std::invalid_argument("additive-logistic smoothness estimation needs d >= 3");
  }
}

}  // namespace

MinNormSolution minNormLinf(const TokenDistribution& dist) {
  const Eigen::VectorXd logP = logPVector(dist);
  const double hi = logP.maxCoeff();
  const double lo = logP.minCoeff();
  MinNormSolution sol;
  sol.normKind = NormGeometry::Kind::Linf;
  sol.shift = -(hi + lo) / 2.0;
  sol.thetaStar = (logP.array() + sol.shift).matrix();
  sol.normValue = (hi - lo) / 2.0;
  return sol;
}

MinNormSolution minNormL2(const TokenDistribution& dist) {
  const Eigen::VectorXd logP = logPVector(dist);
  const double mean = compensatedSum(logP) / static_cast<double>(logP.size());
  MinNormSolution sol;
  sol.normKind = NormGeometry::Kind::L2;
  sol.shift = -mean;
  sol.thetaStar = (logP.array() - mean).matrix();
  CompensatedSum sq;
  for (double v : sol.thetaStar) sq += v * v;
  sol.normValue = std::sqrt(sq.value());
  return sol;
}

double varLogUniform(std::size_t d) {
  if (d == 0) throw std::invalid_argument("varLogUniform needs d >= 1");
  CompensatedSum sumLog, sumLogSq;
  for (std::size_t k = 2; k <= d; ++k) {
    const double l = std::log(static_cast<double>(k));
    sumLog += l;
    sumLogSq += l * l;
  }
  const double n = static_cast<double>(d);
  const double mean = sumLog.value() / n;
  return std::max(0.0, sumLogSq.value() / n - mean * mean);
}

AltMinNorm minNormAlt(const TokenDistribution& dist) {
  AltMinNorm out;
  out.thetaStar = altInverse(dist.probs());
  out.linf = out.thetaStar.lpNorm<Eigen::Infinity>();
  CompensatedSum sq;
  for (double v : out.thetaStar) sq += v * v;
  out.l2 = std::sqrt(sq.value());
  return out;
}

double complexity(double smoothness, double minNorm) {
  if (!(smoothness > 0.0)) throw std::invalid_argument("smoothness must be positive");
  if (minNorm < 0.0) throw std::invalid_argument("norm must be nonnegative");
  return 8.0 * smoothness * minNorm * minNorm;
}

double softmaxHessianMaxEigenvalue(const Eigen::VectorXd& q, bool leadingBlock,
                                   std::uint64_t seed) {
  const Eigen::VectorXd b = leading(q, leadingBlock);
  if (b.size() == 0) return 0.0;
  auto apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return (b.array() * v.array()).matrix() - b * b.dot(v);
  };
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(b.size());
  for (auto& x : v) x = normal(rng);
  v.normalize();

  double rho = 0.0;
  for (std::size_t it = 0; it < kMaxPowerIterations; ++it) {
    const Eigen::VectorXd w = apply(v);
    const double next = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    if (it > 0 && std::abs(next - rho) <= kRayleighTolerance) return std::max(next, rho);
    rho = next;
    v = w / wn;
  }
  throw NumericError("power iteration did not converge in 10^4 iterations");
}

double signVertexQuadraticMax(const Eigen::VectorXd& q, bool leadingBlock) {
  const Eigen::VectorXd b = leading(q, leadingBlock);
  const std::size_t n = static_cast<std::size_t>(b.size());
  if (n == 0) return 0.0;
  const double total = compensatedSum(b);
  double best = std::numeric_limits<double>::infinity();  // min |b^T u|

  if (n <= kExhaustiveSignLimit) {
    // u_0 = +1 by symmetry; Gray code flips one sign per step.
    double s = total;
    best = std::abs(s);
    std::vector<int> sign(n, 1);
    const std::uint64_t count = std::uint64_t{1} << (n - 1);
    for (std::uint64_t k = 1; k < count; ++k) {
      const auto bit = static_cast<std::size_t>(std::countr_zero(k)) + 1;
      s -= 2.0 * sign[bit] * b[static_cast<Eigen::Index>(bit)];
      sign[bit] = -sign[bit];
      best = std::min(best, std::abs(s));
    }
  } else {
    std::vector<double> sorted(b.begin(), b.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double plus = 0.0, minus = 0.0;
    for (double v : sorted) (plus <= minus ? plus : minus) += v;
    best = std::abs(plus - minus);
  }
  return total - best * best;
}

double estimateL2Smoothness(std::size_t d, std::size_t nSamples, std::uint64_t seed,
                            ObjectiveKind kind) {
  checkEstimatorDim(d, kind);
  const bool block = kind == ObjectiveKind::AdditiveLogistic;
  double best = softmaxHessianMaxEigenvalue(curveProbabilities(d, kind, kCurveT), block, seed);
  for (std::size_t i = 0; i < nSamples; ++i) {
    std::mt19937_64 rng(taskSeed(seed, i));
    const Eigen::VectorXd q = sampleDirichletOnes(d, rng);
    best = std::max(best, softmaxHessianMaxEigenvalue(q, block, rng()));
  }
  return best;
}

double estimateLinfSmoothness(std::size_t d, std::size_t nSamples, std::uint64_t seed,
                              ObjectiveKind kind) {
  checkEstimatorDim(d, kind);
  const bool block = kind == ObjectiveKind::AdditiveLogistic;
  const Eigen::VectorXd uniform =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 1.0 / static_cast<double>(d));
  double best = std::max(signVertexQuadraticMax(uniform, block),
                         signVertexQuadraticMax(curveProbabilities(d, kind, kCurveT), block));
  for (std::size_t i = 0; i < nSamples; ++i) {
    std::mt19937_64 rng(taskSeed(seed, i));
    best = std::max(best, signVertexQuadraticMax(sampleDirichletOnes(d, rng), block));
  }
  return best;
}

SCurvePoint sCurve(double t, std::size_t d) {
  if (d < 3) throw std::invalid_argument("sCurve needs d >= 3");
  SCurvePoint p;
  p.s = 1.0 / (2.0 + static_cast<double>(d - 2) * std::exp(-2.0 * t));
  p.lambda1 = p.s;
  p.lambda2 = p.s - 2.0 * p.s * p.s;
  return p;
}

Eigen::VectorXd pairProbabilities(std::size_t d, std::size_t i, std::size_t j) {
  if (i == j || i >= d || j >= d) throw std::invalid_argument("need two distinct coordinates < d");
  Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  q[static_cast<Eigen::Index>(i)] = 0.5;
  q[static_cast<Eigen::Index>(j)] = 0.5;
  return q;
}

bool pairConstraintHolds(double alphaI, double alphaJ) {
  return alphaI >= 0.25 && alphaJ >= 0.25 && (alphaI - 0.25) * (alphaJ - 0.25) >= 1.0 / 16.0;
}

bool satisfiesAllPairConstraints(const Eigen::VectorXd& alpha) {
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    for (Eigen::Index j = i + 1; j < alpha.size(); ++j) {
      if (!pairConstraintHolds(alpha[i], alpha[j])) return false;
    }
  }
  return true;
}

double dominationMargin(const Eigen::VectorXd& alpha, const Eigen::VectorXd& q) {
  if (alpha.size() != q.size()) throw std::invalid_argument("alpha and q sizes differ");
  Eigen::MatrixXd m = -hessianFromProbs(q);
  m.diagonal() += alpha;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double gridSearchMinTrace(std::size_t d, double step, double upper) {
  if (d < 2) throw std::invalid_argument("grid search needs d >= 2");
  if (!(step > 0.0) || upper < 0.0) throw std::invalid_argument("invalid grid");
  const auto points = static_cast<std::size_t>(std::floor(upper / step + 1e-9)) + 1;
  std::vector<std::size_t> index(d, 0);
  std::vector<double> alpha(d, 0.0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    double trace = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      alpha[k] = static_cast<double>(index[k]) * step;
      trace += alpha[k];
    }
    if (trace < best) {
      bool ok = true;
      for (std::size_t i = 0; i < d && ok; ++i) {
        for (std::size_t j = i + 1; j < d && ok; ++j) ok = pairConstraintHolds(alpha[i], alpha[j]);
      }
      if (ok) best = trace;
    }
    std::size_t k = 0;
    while (k < d && ++index[k] == points) index[k++] = 0;
    if (k == d) break;
  }
  return best;
}

AdaptiveSmoothnessCertificate adaptiveSmoothnessLowerBound(std::size_t d, std::uint64_t seed,
                                                           std::size_t equivalenceSamples) {
  if (d < 2) throw std::invalid_argument("adaptive smoothness bound needs d >= 2");
  AdaptiveSmoothnessCertificate cert;
  cert.lowerBound = static_cast<double>(d) / 2.0;

  const Eigen::VectorXd half = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 0.5);
  cert.halfMargin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      cert.halfMargin = std::min(cert.halfMargin, dominationMargin(half, pairProbabilities(d, i, j)));
    }
  }
  cert.halfDominates = cert.halfMargin >= -1e-12;

  // Domination of the (i, j) boundary Hessian <=> pair constraint on (i, j)
  // and nonnegative alpha elsewhere.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-0.25, 1.5);
  std::uniform_int_distribution<std::size_t> pick(0, d - 1);
  cert.equivalenceSamples = equivalenceSamples;
  for (std::size_t s = 0; s < equivalenceSamples; ++s) {
    Eigen::VectorXd alpha(static_cast<Eigen::Index>(d));
    for (auto& a : alpha) a = unif(rng);
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    while (j == i) j = pick(rng);
    bool predicted = pairConstraintHolds(alpha[static_cast<Eigen::Index>(i)],
                                         alpha[static_cast<Eigen::Index>(j)]);
    for (std::size_t k = 0; k < d; ++k) {
      if (k != i && k != j && alpha[static_cast<Eigen::Index>(k)] < 0.0) predicted = false;
    }
    const bool dominates = dominationMargin(alpha, pairProbabilities(d, i, j)) >= -1e-12;
    if (predicted != dominates) ++cert.equivalenceMismatches;
  }

  if (d <= 4) cert.gridMinTrace = gridSearchMinTrace(d);
  return cert;
}

void to_json(nlohmann::json& j, const AnalysisReport& r) {
  j = nlohmann::json{{"objective", toString(r.kind)},
                     {"d", r.d},
                     {"l2_smooth_lower", r.l2SmoothLower},
                     {"l2_smooth_upper", r.l2SmoothUpper},
                     {"linf_smooth", r.linfSmooth},
                     {"l2_smooth_estimate", nullptr},
                     {"linf_smooth_estimate", nullptr},
                     {"min_norm_l2", r.minNormL2},
                     {"min_norm_linf", r.minNormLinf},
                     {"vd", r.vd},
                     {"complexity_l2", r.complexityL2},
                     {"complexity_linf", r.complexityLinf},
                     {"adaptive_lower_bound", nullptr}};
  if (r.l2SmoothEstimate) j["l2_smooth_estimate"] = *r.l2SmoothEstimate;
  if (r.linfSmoothEstimate) j["linf_smooth_estimate"] = *r.linfSmoothEstimate;
  if (r.adaptiveLowerBound) j["adaptive_lower_bound"] = *r.adaptiveLowerBound;
}

void from_json(const nlohmann::json& j, AnalysisReport& r) {
  auto optional = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.kind = objectiveKindFromString(j.at("objective").get<std::string>());
  r.d = j.at("d").get<std::size_t>();
  r.l2SmoothLower = j.at("l2_smooth_lower").get<double>();
  r.l2SmoothUpper = j.at("l2_smooth_upper").get<double>();
  r.linfSmooth = j.at("linf_smooth").get<double>();
  r.l2SmoothEstimate = optional("l2_smooth_estimate");
  r.linfSmoothEstimate = optional("linf_smooth_estimate");
  r.minNormL2 = j.at("min_norm_l2").get<double>();
  r.minNormLinf = j.at("min_norm_linf").get<double>();
  r.vd = j.at("vd").get<double>();
  r.complexityL2 = j.at("complexity_l2").get<double>();
  r.complexityLinf = j.at("complexity_linf").get<double>();
  r.adaptiveLowerBound = optional("adaptive_lower_bound");
}

AnalysisReport analyze(const Objective& obj, std::uint64_t seed, std::size_t nSamples) {
  const TokenDistribution& dist = obj.distribution();
  AnalysisReport r;
  r.kind = obj.kind();
  r.d = dist.size();

  const MinNormSolution centered = minNormL2(dist);
  r.vd = centered.normValue * centered.normValue / static_cast<double>(r.d);
  if (r.kind == ObjectiveKind::SoftmaxUnigram) {
    r.minNormL2 = centered.normValue;
    r.minNormLinf = minNormLinf(dist).normValue;
    r.adaptiveLowerBound = static_cast<double>(r.d) / 2.0;
  } else {
    const AltMinNorm alt = minNormAlt(dist);
    r.minNormL2 = alt.l2;
    r.minNormLinf = alt.linf;
  }

  const bool estimable = r.kind == ObjectiveKind::SoftmaxUnigram ? r.d >= 2 : r.d >= 3;
  if (estimable) {
    r.l2SmoothEstimate = estimateL2Smoothness(r.d, nSamples, seed, r.kind);
    r.linfSmoothEstimate = estimateLinfSmoothness(r.d, nSamples, seed, r.kind);
  }
  r.complexityL2 = 8.0 * r.l2SmoothUpper * r.minNormL2 * r.minNormL2;
  r.complexityLinf = 8.0 * r.linfSmooth * r.minNormLinf * r.minNormLinf;
  return r;
}

std::string formatReportTable(const AnalysisReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? fmt::format("{:.10g}", *v) : std::string("n/a");
  };
  std::string out;
  auto row = [&](const char* name, const std::string& value) {
    out += fmt::format("  {:<28} {}\n", name, value);
  };
  out += fmt::format("analysis: {} d={}\n", toString(r.kind), r.d);
  row("l2 smoothness (proven)", fmt::format("[{:g}, {:g}]", r.l2SmoothLower, r.l2SmoothUpper));
  row("l2 smoothness (sampled)", opt(r.l2SmoothEstimate));
  row("linf smoothness (proven)", fmt::format("{:g}", r.linfSmooth));
  row("linf smoothness (sampled)", opt(r.linfSmoothEstimate));
  row("min |theta*|_2", fmt::format("{:.10g}", r.minNormL2));
  row("min |theta*|_inf", fmt::format("{:.10g}", r.minNormLinf));
  row("var log p (V_d)", fmt::format("{:.10g}", r.vd));
  row("complexity C_2", fmt::format("{:.10g}", r.complexityL2));
  row("complexity C_inf", fmt::format("{:.10g}", r.complexityLinf));
  row("C_inf / C_2", fmt::format("{:.6g}", r.complexityL2 > 0 ? r.complexityLinf / r.complexityL2 : 0.0));
  row("diag adaptive smoothness >=", opt(r.adaptiveLowerBound));
  return out;
}

}  // namespace nsd
