#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace nsd {

enum class DistributionSource { PowerLaw, Corpus, Explicit };

/// Sorted class-proportion vector over a vocabulary of d classes.
///
/// Construction validates the invariants every consumer relies on: entries
/// are strictly positive, sorted non-increasing and sum to one within 1e-12.
class TokenDistribution {
 public:
  TokenDistribution(Eigen::VectorXd probs, DistributionSource source,
                    std::vector<std::string> labels = {});

  std::size_t size() const noexcept { return static_cast<std::size_t>(probs_.size()); }
  const Eigen::VectorXd& probs() const noexcept { return probs_; }
  double operator[](std::size_t k) const { return probs_[static_cast<Eigen::Index>(k)]; }
  DistributionSource source() const noexcept { return source_; }
  bool hasLabels() const noexcept { return !labels_.empty(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  friend bool operator==(const TokenDistribution& a, const TokenDistribution& b);

 private:
  Eigen::VectorXd probs_;
  DistributionSource source_;
  std::vector<std::string> labels_;
};

/// p_k = (1/k) / H_d for ranks k = 1..d.
TokenDistribution powerLawDistribution(std::size_t d);

/// Normalizes arbitrary positive weights and sorts them non-increasing
/// (stable by index on ties).
TokenDistribution distributionFromWeights(const std::vector<double>& weights);

/// Whitespace-tokenized unigram frequencies of a UTF-8 text stream.
///
/// Tokens are maximal runs of non-whitespace bytes, lowercased (ASCII case
/// folding). With maxVocab set, only the most frequent maxVocab tokens are
/// kept and the result is renormalized. Ties are ordered lexicographically.
/// Throws EmptyCorpusError when no token is found and EncodingError on
/// malformed UTF-8.
TokenDistribution ingestCorpus(std::istream& text, std::optional<std::size_t> maxVocab = {});

/// Negated least-squares slope of log p_k against log(k + 1).
double zipfFitExponent(const TokenDistribution& dist);

// `rank,probability[,token]`, one row per class, rank 1-indexed.
void writeDistributionCsv(std::ostream& out, const TokenDistribution& dist);

}  // namespace nsd
