#include "nsd/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "nsd/csv.hpp"
#include "nsd/errors.hpp"
#include "nsd/numeric.hpp"

namespace nsd {

namespace {

constexpr double kSumTolerance = 1e-12;

bool isAsciiSpace(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

// Rejects overlong forms, surrogates and code points above U+10FFFF.
void validateUtf8(const std::string& bytes) {
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  while (i < n) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (b0 < 0x80) {
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      throw EncodingError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > n) throw EncodingError("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(bytes[i + k]);
      if ((b & 0xC0) != 0x80) {
        throw EncodingError("invalid UTF-8 continuation byte at offset " + std::to_string(i + k));
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                          (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw EncodingError("invalid UTF-8 code point at offset " + std::to_string(i));
    }
    i += len;
  }
}

}  // namespace

TokenDistribution::TokenDistribution(Eigen::VectorXd probs, DistributionSource source,
                                     std::vector<std::string> labels)
    : probs_(std::move(probs)), source_(source), labels_(std::move(labels)) {
  if (probs_.size() == 0) throw std::invalid_argument("distribution needs at least one class");
  if (!labels_.empty() && labels_.size() != size()) {
    throw std::invalid_argument("label count does not match class count");
  }
  CompensatedSum total;
  for (Eigen::Index k = 0; k < probs_.size(); ++k) {
    if (!(probs_[k] > 0.0) || !std::isfinite(probs_[k])) {
      throw std::invalid_argument("class proportions must be finite and strictly positive");
    }
    if (k > 0 && probs_[k] > probs_[k - 1]) {
      throw std::invalid_argument("class proportions must be sorted non-increasing");
    }
    total += probs_[k];
  }
  if (std::abs(total.value() - 1.0) > kSumTolerance) {
    throw std::invalid_argument("class proportions must sum to 1");
  }
}

bool operator==(const TokenDistribution& a, const TokenDistribution& b) {
  return a.source_ == b.source_ && a.labels_ == b.labels_ && a.probs_.size() == b.probs_.size() &&
         a.probs_ == b.probs_;
}

TokenDistribution powerLawDistribution(std::size_t d) {
  if (d == 0) throw std::invalid_argument("power law needs d >= 1");
  CompensatedSum harmonic;
  for (std::size_t k = 1; k <= d; ++k) harmonic += 1.0 / static_cast<double>(k);
  const double h = harmonic.value();
  Eigen::VectorXd probs(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) {
    probs[static_cast<Eigen::Index>(k)] = 1.0 / (static_cast<double>(k + 1) * h);
  }
  return TokenDistribution(std::move(probs), DistributionSource::PowerLaw);
}

TokenDistribution distributionFromWeights(const std::vector<double>& weights) {
  if (weights.empty()) throw std::invalid_argument("need at least one weight");
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be positive");
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  const double total = compensatedSum(weights);
  Eigen::VectorXd probs(static_cast<Eigen::Index>(weights.size()));
  for (std::size_t k = 0; k < order.size(); ++k) {
    probs[static_cast<Eigen::Index>(k)] = weights[order[k]] / total;
  }
  return TokenDistribution(std::move(probs), DistributionSource::Explicit);
}

TokenDistribution ingestCorpus(std::istream& text, std::optional<std::size_t> maxVocab) {
  if (maxVocab && *maxVocab == 0) throw std::invalid_argument("maxVocab must be positive");
  const std::string bytes{std::istreambuf_iterator<char>(text), std::istreambuf_iterator<char>()};
  if (bytes.empty()) throw EmptyCorpusError("corpus is empty");
  validateUtf8(bytes);

  std::unordered_map<std::string, std::size_t> counts;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      ++counts[token];
      token.clear();
    }
  };
  for (char ch : bytes) {
    const auto c = static_cast<unsigned char>(ch);
    if (isAsciiSpace(c)) {
      flush();
    } else {
      token += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    }
  }
  flush();
  if (counts.empty()) throw EmptyCorpusError("corpus contains no tokens");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (maxVocab && ranked.size() > *maxVocab) ranked.resize(*maxVocab);

  std::size_t kept = 0;
  for (const auto& entry : ranked) kept += entry.second;
  Eigen::VectorXd probs(static_cast<Eigen::Index>(ranked.size()));
  std::vector<std::string> labels;
  labels.reserve(ranked.size());
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    probs[static_cast<Eigen::Index>(k)] =
        static_cast<double>(ranked[k].second) / static_cast<double>(kept);
    labels.push_back(ranked[k].first);
  }
  return TokenDistribution(std::move(probs), DistributionSource::Corpus, std::move(labels));
}

double zipfFitExponent(const TokenDistribution& dist) {
  const std::size_t d = dist.size();
  if (d < 2) throw std::invalid_argument("Zipf fit needs at least two classes");
  CompensatedSum sx, sy;
  for (std::size_t k = 0; k < d; ++k) {
    sx += std::log(static_cast<double>(k + 1));
    sy += std::log(dist[k]);
  }
  const double n = static_cast<double>(d);
  const double mx = sx.value() / n;
  const double my = sy.value() / n;
  CompensatedSum sxy, sxx;
  for (std::size_t k = 0; k < d; ++k) {
    const double dx = std::log(static_cast<double>(k + 1)) - mx;
    sxy += dx * (std::log(dist[k]) - my);
    sxx += dx * dx;
  }
  return -sxy.value() / sxx.value();
}

void writeDistributionCsv(std::ostream& out, const TokenDistribution& dist) {
  out << (dist.hasLabels() ? "rank,probability,token\n" : "rank,probability\n");
  for (std::size_t k = 0; k < dist.size(); ++k) {
    out << (k + 1) << ',' << csv::formatDouble(dist[k]);
    if (dist.hasLabels()) out << ',' << csv::quoteField(dist.labels()[k]);
    out << '\n';
  }
}

}  // namespace nsd
