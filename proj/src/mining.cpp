#include "hemb/mining.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hemb/error.hpp"

namespace hemb {

namespace {

void require_labels(const DistanceMatrix& dist, std::span<const int> labels) {
  if (labels.size() != dist.size()) {
    fail(ErrorKind::kShape, "labels length " + std::to_string(labels.size()) +
                                " does not match distance matrix order " +
                                std::to_string(dist.size()));
  }
}

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

}  // namespace

DistanceMatrix pairwise_distances(std::span<const Vector> embeddings) {
  if (embeddings.empty()) fail(ErrorKind::kShape, "pairwise_distances: empty batch");
  const std::size_t n = embeddings.size();
  const std::size_t dim = embeddings[0].size();
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (embeddings[i].size() != dim) {
      fail(ErrorKind::kShape, "pairwise_distances: embedding " + std::to_string(i) +
                                  " has dimension " + std::to_string(embeddings[i].size()) +
                                  ", expected " + std::to_string(dim));
    }
    for (double x : embeddings[i]) norms[i] += x * x;
  }
  DistanceMatrix dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += embeddings[i][k] * embeddings[j][k];
      const double sq = std::max(norms[i] + norms[j] - 2.0 * dot, 0.0);
      dist(i, j) = dist(j, i) = std::sqrt(sq);
    }
  }
  return dist;
}

MiningResult semi_hard_triplets(const DistanceMatrix& dist, std::span<const int> labels,
                                double margin) {
  require_labels(dist, labels);
  if (!(margin >= 0.0)) fail(ErrorKind::kConfig, "semi-hard margin must be >= 0");
  MiningResult result;
  const std::size_t n = dist.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double dap = dist(a, p);
      std::size_t semi = kNone;
      std::size_t far = kNone;
      for (std::size_t c = 0; c < n; ++c) {
        if (labels[c] == labels[a]) continue;
        const double dan = dist(a, c);
        if (dap < dan && dan < dap + margin && (semi == kNone || dan < dist(a, semi))) semi = c;
        if (far == kNone || dan > dist(a, far)) far = c;
      }
      if (far == kNone) {
        ++result.skipped;
        continue;
      }
      result.triplets.push_back({a, p, semi != kNone ? semi : far});
    }
  }
  return result;
}

MiningResult batch_hard_triplets(const DistanceMatrix& dist, std::span<const int> labels) {
  require_labels(dist, labels);
  MiningResult result;
  const std::size_t n = dist.size();
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t pos = kNone;
    std::size_t neg = kNone;
    for (std::size_t c = 0; c < n; ++c) {
      if (c == a) continue;
      if (labels[c] == labels[a]) {
        if (pos == kNone || dist(a, c) > dist(a, pos)) pos = c;
      } else if (neg == kNone || dist(a, c) < dist(a, neg)) {
        neg = c;
      }
    }
    if (pos == kNone || neg == kNone) {
      ++result.skipped;
      continue;
    }
    result.triplets.push_back({a, pos, neg});
  }
  return result;
}

std::vector<std::pair<std::size_t, std::size_t>> all_positive_pairs(std::span<const int> labels) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (i != j && labels[i] == labels[j]) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

}  // namespace hemb
