#ifndef HEMB_MINING_HPP_
#define HEMB_MINING_HPP_

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "hemb/triplet.hpp"

namespace hemb {

// Square matrix of pairwise Euclidean distances over a batch, row-major.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

// Uses |u|^2 + |v|^2 - 2 u.v, clamped at zero before the square root.
// Diagonal is exactly zero and the matrix exactly symmetric.
DistanceMatrix pairwise_distances(std::span<const Vector> embeddings);

struct MiningResult {
  std::vector<Triplet> triplets;
  std::size_t skipped = 0;  // anchors / pairs without a usable positive or negative
};

// One triplet per ordered anchor-positive pair. Prefers the closest negative
// with D(a,p) < D(a,n) < D(a,p) + margin; otherwise takes the farthest negative.
// Ties go to the smallest index.
MiningResult semi_hard_triplets(const DistanceMatrix& dist, std::span<const int> labels,
                                double margin);

// One triplet per anchor: farthest positive, closest negative.
MiningResult batch_hard_triplets(const DistanceMatrix& dist, std::span<const int> labels);

std::vector<std::pair<std::size_t, std::size_t>> all_positive_pairs(std::span<const int> labels);

}  // namespace hemb

#endif  // HEMB_MINING_HPP_
