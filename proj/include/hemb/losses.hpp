#ifndef HEMB_LOSSES_HPP_
#define HEMB_LOSSES_HPP_

#include <span>
#include <vector>

#include "hemb/triplet.hpp"

namespace hemb {

// Encoder head output: d embedding coordinates plus s = log(sigma^2).
struct EmbeddingOutput {
  Vector embedding;
  double log_variance = 0.0;
};

struct LossTerms {
  double data_term = 0.0;
  double log_term = 0.0;
  double decay_term = 0.0;
  double total = 0.0;
};

// Soft margin (softplus) or hinge with explicit margin m >= 0.
class MarginMode {
 public:
  enum class Kind { kSoftPlus, kHardHinge };

  static MarginMode soft_plus() { return MarginMode(Kind::kSoftPlus, 0.0); }
  static MarginMode hard_hinge(double margin);

  Kind kind() const { return kind_; }
  double margin() const { return margin_; }

  // Applies the margin function to z = D(a,p) - D(a,n).
  double apply(double z) const;
  // d apply / dz.
  double derivative(double z) const;

 private:
  MarginMode(Kind kind, double margin) : kind_(kind), margin_(margin) {}
  Kind kind_;
  double margin_;
};

// Clamp range for the log-variance head.
struct LogVarianceBounds {
  double min = -10.0;
  double max = 10.0;

  double clamp(double s) const;
  // Zeroes the outward component of a gradient for s sitting on a bound.
  double project(double s, double grad) const;
};

enum class LossKind { kVanilla, kHetero };

// ln(1 + e^x) without overflow.
double softplus(double x);

// Exact Euclidean norm of u - v.
double euclidean_distance(std::span<const double> u, std::span<const double> v);

// Stabilized distance used inside gradients: sqrt(|u-v|^2 + 1e-12).
inline constexpr double kDistanceEpsilon = 1e-12;

double triplet_loss(const EmbeddingOutput& a, const EmbeddingOutput& p,
                    const EmbeddingOutput& n, const MarginMode& mode);

// Uncertainty-weighted triplet loss: sum_j e^{-s_j} * L / 2 + sum_j s_j / 2.
LossTerms hetero_triplet_loss(const EmbeddingOutput& a, const EmbeddingOutput& p,
                              const EmbeddingOutput& n, const MarginMode& mode);

// k-tuple generalization. items[0] is the anchor, items[1] the closest
// positive and items[k-1] the far negative; the middle items must lie strictly
// between them in distance from the anchor. k = 3 reduces to hetero_triplet_loss.
LossTerms ktuple_loss(std::span<const EmbeddingOutput> items, const MarginMode& mode);

// Heteroscedastic univariate regression loss, mean over N of
// e^{-s_i} (y_i - f_i)^2 / 2 + s_i / 2.
double hetero_regression_loss(std::span<const double> predictions,
                              std::span<const double> targets,
                              std::span<const double> log_variances);

// Triplet loss read as a regression target d for the input triple (x, y, z).
// For unit-norm embeddings and a hinge of margin m the value lies in [0, 2 + m].
double triplet_regression_value(const EmbeddingOutput& x, const EmbeddingOutput& y,
                                const EmbeddingOutput& z, const MarginMode& mode);

double weight_decay(std::span<const double> params, double lambda);

struct LossGradients {
  LossTerms terms;
  std::vector<Vector> embedding;   // dJ/d embedding, one per batch output
  Vector log_variance;             // dJ/ds (projected at clamp bounds)
  Vector params;                   // dJ/dW from the decay term only
};

// Batch objective (1/N) sum_t LossTerms_t + lambda |W|^2 and its gradients.
// For kVanilla the data term is the plain triplet loss and s receives no
// gradient. With `with_gradients` false only `terms` is filled.
LossGradients loss_gradients(std::span<const EmbeddingOutput> outputs,
                             std::span<const Triplet> triplets,
                             const MarginMode& mode, LossKind kind, double lambda,
                             std::span<const double> params,
                             const LogVarianceBounds& bounds = {},
                             bool with_gradients = true);

}  // namespace hemb

#endif  // HEMB_LOSSES_HPP_
