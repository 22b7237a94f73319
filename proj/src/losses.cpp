#include "hemb/losses.hpp"

#include <cmath>
#include <string>

#include "compensated_sum.hpp"
#include "hemb/error.hpp"

namespace hemb {

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    fail(ErrorKind::kShape, std::string(what) + ": dimension mismatch (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

void require_finite(double s, const char* what) {
  if (!std::isfinite(s)) fail(ErrorKind::kInvalidInput, std::string(what) + ": non-finite value");
}

double squared_distance(std::span<const double> u, std::span<const double> v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double diff = u[i] - v[i];
    acc += diff * diff;
  }
  return acc;
}

double margin_argument(const EmbeddingOutput& a, const EmbeddingOutput& p,
                       const EmbeddingOutput& n, const MarginMode& mode) {
  require_same_dim(a.embedding.size(), p.embedding.size(), "triplet");
  require_same_dim(a.embedding.size(), n.embedding.size(), "triplet");
  double z = euclidean_distance(a.embedding, p.embedding) -
             euclidean_distance(a.embedding, n.embedding);
  if (mode.kind() == MarginMode::Kind::kHardHinge) z += mode.margin();
  return z;
}

// Shared by the triplet and k-tuple forms so that k = 3 is bit-identical.
LossTerms weighted_terms(double loss, std::span<const double> log_variances) {
  double weight_sum = 0.0;
  double s_sum = 0.0;
  for (double s : log_variances) {
    require_finite(s, "log_variance");
    weight_sum += std::exp(-s);
    s_sum += s;
  }
  LossTerms terms;
  terms.data_term = 0.5 * weight_sum * loss;
  terms.log_term = 0.5 * s_sum;
  terms.decay_term = 0.0;
  terms.total = terms.data_term + terms.log_term;
  return terms;
}

}  // namespace

MarginMode MarginMode::hard_hinge(double margin) {
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    fail(ErrorKind::kConfig, "hinge margin must be finite and >= 0");
  }
  return MarginMode(Kind::kHardHinge, margin);
}

double MarginMode::apply(double z) const {
  return kind_ == Kind::kSoftPlus ? softplus(z) : std::max(z, 0.0);
}

double MarginMode::derivative(double z) const {
  if (kind_ == Kind::kHardHinge) return z > 0.0 ? 1.0 : 0.0;
  // logistic sigmoid, evaluated on the stable side
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double LogVarianceBounds::clamp(double s) const {
  if (s < min) return min;
  if (s > max) return max;
  return s;
}

double LogVarianceBounds::project(double s, double grad) const {
  if (s >= max && grad < 0.0) return 0.0;
  if (s <= min && grad > 0.0) return 0.0;
  return grad;
}

double softplus(double x) {
  require_finite(x, "softplus");
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double euclidean_distance(std::span<const double> u, std::span<const double> v) {
  require_same_dim(u.size(), v.size(), "euclidean_distance");
  return std::sqrt(squared_distance(u, v));
}

double triplet_loss(const EmbeddingOutput& a, const EmbeddingOutput& p,
                    const EmbeddingOutput& n, const MarginMode& mode) {
  return mode.apply(margin_argument(a, p, n, mode));
}

LossTerms hetero_triplet_loss(const EmbeddingOutput& a, const EmbeddingOutput& p,
                              const EmbeddingOutput& n, const MarginMode& mode) {
  const double s[3] = {a.log_variance, p.log_variance, n.log_variance};
  return weighted_terms(triplet_loss(a, p, n, mode), s);
}

LossTerms ktuple_loss(std::span<const EmbeddingOutput> items, const MarginMode& mode) {
  const std::size_t k = items.size();
  if (k < 3) fail(ErrorKind::kArity, "ktuple_loss needs k >= 3, got " + std::to_string(k));
  const EmbeddingOutput& anchor = items[0];
  for (const auto& item : items) {
    require_same_dim(anchor.embedding.size(), item.embedding.size(), "ktuple_loss");
  }
  const double near = euclidean_distance(anchor.embedding, items[1].embedding);
  const double far = euclidean_distance(anchor.embedding, items[k - 1].embedding);
  for (std::size_t j = 2; j + 1 < k; ++j) {
    const double mid = euclidean_distance(anchor.embedding, items[j].embedding);
    if (!(near < mid && mid < far)) {
      fail(ErrorKind::kConstraint,
           "ktuple_loss: item " + std::to_string(j) +
               " is not strictly between the positive and the far negative");
    }
  }
  std::vector<double> s;
  s.reserve(k);
  for (const auto& item : items) s.push_back(item.log_variance);
  return weighted_terms(triplet_loss(items[0], items[1], items[k - 1], mode), s);
}

double hetero_regression_loss(std::span<const double> predictions,
                              std::span<const double> targets,
                              std::span<const double> log_variances) {
  require_same_dim(predictions.size(), targets.size(), "hetero_regression_loss");
  require_same_dim(predictions.size(), log_variances.size(), "hetero_regression_loss");
  if (predictions.empty()) fail(ErrorKind::kShape, "hetero_regression_loss: empty input");
  detail::CompensatedSum acc;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = targets[i] - predictions[i];
    const double s = log_variances[i];
    require_finite(s, "log_variance");
    acc.add(0.5 * std::exp(-s) * r * r + 0.5 * s);
  }
  return acc.value() / static_cast<double>(predictions.size());
}

double triplet_regression_value(const EmbeddingOutput& x, const EmbeddingOutput& y,
                                const EmbeddingOutput& z, const MarginMode& mode) {
  return triplet_loss(x, y, z, mode);
}

double weight_decay(std::span<const double> params, double lambda) {
  detail::CompensatedSum acc;
  for (double w : params) acc.add(w * w);
  return lambda * acc.value();
}

LossGradients loss_gradients(std::span<const EmbeddingOutput> outputs,
                             std::span<const Triplet> triplets,
                             const MarginMode& mode, LossKind kind, double lambda,
                             std::span<const double> params,
                             const LogVarianceBounds& bounds, bool with_gradients) {
  const std::size_t b = outputs.size();
  for (const Triplet& t : triplets) {
    if (t.anchor >= b || t.positive >= b || t.negative >= b) {
      fail(ErrorKind::kIndex, "triplet references index beyond batch of " + std::to_string(b));
    }
  }
  const std::size_t dim = b == 0 ? 0 : outputs[0].embedding.size();
  for (const auto& o : outputs) require_same_dim(dim, o.embedding.size(), "loss_gradients");

  LossGradients out;
  if (with_gradients) {
    out.embedding.assign(b, Vector(dim, 0.0));
    out.log_variance.assign(b, 0.0);
    out.params.assign(params.size(), 0.0);
  }

  detail::CompensatedSum data_sum;
  detail::CompensatedSum log_sum;
  const double count = static_cast<double>(triplets.size());
  const double inv_n = triplets.empty() ? 0.0 : 1.0 / count;

  for (const Triplet& t : triplets) {
    const EmbeddingOutput& a = outputs[t.anchor];
    const EmbeddingOutput& p = outputs[t.positive];
    const EmbeddingOutput& n = outputs[t.negative];

    const double z = margin_argument(a, p, n, mode);
    const double loss = mode.apply(z);
    double dloss;  // dJ / dL for this triplet
    if (kind == LossKind::kHetero) {
      const LossTerms terms = hetero_triplet_loss(a, p, n, mode);
      const double wa = std::exp(-a.log_variance);
      const double wp = std::exp(-p.log_variance);
      const double wn = std::exp(-n.log_variance);
      data_sum.add_product(0.5 * (wa + wp + wn), loss);
      log_sum.add(terms.log_term);
      dloss = 0.5 * (wa + wp + wn) * inv_n;
      if (with_gradients) {
        out.log_variance[t.anchor] += inv_n * (0.5 - 0.5 * wa * loss);
        out.log_variance[t.positive] += inv_n * (0.5 - 0.5 * wp * loss);
        out.log_variance[t.negative] += inv_n * (0.5 - 0.5 * wn * loss);
      }
    } else {
      data_sum.add(loss);
      dloss = inv_n;
    }
    if (!with_gradients) continue;

    const double dz = dloss * mode.derivative(z);
    if (dz == 0.0) continue;
    const double dap = std::sqrt(squared_distance(a.embedding, p.embedding) + kDistanceEpsilon);
    const double dan = std::sqrt(squared_distance(a.embedding, n.embedding) + kDistanceEpsilon);
    Vector& ga = out.embedding[t.anchor];
    Vector& gp = out.embedding[t.positive];
    Vector& gn = out.embedding[t.negative];
    for (std::size_t i = 0; i < dim; ++i) {
      const double up = (a.embedding[i] - p.embedding[i]) / dap;
      const double un = (a.embedding[i] - n.embedding[i]) / dan;
      ga[i] += dz * (up - un);
      gp[i] -= dz * up;
      gn[i] += dz * un;
    }
  }

  out.terms.data_term = triplets.empty() ? 0.0 : data_sum.mean(count);
  out.terms.log_term = triplets.empty() ? 0.0 : log_sum.mean(count);
  out.terms.decay_term = weight_decay(params, lambda);
  out.terms.total = out.terms.data_term + out.terms.log_term + out.terms.decay_term;

  if (with_gradients) {
    for (std::size_t i = 0; i < b; ++i) {
      out.log_variance[i] = bounds.project(outputs[i].log_variance, out.log_variance[i]);
    }
    for (std::size_t i = 0; i < params.size(); ++i) out.params[i] = 2.0 * lambda * params[i];
  }
  return out;
}

}  // namespace hemb
