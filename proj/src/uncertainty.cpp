#include "hemb/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "compensated_sum.hpp"
#include "hemb/error.hpp"

namespace hemb {

namespace {

// Positions sorted by descending s, ties by ascending position.
std::vector<std::size_t> descending_order(std::span<const double> s) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return order;
}

double mean_of(std::span<const double> v) {
  detail::CompensatedSum acc;
  for (double x : v) acc.add(x);
  return acc.value() / static_cast<double>(v.size());
}

}  // namespace

const char* to_string(UncertaintyBin bin) {
  switch (bin) {
    case UncertaintyBin::kVeryLow: return "very_low";
    case UncertaintyBin::kLow: return "low";
    case UncertaintyBin::kModerate: return "moderate";
    case UncertaintyBin::kHigh: return "high";
    case UncertaintyBin::kVeryHigh: return "very_high";
  }
  return "very_low";
}

const char* to_string(DropStrategy strategy) {
  return strategy == DropStrategy::kByUncertainty ? "by_uncertainty" : "random";
}

DropStrategy drop_strategy_from_string(const std::string& name) {
  if (name == "by_uncertainty") return DropStrategy::kByUncertainty;
  if (name == "random") return DropStrategy::kRandom;
  fail(ErrorKind::kConfig, "unknown drop strategy \"" + name + "\"");
}

UncertaintyBins bin_by_uncertainty(std::span<const double> log_variances) {
  const std::size_t n = log_variances.size();
  if (n < 5) {
    fail(ErrorKind::kInsufficientData,
         "uncertainty binning needs at least 5 samples, got " + std::to_string(n));
  }
  std::vector<double> sorted(log_variances.begin(), log_variances.end());
  std::sort(sorted.begin(), sorted.end());
  UncertaintyBins bins;
  for (std::size_t q = 1; q <= 4; ++q) {
    const std::size_t rank = (q * n + 4) / 5;  // ceil(q n / 5)
    bins.edges[q - 1] = sorted[rank - 1];
  }
  bins.assignment.reserve(n);
  for (double s : log_variances) {
    std::size_t bin = 0;
    while (bin < 4 && s > bins.edges[bin]) ++bin;
    bins.assignment.push_back(static_cast<UncertaintyBin>(bin));
    ++bins.counts[bin];
  }
  return bins;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::kShape, "pearson_correlation: length mismatch");
  if (x.size() < 3) {
    fail(ErrorKind::kInsufficientData, "pearson_correlation needs at least 3 points");
  }
  const double mx = mean_of(x);
  const double my = mean_of(y);
  detail::CompensatedSum sxy, sxx, syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy.add(dx * dy);
    sxx.add(dx * dx);
    syy.add(dy * dy);
  }
  if (sxx.value() <= 0.0 || syy.value() <= 0.0) {
    fail(ErrorKind::kUndefinedCorrelation, "pearson_correlation: zero variance");
  }
  const double r = sxy.value() / std::sqrt(sxx.value() * syy.value());
  return std::clamp(r, -1.0, 1.0);
}

ApUncertaintyCorrelation ap_uncertainty_correlation(const RetrievalReport& report) {
  const std::size_t n = report.per_query.size();
  std::vector<double> ap(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    ap[i] = report.per_query[i].average_precision;
    s[i] = report.per_query[i].log_variance;
  }
  ApUncertaintyCorrelation out;
  out.pearson_r = pearson_correlation(ap, s);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ap[a] < ap[b]; });
  for (std::size_t d = 0; d < 10; ++d) {
    const std::size_t lo = d * n / 10;
    const std::size_t hi = (d + 1) * n / 10;
    if (hi == lo) continue;
    DecileRow row;
    row.decile = d;
    row.count = hi - lo;
    row.ap_min = ap[order[lo]];
    row.ap_max = ap[order[hi - 1]];
    detail::CompensatedSum sum_ap, sum_s;
    for (std::size_t i = lo; i < hi; ++i) {
      sum_ap.add(ap[order[i]]);
      sum_s.add(s[order[i]]);
    }
    row.mean_ap = sum_ap.value() / static_cast<double>(row.count);
    row.mean_s = sum_s.value() / static_cast<double>(row.count);
    detail::CompensatedSum var;
    for (std::size_t i = lo; i < hi; ++i) {
      const double dv = s[order[i]] - row.mean_s;
      var.add(dv * dv);
    }
    row.std_s = std::sqrt(var.value() / static_cast<double>(row.count));
    out.deciles.push_back(row);
  }
  return out;
}

void validate_fraction(double fraction) {
  if (!(fraction >= 0.0 && fraction <= 0.5)) {
    fail(ErrorKind::kConfig, "drop fraction must lie in [0, 0.5], got " + std::to_string(fraction));
  }
}

std::vector<std::size_t> choose_drops(std::span<const double> log_variances, double fraction,
                                      DropStrategy strategy, Rng& rng) {
  validate_fraction(fraction);
  const std::size_t n = log_variances.size();
  // 0.29 * 100 counts 29
  const auto count =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> drops;
  if (strategy == DropStrategy::kByUncertainty) {
    drops = descending_order(log_variances);
    drops.resize(count);
  } else {
    drops = rng.sample_without_replacement(n, count);
  }
  std::sort(drops.begin(), drops.end());
  return drops;
}

CleaningResult clean_gallery(const RetrievalSet& gallery, const RetrievalSet& queries,
                             double fraction, DropStrategy strategy, Rng& rng, unsigned threads) {
  validate_fraction(fraction);
  if (gallery.log_variances.size() != gallery.embeddings.size()) {
    fail(ErrorKind::kShape, "clean_gallery: every gallery item needs a log-variance");
  }
  const std::vector<std::size_t> no_k;
  CleaningResult result;
  result.drop_fraction = fraction;
  result.strategy = strategy;
  result.map_before = evaluate(queries, gallery, no_k, threads).micro_map;

  const auto drops = choose_drops(gallery.log_variances, fraction, strategy, rng);
  std::vector<std::uint8_t> dropped(gallery.embeddings.size(), 0);
  for (std::size_t i : drops) {
    dropped[i] = 1;
    result.dropped_ids.push_back(gallery.ids.empty() ? i : gallery.ids[i]);
  }
  std::vector<Vector> kept_embeddings;
  std::vector<int> kept_labels;
  std::vector<double> kept_s;
  std::vector<std::size_t> kept_ids;
  for (std::size_t i = 0; i < dropped.size(); ++i) {
    if (dropped[i]) continue;
    kept_embeddings.push_back(gallery.embeddings[i]);
    kept_labels.push_back(gallery.labels[i]);
    kept_s.push_back(gallery.log_variances[i]);
    kept_ids.push_back(gallery.ids.empty() ? i : gallery.ids[i]);
  }
  std::set<int> before(gallery.labels.begin(), gallery.labels.end());
  std::set<int> after(kept_labels.begin(), kept_labels.end());
  std::set_difference(before.begin(), before.end(), after.begin(), after.end(),
                      std::back_inserter(result.emptied_classes));
  if (kept_embeddings.empty()) {
    result.map_after = 0.0;
    return result;
  }
  const RetrievalSet reduced{kept_embeddings, kept_labels, kept_s, kept_ids};
  result.map_after = evaluate(queries, reduced, no_k, threads).micro_map;
  return result;
}

std::vector<DropQueryPoint> drop_query_experiment(const RetrievalReport& report,
                                                  std::span<const double> fractions, Rng& rng) {
  std::vector<double> s;
  for (const auto& row : report.per_query) s.push_back(row.log_variance);
  std::vector<DropQueryPoint> curve;
  for (double fraction : fractions) {
    validate_fraction(fraction);
    for (DropStrategy strategy : {DropStrategy::kByUncertainty, DropStrategy::kRandom}) {
      const auto drops = choose_drops(s, fraction, strategy, rng);
      std::vector<std::uint8_t> dropped(s.size(), 0);
      for (std::size_t i : drops) dropped[i] = 1;
      detail::CompensatedSum acc;
      std::size_t kept = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (dropped[i]) continue;
        acc.add(report.per_query[i].average_precision);
        ++kept;
      }
      curve.push_back({fraction, strategy, kept == 0 ? 0.0 : acc.value() / static_cast<double>(kept), kept});
    }
  }
  return curve;
}

NoiseRanking rank_training_noise(std::span<const double> log_variances,
                                 std::span<const std::size_t> ids, std::span<const int> labels,
                                 std::span<const std::uint8_t> noise_mask, std::size_t top_n,
                                 std::size_t per_class) {
  const std::size_t n = log_variances.size();
  if (ids.size() != n || labels.size() != n || (!noise_mask.empty() && noise_mask.size() != n)) {
    fail(ErrorKind::kShape, "rank_training_noise: inputs differ in length");
  }
  NoiseRanking out;
  out.top_n = std::min(top_n, n);
  const auto order = descending_order(log_variances);
  for (std::size_t i : order) {
    out.ranked_ids.push_back(ids[i]);
    auto& listing = out.per_class_top[labels[i]];
    if (listing.size() < per_class) listing.push_back(ids[i]);
  }
  if (!noise_mask.empty()) {
    const auto flips = static_cast<std::size_t>(std::count(noise_mask.begin(), noise_mask.end(), 1));
    out.base_rate = n == 0 ? 0.0 : static_cast<double>(flips) / static_cast<double>(n);
    if (flips > 0 && out.top_n > 0) {
      std::size_t hit = 0;
      for (std::size_t r = 0; r < out.top_n; ++r) hit += noise_mask[order[r]] ? 1 : 0;
      out.precision_at_n = static_cast<double>(hit) / static_cast<double>(out.top_n);
    }
  }
  return out;
}

}  // namespace hemb
