#ifndef HEMB_UNCERTAINTY_HPP_
#define HEMB_UNCERTAINTY_HPP_

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hemb/eval.hpp"
#include "hemb/rng.hpp"

namespace hemb {

enum class UncertaintyBin { kVeryLow = 0, kLow, kModerate, kHigh, kVeryHigh };

const char* to_string(UncertaintyBin bin);

struct UncertaintyBins {
  std::array<double, 4> edges{};  // 20/40/60/80th percentiles of s
  std::vector<UncertaintyBin> assignment;
  std::array<std::size_t, 5> counts{};
};

// Quintiles of s. Edge e_q is the nearest-rank percentile (sorted value at
// ceil(q n / 5) - 1); a value equal to an edge falls into the lower bin.
UncertaintyBins bin_by_uncertainty(std::span<const double> log_variances);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

struct DecileRow {
  std::size_t decile = 0;  // 0 = lowest AP tenth
  std::size_t count = 0;
  double ap_min = 0.0;
  double ap_max = 0.0;
  double mean_ap = 0.0;
  double mean_s = 0.0;
  double std_s = 0.0;
};

struct ApUncertaintyCorrelation {
  double pearson_r = 0.0;
  std::vector<DecileRow> deciles;
};

// Pearson r between per-query AP and s, plus s statistics per AP decile.
ApUncertaintyCorrelation ap_uncertainty_correlation(const RetrievalReport& report);

enum class DropStrategy { kByUncertainty, kRandom };

const char* to_string(DropStrategy strategy);
DropStrategy drop_strategy_from_string(const std::string& name);

// Positions to drop: floor(fraction * n). kByUncertainty takes the largest s
// (ties to the smaller position); kRandom draws uniformly.
std::vector<std::size_t> choose_drops(std::span<const double> log_variances, double fraction,
                                      DropStrategy strategy, Rng& rng);

struct CleaningResult {
  double drop_fraction = 0.0;
  DropStrategy strategy = DropStrategy::kByUncertainty;
  double map_before = 0.0;
  double map_after = 0.0;
  std::vector<std::size_t> dropped_ids;
  std::vector<int> emptied_classes;  // gallery classes with no item left
};

// Removes a fraction of the gallery and re-evaluates micro mAP.
CleaningResult clean_gallery(const RetrievalSet& gallery, const RetrievalSet& queries,
                             double fraction, DropStrategy strategy, Rng& rng,
                             unsigned threads = 1);

struct DropQueryPoint {
  double fraction = 0.0;
  DropStrategy strategy = DropStrategy::kByUncertainty;
  double map = 0.0;
  std::size_t retained = 0;
};

// mAP over the queries kept after dropping each fraction, for both strategies.
std::vector<DropQueryPoint> drop_query_experiment(const RetrievalReport& report,
                                                  std::span<const double> fractions, Rng& rng);

struct NoiseRanking {
  std::vector<std::size_t> ranked_ids;            // descending s
  std::map<int, std::vector<std::size_t>> per_class_top;
  std::size_t top_n = 0;
  std::optional<double> precision_at_n;  // absent when no label was flipped
  double base_rate = 0.0;
};

// Ranks training samples by descending s (ties to smaller id). `ids`, `labels`
// and `noise_mask` are parallel to `log_variances`; noise_mask may be empty.
NoiseRanking rank_training_noise(std::span<const double> log_variances,
                                 std::span<const std::size_t> ids, std::span<const int> labels,
                                 std::span<const std::uint8_t> noise_mask, std::size_t top_n,
                                 std::size_t per_class = 5);

void validate_fraction(double fraction);

}  // namespace hemb

#endif  // HEMB_UNCERTAINTY_HPP_
