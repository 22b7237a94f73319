#ifndef HEMB_DATA_HPP_
#define HEMB_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hemb/triplet.hpp"

namespace hemb {

enum class Split : std::uint8_t { kTrain = 0, kQuery = 1, kGallery = 2 };

const char* to_string(Split split);
Split split_from_string(const std::string& name);

// Feature vectors with clean and observed labels. Observed (noisy) labels are
// what training sees; the noise mask records which ones were flipped.
struct SyntheticDataset {
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // row-major, size() x feature_dim
  Labels true_labels;
  Labels noisy_labels;
  std::vector<std::uint8_t> noise_mask;
  std::vector<std::uint8_t> hetero_mask;  // member of the inflated-noise subpopulation
  Vector sample_noise_scale;
  std::vector<Split> splits;

  std::size_t size() const { return true_labels.size(); }
  std::span<const double> feature(std::size_t i) const {
    return std::span<const double>(features).subspan(i * feature_dim, feature_dim);
  }
  std::vector<std::size_t> indices_of(Split split) const;

  // Throws a format error if parallel arrays disagree or the mask is stale.
  void validate() const;

  friend bool operator==(const SyntheticDataset&, const SyntheticDataset&) = default;
};

enum class FlipScheme { kUniform, kConfusionPairs };

struct GeneratorConfig {
  std::size_t train_size = 3000;
  std::size_t query_size = 600;
  std::size_t gallery_size = 600;
  std::size_t feature_dim = 32;
  std::size_t num_classes = 10;
  double separation = 4.0;
  double base_noise = 1.0;
  double hetero_fraction = 0.3;
  double hetero_scale = 3.0;     // noise multiplier of the heteroscedastic subpopulation
  double flip_rate = 0.2;        // fraction of train labels flipped
  FlipScheme flip_scheme = FlipScheme::kUniform;
  bool flips_follow_noise = true;  // draw flips from the inflated-noise samples first
  std::uint64_t seed = 0;

  void validate() const;
};

// Classes sit at seeded random unit directions times `separation`; each sample
// is its true center plus isotropic Gaussian noise of its own scale. Labels are
// balanced (index mod C) within each split. Flips touch the train split only.
// Confusion pairs are (0,1), (2,3), ...; with odd C the last class never flips.
SyntheticDataset generate(const GeneratorConfig& config);

// Confusion-pair partner of a class, or -1.
int confusion_partner(int label, std::size_t num_classes);

std::string serialize_dataset(const SyntheticDataset& data);
SyntheticDataset deserialize_dataset(std::string bytes);
void save_features(const SyntheticDataset& data, const std::string& path);
SyntheticDataset load_features(const std::string& path);

// CSV with header id,label[,split],f0,...,f{F-1}. Imported rows are clean
// (true = observed label, no injected noise) and default to the train split.
SyntheticDataset parse_features_csv(const std::string& text);
SyntheticDataset import_features_csv(const std::string& path);
std::string features_to_csv(const SyntheticDataset& data);

}  // namespace hemb

#endif  // HEMB_DATA_HPP_
