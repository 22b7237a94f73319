#include "hemb/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "hemb/binary_io.hpp"
#include "hemb/error.hpp"
#include "hemb/rng.hpp"

namespace hemb {

namespace {

constexpr char kDataMagic[] = "HDST";
constexpr std::uint32_t kDataVersion = 1;

std::size_t rounded_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "query" || name == "val") return Split::kQuery;
  if (name == "gallery" || name == "test") return Split::kGallery;
  fail(ErrorKind::kFormat, "unknown split \"" + name + "\"");
}

std::vector<std::size_t> SyntheticDataset::indices_of(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

void SyntheticDataset::validate() const {
  const std::size_t n = true_labels.size();
  if (noisy_labels.size() != n || noise_mask.size() != n || hetero_mask.size() != n ||
      sample_noise_scale.size() != n || splits.size() != n || features.size() != n * feature_dim) {
    fail(ErrorKind::kFormat, "dataset arrays have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if ((noise_mask[i] != 0) != (true_labels[i] != noisy_labels[i])) {
      fail(ErrorKind::kFormat, "noise mask disagrees with labels at sample " + std::to_string(i));
    }
  }
}

void GeneratorConfig::validate() const {
  if (num_classes < 2) fail(ErrorKind::kConfig, "generator needs at least 2 classes");
  if (feature_dim == 0) fail(ErrorKind::kConfig, "feature_dim must be positive");
  if (!(separation > 0.0)) fail(ErrorKind::kConfig, "separation must be > 0");
  if (!(base_noise >= 0.0)) fail(ErrorKind::kConfig, "base_noise must be >= 0");
  if (!(hetero_fraction >= 0.0 && hetero_fraction <= 1.0)) {
    fail(ErrorKind::kConfig, "hetero_fraction must lie in [0, 1]");
  }
  if (!(hetero_scale > 1.0)) fail(ErrorKind::kConfig, "hetero_scale must be > 1");
  if (!(flip_rate >= 0.0 && flip_rate < 1.0)) fail(ErrorKind::kConfig, "flip_rate must lie in [0, 1)");
  if (train_size + query_size + gallery_size == 0) fail(ErrorKind::kConfig, "dataset is empty");
}

int confusion_partner(int label, std::size_t num_classes) {
  const int partner = (label % 2 == 0) ? label + 1 : label - 1;
  return partner < static_cast<int>(num_classes) ? partner : -1;
}

SyntheticDataset generate(const GeneratorConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t dim = config.feature_dim;
  const std::size_t classes = config.num_classes;

  std::vector<Vector> centers(classes, Vector(dim));
  for (auto& center : centers) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : center) {
        x = rng.normal();
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : center) x *= config.separation / norm;
  }

  SyntheticDataset data;
  data.feature_dim = dim;
  data.num_classes = classes;
  const std::pair<Split, std::size_t> parts[] = {{Split::kTrain, config.train_size},
                                                 {Split::kQuery, config.query_size},
                                                 {Split::kGallery, config.gallery_size}};
  std::vector<std::size_t> train_hetero;
  std::vector<std::size_t> train_regular;
  for (const auto& [split, count] : parts) {
    const std::size_t base = data.size();
    std::vector<std::uint8_t> hetero(count, 0);
    for (std::size_t i : rng.sample_without_replacement(count, rounded_count(config.hetero_fraction, count))) {
      hetero[i] = 1;
    }
    for (std::size_t i = 0; i < count; ++i) {
      const int label = static_cast<int>(i % classes);
      const double scale = config.base_noise * (hetero[i] ? config.hetero_scale : 1.0);
      for (std::size_t k = 0; k < dim; ++k) {
        data.features.push_back(centers[label][k] + scale * rng.normal());
      }
      data.true_labels.push_back(label);
      data.noisy_labels.push_back(label);
      data.noise_mask.push_back(0);
      data.hetero_mask.push_back(hetero[i]);
      data.sample_noise_scale.push_back(scale);
      data.splits.push_back(split);
      if (split == Split::kTrain) (hetero[i] ? train_hetero : train_regular).push_back(base + i);
    }
  }

  const bool pairs = config.flip_scheme == FlipScheme::kConfusionPairs;
  auto eligible = [&](std::size_t i) {
    return !pairs || confusion_partner(data.true_labels[i], classes) >= 0;
  };
  std::vector<std::size_t> order;
  if (config.flips_follow_noise) {
    rng.shuffle(train_hetero);
    rng.shuffle(train_regular);
    order = train_hetero;
    order.insert(order.end(), train_regular.begin(), train_regular.end());
  } else {
    order = train_hetero;
    order.insert(order.end(), train_regular.begin(), train_regular.end());
    std::sort(order.begin(), order.end());
    rng.shuffle(order);
  }
  std::erase_if(order, [&](std::size_t i) { return !eligible(i); });

  const std::size_t flips = rounded_count(config.flip_rate, config.train_size);
  if (flips > order.size()) {
    fail(ErrorKind::kConfig, "flip_rate needs " + std::to_string(flips) +
                                 " flips but only " + std::to_string(order.size()) +
                                 " train samples can be flipped under this scheme");
  }
  for (std::size_t f = 0; f < flips; ++f) {
    const std::size_t i = order[f];
    const int label = data.true_labels[i];
    int flipped;
    if (pairs) {
      flipped = confusion_partner(label, classes);
    } else {
      flipped = static_cast<int>(rng.uniform_index(classes - 1));
      if (flipped >= label) ++flipped;
    }
    data.noisy_labels[i] = flipped;
    data.noise_mask[i] = 1;
  }
  return data;
}

std::string serialize_dataset(const SyntheticDataset& data) {
  data.validate();
  BinaryWriter w;
  w.magic(kDataMagic);
  w.u32(kDataVersion);
  w.u64(data.size());
  w.u32(static_cast<std::uint32_t>(data.feature_dim));
  w.u32(static_cast<std::uint32_t>(data.num_classes));
  for (std::size_t i = 0; i < data.size(); ++i) {
    w.u8(static_cast<std::uint8_t>(data.splits[i]));
    w.i32(data.true_labels[i]);
    w.i32(data.noisy_labels[i]);
    w.u8(data.noise_mask[i]);
    w.u8(data.hetero_mask[i]);
    w.f64(data.sample_noise_scale[i]);
    for (double x : data.feature(i)) w.f64(x);
  }
  return w.finish();
}

SyntheticDataset deserialize_dataset(std::string bytes) {
  BinaryReader r(std::move(bytes), "dataset file");
  r.expect_magic(kDataMagic);
  const std::uint32_t version = r.u32();
  if (version != kDataVersion) r.corrupt("unsupported dataset version " + std::to_string(version));
  const std::uint64_t n = r.u64();
  SyntheticDataset data;
  data.feature_dim = r.u32();
  data.num_classes = r.u32();
  const std::uint64_t record = 1 + 4 + 4 + 1 + 1 + 8 + 8 * static_cast<std::uint64_t>(data.feature_dim);
  if (data.feature_dim == 0 || n > r.remaining() / record || r.remaining() != n * record) {
    r.corrupt("header declares " + std::to_string(n) + " samples of dimension " +
              std::to_string(data.feature_dim) + " but payload has " +
              std::to_string(r.remaining()) + " bytes");
  }
  data.features.reserve(n * data.feature_dim);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint8_t split = r.u8();
    if (split > 2) r.corrupt("invalid split tag " + std::to_string(split));
    data.splits.push_back(static_cast<Split>(split));
    data.true_labels.push_back(r.i32());
    data.noisy_labels.push_back(r.i32());
    data.noise_mask.push_back(r.u8());
    data.hetero_mask.push_back(r.u8());
    data.sample_noise_scale.push_back(r.f64());
    for (std::size_t k = 0; k < data.feature_dim; ++k) data.features.push_back(r.f64());
    if ((data.noise_mask.back() != 0) != (data.true_labels.back() != data.noisy_labels.back())) {
      r.corrupt("noise mask disagrees with labels for sample " + std::to_string(i));
    }
  }
  r.expect_end();
  return data;
}

void save_features(const SyntheticDataset& data, const std::string& path) {
  write_file(path, serialize_dataset(data));
}

SyntheticDataset load_features(const std::string& path) {
  return deserialize_dataset(read_file(path));
}

SyntheticDataset parse_features_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split_fields = [](const std::string& row) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(row);
    while (std::getline(ss, field, ',')) {
      while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
      while (!field.empty() && field.front() == ' ') field.erase(field.begin());
      out.push_back(field);
    }
    return out;
  };
  if (!std::getline(in, line)) fail(ErrorKind::kFormat, "CSV: missing header");
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
    fail(ErrorKind::kFormat, "CSV: header must start with id,label");
  }
  const bool has_split = header[2] == "split";
  const std::size_t first_feature = has_split ? 3 : 2;
  for (std::size_t c = first_feature; c < header.size(); ++c) {
    if (header[c] != "f" + std::to_string(c - first_feature)) {
      fail(ErrorKind::kFormat, "CSV: column " + std::to_string(c) + " should be f" +
                                   std::to_string(c - first_feature) + ", got " + header[c]);
    }
  }
  SyntheticDataset data;
  data.feature_dim = header.size() - first_feature;
  if (data.feature_dim == 0) fail(ErrorKind::kFormat, "CSV: no feature columns");

  int max_label = -1;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      fail(ErrorKind::kFormat, "CSV line " + std::to_string(row) + ": expected " +
                                   std::to_string(header.size()) + " fields, got " +
                                   std::to_string(fields.size()));
    }
    auto parse_int = [&](const std::string& s) {
      int v = 0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        fail(ErrorKind::kFormat, "CSV line " + std::to_string(row) + ": bad integer \"" + s + "\"");
      }
      return v;
    };
    parse_int(fields[0]);
    const int label = parse_int(fields[1]);
    if (label < 0) fail(ErrorKind::kFormat, "CSV line " + std::to_string(row) + ": negative label");
    max_label = std::max(max_label, label);
    for (std::size_t c = first_feature; c < fields.size(); ++c) {
      double v = 0.0;
      const std::string& s = fields[c];
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        fail(ErrorKind::kFormat, "CSV line " + std::to_string(row) + ": bad number \"" + s + "\"");
      }
      data.features.push_back(v);
    }
    data.true_labels.push_back(label);
    data.noisy_labels.push_back(label);
    data.noise_mask.push_back(0);
    data.hetero_mask.push_back(0);
    data.sample_noise_scale.push_back(0.0);
    data.splits.push_back(has_split ? split_from_string(fields[2]) : Split::kTrain);
  }
  data.num_classes = static_cast<std::size_t>(max_label + 1);
  return data;
}

SyntheticDataset import_features_csv(const std::string& path) {
  return parse_features_csv(read_file(path));
}

std::string features_to_csv(const SyntheticDataset& data) {
  std::string out = "id,label,split";
  for (std::size_t k = 0; k < data.feature_dim; ++k) out += ",f" + std::to_string(k);
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += std::to_string(i) + ',' + std::to_string(data.noisy_labels[i]) + ',' +
           to_string(data.splits[i]);
    for (double x : data.feature(i)) out += ',' + format_double(x);
    out += '\n';
  }
  return out;
}

}  // namespace hemb
