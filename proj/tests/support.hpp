#ifndef HEMB_TESTS_SUPPORT_HPP_
#define HEMB_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "hemb/error.hpp"
#include "hemb/losses.hpp"
#include "hemb/mining.hpp"
#include "hemb/rng.hpp"

namespace hemb::test {

// Kind of the hemb::Error thrown by f, or nullopt when nothing is thrown.
template <typename F>
std::optional<ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  Vector v(n);
  for (double& x : v) x = scale * (2.0 * rng.uniform01() - 1.0);
  return v;
}

inline EmbeddingOutput random_output(Rng& rng, std::size_t d, double s_range = 2.0) {
  return {random_vector(rng, d), s_range * (2.0 * rng.uniform01() - 1.0)};
}

// Distance in units in the last place between two finite doubles.
inline std::uint64_t ulp_distance(double a, double b) {
  if (a == b) return 0;
  auto key = [](double x) {
    std::int64_t i;
    std::memcpy(&i, &x, sizeof i);
    return i < 0 ? std::numeric_limits<std::int64_t>::min() - i : i;
  };
  const std::int64_t ka = key(a);
  const std::int64_t kb = key(b);
  return ka > kb ? static_cast<std::uint64_t>(ka - kb) : static_cast<std::uint64_t>(kb - ka);
}

inline long double naive_distance(const Vector& u, const Vector& v) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const long double d = static_cast<long double>(u[i]) - static_cast<long double>(v[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Precision at every hit, averaged over hits, by direct counting.
inline double ap_oracle(const std::vector<std::uint8_t>& flags) {
  long double total = 0.0L;
  int hits = 0;
  for (std::size_t r = 0; r < flags.size(); ++r) {
    if (!flags[r]) continue;
    int above = 0;
    for (std::size_t q = 0; q <= r; ++q) above += flags[q] ? 1 : 0;
    total += static_cast<long double>(above) / static_cast<long double>(r + 1);
    ++hits;
  }
  return static_cast<double>(total / hits);
}

// Scores every (a, p, n) combination: in-band negatives rank by (distance,
// index); otherwise the farthest negative by (-distance, index).
inline MiningResult semi_hard_oracle(const DistanceMatrix& d, const std::vector<int>& labels,
                                     double margin) {
  MiningResult out;
  const std::size_t n = labels.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (a == p || labels[a] != labels[p]) continue;
      bool found = false;
      std::tuple<int, double, std::size_t> best{};
      for (std::size_t c = 0; c < n; ++c) {
        if (labels[c] == labels[a]) continue;
        const bool band = d(a, p) < d(a, c) && d(a, c) < d(a, p) + margin;
        const std::tuple<int, double, std::size_t> key =
            band ? std::make_tuple(0, d(a, c), c) : std::make_tuple(1, -d(a, c), c);
        if (!found || key < best) best = key;
        found = true;
      }
      if (!found) {
        ++out.skipped;
        continue;
      }
      out.triplets.push_back({a, p, std::get<2>(best)});
    }
  }
  return out;
}

inline MiningResult batch_hard_oracle(const DistanceMatrix& d, const std::vector<int>& labels) {
  MiningResult out;
  const std::size_t n = labels.size();
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::pair<double, std::size_t>> pos;
    std::vector<std::pair<double, std::size_t>> neg;
    for (std::size_t c = 0; c < n; ++c) {
      if (c == a) continue;
      if (labels[c] == labels[a]) {
        pos.emplace_back(-d(a, c), c);
      } else {
        neg.emplace_back(d(a, c), c);
      }
    }
    if (pos.empty() || neg.empty()) {
      ++out.skipped;
      continue;
    }
    out.triplets.push_back({a, std::min_element(pos.begin(), pos.end())->second,
                            std::min_element(neg.begin(), neg.end())->second});
  }
  return out;
}

// Random batch whose embeddings sit on a coarse integer grid, so distance ties
// are common.
inline std::pair<std::vector<Vector>, std::vector<int>> random_grid_batch(Rng& rng,
                                                                          std::size_t max_size) {
  const std::size_t n = 1 + rng.uniform_index(max_size);
  const std::size_t dim = 1 + rng.uniform_index(3);
  const std::size_t classes = 1 + rng.uniform_index(std::min<std::size_t>(n, 6));
  const bool coarse = rng.uniform01() < 0.5;
  std::vector<Vector> emb(n, Vector(dim));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(rng.uniform_index(classes));
    for (double& x : emb[i]) {
      x = coarse ? static_cast<double>(rng.uniform_index(3)) : 2.0 * rng.uniform01() - 1.0;
    }
  }
  return {emb, labels};
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(static_cast<std::uint64_t>(std::hash<std::string>{}(tag)) ^
            static_cast<std::uint64_t>(
                std::chrono::steady_clock::now().time_since_epoch().count()));
    path_ = std::filesystem::temp_directory_path() /
            ("hemb_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007ULL));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace hemb::test

#endif  // HEMB_TESTS_SUPPORT_HPP_
