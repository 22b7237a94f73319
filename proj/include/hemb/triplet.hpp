#ifndef HEMB_TRIPLET_HPP_
#define HEMB_TRIPLET_HPP_

#include <cstddef>
#include <vector>

namespace hemb {

using Vector = std::vector<double>;
using Labels = std::vector<int>;

// Batch indices of an (anchor, positive, negative) tuple.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

}  // namespace hemb

#endif  // HEMB_TRIPLET_HPP_
