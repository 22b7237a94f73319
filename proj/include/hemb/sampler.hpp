#ifndef HEMB_SAMPLER_HPP_
#define HEMB_SAMPLER_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "hemb/rng.hpp"
#include "hemb/triplet.hpp"

namespace hemb {

// Dataset indices drawn for one mini-batch, grouped by class.
struct BatchPlan {
  std::vector<std::size_t> indices;
  Labels labels;  // parallel to indices
  std::size_t classes = 0;            // P
  std::size_t samples_per_class = 0;  // K
};

// P classes uniformly without replacement, then K samples of each without
// replacement. Only classes holding at least K samples are eligible.
BatchPlan pk_batch(std::span<const int> labels, std::size_t classes,
                   std::size_t samples_per_class, Rng& rng);

// Every class present with exactly k samples.
BatchPlan class_balanced_batch(std::span<const int> labels, std::size_t samples_per_class,
                               Rng& rng);

// Throws if a plan breaks the P distinct labels x K indices layout.
void validate_batch(const BatchPlan& plan);

}  // namespace hemb

#endif  // HEMB_SAMPLER_HPP_
