#include "hemb/sampler.hpp"

#include <map>
#include <set>
#include <string>

#include "hemb/error.hpp"

namespace hemb {

namespace {

std::map<int, std::vector<std::size_t>> group_by_class(std::span<const int> labels) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  return groups;
}

void append_class(BatchPlan& plan, int label, const std::vector<std::size_t>& members,
                  std::size_t k, Rng& rng) {
  for (std::size_t pick : rng.sample_without_replacement(members.size(), k)) {
    plan.indices.push_back(members[pick]);
    plan.labels.push_back(label);
  }
}

}  // namespace

BatchPlan pk_batch(std::span<const int> labels, std::size_t classes,
                   std::size_t samples_per_class, Rng& rng) {
  if (classes == 0 || samples_per_class == 0) {
    fail(ErrorKind::kConfig, "pk_batch: P and K must be positive");
  }
  const auto groups = group_by_class(labels);
  std::vector<const std::pair<const int, std::vector<std::size_t>>*> eligible;
  const std::pair<const int, std::vector<std::size_t>>* deficient = nullptr;
  for (const auto& entry : groups) {
    if (entry.second.size() >= samples_per_class) {
      eligible.push_back(&entry);
    } else if (deficient == nullptr) {
      deficient = &entry;
    }
  }
  if (eligible.size() < classes) {
    std::string msg = "pk_batch: need " + std::to_string(classes) + " classes with >= " +
                      std::to_string(samples_per_class) + " samples, found " +
                      std::to_string(eligible.size());
    if (deficient != nullptr) {
      msg += "; class " + std::to_string(deficient->first) + " has only " +
             std::to_string(deficient->second.size());
    }
    fail(ErrorKind::kCapacity, msg);
  }
  BatchPlan plan;
  plan.classes = classes;
  plan.samples_per_class = samples_per_class;
  for (std::size_t pick : rng.sample_without_replacement(eligible.size(), classes)) {
    append_class(plan, eligible[pick]->first, eligible[pick]->second, samples_per_class, rng);
  }
  return plan;
}

BatchPlan class_balanced_batch(std::span<const int> labels, std::size_t samples_per_class,
                               Rng& rng) {
  if (samples_per_class == 0) fail(ErrorKind::kConfig, "class_balanced_batch: k must be positive");
  const auto groups = group_by_class(labels);
  for (const auto& [label, members] : groups) {
    if (members.size() < samples_per_class) {
      fail(ErrorKind::kCapacity, "class_balanced_batch: class " + std::to_string(label) +
                                     " has " + std::to_string(members.size()) +
                                     " samples, need " + std::to_string(samples_per_class));
    }
  }
  BatchPlan plan;
  plan.classes = groups.size();
  plan.samples_per_class = samples_per_class;
  for (const auto& [label, members] : groups) {
    append_class(plan, label, members, samples_per_class, rng);
  }
  return plan;
}

void validate_batch(const BatchPlan& plan) {
  if (plan.indices.size() != plan.labels.size()) {
    fail(ErrorKind::kConstraint, "batch plan: indices and labels differ in length");
  }
  std::map<int, std::size_t> counts;
  for (int label : plan.labels) ++counts[label];
  if (counts.size() != plan.classes) {
    fail(ErrorKind::kConstraint, "batch plan: expected " + std::to_string(plan.classes) +
                                     " labels, found " + std::to_string(counts.size()));
  }
  for (const auto& [label, count] : counts) {
    if (count != plan.samples_per_class) {
      fail(ErrorKind::kConstraint, "batch plan: class " + std::to_string(label) + " has " +
                                       std::to_string(count) + " samples");
    }
  }
  std::set<std::size_t> unique(plan.indices.begin(), plan.indices.end());
  if (unique.size() != plan.indices.size()) {
    fail(ErrorKind::kConstraint, "batch plan: repeated dataset index");
  }
}

}  // namespace hemb
