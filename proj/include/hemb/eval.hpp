#ifndef HEMB_EVAL_HPP_
#define HEMB_EVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hemb/triplet.hpp"

namespace hemb {

// Mean of precision at each relevant rank (no interpolation). Returns nullopt
// when the list holds no relevant item; such queries are excluded upstream.
std::optional<double> average_precision(std::span<const std::uint8_t> relevance);

struct QueryResult {
  std::size_t query_id = 0;
  int label = 0;
  double average_precision = 0.0;
  std::vector<std::uint8_t> top_k_hits;  // parallel to RetrievalReport::top_k
  double log_variance = 0.0;
};

struct RetrievalReport {
  std::vector<std::size_t> top_k;
  std::vector<QueryResult> per_query;
  double micro_map = 0.0;
  double macro_map = 0.0;
  std::map<int, double> per_class_map;
  std::map<std::size_t, double> top_k_accuracy;
  std::size_t excluded_queries = 0;  // no relevant gallery item / singleton class
};

// Embeddings with labels and (optionally) per-item log-variance and ids.
struct RetrievalSet {
  std::span<const Vector> embeddings;
  std::span<const int> labels;
  std::span<const double> log_variances;  // may be empty
  std::span<const std::size_t> ids;        // may be empty: ids are positions
};

// Ranks the gallery by ascending Euclidean distance for every query (ties by
// gallery position). A top-k hit means any same-class item in the first k.
RetrievalReport evaluate(const RetrievalSet& queries, const RetrievalSet& gallery,
                         std::span<const std::size_t> top_k, unsigned threads = 1);

// Every item queries all the others. Members of singleton classes are not
// used as queries and are counted in excluded_queries.
RetrievalReport leave_one_out_evaluate(const RetrievalSet& items,
                                       std::span<const std::size_t> top_k, unsigned threads = 1);

// Rebuilds micro/macro/per-class/top-k aggregates from per-query rows.
void summarize(RetrievalReport& report);

nlohmann::json report_to_json(const RetrievalReport& report);
std::string report_to_csv(const RetrievalReport& report);

}  // namespace hemb

#endif  // HEMB_EVAL_HPP_
