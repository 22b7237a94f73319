#include "hemb/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <thread>

#include "compensated_sum.hpp"
#include "hemb/error.hpp"

namespace hemb {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void check_set(const RetrievalSet& set, const char* what) {
  if (set.embeddings.size() != set.labels.size()) {
    fail(ErrorKind::kShape, std::string(what) + ": embeddings and labels differ in length");
  }
  if (!set.log_variances.empty() && set.log_variances.size() != set.labels.size()) {
    fail(ErrorKind::kShape, std::string(what) + ": log-variances and labels differ in length");
  }
  if (!set.ids.empty() && set.ids.size() != set.labels.size()) {
    fail(ErrorKind::kShape, std::string(what) + ": ids and labels differ in length");
  }
}

double distance(const Vector& u, const Vector& v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; results are written by
// index so the output does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// skip_self: query i is gallery item i and must not retrieve itself.
RetrievalReport run(const RetrievalSet& queries, const RetrievalSet& gallery,
                    std::span<const std::size_t> top_k, unsigned threads, bool skip_self,
                    std::span<const std::uint8_t> use_as_query) {
  check_set(queries, "queries");
  check_set(gallery, "gallery");
  if (queries.embeddings.empty() || gallery.embeddings.empty()) {
    fail(ErrorKind::kShape, "evaluate: empty query or gallery set");
  }
  const std::size_t dim = queries.embeddings[0].size();
  for (const auto& e : queries.embeddings) {
    if (e.size() != dim) fail(ErrorKind::kShape, "evaluate: query embedding dimension mismatch");
  }
  for (const auto& e : gallery.embeddings) {
    if (e.size() != dim) fail(ErrorKind::kShape, "evaluate: gallery embedding dimension mismatch");
  }
  for (std::size_t k : top_k) {
    if (k == 0) fail(ErrorKind::kConfig, "top-k values must be positive");
  }

  const std::size_t nq = queries.embeddings.size();
  const std::size_t ng = gallery.embeddings.size();
  std::vector<std::optional<QueryResult>> rows(nq);

  parallel_for(nq, threads, [&](std::size_t q) {
    if (!use_as_query.empty() && !use_as_query[q]) return;
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(ng);
    for (std::size_t g = 0; g < ng; ++g) {
      if (skip_self && g == q) continue;
      ranked.emplace_back(distance(queries.embeddings[q], gallery.embeddings[g]), g);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<std::uint8_t> relevance(ranked.size());
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      relevance[r] = gallery.labels[ranked[r].second] == queries.labels[q] ? 1 : 0;
    }
    const auto ap = average_precision(relevance);
    if (!ap) return;
    QueryResult row;
    row.query_id = queries.ids.empty() ? q : queries.ids[q];
    row.label = queries.labels[q];
    row.average_precision = *ap;
    row.log_variance = queries.log_variances.empty() ? 0.0 : queries.log_variances[q];
    const auto first_hit = static_cast<std::size_t>(
        std::find(relevance.begin(), relevance.end(), std::uint8_t{1}) - relevance.begin());
    for (std::size_t k : top_k) row.top_k_hits.push_back(first_hit < k ? 1 : 0);
    rows[q] = std::move(row);
  });

  RetrievalReport report;
  report.top_k.assign(top_k.begin(), top_k.end());
  for (auto& row : rows) {
    if (row) {
      report.per_query.push_back(std::move(*row));
    } else {
      ++report.excluded_queries;
    }
  }
  summarize(report);
  return report;
}

}  // namespace

std::optional<double> average_precision(std::span<const std::uint8_t> relevance) {
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t r = 0; r < relevance.size(); ++r) {
    if (!relevance[r]) continue;
    ++hits;
    acc += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) return std::nullopt;
  return acc / static_cast<double>(hits);
}

void summarize(RetrievalReport& report) {
  report.per_class_map.clear();
  report.top_k_accuracy.clear();
  report.micro_map = 0.0;
  report.macro_map = 0.0;
  if (report.per_query.empty()) return;

  detail::CompensatedSum micro;
  std::map<int, std::pair<detail::CompensatedSum, std::size_t>> per_class;
  std::vector<std::size_t> hits(report.top_k.size(), 0);
  for (const QueryResult& row : report.per_query) {
    micro.add(row.average_precision);
    auto& slot = per_class[row.label];
    slot.first.add(row.average_precision);
    ++slot.second;
    for (std::size_t j = 0; j < hits.size(); ++j) hits[j] += row.top_k_hits[j];
  }
  const double n = static_cast<double>(report.per_query.size());
  report.micro_map = micro.value() / n;
  detail::CompensatedSum macro;
  for (const auto& [label, slot] : per_class) {
    const double m = slot.first.value() / static_cast<double>(slot.second);
    report.per_class_map[label] = m;
    macro.add(m);
  }
  report.macro_map = macro.value() / static_cast<double>(per_class.size());
  for (std::size_t j = 0; j < hits.size(); ++j) {
    report.top_k_accuracy[report.top_k[j]] = static_cast<double>(hits[j]) / n;
  }
}

RetrievalReport evaluate(const RetrievalSet& queries, const RetrievalSet& gallery,
                         std::span<const std::size_t> top_k, unsigned threads) {
  return run(queries, gallery, top_k, threads, false, {});
}

RetrievalReport leave_one_out_evaluate(const RetrievalSet& items,
                                       std::span<const std::size_t> top_k, unsigned threads) {
  check_set(items, "items");
  if (items.labels.size() < 2) {
    fail(ErrorKind::kInsufficientData, "leave-one-out evaluation needs at least 2 items");
  }
  std::map<int, std::size_t> class_size;
  for (int label : items.labels) ++class_size[label];
  std::vector<std::uint8_t> use(items.labels.size());
  bool any = false;
  for (std::size_t i = 0; i < use.size(); ++i) {
    use[i] = class_size[items.labels[i]] >= 2 ? 1 : 0;
    any = any || use[i];
  }
  if (!any) fail(ErrorKind::kEmptyReport, "leave-one-out evaluation: every class is a singleton");
  return run(items, items, top_k, threads, true, use);
}

nlohmann::json report_to_json(const RetrievalReport& report) {
  nlohmann::json j;
  j["micro_map"] = report.micro_map;
  j["macro_map"] = report.macro_map;
  j["num_queries"] = report.per_query.size();
  j["excluded_queries"] = report.excluded_queries;
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [label, m] : report.per_class_map) per_class[std::to_string(label)] = m;
  j["per_class_map"] = per_class;
  nlohmann::json topk = nlohmann::json::object();
  for (const auto& [k, acc] : report.top_k_accuracy) topk[std::to_string(k)] = acc;
  j["top_k_accuracy"] = topk;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.per_query) {
    nlohmann::json r;
    r["query_id"] = row.query_id;
    r["label"] = row.label;
    r["ap"] = row.average_precision;
    r["log_variance"] = row.log_variance;
    nlohmann::json hits = nlohmann::json::object();
    for (std::size_t j2 = 0; j2 < report.top_k.size(); ++j2) {
      hits[std::to_string(report.top_k[j2])] = row.top_k_hits[j2] != 0;
    }
    r["top_k_hits"] = hits;
    rows.push_back(std::move(r));
  }
  j["per_query"] = std::move(rows);
  return j;
}

std::string report_to_csv(const RetrievalReport& report) {
  std::string out = "query_id,label,ap,log_variance";
  for (std::size_t k : report.top_k) out += ",hit@" + std::to_string(k);
  out += '\n';
  for (const auto& row : report.per_query) {
    out += std::to_string(row.query_id) + ',' + std::to_string(row.label) + ',' +
           format_double(row.average_precision) + ',' + format_double(row.log_variance);
    for (auto h : row.top_k_hits) out += h ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

}  // namespace hemb
