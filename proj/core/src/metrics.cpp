#include "pclreid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>

#include <json.hpp>

#include "pclreid/errors.hpp"
#include "pclreid/numerics.hpp"

namespace pclreid {

std::optional<double> average_precision(std::span<const bool> relevance) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (!relevance[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

namespace {

void check_set(const EvalSet& s, const char* name) {
  if (s.ids.size() != s.features.rows() || s.cameras.size() != s.features.rows()) {
    throw ShapeError(std::string("evaluate: ") + name + " ids/cameras do not match feature rows");
  }
}

}  // namespace

EvalReport evaluate(const EvalSet& query, const EvalSet& gallery, bool camera_filtering) {
  check_set(query, "query");
  check_set(gallery, "gallery");
  if (query.features.cols() != gallery.features.cols()) {
    throw ShapeError("evaluate: query and gallery feature widths differ");
  }
  EvalReport report;
  report.query_count = query.features.rows();
  report.gallery_count = gallery.features.rows();
  report.camera_filtering = camera_filtering;
  report.per_query_ap.resize(report.query_count);

  const Matrix sim = matmul_nt(query.features, gallery.features);
  std::vector<std::size_t> order(report.gallery_count);
  auto relevance = std::make_unique<bool[]>(report.gallery_count);
  std::size_t ranked = 0;
  std::size_t hit1 = 0, hit5 = 0, hit10 = 0;
  double ap_sum = 0.0;
  for (std::size_t q = 0; q < report.query_count; ++q) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return sim(q, a) > sim(q, b);
    });
    ranked = 0;
    std::size_t first_hit = std::numeric_limits<std::size_t>::max();
    for (std::size_t g : order) {
      const bool same_id = gallery.ids[g] == query.ids[q];
      if (camera_filtering && same_id && gallery.cameras[g] == query.cameras[q]) continue;
      if (same_id && first_hit == std::numeric_limits<std::size_t>::max()) {
        first_hit = ranked;
      }
      relevance[ranked++] = same_id;
    }
    const auto ap = average_precision(std::span<const bool>(relevance.get(), ranked));
    report.per_query_ap[q] = ap;
    if (!ap) {
      ++report.excluded_queries;
      continue;
    }
    ap_sum += *ap;
    if (first_hit < 1) ++hit1;
    if (first_hit < 5) ++hit5;
    if (first_hit < 10) ++hit10;
  }
  const std::size_t valid = report.valid_queries();
  if (valid > 0) {
    const double n = static_cast<double>(valid);
    report.mAP = ap_sum / n;
    report.rank1 = static_cast<double>(hit1) / n;
    report.rank5 = static_cast<double>(hit5) / n;
    report.rank10 = static_cast<double>(hit10) / n;
  }
  return report;
}

std::string format_report_tsv(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "mAP\t%.4f\nRank-1\t%.4f\nRank-5\t%.4f\nRank-10\t%.4f\nqueries\t%zu\n"
                "gallery\t%zu\nexcluded\t%zu\n",
                r.mAP, r.rank1, r.rank5, r.rank10, r.query_count, r.gallery_count,
                r.excluded_queries);
  return buf;
}

std::string format_report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mAP"] = r.mAP;
  j["rank1"] = r.rank1;
  j["rank5"] = r.rank5;
  j["rank10"] = r.rank10;
  j["query_count"] = r.query_count;
  j["gallery_count"] = r.gallery_count;
  j["excluded_queries"] = r.excluded_queries;
  j["camera_filtering"] = r.camera_filtering;
  auto& aps = j["per_query_ap"] = nlohmann::ordered_json::array();
  for (const auto& ap : r.per_query_ap) {
    if (ap) aps.push_back(*ap);
    else aps.push_back(nullptr);
  }
  return j.dump(2) + "\n";
}

FisherRatio fisher_ratio(const Matrix& features, std::span<const int> labels) {
  if (labels.size() != features.rows()) throw ShapeError("fisher_ratio: label count mismatch");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  if (members.size() < 2) throw UsageError("fisher_ratio: need at least two classes");

  const std::size_t d = features.cols();
  std::vector<double> global(d, 0.0);
  for (std::size_t i = 0; i < features.rows(); ++i) axpy(1.0, features.row(i), global);
  for (double& v : global) v /= static_cast<double>(features.rows());

  double between = 0.0;
  double within = 0.0;
  std::vector<double> mean(d);
  for (const auto& [label, rows] : members) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t i : rows) axpy(1.0, features.row(i), mean);
    for (double& v : mean) v /= static_cast<double>(rows.size());
    for (std::size_t k = 0; k < d; ++k) {
      between += static_cast<double>(rows.size()) * (mean[k] - global[k]) * (mean[k] - global[k]);
    }
    for (std::size_t i : rows) {
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = features(i, k) - mean[k];
        within += diff * diff;
      }
    }
  }
  if (within == 0.0) {
    if (between == 0.0) return {0.0, true};
    return {std::numeric_limits<double>::infinity(), false};
  }
  return {between / within, false};
}

Alignment centroid_alignment(const Matrix& id_vectors, const Matrix& features,
                             std::span<const int> labels) {
  if (labels.size() != features.rows()) throw ShapeError("centroid_alignment: label count mismatch");
  if (id_vectors.cols() != features.cols()) throw ShapeError("centroid_alignment: width mismatch");
  const std::size_t c = id_vectors.rows();
  Matrix sums(c, features.cols());
  std::vector<std::size_t> counts(c, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) continue;
    axpy(1.0, features.row(i), sums.row(static_cast<std::size_t>(labels[i])));
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  Alignment out;
  out.per_class.resize(c);
  for (std::size_t k = 0; k < c; ++k) {
    if (counts[k] == 0) {
      throw UsageError("centroid_alignment: class " + std::to_string(k) + " has no features");
    }
    const auto mean = l2_normalize(sums.row(k));
    const auto v = l2_normalize(id_vectors.row(k));
    out.per_class[k] = dot(v, mean);
    out.mean += out.per_class[k];
  }
  out.mean /= static_cast<double>(c);
  return out;
}

}  // namespace pclreid
