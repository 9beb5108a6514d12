#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pclreid/matrix.hpp"

namespace pclreid {

/// Non-interpolated average precision of a ranked relevance list:
/// (1/R) * sum over relevant positions k of precision@k.
/// Empty optional when the list holds no relevant item.
std::optional<double> average_precision(std::span<const bool> relevance);

/// Features plus identity and camera per row; the query or gallery side of an evaluation.
struct EvalSet {
  Matrix features;  ///< unit rows
  std::vector<int> ids;
  std::vector<int> cameras;
};

struct EvalReport {
  double mAP = 0.0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  /// One entry per query; empty when the query had no valid relevant gallery item.
  std::vector<std::optional<double>> per_query_ap;
  std::size_t query_count = 0;
  std::size_t gallery_count = 0;
  std::size_t excluded_queries = 0;
  bool camera_filtering = true;

  std::size_t valid_queries() const noexcept { return query_count - excluded_queries; }
};

/// Retrieval evaluation. For every query the gallery is ranked by cosine
/// similarity (descending, ties by gallery index). With camera filtering,
/// gallery items sharing both the query's identity and camera are dropped
/// first. mAP and CMC average over queries that keep at least one relevant
/// item; the rest are counted in excluded_queries.
EvalReport evaluate(const EvalSet& query, const EvalSet& gallery, bool camera_filtering);

/// Tab-separated "key<TAB>value" lines, 4 decimals for the metric values.
std::string format_report_tsv(const EvalReport& r);
/// JSON with a fixed key order.
std::string format_report_json(const EvalReport& r);

struct FisherRatio {
  double value = 0.0;
  /// Set for the 0/0 case (every point identical); value is then 0.
  bool degenerate = false;
};

/// trace(between-class scatter) / trace(within-class scatter). Returns +inf when
/// the within-class scatter is zero but the between-class scatter is not.
FisherRatio fisher_ratio(const Matrix& features, std::span<const int> labels);

struct Alignment {
  std::vector<double> per_class;
  double mean = 0.0;
};

/// cos(id_vectors[c], normalized mean of features labeled c) for every row c of
/// id_vectors. UsageError when some class has no feature rows.
Alignment centroid_alignment(const Matrix& id_vectors, const Matrix& features,
                             std::span<const int> labels);

}  // namespace pclreid
