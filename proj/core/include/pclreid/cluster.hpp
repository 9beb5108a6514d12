#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pclreid/matrix.hpp"

namespace pclreid {

inline constexpr int kNoise = -1;

struct ClusterAssignment {
  std::vector<int> labels;  ///< cluster id in [0, cluster_count) or kNoise
  std::size_t cluster_count = 0;
  double eps = 0.0;
  std::size_t min_samples = 0;

  std::size_t noise_count() const;
};

/// DBSCAN over cosine distance d(a, b) = 1 - a.b on unit rows.
///
/// A point's neighborhood is every row (itself included) with d <= eps; core
/// points have at least min_samples neighbors. Points are scanned in index
/// order, each unvisited core point seeds a new cluster that is grown
/// breadth-first, and a border point joins the first cluster that reaches it.
/// Requires eps in (0, 2] and min_samples >= 1 (ConfigError otherwise).
ClusterAssignment cosine_dbscan(const Matrix& features, double eps, std::size_t min_samples);

/// Per-point core flags for the same neighborhood rule; exposed for diagnostics.
std::vector<bool> core_points(const Matrix& features, double eps, std::size_t min_samples);

struct Purity {
  double value = 0.0;
  bool all_noise = false;  ///< set when every point was noise; value is then 0
};

/// Sum over clusters of the majority ground-truth count, divided by the number
/// of non-noise points.
Purity cluster_purity(const ClusterAssignment& pred, std::span<const int> truth);

/// One line per sample: "index<TAB>cluster_id", noise written as -1.
std::string format_assignment(const ClusterAssignment& a);
void write_assignment(const std::filesystem::path& path, const ClusterAssignment& a);

}  // namespace pclreid
