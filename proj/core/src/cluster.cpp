#include "pclreid/cluster.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

#include "pclreid/errors.hpp"

namespace pclreid {

namespace {

void check_params(double eps, std::size_t min_samples) {
  if (!(eps > 0.0 && eps <= 2.0)) throw ConfigError("eps", "must lie in (0, 2]");
  if (min_samples < 1) throw ConfigError("min-samples", "must be >= 1");
}

std::vector<std::vector<std::size_t>> neighborhoods(const Matrix& features, double eps) {
  const std::size_t n = features.rows();
  const Matrix sim = matmul_nt(features, features);
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (1.0 - sim(i, j) <= eps) out[i].push_back(j);
    }
  }
  return out;
}

}  // namespace

std::size_t ClusterAssignment::noise_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kNoise));
}

std::vector<bool> core_points(const Matrix& features, double eps, std::size_t min_samples) {
  check_params(eps, min_samples);
  const auto nbrs = neighborhoods(features, eps);
  std::vector<bool> core(nbrs.size());
  for (std::size_t i = 0; i < nbrs.size(); ++i) core[i] = nbrs[i].size() >= min_samples;
  return core;
}

ClusterAssignment cosine_dbscan(const Matrix& features, double eps, std::size_t min_samples) {
  check_params(eps, min_samples);
  const std::size_t n = features.rows();
  const auto nbrs = neighborhoods(features, eps);
  ClusterAssignment out;
  out.labels.assign(n, kNoise);
  out.eps = eps;
  out.min_samples = min_samples;

  std::vector<bool> assigned(n, false);
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (assigned[seed] || nbrs[seed].size() < min_samples) continue;
    const int id = static_cast<int>(out.cluster_count++);
    std::deque<std::size_t> frontier{seed};
    assigned[seed] = true;
    out.labels[seed] = id;
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      if (nbrs[p].size() < min_samples) continue;  // border points do not expand
      for (std::size_t q : nbrs[p]) {
        if (assigned[q]) continue;
        assigned[q] = true;
        out.labels[q] = id;
        frontier.push_back(q);
      }
    }
  }
  return out;
}

Purity cluster_purity(const ClusterAssignment& pred, std::span<const int> truth) {
  if (pred.labels.size() != truth.size()) {
    throw ShapeError("cluster_purity: prediction and truth lengths differ");
  }
  std::vector<std::map<int, std::size_t>> counts(pred.cluster_count);
  std::size_t clustered = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int c = pred.labels[i];
    if (c == kNoise) continue;
    if (c < 0 || static_cast<std::size_t>(c) >= pred.cluster_count) {
      throw UsageError("cluster_purity: cluster id out of range");
    }
    ++counts[static_cast<std::size_t>(c)][truth[i]];
    ++clustered;
  }
  if (clustered == 0) return {0.0, true};
  std::size_t majority = 0;
  for (const auto& m : counts) {
    std::size_t best = 0;
    for (const auto& [label, count] : m) best = std::max(best, count);
    majority += best;
  }
  return {static_cast<double>(majority) / static_cast<double>(clustered), false};
}

std::string format_assignment(const ClusterAssignment& a) {
  std::ostringstream os;
  for (std::size_t i = 0; i < a.labels.size(); ++i) os << i << '\t' << a.labels[i] << '\n';
  return os.str();
}

void write_assignment(const std::filesystem::path& path, const ClusterAssignment& a) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << format_assignment(a);
}

}  // namespace pclreid
