#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hublid/error.hpp"
#include "hublid/features.hpp"

namespace hublid {

enum class Metric { cosine, euclidean };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view name);

// Thrown when a cosine distance involves a zero-norm row.
class ZeroNormError : public Error {
 public:
  using Error::Error;
};

// cosine: 1 - x.y / (|x||y|), in [0, 2]. euclidean: |x - y|.
double pairwise_distance(std::span<const double> x, std::span<const double> y, Metric metric);

struct Neighbor {
  std::uint32_t index;
  double distance;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Exact kNN lists, ascending by (distance, index). Every list has
// min(k, n - 1) entries.
class NeighborGraph {
 public:
  NeighborGraph() = default;
  NeighborGraph(std::size_t k, Metric metric, std::size_t rows, std::vector<Neighbor> flat);

  std::size_t k() const noexcept { return k_; }
  Metric metric() const noexcept { return metric_; }
  std::size_t rows() const noexcept { return rows_; }
  // Entries per list: min(k, n - 1).
  std::size_t width() const noexcept { return width_; }

  std::span<const Neighbor> neighbors(std::size_t i) const { return {flat_.data() + i * width_, width_}; }

  // Same graph restricted to the first min(k, width) neighbors of each list.
  NeighborGraph truncated(std::size_t k) const;

  friend bool operator==(const NeighborGraph&, const NeighborGraph&) = default;

 private:
  std::size_t k_ = 0;
  Metric metric_ = Metric::cosine;
  std::size_t rows_ = 0;
  std::size_t width_ = 0;
  std::vector<Neighbor> flat_;
};

// Brute-force exact kNN. Ties on distance go to the smaller index.
// Requires n >= 2, k >= 1 and, for cosine, no zero rows.
NeighborGraph knn_graph(const FeatureMatrix& m, std::size_t k, Metric metric, unsigned threads = 1);

// CSV `query_id,rank,neighbor_id,distance`, rank starting at 1.
void write_graph_csv(const NeighborGraph& g, const std::vector<std::string>& ids, const std::filesystem::path& path);
NeighborGraph read_graph_csv(const std::filesystem::path& path, const std::vector<std::string>& ids, std::size_t k,
                             Metric metric);

}  // namespace hublid
