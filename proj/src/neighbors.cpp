#include "hublid/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "hublid/parallel.hpp"
#include "hublid/table_io.hpp"

namespace hublid {

namespace {

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) s += x[c] * y[c];
  return s;
}

double euclidean(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) {
    const double diff = x[c] - y[c];
    s += diff * diff;
  }
  return std::sqrt(s);
}

// Shared by pairwise_distance and knn_graph so both produce identical bits.
double cosine_from(double xy, double norm_x, double norm_y) {
  return std::clamp(1.0 - xy / (norm_x * norm_y), 0.0, 2.0);
}

bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

}  // namespace

std::string_view to_string(Metric m) { return m == Metric::cosine ? "cosine" : "euclidean"; }

Metric parse_metric(std::string_view name) {
  if (name == "cosine") return Metric::cosine;
  if (name == "euclidean") return Metric::euclidean;
  throw Error("unknown metric '" + std::string(name) + "' (expected cosine or euclidean)");
}

double pairwise_distance(std::span<const double> x, std::span<const double> y, Metric metric) {
  if (x.size() != y.size()) throw Error("dimension mismatch in pairwise_distance");
  if (metric == Metric::euclidean) return euclidean(x, y);
  const double nx = std::sqrt(dot(x, x));
  const double ny = std::sqrt(dot(y, y));
  if (nx == 0.0 || ny == 0.0) throw ZeroNormError("cosine distance undefined for a zero-norm row");
  return cosine_from(dot(x, y), nx, ny);
}

NeighborGraph::NeighborGraph(std::size_t k, Metric metric, std::size_t rows, std::vector<Neighbor> flat)
    : k_(k), metric_(metric), rows_(rows), width_(rows == 0 ? 0 : std::min(k, rows - 1)), flat_(std::move(flat)) {
  if (flat_.size() != rows_ * width_) throw Error("neighbor graph storage does not match rows * min(k, n - 1)");
}

NeighborGraph NeighborGraph::truncated(std::size_t k) const {
  const std::size_t w = std::min(k, width_);
  std::vector<Neighbor> flat;
  flat.reserve(rows_ * w);
  for (std::size_t i = 0; i < rows_; ++i) {
    const auto list = neighbors(i);
    flat.insert(flat.end(), list.begin(), list.begin() + static_cast<std::ptrdiff_t>(w));
  }
  return NeighborGraph(k, metric_, rows_, std::move(flat));
}

NeighborGraph knn_graph(const FeatureMatrix& m, std::size_t k, Metric metric, unsigned threads) {
  const std::size_t n = m.rows();
  if (n < 2) throw Error("knn_graph needs at least 2 fragments");
  if (k < 1) throw Error("knn_graph needs k >= 1");

  std::vector<double> norms;
  if (metric == Metric::cosine) {
    norms.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      norms[i] = std::sqrt(dot(m.row(i), m.row(i)));
      if (norms[i] == 0.0) throw ZeroNormError("fragment '" + m.id(i) + "' has a zero-norm feature row; cosine distance is undefined");
    }
  }

  const std::size_t width = std::min(k, n - 1);
  std::vector<Neighbor> flat(n * width);
  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<Neighbor> candidates;
    candidates.reserve(n - 1);
    const auto xi = m.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dist =
          metric == Metric::cosine ? cosine_from(dot(xi, m.row(j)), norms[i], norms[j]) : euclidean(xi, m.row(j));
      candidates.push_back({static_cast<std::uint32_t>(j), dist});
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(width), candidates.end(),
                      neighbor_less);
    std::copy_n(candidates.begin(), width, flat.begin() + static_cast<std::ptrdiff_t>(i * width));
  });
  return NeighborGraph(k, metric, n, std::move(flat));
}

void write_graph_csv(const NeighborGraph& g, const std::vector<std::string>& ids, const std::filesystem::path& path) {
  if (ids.size() != g.rows()) throw Error("id list does not match graph size");
  std::string out;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    std::size_t rank = 1;
    for (const auto& nb : g.neighbors(i)) {
      out += ids[i];
      out += ',';
      out += std::to_string(rank++);
      out += ',';
      out += ids[nb.index];
      out += ',';
      out += table::format_real(nb.distance);
      out += '\n';
    }
  }
  table::write_file(path, out);
}

NeighborGraph read_graph_csv(const std::filesystem::path& path, const std::vector<std::string>& ids, std::size_t k,
                             Metric metric) {
  const std::string source = path.string();
  const std::size_t n = ids.size();
  if (n < 2) throw Error("graph needs at least 2 fragments");
  std::unordered_map<std::string_view, std::uint32_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(ids[i], static_cast<std::uint32_t>(i));

  const std::size_t width = std::min(k, n - 1);
  std::vector<Neighbor> flat(n * width);
  std::vector<std::size_t> filled(n, 0);
  auto lookup = [&](std::string_view id, std::size_t row) {
    const auto it = index.find(id);
    if (it == index.end()) throw ParseError(source, row, "unknown fragment id '" + std::string(id) + "'");
    return it->second;
  };

  table::for_each_row(path, [&](std::size_t row, const std::vector<std::string_view>& f) {
    if (f.size() != 4) throw ParseError(source, row, "expected query_id,rank,neighbor_id,distance");
    const auto q = lookup(f[0], row);
    const auto rank = table::parse_int(f[1], source, row);
    const auto nb = lookup(f[2], row);
    const double dist = table::parse_real(f[3], source, row);
    if (rank < 1 || static_cast<std::size_t>(rank) > width) return;  // cached at larger k
    if (static_cast<std::size_t>(rank) != filled[q] + 1) throw ParseError(source, row, "ranks out of order");
    if (nb == q) throw ParseError(source, row, "fragment listed as its own neighbor");
    flat[q * width + filled[q]++] = {nb, dist};
  });
  for (std::size_t i = 0; i < n; ++i)
    if (filled[i] != width)
      throw Error(source + ": fragment '" + ids[i] + "' has " + std::to_string(filled[i]) + " neighbors, expected " +
                  std::to_string(width));
  return NeighborGraph(k, metric, n, std::move(flat));
}

}  // namespace hublid
