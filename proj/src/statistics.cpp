#include "hublid/statistics.hpp"

#include <cmath>
#include <limits>

#include "hublid/error.hpp"
#include "hublid/parallel.hpp"
#include "hublid/table_io.hpp"

namespace hublid {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::hub: return "hub";
    case Category::anti_hub: return "anti_hub";
    case Category::normal: return "normal";
  }
  return "normal";
}

Category parse_category(std::string_view name) {
  if (name == "hub") return Category::hub;
  if (name == "anti_hub") return Category::anti_hub;
  if (name == "normal") return Category::normal;
  throw Error("unknown category '" + std::string(name) + "'");
}

HubnessProfile hubness_scores(const NeighborGraph& g, std::size_t k) {
  if (k == 0) k = g.k();
  const std::size_t w = std::min(k, g.width());
  HubnessProfile p{k, std::vector<std::size_t>(g.rows(), 0), {}};
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const auto list = g.neighbors(i);
    for (std::size_t r = 0; r < w; ++r) ++p.scores[list[r].index];
  }
  p.categories.reserve(g.rows());
  for (auto s : p.scores) p.categories.push_back(categorize(s, k));
  return p;
}

SkewnessReport skewness(std::span<const std::size_t> scores) {
  if (scores.size() < 2) throw Error("skewness needs at least 2 scores");
  const double n = static_cast<double>(scores.size());
  double mean = 0.0;
  for (auto s : scores) mean += static_cast<double>(s);
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (auto s : scores) {
    const double c = static_cast<double>(s) - mean;
    m2 += c * c;
    m3 += c * c * c;
  }
  m2 /= n;
  m3 /= n;
  SkewnessReport r;
  r.mean = mean;
  r.stddev = std::sqrt(m2);
  r.s_nk = m2 > 0.0 ? m3 / (m2 * r.stddev) : 0.0;
  r.hubness_exists = r.s_nk > 1.0;
  return r;
}

LidEstimate lid_from_distances(std::span<const double> distances, double omega) {
  if (distances.empty()) throw Error("LID needs at least one neighbor distance");
  constexpr double tiny = std::numeric_limits<double>::min();
  const double w = omega > 0.0 ? omega : tiny;
  double sum = 0.0;
  for (double l : distances) sum += std::log((l > 0.0 ? l : tiny) / w);
  const double mean = sum / static_cast<double>(distances.size());
  if (!(mean < 0.0)) return {kLidCap, true};
  const double lid = -1.0 / mean;
  if (lid > kLidCap) return {kLidCap, true};
  return {lid, false};
}

LidProfile lid_mle(const NeighborGraph& g, std::size_t n_nbr) {
  if (n_nbr < 1) throw Error("LID neighborhood size must be >= 1");
  if (g.width() < n_nbr + 1)
    throw Error("LID with n_nbr=" + std::to_string(n_nbr) + " needs " + std::to_string(n_nbr + 1) +
                " neighbors per fragment, graph has " + std::to_string(g.width()));
  LidProfile p{n_nbr, std::vector<double>(g.rows()), std::vector<bool>(g.rows())};
  std::vector<double> dists(n_nbr);
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const auto list = g.neighbors(i);
    for (std::size_t r = 0; r < n_nbr; ++r) dists[r] = list[r].distance;
    const auto est = lid_from_distances(dists, list[n_nbr].distance);
    p.lids[i] = est.lid;
    p.degenerate[i] = est.degenerate;
  }
  return p;
}

DiversityProfile diversity(const FeatureMatrix& m, const NeighborGraph& g, std::size_t m_nbr, unsigned threads) {
  if (m_nbr < 1) throw Error("diversity neighborhood size must be >= 1");
  if (m.rows() != g.rows()) throw Error("feature matrix and neighbor graph disagree on fragment count");
  const std::size_t w = std::min(m_nbr, g.width());
  DiversityProfile p{m_nbr, std::vector<double>(g.rows(), 0.0)};
  if (w < 2) return p;
  const double pairs = static_cast<double>(w * (w - 1) / 2);
  parallel_for(g.rows(), threads, [&](std::size_t i) {
    const auto list = g.neighbors(i);
    double sum = 0.0;
    for (std::size_t a = 0; a < w; ++a)
      for (std::size_t b = a + 1; b < w; ++b)
        sum += pairwise_distance(m.row(list[a].index), m.row(list[b].index), g.metric());
    p.values[i] = sum / pairs;
  });
  return p;
}

double global_id(const LidProfile& p) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < p.lids.size(); ++i) {
    if (p.degenerate[i]) continue;
    sum += p.lids[i];
    ++count;
  }
  if (count == 0) throw Error("global intrinsic dimension undefined: every LID estimate is degenerate");
  return sum / static_cast<double>(count);
}

void write_profile_csv(const StatProfile& p, const std::filesystem::path& path) {
  const std::size_t n = p.size();
  if (p.hubness.scores.size() != n || p.lid.lids.size() != n || p.diversity.values.size() != n)
    throw Error("profile columns have inconsistent lengths");
  std::string out = "id,N_k,category,lid,degenerate,diversity\n";
  for (std::size_t i = 0; i < n; ++i) {
    out += p.ids[i];
    out += ',';
    out += std::to_string(p.hubness.scores[i]);
    out += ',';
    out += to_string(p.hubness.categories[i]);
    out += ',';
    out += table::format_real(p.lid.lids[i]);
    out += p.lid.degenerate[i] ? ",1," : ",0,";
    out += table::format_real(p.diversity.values[i]);
    out += '\n';
  }
  table::write_file(path, out);
}

StatProfile read_profile_csv(const std::filesystem::path& path) {
  const std::string source = path.string();
  StatProfile p;
  table::for_each_row(path, [&](std::size_t row, const std::vector<std::string_view>& f) {
    if (f.size() != 6) throw ParseError(source, row, "expected id,N_k,category,lid,degenerate,diversity");
    if (row == 1 && f[0] == "id") return;
    const auto score = table::parse_int(f[1], source, row);
    if (score < 0) throw ParseError(source, row, "negative hubness score");
    const auto degenerate = table::parse_int(f[4], source, row);
    if (degenerate != 0 && degenerate != 1) throw ParseError(source, row, "degenerate flag must be 0 or 1");
    p.ids.emplace_back(f[0]);
    p.hubness.scores.push_back(static_cast<std::size_t>(score));
    try {
      p.hubness.categories.push_back(parse_category(f[2]));
    } catch (const Error& e) {
      throw ParseError(source, row, e.what());
    }
    p.lid.lids.push_back(table::parse_real(f[3], source, row));
    p.lid.degenerate.push_back(degenerate == 1);
    p.diversity.values.push_back(table::parse_real(f[5], source, row));
  });
  if (p.ids.empty()) throw ParseError(source, 0, "empty profile file");
  return p;
}

}  // namespace hublid
