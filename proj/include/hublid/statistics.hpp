#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hublid/features.hpp"
#include "hublid/neighbors.hpp"

namespace hublid {

enum class Category { hub, anti_hub, normal };

std::string_view to_string(Category c);
Category parse_category(std::string_view name);

// hub iff N_k > k, anti_hub iff N_k == 0, normal otherwise.
constexpr Category categorize(std::size_t score, std::size_t k) {
  if (score > k) return Category::hub;
  if (score == 0) return Category::anti_hub;
  return Category::normal;
}

struct HubnessProfile {
  std::size_t k = 0;
  std::vector<std::size_t> scores;
  std::vector<Category> categories;
};

struct SkewnessReport {
  double s_nk = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  bool hubness_exists = false;  // s_nk > 1
};

// Upper bound on reported LID. Estimates that would exceed it (the
// all-distances-equal case included) are capped and flagged degenerate.
inline constexpr double kLidCap = 1e6;

struct LidProfile {
  std::size_t n_nbr = 0;
  std::vector<double> lids;
  std::vector<bool> degenerate;
};

struct DiversityProfile {
  std::size_t m = 0;
  std::vector<double> values;
};

// N_k counts over the first min(k, width) entries of each list.
// k = 0 means the graph's own k.
HubnessProfile hubness_scores(const NeighborGraph& g, std::size_t k = 0);

// Third standardized moment with population (divide-by-n) moments; 0 when
// the scores are constant.
SkewnessReport skewness(std::span<const std::size_t> scores);
inline SkewnessReport skewness(const HubnessProfile& p) { return skewness(p.scores); }

struct LidEstimate {
  double lid;
  bool degenerate;
};

// MLE from ascending neighbor distances strictly inside the radius omega:
// LID = -(mean_i ln(l_i / omega))^-1. Non-positive distances are clamped
// to the smallest positive normal double.
LidEstimate lid_from_distances(std::span<const double> distances, double omega);

// Uses the first n_nbr distances of each list, with omega the (n_nbr+1)-th.
LidProfile lid_mle(const NeighborGraph& g, std::size_t n_nbr);

// Mean metric distance over all unordered pairs among each fragment's
// first min(m_nbr, width) neighbors; 0 with fewer than two.
DiversityProfile diversity(const FeatureMatrix& m, const NeighborGraph& g, std::size_t m_nbr, unsigned threads = 1);

// Mean of the non-degenerate LIDs. Throws when every entry is degenerate.
double global_id(const LidProfile& p);

// Per-fragment statistics as persisted by `analyze`.
struct StatProfile {
  std::vector<std::string> ids;
  HubnessProfile hubness;
  LidProfile lid;
  DiversityProfile diversity;

  std::size_t size() const noexcept { return ids.size(); }
};

// CSV `id,N_k,category,lid,degenerate,diversity` with that header row.
// The reader leaves hubness.k, lid.n_nbr and diversity.m at 0; those live
// in the JSON summary.
void write_profile_csv(const StatProfile& p, const std::filesystem::path& path);
StatProfile read_profile_csv(const std::filesystem::path& path);

}  // namespace hublid
