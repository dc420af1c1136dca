#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hublid/statistics.hpp"

namespace hublid {

struct Ranking {
  std::string query_id;
  std::vector<std::string> items;  // best first, unique
};

// query_id -> relevant fragment ids
using GroundTruth = std::map<std::string, std::set<std::string>>;
// fragment id -> score in [0, 15]
using SubjectiveScores = std::unordered_map<std::string, double>;

inline constexpr double kMaxSubjectiveScore = 15.0;

// Sum of precision@i over relevant hits in the top K, divided by
// min(|relevant|, K); 0 for an empty relevant set.
double average_precision_at_k(const Ranking& r, const std::set<std::string>& relevant, std::size_t K);

struct MapReport {
  std::size_t K = 0;
  std::vector<std::pair<std::string, double>> per_query;  // in ranking order
  double map = 0.0;
};

// Mean AP@K over the rankings. Throws when a query has no ground truth.
MapReport map_at_k(std::span<const Ranking> runs, const GroundTruth& gt, std::size_t K);

// Mean score of the first min(K, |items|) items. Throws on an unscored item.
double mean_subjective_at_k(const Ranking& r, const SubjectiveScores& s, std::size_t K);

enum class BaselineKind { hub, lid, random, oracle };

std::string_view to_string(BaselineKind k);
BaselineKind parse_baseline(std::string_view name);

struct BaselineOptions {
  BaselineKind kind = BaselineKind::hub;
  std::uint64_t seed = 0;                       // random
  const SubjectiveScores* scores = nullptr;     // oracle
  std::string query_id = "all";
};

// Orders every fragment of the profile: hub = N_k descending, lid = LID
// ascending, oracle = subjective score descending, random = seeded shuffle.
// Ties go to the lower profile index.
Ranking baseline_rank(const StatProfile& profile, const BaselineOptions& opts);

// Deterministic Fisher-Yates permutation of [0, n), stable across platforms.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// File formats: ground truth `query_id,fragment_id`, scores
// `fragment_id,score`, run `query_id,rank,fragment_id`. A leading header row
// is skipped when its numeric column does not parse.
GroundTruth read_ground_truth(const std::filesystem::path& path);
SubjectiveScores read_subjective_scores(const std::filesystem::path& path);
std::vector<Ranking> read_run(const std::filesystem::path& path);
void write_run(std::span<const Ranking> runs, const std::filesystem::path& path);

}  // namespace hublid
