#include "hublid/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "hublid/error.hpp"
#include "hublid/table_io.hpp"

namespace hublid {

double average_precision_at_k(const Ranking& r, const std::set<std::string>& relevant, std::size_t K) {
  if (K < 1) throw Error("AP@K needs K >= 1");
  if (relevant.empty()) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t depth = std::min(K, r.items.size());
  for (std::size_t i = 0; i < depth; ++i) {
    if (relevant.count(r.items[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(std::min(relevant.size(), K));
}

MapReport map_at_k(std::span<const Ranking> runs, const GroundTruth& gt, std::size_t K) {
  if (runs.empty()) throw Error("mAP needs at least one ranking");
  MapReport report;
  report.K = K;
  double sum = 0.0;
  for (const auto& r : runs) {
    const auto it = gt.find(r.query_id);
    if (it == gt.end() || it->second.empty()) throw Error("no ground truth for query '" + r.query_id + "'");
    const double ap = average_precision_at_k(r, it->second, K);
    report.per_query.emplace_back(r.query_id, ap);
    sum += ap;
  }
  report.map = sum / static_cast<double>(runs.size());
  return report;
}

double mean_subjective_at_k(const Ranking& r, const SubjectiveScores& s, std::size_t K) {
  if (K < 1) throw Error("mean subjective score needs K >= 1");
  const std::size_t depth = std::min(K, r.items.size());
  if (depth == 0) throw Error("ranking '" + r.query_id + "' is empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < depth; ++i) {
    const auto it = s.find(r.items[i]);
    if (it == s.end()) throw Error("fragment '" + r.items[i] + "' at rank " + std::to_string(i + 1) + " has no subjective score");
    sum += it->second;
  }
  return sum / static_cast<double>(depth);
}

std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::hub: return "hub";
    case BaselineKind::lid: return "lid";
    case BaselineKind::random: return "random";
    case BaselineKind::oracle: return "oracle";
  }
  return "hub";
}

BaselineKind parse_baseline(std::string_view name) {
  if (name == "hub") return BaselineKind::hub;
  if (name == "lid") return BaselineKind::lid;
  if (name == "random") return BaselineKind::random;
  if (name == "oracle") return BaselineKind::oracle;
  throw Error("unknown baseline '" + std::string(name) + "'");
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    // Unbiased draw from [0, i) by rejection; distribution objects are not
    // portable across standard libraries.
    const std::uint64_t bound = i;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    std::swap(order[i - 1], order[x % bound]);
  }
  return order;
}

Ranking baseline_rank(const StatProfile& profile, const BaselineOptions& opts) {
  const std::size_t n = profile.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  switch (opts.kind) {
    case BaselineKind::hub:
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return profile.hubness.scores[a] > profile.hubness.scores[b];
      });
      break;
    case BaselineKind::lid:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return profile.lid.lids[a] < profile.lid.lids[b]; });
      break;
    case BaselineKind::random:
      order = seeded_permutation(n, opts.seed);
      break;
    case BaselineKind::oracle: {
      if (opts.scores == nullptr) throw Error("oracle ranking needs subjective scores");
      std::vector<double> score(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto it = opts.scores->find(profile.ids[i]);
        if (it == opts.scores->end()) throw Error("fragment '" + profile.ids[i] + "' has no subjective score");
        score[i] = it->second;
      }
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
      break;
    }
  }
  Ranking r{opts.query_id, {}};
  r.items.reserve(n);
  for (auto i : order) r.items.push_back(profile.ids[i]);
  return r;
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  const std::string source = path.string();
  GroundTruth gt;
  table::for_each_row(path, [&](std::size_t row, const std::vector<std::string_view>& f) {
    if (f.size() != 2) throw ParseError(source, row, "expected query_id,fragment_id");
    if (row == 1 && f[0] == "query_id") return;
    if (f[0].empty() || f[1].empty()) throw ParseError(source, row, "empty id");
    gt[std::string(f[0])].emplace(f[1]);
  });
  return gt;
}

SubjectiveScores read_subjective_scores(const std::filesystem::path& path) {
  const std::string source = path.string();
  SubjectiveScores s;
  bool first = true;
  table::for_each_row(path, [&](std::size_t row, const std::vector<std::string_view>& f) {
    if (f.size() != 2) throw ParseError(source, row, "expected fragment_id,score");
    if (std::exchange(first, false)) {
      try {
        (void)table::parse_real(f[1], source, row);
      } catch (const ParseError&) {
        return;  // header
      }
    }
    const double v = table::parse_real(f[1], source, row);
    if (v < 0.0 || v > kMaxSubjectiveScore) throw ParseError(source, row, "score outside [0, 15]");
    if (!s.emplace(std::string(f[0]), v).second) throw ParseError(source, row, "duplicate fragment '" + std::string(f[0]) + "'");
  });
  return s;
}

std::vector<Ranking> read_run(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::vector<Ranking> runs;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::unordered_set<std::string>> seen;
  bool first = true;
  table::for_each_row(path, [&](std::size_t row, const std::vector<std::string_view>& f) {
    if (f.size() != 3) throw ParseError(source, row, "expected query_id,rank,fragment_id");
    if (std::exchange(first, false) && f[1] == "rank") return;
    const auto rank = table::parse_int(f[1], source, row);
    const std::string q(f[0]);
    auto [it, fresh] = slot.emplace(q, runs.size());
    if (fresh) {
      runs.push_back({q, {}});
      seen.emplace_back();
    }
    auto& r = runs[it->second];
    if (rank != static_cast<std::int64_t>(r.items.size()) + 1)
      throw ParseError(source, row, "rank " + std::to_string(rank) + " out of sequence for query '" + q + "'");
    if (!seen[it->second].emplace(f[2]).second)
      throw ParseError(source, row, "fragment '" + std::string(f[2]) + "' repeated in query '" + q + "'");
    r.items.emplace_back(f[2]);
  });
  return runs;
}

void write_run(std::span<const Ranking> runs, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      out += r.query_id;
      out += ',';
      out += std::to_string(i + 1);
      out += ',';
      out += r.items[i];
      out += '\n';
    }
  }
  table::write_file(path, out);
}

}  // namespace hublid
