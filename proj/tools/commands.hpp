#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hublid/neighbors.hpp"
#include "hublid/selector.hpp"

namespace hublid::cli {

struct RunConfig {
  Metric metric = Metric::cosine;
  std::size_t k_hub = 10;
  std::size_t n_lid = 100;
  std::size_t m_div = 30;
  std::size_t budget_k = 10;
  InitMode init = InitMode::hub_first;
  StepRule step = StepRule::derived;
  AffinityMode mode = AffinityMode::dense;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool linear_fallback = false;
};

// Loads a cached graph for (fingerprint, metric) with at least k neighbors
// from cache_dir, or computes one and stores it there.
NeighborGraph load_or_build_graph(const FeatureMatrix& m, Metric metric, std::size_t k, unsigned threads,
                                  const std::optional<std::filesystem::path>& cache_dir);

// Parses argv-style arguments (without the program name) and runs the
// subcommand. Exit status: 0 success, 1 invalid input, 2 I/O failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hublid::cli
