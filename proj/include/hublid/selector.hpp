#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hublid/features.hpp"
#include "hublid/neighbors.hpp"
#include "hublid/statistics.hpp"

namespace hublid {

enum class AffinityMode { dense, knn_sparse };

std::string_view to_string(AffinityMode m);
AffinityMode parse_affinity_mode(std::string_view name);

// Symmetric, non-negative, zero-diagonal distance matrix. Dense storage
// holds all n^2 entries; sparse storage holds only kNN-graph edges.
class Affinity {
 public:
  Affinity() = default;
  static Affinity dense(std::size_t n, std::vector<double> values);
  // Edge lists per row; duplicate (i, j) entries keep the larger value and
  // the result is symmetrized by max.
  static Affinity sparse(std::size_t n, const std::vector<std::vector<std::pair<std::size_t, double>>>& edges);

  std::size_t size() const noexcept { return n_; }
  bool is_dense() const noexcept { return dense_; }
  double at(std::size_t i, std::size_t j) const;

  // out += coef * A[:, col]
  void axpy_column(double coef, std::size_t col, std::span<double> out) const;
  std::vector<double> multiply(std::span<const double> y) const;

 private:
  std::size_t n_ = 0;
  bool dense_ = true;
  std::vector<double> values_;  // dense n*n, or CSR values
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> cols_;
};

struct SelectionProblem {
  std::vector<double> h;       // normalized hubness, in [0, 1]
  std::vector<double> d_risk;  // normalized LID, in [0, 1]
  Affinity a;
  std::size_t k = 0;
  // k = 1 only: the quadratic term is dropped since k(k-1) = 0.
  bool linear_fallback = false;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return h.size(); }
};

// Validates shapes, ranges and the budget (2 <= k <= n, or k = 1 with
// allow_linear_fallback).
SelectionProblem make_problem(std::vector<double> h, std::vector<double> d_risk, Affinity a, std::size_t k,
                              bool allow_linear_fallback = false);

struct BuildOptions {
  std::size_t k = 0;
  AffinityMode mode = AffinityMode::dense;
  bool allow_linear_fallback = false;
  unsigned threads = 1;
};

// H and D are min-max normalized (degenerate LIDs map to 1). Constant
// vectors normalize to zeros with a warning. Dense mode computes every
// pairwise distance of `m`; knn_sparse mode keeps only the edges of `graph`,
// which is then required.
SelectionProblem build_problem(const HubnessProfile& hub, const LidProfile& lid, const FeatureMatrix& m, Metric metric,
                               const BuildOptions& opts, const NeighborGraph* graph = nullptr);

// Min-max scaling to [0, 1]; a constant input maps to zeros and returns false.
bool normalize_min_max(std::span<double> values);

struct IndicatorVector {
  std::vector<double> y;
  std::size_t budget = 0;
};

// (y.H - y.D)/k + y'Ay/(k(k-1))
double objective(const SelectionProblem& p, std::span<const double> y);
// Gradient of the objective: ((H - D)/k + 2Ay/(k(k-1)))_i
double reward(const SelectionProblem& p, std::span<const double> y, std::size_t i);
std::vector<double> rewards(const SelectionProblem& p, std::span<const double> y);

IndicatorVector init_hub_first(const SelectionProblem& p);
IndicatorVector init_lid_first(const SelectionProblem& p);
IndicatorVector init_uniform(const SelectionProblem& p);

enum class InitMode { hub_first, lid_first, uniform, custom };
enum class StepRule { derived, paper };

std::string_view to_string(InitMode m);
InitMode parse_init_mode(std::string_view name);
std::string_view to_string(StepRule r);
StepRule parse_step_rule(std::string_view name);

struct SolverConfig {
  InitMode init = InitMode::hub_first;
  std::vector<double> custom_init;  // used with InitMode::custom
  std::size_t max_iterations = 0;   // 0 means 10 * n
  double tolerance = 1e-9;
  StepRule step = StepRule::derived;
};

struct SolverStep {
  std::size_t iteration;  // 1-based
  double objective;       // after the update
  double eta;             // reward gap r_receiver - r_donor
  std::size_t donor;
  std::size_t receiver;
  double alpha;
};

struct SolverTrace {
  std::vector<double> objective_per_iteration;  // [0] is the initial objective
  std::vector<SolverStep> steps;
  std::size_t iterations = 0;
  double kkt_residual = 0.0;
  bool converged = false;
};

struct SolveResult {
  IndicatorVector solution;
  SolverTrace trace;
};

// Called after every update with the new iterate.
using SolverObserver = std::function<void(const SolverStep&, std::span<const double>)>;

// Pairwise-update ascent. Each iteration moves mass from the lowest-reward
// coordinate that can decrease to the highest-reward coordinate that can
// increase, with a step that maximizes the objective along that direction
// inside the box. Stops when the reward gap is <= tolerance.
SolveResult solve(const SelectionProblem& p, const SolverConfig& cfg, const SolverObserver& observer = {});

// Largest violation of the three-way reward/multiplier classification, with
// the multiplier estimated from the current iterate.
double kkt_residual(const SelectionProblem& p, std::span<const double> y, double tolerance = 1e-9);

// All fragments ordered by y descending, then reward descending, then index.
std::vector<std::size_t> rank_by_solution(std::span<const double> y, const SelectionProblem& p);
// First k entries of rank_by_solution.
std::vector<std::size_t> round_selection(std::span<const double> y, const SelectionProblem& p);

}  // namespace hublid
