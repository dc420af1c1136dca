#include "hublid/selector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hublid/error.hpp"
#include "hublid/parallel.hpp"

namespace hublid {

std::string_view to_string(AffinityMode m) { return m == AffinityMode::dense ? "dense" : "knn-sparse"; }

AffinityMode parse_affinity_mode(std::string_view name) {
  if (name == "dense") return AffinityMode::dense;
  if (name == "knn-sparse" || name == "knn_sparse") return AffinityMode::knn_sparse;
  throw Error("unknown affinity mode '" + std::string(name) + "' (expected dense or knn-sparse)");
}

std::string_view to_string(InitMode m) {
  switch (m) {
    case InitMode::hub_first: return "hub-first";
    case InitMode::lid_first: return "lid-first";
    case InitMode::uniform: return "uniform";
    case InitMode::custom: return "custom";
  }
  return "custom";
}

InitMode parse_init_mode(std::string_view name) {
  if (name == "hub-first" || name == "hub_first") return InitMode::hub_first;
  if (name == "lid-first" || name == "lid_first") return InitMode::lid_first;
  if (name == "uniform") return InitMode::uniform;
  throw Error("unknown init mode '" + std::string(name) + "' (expected hub-first, lid-first or uniform)");
}

std::string_view to_string(StepRule r) { return r == StepRule::derived ? "derived" : "paper"; }

StepRule parse_step_rule(std::string_view name) {
  if (name == "derived") return StepRule::derived;
  if (name == "paper") return StepRule::paper;
  throw Error("unknown step rule '" + std::string(name) + "' (expected derived or paper)");
}

// ---------------------------------------------------------------------------
// Affinity

Affinity Affinity::dense(std::size_t n, std::vector<double> values) {
  if (values.size() != n * n) throw Error("dense affinity needs n*n values");
  for (std::size_t i = 0; i < n; ++i) {
    if (values[i * n + i] != 0.0) throw Error("affinity diagonal must be zero");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = values[i * n + j];
      if (!std::isfinite(v) || v < 0.0) throw Error("affinity entries must be finite and non-negative");
      if (v != values[j * n + i]) throw Error("affinity matrix must be symmetric");
    }
  }
  Affinity a;
  a.n_ = n;
  a.dense_ = true;
  a.values_ = std::move(values);
  return a;
}

Affinity Affinity::sparse(std::size_t n, const std::vector<std::vector<std::pair<std::size_t, double>>>& edges) {
  if (edges.size() != n) throw Error("sparse affinity needs one edge list per row");
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [j, v] : edges[i]) {
      if (j >= n) throw Error("sparse affinity edge out of range");
      if (j == i) continue;
      if (!std::isfinite(v) || v < 0.0) throw Error("affinity entries must be finite and non-negative");
      rows[i].emplace_back(j, v);
      rows[j].emplace_back(i, v);
    }
  }
  Affinity a;
  a.n_ = n;
  a.dense_ = false;
  a.row_start_.reserve(n + 1);
  a.row_start_.push_back(0);
  for (auto& row : rows) {
    std::sort(row.begin(), row.end());
    for (std::size_t e = 0; e < row.size(); ++e) {
      if (!a.cols_.empty() && a.cols_.size() > a.row_start_.back() && a.cols_.back() == row[e].first) {
        a.values_.back() = std::max(a.values_.back(), row[e].second);
        continue;
      }
      a.cols_.push_back(row[e].first);
      a.values_.push_back(row[e].second);
    }
    a.row_start_.push_back(a.cols_.size());
  }
  return a;
}

double Affinity::at(std::size_t i, std::size_t j) const {
  if (dense_) return values_[i * n_ + j];
  const auto first = cols_.begin() + static_cast<std::ptrdiff_t>(row_start_[i]);
  const auto last = cols_.begin() + static_cast<std::ptrdiff_t>(row_start_[i + 1]);
  const auto it = std::lower_bound(first, last, j);
  return (it != last && *it == j) ? values_[static_cast<std::size_t>(it - cols_.begin())] : 0.0;
}

void Affinity::axpy_column(double coef, std::size_t col, std::span<double> out) const {
  if (dense_) {
    const double* row = values_.data() + col * n_;
    for (std::size_t r = 0; r < n_; ++r) out[r] += coef * row[r];
    return;
  }
  for (std::size_t e = row_start_[col]; e < row_start_[col + 1]; ++e) out[cols_[e]] += coef * values_[e];
}

std::vector<double> Affinity::multiply(std::span<const double> y) const {
  std::vector<double> out(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    double s = 0.0;
    if (dense_) {
      const double* row = values_.data() + i * n_;
      for (std::size_t j = 0; j < n_; ++j) s += row[j] * y[j];
    } else {
      for (std::size_t e = row_start_[i]; e < row_start_[i + 1]; ++e) s += values_[e] * y[cols_[e]];
    }
    out[i] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Problem construction

bool normalize_min_max(std::span<double> values) {
  if (values.empty()) return true;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo, range = *hi - *lo;
  if (!(range > 0.0)) {
    std::fill(values.begin(), values.end(), 0.0);
    return false;
  }
  for (auto& v : values) v = std::clamp((v - min) / range, 0.0, 1.0);
  return true;
}

SelectionProblem make_problem(std::vector<double> h, std::vector<double> d_risk, Affinity a, std::size_t k,
                              bool allow_linear_fallback) {
  const std::size_t n = h.size();
  if (n == 0) throw Error("selection problem has no fragments");
  if (d_risk.size() != n || a.size() != n) throw Error("selection problem vectors and affinity disagree on size");
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!std::all_of(h.begin(), h.end(), in_unit)) throw Error("H must lie in [0, 1]");
  if (!std::all_of(d_risk.begin(), d_risk.end(), in_unit)) throw Error("D must lie in [0, 1]");
  if (k > n) throw Error("budget k=" + std::to_string(k) + " exceeds fragment count " + std::to_string(n));
  if (k == 1 && !allow_linear_fallback) throw Error("budget k must be >= 2 (k = 1 requires the linear fallback)");
  if (k == 0) throw Error("budget k must be positive");
  SelectionProblem p;
  p.h = std::move(h);
  p.d_risk = std::move(d_risk);
  p.a = std::move(a);
  p.k = k;
  p.linear_fallback = k == 1;
  return p;
}

SelectionProblem build_problem(const HubnessProfile& hub, const LidProfile& lid, const FeatureMatrix& m, Metric metric,
                               const BuildOptions& opts, const NeighborGraph* graph) {
  const std::size_t n = m.rows();
  if (hub.scores.size() != n || lid.lids.size() != n || lid.degenerate.size() != n)
    throw Error("profiles and feature matrix disagree on fragment count");

  std::vector<std::string> warnings;
  std::vector<double> h(hub.scores.begin(), hub.scores.end());
  if (!normalize_min_max(h)) warnings.push_back("hub scores are constant; H normalized to zeros");

  std::vector<double> fine;
  for (std::size_t i = 0; i < n; ++i)
    if (!lid.degenerate[i]) fine.push_back(lid.lids[i]);
  if (!fine.empty() && !normalize_min_max(fine)) warnings.push_back("LID values are constant; D normalized to zeros");
  std::vector<double> d(n, 1.0);
  for (std::size_t i = 0, f = 0; i < n; ++i)
    if (!lid.degenerate[i]) d[i] = fine[f++];

  Affinity a;
  if (opts.mode == AffinityMode::dense) {
    if (metric == Metric::cosine) {
      for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (double v : m.row(i)) sq += v * v;
        if (sq == 0.0) throw ZeroNormError("fragment '" + m.id(i) + "' has a zero-norm feature row; cosine distance is undefined");
      }
    }
    std::vector<double> values(n * n, 0.0);
    parallel_for(n, opts.threads, [&](std::size_t i) {
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) values[i * n + j] = pairwise_distance(m.row(i), m.row(j), metric);
    });
    a = Affinity::dense(n, std::move(values));
  } else {
    if (graph == nullptr) throw Error("knn-sparse affinity needs a neighbor graph");
    if (graph->rows() != n) throw Error("neighbor graph and feature matrix disagree on fragment count");
    std::vector<std::vector<std::pair<std::size_t, double>>> edges(n);
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& nb : graph->neighbors(i)) edges[i].emplace_back(nb.index, nb.distance);
    a = Affinity::sparse(n, edges);
  }

  auto p = make_problem(std::move(h), std::move(d), std::move(a), opts.k, opts.allow_linear_fallback);
  p.warnings = std::move(warnings);
  return p;
}

// ---------------------------------------------------------------------------
// Objective and rewards

namespace {

double quad_scale(const SelectionProblem& p) {
  return p.linear_fallback ? 0.0 : 1.0 / (static_cast<double>(p.k) * static_cast<double>(p.k - 1));
}

double linear_term(const SelectionProblem& p, std::size_t i) {
  return (p.h[i] - p.d_risk[i]) / static_cast<double>(p.k);
}

void check_size(const SelectionProblem& p, std::span<const double> y) {
  if (y.size() != p.size()) throw Error("indicator vector length does not match problem size");
}

IndicatorVector top_k(const SelectionProblem& p, const std::vector<double>& key, bool descending) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? key[a] > key[b] : key[a] < key[b];
  });
  IndicatorVector v{std::vector<double>(p.size(), 0.0), p.k};
  for (std::size_t r = 0; r < p.k; ++r) v.y[order[r]] = 1.0;
  return v;
}

}  // namespace

double objective(const SelectionProblem& p, std::span<const double> y) {
  check_size(p, y);
  const auto ay = p.a.multiply(y);
  const double c = quad_scale(p);
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    lin += y[i] * linear_term(p, i);
    quad += y[i] * ay[i];
  }
  return lin + c * quad;
}

std::vector<double> rewards(const SelectionProblem& p, std::span<const double> y) {
  check_size(p, y);
  auto r = p.a.multiply(y);
  const double c2 = 2.0 * quad_scale(p);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = linear_term(p, i) + c2 * r[i];
  return r;
}

double reward(const SelectionProblem& p, std::span<const double> y, std::size_t i) {
  check_size(p, y);
  if (i >= p.size()) throw Error("fragment index out of range");
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j)
    if (y[j] != 0.0) s += p.a.at(i, j) * y[j];
  return linear_term(p, i) + 2.0 * quad_scale(p) * s;
}

IndicatorVector init_hub_first(const SelectionProblem& p) { return top_k(p, p.h, true); }
IndicatorVector init_lid_first(const SelectionProblem& p) { return top_k(p, p.d_risk, false); }

IndicatorVector init_uniform(const SelectionProblem& p) {
  return {std::vector<double>(p.size(), static_cast<double>(p.k) / static_cast<double>(p.size())), p.k};
}

// ---------------------------------------------------------------------------
// Solver

double kkt_residual(const SelectionProblem& p, std::span<const double> y, double tolerance) {
  const auto r = rewards(p, y);
  double max_up = -INFINITY, min_down = INFINITY;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 1.0 - tolerance) max_up = std::max(max_up, r[i]);
    if (y[i] > tolerance) min_down = std::min(min_down, r[i]);
  }
  if (!std::isfinite(max_up) || !std::isfinite(min_down)) return 0.0;
  const double lambda = 0.5 * (max_up + min_down);
  double worst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double violation;
    if (y[i] <= tolerance)
      violation = r[i] - lambda;
    else if (y[i] >= 1.0 - tolerance)
      violation = lambda - r[i];
    else
      violation = std::abs(r[i] - lambda);
    worst = std::max(worst, violation);
  }
  return worst;
}

SolveResult solve(const SelectionProblem& p, const SolverConfig& cfg, const SolverObserver& observer) {
  const std::size_t n = p.size();
  const std::size_t k = p.k;
  const double tol = cfg.tolerance;
  if (!(tol > 0.0)) throw Error("solver tolerance must be positive");

  IndicatorVector current;
  switch (cfg.init) {
    case InitMode::hub_first: current = init_hub_first(p); break;
    case InitMode::lid_first: current = init_lid_first(p); break;
    case InitMode::uniform: current = init_uniform(p); break;
    case InitMode::custom: {
      check_size(p, cfg.custom_init);
      current = {cfg.custom_init, k};
      double sum = 0.0;
      for (double v : current.y) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error("custom initialization must lie in [0, 1]");
        sum += v;
      }
      if (std::abs(sum - static_cast<double>(k)) > 1e-9) throw Error("custom initialization must sum to k");
      break;
    }
  }
  auto& y = current.y;

  const double c = quad_scale(p);
  std::vector<double> ay = p.a.multiply(y);
  std::vector<double> r(n);
  auto refresh_rewards = [&] {
    for (std::size_t i = 0; i < n; ++i) r[i] = linear_term(p, i) + 2.0 * c * ay[i];
  };
  auto current_objective = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += y[i] * (linear_term(p, i) + c * ay[i]);
    return s;
  };
  refresh_rewards();

  SolverTrace trace;
  double obj = current_objective();
  trace.objective_per_iteration.push_back(obj);
  std::vector<double> best = y;
  double best_obj = obj;

  const std::size_t max_iterations = cfg.max_iterations ? cfg.max_iterations : 10 * n;
  const double kk = static_cast<double>(k) * static_cast<double>(k - 1);
  bool converged = false;
  for (std::size_t t = 1; t <= max_iterations + 1; ++t) {
    std::size_t recv = n, donor = n;
    for (std::size_t l = 0; l < n; ++l) {
      if (y[l] < 1.0 - tol && (recv == n || r[l] > r[recv])) recv = l;
      if (y[l] > tol && (donor == n || r[l] < r[donor])) donor = l;
    }
    const double eta = (recv == n || donor == n || recv == donor) ? 0.0 : r[recv] - r[donor];
    if (!(eta > tol)) {
      converged = true;
      break;
    }
    if (t > max_iterations) break;

    // Along e_recv - e_donor: f(alpha) = f(0) + eta*alpha + c*sigma*alpha^2.
    const double sigma = p.a.at(recv, recv) + p.a.at(donor, donor) - 2.0 * p.a.at(recv, donor);
    const double room = std::min(y[donor], 1.0 - y[recv]);
    double alpha = room;
    if (c > 0.0 && sigma < 0.0) {
      const double line = cfg.step == StepRule::derived ? kk * eta / (-2.0 * sigma) : kk * eta / (-sigma);
      alpha = std::min(room, line);
    }

    if (alpha == room && room == y[donor]) {
      y[recv] += alpha;
      y[donor] = 0.0;
    } else if (alpha == room) {
      y[donor] -= alpha;
      y[recv] = 1.0;
    } else {
      y[recv] += alpha;
      y[donor] -= alpha;
    }
    // Snap rounding residue at the box bounds.
    constexpr double ulp_slack = 4 * std::numeric_limits<double>::epsilon();
    if (y[recv] > 1.0 - ulp_slack) y[recv] = 1.0;
    if (y[donor] < ulp_slack) y[donor] = 0.0;

    if (t % n == 0) {
      ay = p.a.multiply(y);
    } else {
      p.a.axpy_column(alpha, recv, ay);
      p.a.axpy_column(-alpha, donor, ay);
    }
    refresh_rewards();
    obj = current_objective();
    trace.objective_per_iteration.push_back(obj);
    const SolverStep step{t, obj, eta, donor, recv, alpha};
    trace.steps.push_back(step);
    trace.iterations = t;
    if (observer) observer(step, y);
    if (obj > best_obj) {
      best_obj = obj;
      best = y;
    }
  }

  if (!converged) y = best;
  trace.converged = converged;
  trace.kkt_residual = kkt_residual(p, y, tol);
  return {std::move(current), std::move(trace)};
}

std::vector<std::size_t> rank_by_solution(std::span<const double> y, const SelectionProblem& p) {
  const auto r = rewards(p, y);
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (y[a] != y[b]) return y[a] > y[b];
    if (r[a] != r[b]) return r[a] > r[b];
    return a < b;
  });
  return order;
}

std::vector<std::size_t> round_selection(std::span<const double> y, const SelectionProblem& p) {
  auto order = rank_by_solution(y, p);
  order.resize(p.k);
  return order;
}

}  // namespace hublid
