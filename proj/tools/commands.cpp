#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <ostream>
#include <regex>

#include "hublid/error.hpp"
#include "hublid/evaluation.hpp"
#include "hublid/features.hpp"
#include "hublid/statistics.hpp"
#include "hublid/table_io.hpp"

namespace hublid::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_json(const json& j, const fs::path& path) { table::write_file(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// LID needs n_nbr + 1 neighbors and a list has at most n - 1 entries.
std::size_t effective_n_lid(std::size_t requested, std::size_t n) {
  return n >= 3 ? std::min(requested, n - 2) : 0;
}

struct Analysis {
  StatProfile profile;
  NeighborGraph graph;
};

Analysis analyze_features(const FeatureMatrix& m, const RunConfig& cfg, const std::optional<fs::path>& cache_dir,
                          std::ostream& err) {
  const std::size_t n = m.rows();
  const std::size_t n_lid = effective_n_lid(cfg.n_lid, n);
  if (n_lid != cfg.n_lid)
    err << "warning: n-lid " << cfg.n_lid << " exceeds what " << n << " fragments support; using " << n_lid << "\n";
  const std::size_t max_k = std::max({cfg.k_hub, n_lid + 1, cfg.m_div});
  auto graph = load_or_build_graph(m, cfg.metric, max_k, cfg.threads, cache_dir);

  Analysis a;
  a.profile.ids = m.ids();
  a.profile.hubness = hubness_scores(graph, cfg.k_hub);
  if (n_lid >= 1) {
    a.profile.lid = lid_mle(graph, n_lid);
  } else {
    a.profile.lid = {0, std::vector<double>(n, kLidCap), std::vector<bool>(n, true)};
  }
  a.profile.diversity = diversity(m, graph, cfg.m_div, cfg.threads);
  a.graph = std::move(graph);
  return a;
}

// Profile rows must line up with the feature rows.
void check_alignment(const StatProfile& p, const FeatureMatrix& m) {
  if (p.ids.size() != m.rows()) throw Error("profile lists " + std::to_string(p.ids.size()) + " fragments, features have " + std::to_string(m.rows()));
  for (std::size_t i = 0; i < p.ids.size(); ++i)
    if (p.ids[i] != m.id(i)) throw Error("profile row " + std::to_string(i + 1) + " is '" + p.ids[i] + "' but features have '" + m.id(i) + "'");
}

StatProfile subset_profile(const StatProfile& p, std::span<const std::size_t> idx) {
  StatProfile s;
  s.hubness.k = p.hubness.k;
  s.lid.n_nbr = p.lid.n_nbr;
  s.diversity.m = p.diversity.m;
  for (auto i : idx) {
    s.ids.push_back(p.ids[i]);
    s.hubness.scores.push_back(p.hubness.scores[i]);
    s.hubness.categories.push_back(p.hubness.categories[i]);
    s.lid.lids.push_back(p.lid.lids[i]);
    s.lid.degenerate.push_back(p.lid.degenerate[i]);
    s.diversity.values.push_back(p.diversity.values[i]);
  }
  return s;
}

SelectionProblem problem_for(const StatProfile& p, const FeatureMatrix& m, const RunConfig& cfg, std::size_t k,
                             const std::optional<fs::path>& cache_dir) {
  BuildOptions opts{k, cfg.mode, cfg.linear_fallback, cfg.threads};
  if (cfg.mode == AffinityMode::knn_sparse) {
    const auto g = load_or_build_graph(m, cfg.metric, cfg.k_hub, cfg.threads, cache_dir);
    return build_problem(p.hubness, p.lid, m, cfg.metric, opts, &g);
  }
  return build_problem(p.hubness, p.lid, m, cfg.metric, opts);
}

// ---------------------------------------------------------------------------

int cmd_fuse(const std::vector<std::string>& inputs, const fs::path& output, std::ostream& out, std::ostream& err) {
  std::vector<FeatureMatrix> ms;
  for (const auto& in : inputs) ms.push_back(load_features(in));
  const auto fused = fuse(ms);
  for (auto z : fused.zero_rows) err << "warning: fragment '" << fused.matrix.id(z) << "' has an all-zero modality\n";
  if (output.has_parent_path()) ensure_dir(output.parent_path());
  if (format_from_path(output) == FeatureFormat::fbin)
    save_fbin(fused.matrix, output);
  else
    save_csv(fused.matrix, output);
  out << "fused " << ms.size() << " inputs: n=" << fused.matrix.rows() << " d=" << fused.matrix.dim() << "\n";
  return 0;
}

int cmd_knn(const fs::path& features, const RunConfig& cfg, std::size_t k, const fs::path& output, std::ostream& out) {
  const auto m = load_features(features);
  const auto g = knn_graph(m, k, cfg.metric, cfg.threads);
  write_graph_csv(g, m.ids(), output);
  out << "wrote " << g.rows() << " neighbor lists of length " << g.width() << "\n";
  return 0;
}

int cmd_analyze(const fs::path& features, const RunConfig& cfg, const fs::path& out_dir,
                const std::optional<fs::path>& cache_dir, std::ostream& out, std::ostream& err) {
  const auto m = load_features(features);
  ensure_dir(out_dir);
  const auto a = analyze_features(m, cfg, cache_dir ? cache_dir : std::optional<fs::path>(out_dir), err);
  const auto& p = a.profile;
  write_profile_csv(p, out_dir / "profile.csv");

  std::string scatter = "id,lid,N_k,diversity\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    scatter += p.ids[i] + ',' + table::format_real(p.lid.lids[i]) + ',' + std::to_string(p.hubness.scores[i]) + ',' +
               table::format_real(p.diversity.values[i]) + '\n';
  }
  table::write_file(out_dir / "scatter.csv", scatter);

  const auto skew = skewness(p.hubness);
  std::size_t hubs = 0, anti = 0;
  for (auto c : p.hubness.categories) {
    hubs += c == Category::hub;
    anti += c == Category::anti_hub;
  }
  json summary;
  summary["n"] = m.rows();
  summary["d"] = m.dim();
  summary["metric"] = std::string(to_string(cfg.metric));
  summary["k"] = cfg.k_hub;
  summary["n_nbr"] = p.lid.n_nbr;
  summary["m_nbr"] = cfg.m_div;
  summary["skewness"] = skew.s_nk;
  summary["mean"] = skew.mean;
  summary["stddev"] = skew.stddev;
  summary["hubness_exists"] = skew.hubness_exists;
  summary["hubs"] = hubs;
  summary["anti_hubs"] = anti;
  summary["features_fingerprint"] = hex64(m.fingerprint());
  try {
    summary["global_id"] = global_id(p.lid);
  } catch (const Error&) {
    summary["global_id"] = nullptr;
    err << "warning: every LID estimate is degenerate; global_id is null\n";
  }
  write_json(summary, out_dir / "summary.json");
  out << "n=" << m.rows() << " skewness=" << skew.s_nk << " hubness_exists=" << (skew.hubness_exists ? "true" : "false")
      << "\n";
  return 0;
}

int cmd_select(const fs::path& features, const std::optional<fs::path>& profiles, const RunConfig& cfg,
               const SolverConfig& solver, const fs::path& output, const std::optional<fs::path>& trace_path,
               const std::optional<fs::path>& cache_dir, std::ostream& out, std::ostream& err) {
  const auto m = load_features(features);
  StatProfile p = profiles ? read_profile_csv(*profiles) : analyze_features(m, cfg, cache_dir, err).profile;
  check_alignment(p, m);

  const auto problem = problem_for(p, m, cfg, cfg.budget_k, cache_dir);
  for (const auto& w : problem.warnings) err << "warning: " << w << "\n";
  const auto result = solve(problem, solver);
  const auto& y = result.solution.y;
  const auto selected = round_selection(y, problem);

  json sol;
  sol["k"] = problem.k;
  sol["init"] = std::string(to_string(solver.init));
  sol["step"] = std::string(to_string(solver.step));
  sol["mode"] = std::string(to_string(cfg.mode));
  sol["iterations"] = result.trace.iterations;
  sol["converged"] = result.trace.converged;
  sol["kkt_residual"] = result.trace.kkt_residual;
  sol["objective"] = objective(problem, y);
  json ids = json::array();
  for (auto i : selected) ids.push_back(m.id(i));
  sol["selected"] = ids;
  sol["y"] = y;
  if (output.has_parent_path()) ensure_dir(output.parent_path());
  write_json(sol, output);

  if (trace_path) {
    std::string csv = "iteration,objective,eta,donor,receiver,alpha\n";
    csv += "0," + table::format_real(result.trace.objective_per_iteration.front()) + ",,,,\n";
    for (const auto& s : result.trace.steps) {
      csv += std::to_string(s.iteration) + ',' + table::format_real(s.objective) + ',' + table::format_real(s.eta) + ',' +
             m.id(s.donor) + ',' + m.id(s.receiver) + ',' + table::format_real(s.alpha) + '\n';
    }
    table::write_file(*trace_path, csv);
  }

  if (!result.trace.converged) err << "warning: solver did not converge within the iteration limit\n";
  for (auto i : selected) out << m.id(i) << "\n";
  return 0;
}

struct RankArgs {
  fs::path profiles;
  std::string mode;
  std::optional<fs::path> features, candidates, scores, cache_dir;
  std::string query = "all";
  fs::path output;
};

int cmd_rank(const RankArgs& args, const RunConfig& cfg, const SolverConfig& solver_base, std::ostream& out) {
  const auto profile = read_profile_csv(args.profiles);
  const bool solver_mode = args.mode == "hub-first" || args.mode == "lid-first";
  std::optional<BaselineKind> baseline;
  if (!solver_mode) baseline = parse_baseline(args.mode);

  std::optional<SubjectiveScores> scores;
  if (args.scores) scores = read_subjective_scores(*args.scores);
  if (baseline == BaselineKind::oracle && !scores) throw Error("rank --mode oracle needs --scores");

  std::optional<FeatureMatrix> m;
  if (solver_mode) {
    if (!args.features) throw Error("rank --mode " + args.mode + " needs --features");
    m = load_features(*args.features);
    check_alignment(profile, *m);
  }

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < profile.size(); ++i) index.emplace(profile.ids[i], i);

  // Each query re-ranks a candidate list; without --candidates the single
  // query ranks the whole collection.
  std::vector<Ranking> inputs;
  if (args.candidates) {
    inputs = read_run(*args.candidates);
  } else {
    inputs.push_back({args.query, profile.ids});
  }

  std::vector<Ranking> outputs;
  for (const auto& q : inputs) {
    std::vector<std::size_t> idx;
    for (const auto& id : q.items) {
      const auto it = index.find(id);
      if (it == index.end()) throw Error("candidate '" + id + "' of query '" + q.query_id + "' is not in the profile");
      idx.push_back(it->second);
    }
    const auto sub = subset_profile(profile, idx);
    if (baseline) {
      BaselineOptions opts{*baseline, cfg.seed, scores ? &*scores : nullptr, q.query_id};
      outputs.push_back(baseline_rank(sub, opts));
      continue;
    }
    Ranking r{q.query_id, {}};
    if (sub.size() < 2) {
      r.items = sub.ids;
    } else {
      const auto sub_m = m->subset(idx);
      const std::size_t k = std::clamp<std::size_t>(cfg.budget_k, 2, sub.size());
      RunConfig local = cfg;
      if (local.mode == AffinityMode::knn_sparse) local.k_hub = std::min(local.k_hub, sub.size() - 1);
      const auto problem = problem_for(sub, sub_m, local, k, std::nullopt);
      SolverConfig sc = solver_base;
      sc.init = args.mode == "hub-first" ? InitMode::hub_first : InitMode::lid_first;
      const auto result = solve(problem, sc);
      for (auto i : rank_by_solution(result.solution.y, problem)) r.items.push_back(sub.ids[i]);
    }
    outputs.push_back(std::move(r));
  }
  if (args.output.has_parent_path()) ensure_dir(args.output.parent_path());
  write_run(outputs, args.output);
  out << "wrote " << outputs.size() << " ranking(s) to " << args.output.string() << "\n";
  return 0;
}

int cmd_eval(const fs::path& run_path, const std::optional<fs::path>& gt_path, const std::optional<fs::path>& scores_path,
             std::size_t K, const std::string& kind, const std::optional<fs::path>& output, std::ostream& out) {
  if (K < 1) throw Error("--K must be >= 1");
  const auto runs = read_run(run_path);
  if (runs.empty()) throw Error(run_path.string() + " contains no rankings");
  json report;
  report["K"] = K;
  if (kind == "map") {
    if (!gt_path) throw Error("eval --kind map needs --gt");
    const auto rep = map_at_k(runs, read_ground_truth(*gt_path), K);
    json per = json::object();
    for (const auto& [q, ap] : rep.per_query) per[q] = ap;
    report["per_query"] = per;
    report["map"] = rep.map;
    out << "mAP@" << K << " = " << table::format_real(rep.map) << "\n";
  } else if (kind == "subjective") {
    if (!scores_path) throw Error("eval --kind subjective needs --scores");
    const auto scores = read_subjective_scores(*scores_path);
    json per = json::object();
    double sum = 0.0;
    for (const auto& r : runs) {
      const double v = mean_subjective_at_k(r, scores, K);
      per[r.query_id] = v;
      sum += v;
    }
    const double mean = sum / static_cast<double>(runs.size());
    if (runs.size() > 1) report["per_query"] = per;
    report["mean_subjective"] = mean;
    out << "mean subjective score@" << K << " = " << table::format_real(mean) << "\n";
  } else {
    throw Error("unknown eval kind '" + kind + "' (expected map or subjective)");
  }
  if (output) write_json(report, *output);
  return 0;
}

}  // namespace

NeighborGraph load_or_build_graph(const FeatureMatrix& m, Metric metric, std::size_t k, unsigned threads,
                                  const std::optional<fs::path>& cache_dir) {
  if (!cache_dir) return knn_graph(m, k, metric, threads);
  const std::string key = "graph_" + hex64(m.fingerprint()) + "_" + std::string(to_string(metric)) + "_k";
  const std::size_t want = std::min(k, m.rows() - 1);
  std::error_code ec;
  if (fs::is_directory(*cache_dir, ec)) {
    const std::regex pattern(key + "([0-9]+)\\.csv");
    std::optional<std::pair<std::size_t, fs::path>> best;
    for (const auto& entry : fs::directory_iterator(*cache_dir, ec)) {
      std::smatch match;
      const std::string name = entry.path().filename().string();
      if (!std::regex_match(name, match, pattern)) continue;
      const std::size_t cached = std::stoull(match[1].str());
      if (std::min(cached, m.rows() - 1) < want) continue;
      if (!best || cached < best->first || (cached == best->first && entry.path() < best->second))
        best.emplace(cached, entry.path());
    }
    if (best) return read_graph_csv(best->second, m.ids(), k, metric);
  }
  auto g = knn_graph(m, k, metric, threads);
  ensure_dir(*cache_dir);
  write_graph_csv(g, m.ids(), *cache_dir / (key + std::to_string(k) + ".csv"));
  return g;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hubness and local intrinsic dimensionality profiling with anchor/target selection"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string metric = "cosine", init = "hub-first", step = "derived", mode = "dense";
  std::size_t max_iter = 0;
  double tolerance = 1e-9;
  std::optional<std::string> cache_dir;

  auto add_metric = [&](CLI::App* sub) {
    sub->add_option("--metric", metric, "cosine or euclidean")->capture_default_str();
    sub->add_option("--threads", cfg.threads, "worker threads for graph and statistics")->capture_default_str();
  };
  auto add_stats = [&](CLI::App* sub) {
    sub->add_option("--k-hub", cfg.k_hub, "neighbors for hubness scores")->capture_default_str();
    sub->add_option("--n-lid", cfg.n_lid, "neighborhood size for LID")->capture_default_str();
    sub->add_option("--m-div", cfg.m_div, "neighbors for diversity")->capture_default_str();
    sub->add_option("--cache-dir", cache_dir, "directory for cached neighbor graphs");
  };
  auto add_solver = [&](CLI::App* sub, const std::string& mode_flag) {
    sub->add_option("--k", cfg.budget_k, "selection budget")->capture_default_str();
    sub->add_option("--init", init, "hub-first, lid-first or uniform")->capture_default_str();
    sub->add_option("--step", step, "derived or paper")->capture_default_str();
    sub->add_option(mode_flag, mode, "affinity matrix: dense or knn-sparse")->capture_default_str();
    sub->add_option("--max-iter", max_iter, "iteration limit (0: 10 * n)")->capture_default_str();
    sub->add_option("--tol", tolerance, "reward-gap tolerance")->capture_default_str();
    sub->add_flag("--linear-fallback", cfg.linear_fallback, "allow k = 1 by dropping the quadratic term");
  };

  std::vector<std::string> fuse_inputs;
  std::string output, features, profiles_path, rank_mode, run_path, trace_path;
  std::optional<std::string> gt_path, scores_path, candidates;
  std::size_t knn_k = 10, eval_k = 10;
  std::string eval_kind = "map", query = "all";

  auto* fuse_cmd = app.add_subcommand("fuse", "L2-normalize and concatenate feature modalities");
  fuse_cmd->add_option("inputs", fuse_inputs, "feature files (.csv or .fbin)")->required()->expected(1, -1);
  fuse_cmd->add_option("--out", output, "fused output (.fbin or .csv)")->required();

  auto* knn_cmd = app.add_subcommand("knn", "write the exact k-nearest-neighbor graph");
  knn_cmd->add_option("--features", features)->required();
  knn_cmd->add_option("--k", knn_k, "neighbors per fragment")->capture_default_str();
  knn_cmd->add_option("--out", output, "graph CSV")->required();
  add_metric(knn_cmd);

  auto* analyze_cmd = app.add_subcommand("analyze", "hubness, LID and diversity profiles");
  analyze_cmd->add_option("--features", features)->required();
  analyze_cmd->add_option("--out", output, "output directory")->required();
  add_metric(analyze_cmd);
  add_stats(analyze_cmd);

  auto* select_cmd = app.add_subcommand("select", "choose k fragments with the pairwise-update solver");
  select_cmd->add_option("--features", features)->required();
  select_cmd->add_option("--profiles", profiles_path, "profile.csv from analyze (computed if omitted)");
  select_cmd->add_option("--out", output, "solution JSON")->required();
  select_cmd->add_option("--trace", trace_path, "optional trace CSV");
  add_metric(select_cmd);
  add_stats(select_cmd);
  add_solver(select_cmd, "--mode");

  auto* rank_cmd = app.add_subcommand("rank", "rank fragments with a baseline or the solver");
  rank_cmd->add_option("--profiles", profiles_path, "profile.csv from analyze")->required();
  rank_cmd->add_option("--mode", rank_mode, "hub, lid, random, oracle, hub-first or lid-first")->required();
  rank_cmd->add_option("--features", features, "features (solver modes)");
  rank_cmd->add_option("--scores", scores_path, "subjective scores (oracle)");
  rank_cmd->add_option("--candidates", candidates, "run file of per-query candidates to re-rank");
  rank_cmd->add_option("--query", query, "query id when ranking the whole collection")->capture_default_str();
  rank_cmd->add_option("--seed", cfg.seed, "seed for random mode")->capture_default_str();
  rank_cmd->add_option("--out", output, "run file")->required();
  add_metric(rank_cmd);
  rank_cmd->add_option("--k-hub", cfg.k_hub, "graph neighbors for knn-sparse affinities")->capture_default_str();
  add_solver(rank_cmd, "--affinity");

  auto* eval_cmd = app.add_subcommand("eval", "mAP@K or mean subjective score of a run");
  eval_cmd->add_option("--run", run_path)->required();
  eval_cmd->add_option("--gt", gt_path, "ground truth (map)");
  eval_cmd->add_option("--scores", scores_path, "subjective scores (subjective)");
  eval_cmd->add_option("--K", eval_k, "evaluation depth")->capture_default_str();
  eval_cmd->add_option("--kind", eval_kind, "map or subjective")->capture_default_str();
  eval_cmd->add_option("--out", output, "optional JSON report");

  // --seed and --threads appear on every command for uniform invocation.
  for (auto* sub : {analyze_cmd, select_cmd, fuse_cmd, knn_cmd, eval_cmd})
    sub->add_option("--seed", cfg.seed, "random seed")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    cfg.metric = parse_metric(metric);
    cfg.init = parse_init_mode(init);
    cfg.step = parse_step_rule(step);
    cfg.mode = parse_affinity_mode(mode);
    if (cfg.k_hub < 1 || cfg.n_lid < 1 || cfg.m_div < 1) throw Error("--k-hub, --n-lid and --m-div must be positive");
    if (cfg.threads < 1) cfg.threads = 1;
    SolverConfig solver{cfg.init, {}, max_iter, tolerance, cfg.step};
    std::optional<fs::path> cache;
    if (cache_dir) cache = fs::path(*cache_dir);
    auto opt_path = [](const std::optional<std::string>& s) {
      return s ? std::optional<fs::path>(*s) : std::nullopt;
    };

    if (fuse_cmd->parsed()) return cmd_fuse(fuse_inputs, output, out, err);
    if (knn_cmd->parsed()) return cmd_knn(features, cfg, knn_k, output, out);
    if (analyze_cmd->parsed()) return cmd_analyze(features, cfg, output, cache, out, err);
    if (select_cmd->parsed()) {
      return cmd_select(features, profiles_path.empty() ? std::nullopt : std::optional<fs::path>(profiles_path), cfg,
                        solver, output, trace_path.empty() ? std::nullopt : std::optional<fs::path>(trace_path), cache,
                        out, err);
    }
    if (rank_cmd->parsed()) {
      RankArgs ra;
      ra.profiles = profiles_path;
      ra.mode = rank_mode;
      if (!features.empty()) ra.features = fs::path(features);
      ra.candidates = opt_path(candidates);
      ra.scores = opt_path(scores_path);
      ra.query = query;
      ra.output = output;
      return cmd_rank(ra, cfg, solver, out);
    }
    if (eval_cmd->parsed())
      return cmd_eval(run_path, opt_path(gt_path), opt_path(scores_path), eval_k, eval_kind,
                      output.empty() ? std::nullopt : std::optional<fs::path>(output), out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace hublid::cli
