#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "commands.hpp"
#include "hublid/evaluation.hpp"
#include "hublid/table_io.hpp"
#include "test_util.hpp"

using namespace hublid;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json_file(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    for (auto f : table::split(line)) row.emplace_back(f);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("fuse command") {
  const auto dir = testing::scratch_dir("cli_fuse");
  save_csv(testing::gaussian_matrix(20, 4, 1), dir / "a.csv");
  save_csv(testing::gaussian_matrix(20, 3, 2), dir / "b.csv");
  auto r = run_cli({"fuse", (dir / "a.csv").string(), (dir / "b.csv").string(), "--out", (dir / "ab.fbin").string()});
  CHECK(r.code == 0);
  const auto fused = load_features(dir / "ab.fbin");
  CHECK(fused.dim() == 7);

  r = run_cli({"analyze", "--features", (dir / "ab.fbin").string(), "--out", (dir / "an").string(), "--n-lid", "5",
               "--m-div", "5"});
  CHECK(r.code == 0);
  CHECK(read_json_file(dir / "an" / "summary.json")["d"] == 7);

  std::ofstream(dir / "c.csv") << "f0,1\nf1,2\nzz,3\n";
  save_csv(testing::gaussian_matrix(3, 2, 3), dir / "d.csv");
  r = run_cli({"fuse", (dir / "d.csv").string(), (dir / "c.csv").string(), "--out", (dir / "cd.fbin").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("'zz'") != std::string::npos);

  r = run_cli({"fuse", (dir / "nope.csv").string(), "--out", (dir / "x.fbin").string()});
  CHECK(r.code == 2);
}

TEST_CASE("analyze command") {
  const auto dir = testing::scratch_dir("cli_analyze");
  save_fbin(testing::gaussian_matrix(1000, 100, 2024), dir / "g.fbin");

  SUBCASE("Gaussian d=100 shows hubness under Euclidean distance") {
    const auto r = run_cli({"analyze", "--features", (dir / "g.fbin").string(), "--metric", "euclidean", "--out",
                            (dir / "euc").string()});
    REQUIRE(r.code == 0);
    const auto s = read_json_file(dir / "euc" / "summary.json");
    CHECK(s["hubness_exists"] == true);
    CHECK(s["k"] == 10);
    CHECK(s["n_nbr"] == 100);
    CHECK(s["m_nbr"] == 30);
    CHECK(s["global_id"].is_number());
    const auto profile = read_csv(dir / "euc" / "profile.csv");
    CHECK(profile.size() == 1001);
    CHECK(profile[0] == std::vector<std::string>{"id", "N_k", "category", "lid", "degenerate", "diversity"});
    const auto scatter = read_csv(dir / "euc" / "scatter.csv");
    CHECK(scatter[0] == std::vector<std::string>{"id", "lid", "N_k", "diversity"});
  }

  SUBCASE("reruns are byte-identical across thread counts and reuse the cache") {
    const auto f = (dir / "g.fbin").string();
    REQUIRE(run_cli({"analyze", "--features", f, "--out", (dir / "t1").string(), "--threads", "1"}).code == 0);
    REQUIRE(run_cli({"analyze", "--features", f, "--out", (dir / "t8").string(), "--threads", "8"}).code == 0);
    REQUIRE(run_cli({"analyze", "--features", f, "--out", (dir / "t1").string(), "--threads", "8"}).code == 0);
    for (const char* name : {"profile.csv", "scatter.csv", "summary.json"})
      CHECK(slurp(dir / "t1" / name) == slurp(dir / "t8" / name));
    std::size_t graphs = 0;
    for (const auto& e : fs::directory_iterator(dir / "t1")) graphs += e.path().filename().string().rfind("graph_", 0) == 0;
    CHECK(graphs == 1);
  }

  SUBCASE("two fragments") {
    std::ofstream(dir / "two.csv") << "a,1,0\nb,0,1\n";
    const auto r = run_cli({"analyze", "--features", (dir / "two.csv").string(), "--out", (dir / "two").string()});
    REQUIRE(r.code == 0);
    const auto s = read_json_file(dir / "two" / "summary.json");
    CHECK(s["skewness"] == 0.0);
    CHECK(s["global_id"].is_null());
    CHECK(read_profile_csv(dir / "two" / "profile.csv").size() == 2);
  }

  SUBCASE("zero rows under cosine") {
    std::ofstream(dir / "z.csv") << "a,1,0\nb,0,0\nc,1,1\n";
    const auto r = run_cli({"analyze", "--features", (dir / "z.csv").string(), "--out", (dir / "z").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("'b'") != std::string::npos);
  }
}

TEST_CASE("knn command writes the graph cache format") {
  const auto dir = testing::scratch_dir("cli_knn");
  const auto m = testing::gaussian_matrix(25, 4, 6);
  save_csv(m, dir / "m.csv");
  REQUIRE(run_cli({"knn", "--features", (dir / "m.csv").string(), "--k", "4", "--metric", "euclidean", "--out",
                   (dir / "g.csv").string()})
              .code == 0);
  const auto loaded = load_features(dir / "m.csv");
  CHECK(read_graph_csv(dir / "g.csv", loaded.ids(), 4, Metric::euclidean) == knn_graph(loaded, 4, Metric::euclidean));
  const auto rows = read_csv(dir / "g.csv");
  CHECK(rows.size() == 100);
  CHECK(rows[0][1] == "1");
}

TEST_CASE("select command") {
  const auto dir = testing::scratch_dir("cli_select");
  const auto m = testing::gaussian_matrix(6, 3, 314);
  save_csv(m, dir / "six.csv");
  const auto features = (dir / "six.csv").string();
  REQUIRE(run_cli({"analyze", "--features", features, "--metric", "euclidean", "--k-hub", "2", "--n-lid", "3", "--m-div",
                   "3", "--out", (dir / "an").string()})
              .code == 0);
  const auto profiles = (dir / "an" / "profile.csv").string();

  SUBCASE("--k 2 matches exhaustive enumeration") {
    const auto r = run_cli({"select", "--features", features, "--profiles", profiles, "--metric", "euclidean", "--k", "2",
                            "--out", (dir / "sol.json").string()});
    REQUIRE(r.code == 0);
    const auto sol = read_json_file(dir / "sol.json");
    CHECK(sol["converged"] == true);
    CHECK(sol["k"] == 2);
    CHECK(sol["y"].size() == 6);

    const auto p = read_profile_csv(dir / "an" / "profile.csv");
    const auto loaded = load_features(dir / "six.csv");
    const auto problem = build_problem(p.hubness, p.lid, loaded, Metric::euclidean, {2});
    const auto best = testing::enumerate_best(problem);
    std::set<std::string> expect, got;
    for (auto i : best.subset) expect.insert(loaded.id(i));
    for (const auto& id : sol["selected"]) got.insert(id.get<std::string>());
    CHECK(got == expect);
    CHECK(r.out.find(*expect.begin()) != std::string::npos);
  }

  SUBCASE("init modes and step rules") {
    for (const char* init : {"hub-first", "lid-first", "uniform"}) {
      for (const char* step : {"derived", "paper"}) {
        const auto out = dir / (std::string(init) + "_" + step + ".json");
        const auto trace = dir / (std::string(init) + "_" + step + ".csv");
        const auto r = run_cli({"select", "--features", features, "--profiles", profiles, "--metric", "euclidean", "--k",
                                "3", "--init", init, "--step", step, "--out", out.string(), "--trace", trace.string()});
        REQUIRE(r.code == 0);
        const auto sol = read_json_file(out);
        CHECK(sol["init"] == init);
        CHECK(sol["selected"].size() == 3);
        const auto rows = read_csv(trace);
        CHECK(rows[0] == std::vector<std::string>{"iteration", "objective", "eta", "donor", "receiver", "alpha"});
        for (std::size_t i = 2; i < rows.size(); ++i) CHECK(std::stod(rows[i][1]) >= std::stod(rows[i - 1][1]) - 1e-12);
      }
    }
  }

  SUBCASE("profiles computed on the fly and sparse affinities") {
    auto r = run_cli({"select", "--features", features, "--metric", "euclidean", "--k-hub", "2", "--n-lid", "3", "--m-div",
                      "3", "--k", "2", "--out", (dir / "fly.json").string()});
    REQUIRE(r.code == 0);
    r = run_cli({"select", "--features", features, "--profiles", profiles, "--metric", "euclidean", "--k-hub", "2",
                 "--mode", "knn-sparse", "--k", "2", "--out", (dir / "sparse.json").string()});
    REQUIRE(r.code == 0);
    CHECK(read_json_file(dir / "sparse.json")["mode"] == "knn-sparse");
  }

  SUBCASE("invalid budget") {
    for (const char* k : {"1", "7"}) {
      const auto r = run_cli({"select", "--features", features, "--profiles", profiles, "--k", k, "--out",
                              (dir / "bad.json").string()});
      CHECK(r.code == 1);
    }
    const auto r = run_cli({"select", "--features", features, "--profiles", profiles, "--metric", "euclidean", "--k", "1",
                            "--linear-fallback", "--out", (dir / "lin.json").string()});
    CHECK(r.code == 0);
  }
}

TEST_CASE("rank command") {
  const auto dir = testing::scratch_dir("cli_rank");
  const auto m = testing::gaussian_matrix(40, 6, 55);
  save_csv(m, dir / "m.csv");
  REQUIRE(run_cli({"analyze", "--features", (dir / "m.csv").string(), "--n-lid", "10", "--out", (dir / "an").string()})
              .code == 0);
  const auto profiles = (dir / "an" / "profile.csv").string();
  const auto p = read_profile_csv(profiles);

  SUBCASE("hub") {
    REQUIRE(run_cli({"rank", "--profiles", profiles, "--mode", "hub", "--out", (dir / "hub.csv").string()}).code == 0);
    const auto runs = read_run(dir / "hub.csv");
    REQUIRE(runs.size() == 1);
    CHECK(runs[0].query_id == "all");
    CHECK(runs[0].items == baseline_rank(p, {BaselineKind::hub}).items);
    std::map<std::string, std::size_t> nk;
    for (std::size_t i = 0; i < p.size(); ++i) nk[p.ids[i]] = p.hubness.scores[i];
    for (std::size_t i = 1; i < runs[0].items.size(); ++i) CHECK(nk[runs[0].items[i - 1]] >= nk[runs[0].items[i]]);
  }

  SUBCASE("random is seeded") {
    for (const char* name : {"r1.csv", "r2.csv"})
      REQUIRE(run_cli({"rank", "--profiles", profiles, "--mode", "random", "--seed", "7", "--out", (dir / name).string()})
                  .code == 0);
    CHECK(slurp(dir / "r1.csv") == slurp(dir / "r2.csv"));
  }

  SUBCASE("error paths") {
    CHECK(run_cli({"rank", "--profiles", profiles, "--mode", "oracle", "--out", (dir / "o.csv").string()}).code == 1);
    CHECK(run_cli({"rank", "--profiles", profiles, "--mode", "bogus", "--out", (dir / "o.csv").string()}).code == 1);
    CHECK(run_cli({"rank", "--profiles", profiles, "--mode", "lid-first", "--out", (dir / "o.csv").string()}).code == 1);
  }

  SUBCASE("oracle with scores") {
    std::string text;
    for (std::size_t i = 0; i < p.size(); ++i) text += p.ids[i] + "," + std::to_string(i % 16) + "\n";
    std::ofstream(dir / "scores.csv") << text;
    REQUIRE(run_cli({"rank", "--profiles", profiles, "--mode", "oracle", "--scores", (dir / "scores.csv").string(), "--out",
                     (dir / "o.csv").string()})
                .code == 0);
    CHECK(read_run(dir / "o.csv")[0].items.front() == p.ids[15]);
  }

  SUBCASE("solver rankings re-rank candidate lists") {
    std::vector<Ranking> cands;
    for (int q = 0; q < 3; ++q) {
      Ranking r{"anchor" + std::to_string(q), {}};
      for (int i = 0; i < 12; ++i) r.items.push_back(p.ids[(q * 7 + i) % p.size()]);
      cands.push_back(r);
    }
    write_run(cands, dir / "cands.csv");
    for (const char* mode : {"hub-first", "lid-first", "lid"}) {
      const auto out = dir / (std::string(mode) + ".csv");
      REQUIRE(run_cli({"rank", "--profiles", profiles, "--mode", mode, "--features", (dir / "m.csv").string(),
                       "--candidates", (dir / "cands.csv").string(), "--k", "4", "--out", out.string()})
                  .code == 0);
      const auto runs = read_run(out);
      REQUIRE(runs.size() == 3);
      for (std::size_t q = 0; q < 3; ++q) {
        CHECK(runs[q].query_id == cands[q].query_id);
        auto a = runs[q].items, b = cands[q].items;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
      }
    }
  }
}

TEST_CASE("eval command") {
  const auto dir = testing::scratch_dir("cli_eval");
  std::ofstream(dir / "run.csv") << "q1,1,R1\nq1,2,N\nq1,3,R2\n";
  std::ofstream(dir / "gt.csv") << "q1,R1\nq1,R2\n";
  std::ofstream(dir / "perfect.csv") << "q1,1,R1\nq1,2,R2\nq1,3,N\n";

  auto r = run_cli({"eval", "--run", (dir / "run.csv").string(), "--gt", (dir / "gt.csv").string(), "--K", "3", "--out",
                    (dir / "rep.json").string()});
  REQUIRE(r.code == 0);
  const auto rep = read_json_file(dir / "rep.json");
  CHECK(std::abs(rep["map"].get<double>() - 5.0 / 6.0) <= 1e-9);
  CHECK(std::abs(rep["per_query"]["q1"].get<double>() - 5.0 / 6.0) <= 1e-9);
  CHECK(rep["K"] == 3);

  r = run_cli({"eval", "--run", (dir / "perfect.csv").string(), "--gt", (dir / "gt.csv").string(), "--K", "3", "--out",
               (dir / "p.json").string()});
  REQUIRE(r.code == 0);
  CHECK(read_json_file(dir / "p.json")["map"] == 1.0);

  std::string run, scores;
  double direct = 0;
  for (int i = 0; i < 20; ++i) {
    run += "all," + std::to_string(i + 1) + ",f" + std::to_string(i) + "\n";
    scores += "f" + std::to_string(i) + "," + std::to_string((i * 7) % 16) + "\n";
    if (i < 10) direct += (i * 7) % 16;
  }
  std::ofstream(dir / "srun.csv") << run;
  std::ofstream(dir / "scores.csv") << scores;
  r = run_cli({"eval", "--run", (dir / "srun.csv").string(), "--scores", (dir / "scores.csv").string(), "--K", "10",
               "--kind", "subjective", "--out", (dir / "s.json").string()});
  REQUIRE(r.code == 0);
  CHECK(read_json_file(dir / "s.json")["mean_subjective"].get<double>() == doctest::Approx(direct / 10));

  std::ofstream(dir / "other.csv") << "q9,1,R1\n";
  r = run_cli({"eval", "--run", (dir / "other.csv").string(), "--gt", (dir / "gt.csv").string(), "--K", "3"});
  CHECK(r.code == 1);
  CHECK(r.err.find("'q9'") != std::string::npos);
}

TEST_CASE("argument errors") {
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"frobnicate"}).code == 1);
  CHECK(run_cli({"analyze", "--features", "x.csv", "--out", "o", "--metric", "manhattan"}).code == 1);
  CHECK(run_cli({"--help"}).code == 0);
}
