#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "hublid/error.hpp"
#include "hublid/statistics.hpp"
#include "test_util.hpp"

using namespace hublid;

namespace {

// Skewness from raw moments, independent of the central-moment loop.
double skew_from_raw_moments(const std::vector<std::size_t>& s) {
  const double n = static_cast<double>(s.size());
  double e1 = 0, e2 = 0, e3 = 0;
  for (auto v : s) {
    const double x = static_cast<double>(v);
    e1 += x / n;
    e2 += x * x / n;
    e3 += x * x * x / n;
  }
  const double var = e2 - e1 * e1;
  return (e3 - 3 * e1 * var - e1 * e1 * e1) / std::pow(var, 1.5);
}

}  // namespace

TEST_CASE("categorize") {
  CHECK(categorize(0, 10) == Category::anti_hub);
  CHECK(categorize(1, 10) == Category::normal);
  CHECK(categorize(10, 10) == Category::normal);
  CHECK(categorize(11, 10) == Category::hub);

  std::mt19937_64 rng(5);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 1 + rng() % 20, s = rng() % 40;
    const auto c = categorize(s, k);
    CHECK((c == Category::hub) == (s > k));
    CHECK((c == Category::anti_hub) == (s == 0));
  }
}

TEST_CASE("hubness scores") {
  SUBCASE("two mutual neighbors") {
    const auto p = hubness_scores(knn_graph(testing::from_rows({{0}, {1}}), 1, Metric::euclidean));
    CHECK(p.scores == std::vector<std::size_t>{1, 1});
    CHECK(p.categories == std::vector<Category>{Category::normal, Category::normal});
  }
  SUBCASE("1-D line") {
    const auto p = hubness_scores(knn_graph(testing::from_rows({{0}, {1}, {2.1}, {3.3}}), 1, Metric::euclidean));
    CHECK(p.scores == std::vector<std::size_t>{1, 2, 1, 0});
    CHECK(p.categories == std::vector<Category>{Category::normal, Category::hub, Category::normal, Category::anti_hub});
  }
  SUBCASE("conservation") {
    const auto g = knn_graph(testing::gaussian_matrix(500, 64, 17), 10, Metric::cosine);
    const auto p = hubness_scores(g);
    CHECK(std::accumulate(p.scores.begin(), p.scores.end(), std::size_t{0}) == 5000);
    const auto p3 = hubness_scores(g, 3);
    CHECK(std::accumulate(p3.scores.begin(), p3.scores.end(), std::size_t{0}) == 1500);
  }
}

TEST_CASE("skewness") {
  CHECK(skewness(std::vector<std::size_t>{3, 3, 3, 3}).s_nk == 0.0);
  CHECK(skewness(std::vector<std::size_t>{3, 3, 3, 3}).stddev == 0.0);

  const auto r = skewness(std::vector<std::size_t>{0, 0, 0, 4});
  CHECK(r.mean == doctest::Approx(1.0));
  CHECK(r.stddev == doctest::Approx(std::sqrt(3.0)));
  CHECK(r.s_nk == doctest::Approx(2.0 / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(r.hubness_exists);

  // Mirroring v -> max + min - v negates the skewness.
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::size_t> s(20), mirror(20);
    for (auto& v : s) v = rng() % 30;
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    for (std::size_t i = 0; i < s.size(); ++i) mirror[i] = *hi + *lo - s[i];
    const auto a = skewness(s), b = skewness(mirror);
    CHECK(a.s_nk == doctest::Approx(-b.s_nk).epsilon(1e-9));
    if (a.stddev > 0) CHECK(a.s_nk == doctest::Approx(skew_from_raw_moments(s)).epsilon(1e-9));
  }
}

TEST_CASE("LID analytic fixtures") {
  const double e1 = std::exp(-1.0), e2 = std::exp(-2.0);
  const std::vector<double> three{e1, e1, e1}, one{e2};
  auto a = lid_from_distances(three, 1.0);
  CHECK(std::abs(a.lid - 1.0) <= 1e-12);
  CHECK_FALSE(a.degenerate);
  auto b = lid_from_distances(one, 1.0);
  CHECK(std::abs(b.lid - 0.5) <= 1e-12);

  // Zero distances are clamped, giving a finite positive estimate.
  const std::vector<double> dup{0.0, 0.5};
  const auto c = lid_from_distances(dup, 1.0);
  CHECK(c.lid > 0.0);
  CHECK(std::isfinite(c.lid));
  CHECK_FALSE(c.degenerate);

  // All distances equal omega: capped and flagged.
  const std::vector<double> flat{2.0, 2.0};
  const auto d = lid_from_distances(flat, 2.0);
  CHECK(d.lid == kLidCap);
  CHECK(d.degenerate);
  const std::vector<double> zeros{0.0, 0.0};
  CHECK(lid_from_distances(zeros, 0.0).degenerate);
}

TEST_CASE("LID monotone as distances approach omega") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> l(10);
    for (auto& v : l) v = u(rng);
    std::sort(l.begin(), l.end());
    std::vector<double> closer(l);
    for (auto& v : closer) v = v + 0.5 * (1.0 - v);
    CHECK(lid_from_distances(closer, 1.0).lid > lid_from_distances(l, 1.0).lid);
  }
}

TEST_CASE("lid_mle uses the (n+1)-th neighbor as radius and is scale invariant") {
  const auto m = testing::gaussian_matrix(300, 4, 77);
  const auto g = knn_graph(m, 21, Metric::euclidean);
  const auto p = lid_mle(g, 20);
  CHECK(p.n_nbr == 20);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto list = g.neighbors(i);
    double s = 0.0;
    for (std::size_t r = 0; r < 20; ++r) s += std::log(list[r].distance / list[20].distance);
    CHECK(p.lids[i] == doctest::Approx(-20.0 / s).epsilon(1e-12));
    CHECK(p.lids[i] > 0.0);
    CHECK(p.lids[i] <= kLidCap);
  }

  std::vector<double> scaled = m.values();
  for (auto& v : scaled) v *= 37.5;
  const FeatureMatrix big(m.ids(), m.dim(), scaled);
  const auto q = lid_mle(knn_graph(big, 21, Metric::euclidean), 20);
  for (std::size_t i = 0; i < m.rows(); ++i) CHECK(q.lids[i] == doctest::Approx(p.lids[i]).epsilon(1e-9));

  CHECK_THROWS_AS(lid_mle(g, 21), Error);
}

TEST_CASE("lid_mle on duplicates is finite") {
  const auto m = testing::from_rows({{0, 0}, {0, 0}, {0, 0}, {1, 0}, {0, 2}});
  const auto p = lid_mle(knn_graph(m, 3, Metric::euclidean), 2);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(p.lids[i] > 0.0);
    CHECK(p.lids[i] <= kLidCap);
  }
}

TEST_CASE("diversity") {
  SUBCASE("orthogonal neighbors") {
    // Fragment 0 sits closest to the three axis vectors.
    const auto m = testing::from_rows({{1, 1, 1}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    const auto g = knn_graph(m, 3, Metric::cosine);
    const auto d = diversity(m, g, 3);
    CHECK(d.values[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("coincident neighbors") {
    const auto m = testing::from_rows({{0, 0}, {1, 1}, {1, 1}, {1, 1}, {9, 9}});
    const auto d = diversity(m, knn_graph(m, 3, Metric::euclidean), 3);
    CHECK(d.values[0] == 0.0);
  }
  SUBCASE("fewer than two neighbors") {
    const auto m = testing::from_rows({{0}, {1}});
    CHECK(diversity(m, knn_graph(m, 1, Metric::euclidean), 30).values == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("direct recomputation") {
    const auto m = testing::gaussian_matrix(100, 16, 5);
    const auto g = knn_graph(m, 10, Metric::cosine);
    const auto d = diversity(m, g, 5, 4);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const auto list = g.neighbors(i);
      double s = 0.0;
      int pairs = 0;
      for (int a = 0; a < 5; ++a)
        for (int b = a + 1; b < 5; ++b, ++pairs) s += pairwise_distance(m.row(list[a].index), m.row(list[b].index), Metric::cosine);
      CHECK(d.values[i] == s / pairs);
    }
  }
}

TEST_CASE("global_id") {
  CHECK(global_id(LidProfile{1, {2.0, 4.0}, {false, false}}) == 3.0);
  CHECK(global_id(LidProfile{1, {2.0, kLidCap}, {false, true}}) == 2.0);
  CHECK_THROWS_AS(global_id(LidProfile{1, {kLidCap}, {true}}), Error);
}

TEST_CASE("profile csv round trip") {
  const auto dir = testing::scratch_dir("profile_csv");
  const auto m = testing::gaussian_matrix(60, 5, 9);
  const auto g = knn_graph(m, 12, Metric::euclidean);
  StatProfile p{m.ids(), hubness_scores(g, 10), lid_mle(g, 11), diversity(m, g, 8)};
  write_profile_csv(p, dir / "p.csv");
  const auto back = read_profile_csv(dir / "p.csv");
  CHECK(back.ids == p.ids);
  CHECK(back.hubness.scores == p.hubness.scores);
  CHECK(back.hubness.categories == p.hubness.categories);
  CHECK(back.lid.lids == p.lid.lids);
  CHECK(back.lid.degenerate == p.lid.degenerate);
  CHECK(back.diversity.values == p.diversity.values);
}
