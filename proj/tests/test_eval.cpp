#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "huign/eval.hpp"

using namespace huign;

namespace {

using V = std::vector<std::size_t>;

UserScorer scorer_for(const Matrix& scores) {
  return [&scores](std::size_t u, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scores(u, i);
  };
}

}  // namespace

TEST_CASE("precision examples") {
  CHECK(precision_at_k(V{1, 2}, V{1}, 2) == 0.5);
  CHECK(precision_at_k(V{1, 2, 3}, V{7}, 3) == 0.0);
  CHECK(precision_at_k(V{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, V{2, 5, 9}, 10) == doctest::Approx(0.3));
}

TEST_CASE("recall examples") {
  CHECK(recall_at_k(V{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, V{3, 8, 20, 30}, 10) == 0.5);
  CHECK(recall_at_k(V{5, 2, 9}, V{2, 5}, 3) == 1.0);
  CHECK(recall_at_k(V{5, 2, 9}, V{1}, 3) == 0.0);
}

TEST_CASE("ndcg examples") {
  CHECK(ndcg_at_k(V{4, 1, 2}, V{4}, 10) == 1.0);
  CHECK(ndcg_at_k(V{0, 9, 1, 8, 7, 6, 5, 4, 3, 2}, V{0, 1}, 10) == doctest::Approx(0.91972).epsilon(1e-5));
  CHECK(ndcg_at_k(V{3, 4, 5}, V{1, 2}, 3) == 0.0);
}

TEST_CASE("single top-ranked test item") {
  Dataset d;
  d.n_users = 1;
  d.n_items = 3;
  d.train = {{0, 0, std::nullopt}};
  d.test = {{0, 2, std::nullopt}};
  const Matrix s = Matrix::from_rows({{5, 1, 3}});
  const auto r = rank_users(scorer_for(s), d, Split::Test, {1});
  CHECK(r.value("precision", 1) == 1.0);
  CHECK(r.value("recall", 1) == 1.0);
  CHECK(r.value("ndcg", 1) == 1.0);
  CHECK(r.users[0].top == V{2});
}

TEST_CASE("ties break by ascending item id") {
  const std::vector<double> s{1.0, 2.0, 2.0, 0.5, 2.0};
  CHECK(top_k(s, V{0, 1, 2, 3, 4}, 4) == V{1, 2, 4, 0});
  CHECK(top_k(s, V{4, 3, 2}, 2) == V{2, 4});
}

TEST_CASE("rank_users equals the brute-force evaluator") {
  const V ks{1, 5, 10};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = fixtures::random_ranking_case(seed, 7, 40);
    for (Split split : {Split::Validation, Split::Test}) {
      const auto train = c.data.items_by_user(Split::Train);
      const auto valid = c.data.items_by_user(Split::Validation);
      std::vector<std::set<std::size_t>> excluded = fixtures::to_sets(train);
      if (split == Split::Test)
        for (std::size_t u = 0; u < 7; ++u) excluded[u].insert(valid[u].begin(), valid[u].end());
      const auto truth = fixtures::to_sets(c.data.items_by_user(split));
      const auto ref = oracle::evaluate(fixtures::to_oracle(c.scores), excluded, truth, ks);
      for (std::size_t threads : {1, 3}) {
        const auto got = rank_users(scorer_for(c.scores), c.data, split, ks, threads);
        CHECK(got.n_skipped == ref.skipped);
        REQUIRE(got.users.size() == ref.users.size());
        for (std::size_t i = 0; i < got.users.size(); ++i) {
          CHECK(got.users[i].user == ref.users[i].user);
          CHECK(got.users[i].top == ref.users[i].top);
          CHECK(got.users[i].precision == ref.users[i].p);
          CHECK(got.users[i].recall == ref.users[i].r);
          CHECK(got.users[i].ndcg == ref.users[i].n);
        }
        CHECK(got.precision == ref.p);
        CHECK(got.recall == ref.r);
        CHECK(got.ndcg == ref.n);
      }
    }
  }
}

TEST_CASE("metric bounds, recall monotonicity and shift invariance") {
  const V ks{1, 2, 3, 5, 8, 10};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto c = fixtures::random_ranking_case(100 + seed, 6, 40);
    const auto base = rank_users(scorer_for(c.scores), c.data, Split::Test, ks);
    for (const auto& u : base.users) {
      for (std::size_t i = 0; i < ks.size(); ++i) {
        for (double v : {u.precision[i], u.recall[i], u.ndcg[i]}) {
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
        }
        if (i > 0) CHECK(u.recall[i] >= u.recall[i - 1]);
      }
    }
    for (double& x : c.scores.data()) x += 0.25;
    const auto shifted = rank_users(scorer_for(c.scores), c.data, Split::Test, ks);
    for (std::size_t i = 0; i < base.users.size(); ++i) CHECK(shifted.users[i].top == base.users[i].top);
  }
}

TEST_CASE("users without ground truth are skipped and counted") {
  Dataset d;
  d.n_users = 3;
  d.n_items = 4;
  d.train = {{0, 0, std::nullopt}, {1, 1, std::nullopt}, {2, 2, std::nullopt}};
  d.test = {{1, 3, std::nullopt}};
  const auto r = rank_users(scorer_for(Matrix(3, 4)), d, Split::Test, {1});
  CHECK(r.n_evaluated == 1);
  CHECK(r.n_skipped == 2);
}

TEST_CASE("K above the candidate count names the user") {
  Dataset d;
  d.n_users = 2;
  d.n_items = 3;
  d.train = {{0, 0, std::nullopt}, {1, 0, std::nullopt}, {1, 1, std::nullopt}};
  d.test = {{0, 2, std::nullopt}, {1, 2, std::nullopt}};
  try {
    rank_users(scorer_for(Matrix(2, 3)), d, Split::Test, {2});
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("user 1") != std::string::npos);
  }
}

TEST_CASE("random baseline is K over candidates") {
  Dataset d;
  d.n_users = 2;
  d.n_items = 12;
  d.train = {{0, 0, std::nullopt}, {1, 0, std::nullopt}, {1, 1, std::nullopt}};
  d.validation = {{1, 2, std::nullopt}};
  d.test = {{0, 5, std::nullopt}, {1, 6, std::nullopt}};
  CHECK(random_recall_baseline(d, Split::Test, 3) == doctest::Approx((3.0 / 11.0 + 3.0 / 9.0) / 2.0));
}

TEST_CASE("report csv layout") {
  fixtures::TempDir dir("report");
  const auto c = fixtures::random_ranking_case(7, 5, 40);
  const auto r = rank_users(scorer_for(c.scores), c.data, Split::Test, {1, 5, 10});
  write_report_csv(dir.path / "r.csv", r);
  std::ifstream in(dir.path / "r.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "metric,K,value,n_users");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 9);
  write_per_user_csv(dir.path / "u.csv", r, IdMap::identity(5), IdMap::identity(40));
  CHECK(std::filesystem::file_size(dir.path / "u.csv") > 0);
}
