#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "huign/log.hpp"
#include "huign/trainer.hpp"

using namespace huign;

namespace {

struct Quiet {
  LogSink previous = set_warning_sink([](std::string_view) {});
  ~Quiet() { set_warning_sink(previous); }
};

SyntheticData small_synthetic() {
  SyntheticSpec spec;
  spec.n_users = 60;
  spec.n_items = 80;
  spec.density = 0.12;
  return generate_synthetic(spec);
}

ModelConfig small_model(const Dataset& d) {
  ModelConfig m;
  m.levels.counts = {6, 2};
  m.id_dim = 8;
  for (const auto& [name, f] : d.features) m.modalities.push_back(name);
  return m;
}

}  // namespace

TEST_CASE("train config defaults and validation") {
  TrainConfig c;
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.batch_size == 1024);
  CHECK(c.max_epochs == 1000);
  CHECK(c.patience == 20);
  CHECK(c.weights.assignment == 0.01);
  CHECK(c.weights.independence == 0.01);
  CHECK(c.weights.l2 == 1e-4);
  CHECK_NOTHROW(c.validate());
  c.patience = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.learning_rate = -1.0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  Matrix p = Matrix::from_rows({{1, -2}});
  AdamState s;
  adam_step({{"p", &p}}, {Matrix(1, 2)}, s, 0.1);
  CHECK(p == Matrix::from_rows({{1, -2}}));
  CHECK(s.step == 1);
}

TEST_CASE("first adam step moves by lr times the gradient sign") {
  Matrix p(1, 3);
  AdamState s;
  const double lr = 0.01;
  adam_step({{"p", &p}}, {Matrix::from_rows({{3.0, -0.5, 1e-3}})}, s, lr);
  CHECK(p(0, 0) == doctest::Approx(-lr).epsilon(1e-6));
  CHECK(p(0, 1) == doctest::Approx(lr).epsilon(1e-6));
  CHECK(p(0, 2) == doctest::Approx(-lr).epsilon(1e-4));
}

TEST_CASE("adam decreases a quadratic") {
  Matrix theta(1, 1, 1.0);
  AdamState s;
  double prev = theta(0, 0);
  for (int step = 0; step < 2; ++step) {
    adam_step({{"theta", &theta}}, {theta * 2.0}, s, 0.1);
    CHECK(theta(0, 0) < prev);
    prev = theta(0, 0);
  }
  CHECK(s.step == 2);
}

TEST_CASE("non-finite gradients are rejected before any update") {
  Matrix a(1, 1, 1.0), b(1, 1, 1.0);
  AdamState s;
  try {
    adam_step({{"a", &a}, {"b", &b}}, {Matrix(1, 1, 0.5), Matrix(1, 1, std::nan(""))}, s, 0.1);
    FAIL("expected NonFiniteGradient");
  } catch (const NonFiniteGradient& e) {
    CHECK(e.block() == "b");
  }
  CHECK(a(0, 0) == 1.0);
  CHECK(s.step == 0);
}

TEST_CASE("global norm clipping") {
  std::vector<Matrix> g{Matrix::from_rows({{3, 0}}), Matrix::from_rows({{4}})};
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g[0](0, 0) == 3.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0](0, 0) == doctest::Approx(0.6));
  CHECK(g[1](0, 0) == doctest::Approx(0.8));
}

TEST_CASE("max_epochs of one runs exactly one epoch") {
  Quiet quiet;
  const auto s = small_synthetic();
  const CoGraph g = build_cograph(s.dataset.train, s.dataset.n_items, {2, 512, 0});
  TrainConfig c;
  c.max_epochs = 1;
  const auto r = train(s.dataset, g, small_model(s.dataset), c);
  CHECK(r.history.size() == 1);
  CHECK(r.best_epoch == 1);
}

TEST_CASE("training loss descends on planted data") {
  Quiet quiet;
  const auto s = generate_synthetic(SyntheticSpec{});
  const CoGraph g = build_cograph(s.dataset.train, s.dataset.n_items);
  TrainConfig c;
  c.max_epochs = 10;
  c.patience = 100;
  ModelConfig m;
  m.modalities = {"textual", "visual"};
  const auto r = train(s.dataset, g, m, c);
  REQUIRE(r.history.size() == 10);
  CHECK(r.history[9].train_loss < r.history[0].train_loss);
}

TEST_CASE("training is deterministic and early stopping keeps the best epoch") {
  Quiet quiet;
  const auto s = small_synthetic();
  const CoGraph g = build_cograph(s.dataset.train, s.dataset.n_items, {2, 512, 0});
  TrainConfig c;
  c.max_epochs = 60;
  c.patience = 5;
  c.learning_rate = 0.01;
  c.batch_size = 64;
  const auto a = train(s.dataset, g, small_model(s.dataset), c);
  const auto b = train(s.dataset, g, small_model(s.dataset), c);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].val_recall == b.history[e].val_recall);
  }
  CHECK(a.best.id_item == b.best.id_item);

  for (const auto& rec : a.history) CHECK(a.best_val_recall >= rec.val_recall);
  CHECK(a.history[a.best_epoch - 1].val_recall == a.best_val_recall);
  if (a.history.size() < c.max_epochs) {
    CHECK(a.history.size() == a.best_epoch + c.patience);
    for (std::size_t e = a.best_epoch; e < a.history.size(); ++e) CHECK(a.history[e].val_recall <= a.best_val_recall);
  }
}

TEST_CASE("refresh interval above one still trains") {
  Quiet quiet;
  const auto s = small_synthetic();
  const CoGraph g = build_cograph(s.dataset.train, s.dataset.n_items, {2, 512, 0});
  TrainConfig c;
  c.max_epochs = 3;
  c.batch_size = 32;
  c.refresh_interval = 4;
  const auto r = train(s.dataset, g, small_model(s.dataset), c);
  CHECK(r.history.size() == 3);
  for (const auto& rec : r.history) CHECK(std::isfinite(rec.train_loss));
}

TEST_CASE("separable toy reaches low BPR loss") {
  Quiet quiet;
  InteractionLog log;
  for (auto [u, i] : std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {0, 1}, {1, 2}, {1, 3}})
    log.interactions.push_back({u, i, std::nullopt});
  log.users = IdMap::identity(2);
  log.items = IdMap::identity(4);
  Dataset d = split_dataset(log, {}, 1);
  std::mt19937_64 rng(3);
  d.set_features("visual", fixtures::random_matrix(4, 3, rng));
  ModelConfig m;
  m.levels.counts = {2};
  m.modalities = {"visual"};
  TrainConfig c;
  c.max_epochs = 200;
  c.patience = 1000;
  c.weights = {0.0, 0.0, 0.0};
  const auto r = train(d, build_cograph(d.train, 4, {1, 512, 0}), m, c);
  REQUIRE(r.history.size() == 200);
  CHECK(r.history.back().l3 < 0.1);
}

TEST_CASE("divergent training stops and keeps the last good parameters") {
  Quiet quiet;
  const auto s = small_synthetic();
  const CoGraph g = build_cograph(s.dataset.train, s.dataset.n_items, {2, 512, 0});
  TrainConfig c;
  c.max_epochs = 20;
  c.learning_rate = 1e200;
  c.clip_norm = 1e300;
  const auto r = train(s.dataset, g, small_model(s.dataset), c);
  CHECK(r.history.size() < 20);
  CHECK(r.stop_reason.find("non-finite") != std::string::npos);
  for (const auto& [name, block] : r.best.blocks()) CHECK(block->all_finite());
}

TEST_CASE("resume continues from given parameters and history csv") {
  Quiet quiet;
  fixtures::TempDir dir("history");
  const auto s = small_synthetic();
  const CoGraph g = build_cograph(s.dataset.train, s.dataset.n_items, {2, 512, 0});
  TrainConfig c;
  c.max_epochs = 2;
  const auto model = small_model(s.dataset);
  const auto first = train(s.dataset, g, model, c);
  const auto resumed = train(s.dataset, g, model, c, first.best);
  CHECK(resumed.history.size() == 2);
  CHECK_THROWS(train(s.dataset, g, model, c, ModelParams{}));

  write_history_csv(dir.path / "h.csv", first.history);
  std::ifstream in(dir.path / "h.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,train_loss,l1,l2,l3,val_recall10");
}
