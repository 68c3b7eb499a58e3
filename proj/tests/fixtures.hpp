#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "huign/cograph.hpp"
#include "huign/ingest.hpp"
#include "huign/intents.hpp"
#include "huign/matrix.hpp"
#include "oracle.hpp"

namespace fixtures {

inline huign::Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  huign::Matrix m(r, c);
  for (double& x : m.data()) x = g(rng);
  return m;
}

inline oracle::Mat to_oracle(const huign::Matrix& m) {
  oracle::Mat out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i].assign(m.row(i).begin(), m.row(i).end());
  return out;
}

inline huign::CoGraph random_graph(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<huign::CoEdge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng)) edges.push_back({i, j, 1});
  return huign::CoGraph(n, edges);
}

// A complete model instance plus its oracle twin.
struct Instance {
  huign::CoGraph graph;
  std::map<std::string, huign::Matrix> features;
  huign::ModelConfig config;
  huign::ModelParams params;
  std::size_t n_users = 0;
  oracle::Model oracle_model;
};

inline Instance random_instance(std::uint64_t seed, std::size_t n_users, std::size_t n_items,
                                std::vector<std::size_t> levels, std::vector<std::string> modalities,
                                double edge_p = 0.4, std::size_t id_dim = 3) {
  std::mt19937_64 rng(seed);
  Instance inst;
  inst.n_users = n_users;
  inst.graph = random_graph(n_items, edge_p, rng);
  inst.config.levels.counts = std::move(levels);
  inst.config.modalities = std::move(modalities);
  inst.config.id_dim = id_dim;
  std::map<std::string, std::size_t> dims;
  std::size_t d = 2;
  for (const auto& m : inst.config.modalities) {
    inst.features[m] = random_matrix(n_items, d, rng);
    dims[m] = d++;
  }
  inst.params = huign::init_params(inst.config, n_users, n_items, dims, rng());
  // Larger supernodes than Xavier gives, so softmax rows are far from uniform.
  for (auto& [m, lv] : inst.params.supernodes)
    for (auto& x : lv) x *= 2.0;

  inst.oracle_model.a0 = to_oracle(inst.graph.adjacency().to_dense());
  for (const auto& [m, f] : inst.features) inst.oracle_model.features[m] = to_oracle(f);
  for (const auto& [m, lv] : inst.params.supernodes)
    for (const auto& x : lv) inst.oracle_model.params.supernodes[m].push_back(to_oracle(x));
  for (const auto& [m, u] : inst.params.user_intent) inst.oracle_model.params.user_intent[m] = to_oracle(u);
  inst.oracle_model.params.id_user = to_oracle(inst.params.id_user);
  inst.oracle_model.params.id_item = to_oracle(inst.params.id_item);
  return inst;
}

inline std::vector<huign::Triplet> random_triplets(std::size_t count, std::size_t n_users, std::size_t n_items,
                                                   std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> u(0, n_users - 1), i(0, n_items - 1);
  std::vector<huign::Triplet> out;
  while (out.size() < count) {
    huign::Triplet t{u(rng), i(rng), i(rng)};
    if (t.pos_item != t.neg_item) out.push_back(t);
  }
  return out;
}

inline std::vector<oracle::TripletRow> to_oracle(const std::vector<huign::Triplet>& ts) {
  std::vector<oracle::TripletRow> out;
  for (const auto& t : ts) out.push_back({t.user, t.pos_item, t.neg_item});
  return out;
}

inline double max_diff(const huign::Matrix& a, const oracle::Mat& b) {
  if (a.rows() != b.size()) return 1e300;
  double d = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (a.cols() != b[i].size()) return 1e300;
    for (std::size_t j = 0; j < a.cols(); ++j) d = std::max(d, std::abs(a(i, j) - b[i][j]));
  }
  return d;
}

// Max grad_check error of total_loss over every parameter block.
inline double total_loss_grad_error(const Instance& inst, const std::vector<huign::Triplet>& batch,
                                    const huign::LossWeights& weights, double h = 1e-5) {
  const huign::ModelContext context(inst.graph, inst.features, inst.config.modalities);
  const auto names = inst.params.blocks();
  double worst = 0.0;
  for (std::size_t b = 0; b < names.size(); ++b) {
    auto f = [&, b](huign::ad::Tape& tape, const huign::ad::Tensor& leaf) {
      huign::ParamTensors bound = huign::bind_params(tape, inst.params, false);
      *bound.blocks()[b] = leaf;
      const auto pass = huign::forward(tape, context, bound, inst.config);
      return huign::total_loss(tape, pass, bound, inst.config, weights, batch).total;
    };
    worst = std::max(worst, huign::ad::grad_check(f, *names[b].second, h));
  }
  return worst;
}

// Random dataset with explicit split membership and random scores.
struct RankingCase {
  huign::Dataset data;
  huign::Matrix scores;
};

inline RankingCase random_ranking_case(std::uint64_t seed, std::size_t n_users, std::size_t n_items) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> which(0, 9);
  RankingCase c;
  c.data.n_users = n_users;
  c.data.n_items = n_items;
  for (std::size_t u = 0; u < n_users; ++u) {
    c.data.train.push_back({u, u % n_items, std::nullopt});
    for (std::size_t i = 0; i < n_items; ++i) {
      if (i == u % n_items) continue;
      const int w = which(rng);
      if (w < 2) c.data.train.push_back({u, i, std::nullopt});
      else if (w == 2) c.data.validation.push_back({u, i, std::nullopt});
      else if (w == 3) c.data.test.push_back({u, i, std::nullopt});
    }
  }
  // Coarse scores so ties occur.
  std::uniform_int_distribution<int> coarse(0, 4);
  c.scores = huign::Matrix(n_users, n_items);
  for (double& x : c.scores.data()) x = static_cast<double>(coarse(rng)) * 0.5;
  return c;
}

inline std::vector<std::set<std::size_t>> to_sets(const std::vector<std::vector<std::size_t>>& lists) {
  std::vector<std::set<std::size_t>> out;
  for (const auto& l : lists) out.emplace_back(l.begin(), l.end());
  return out;
}

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("huign-test-" + tag + "-" + std::to_string(std::random_device{}()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace fixtures
