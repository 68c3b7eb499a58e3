#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "huign/autodiff.hpp"
#include "huign/cograph.hpp"
#include "huign/ingest.hpp"
#include "huign/matrix.hpp"

namespace huign {

// Supernode counts per level, finest first.
struct LevelConfig {
  std::vector<std::size_t> counts{32, 8, 4};

  std::size_t depth() const { return counts.size(); }
  std::size_t total() const;
  void validate() const;
};

struct ModelConfig {
  LevelConfig levels;
  std::size_t id_dim = 64;
  std::vector<std::string> modalities;
  // Sum the assignment/independence losses over modalities (false: average).
  bool sum_over_modalities = true;

  void validate() const;
};

struct LossWeights {
  double assignment = 0.01;    // lambda1
  double independence = 0.01;  // lambda2
  double l2 = 1e-4;            // lambda3
};

struct ModelParams {
  std::map<std::string, std::vector<Matrix>> supernodes;  // [modality][level]: K_l x D_m
  std::map<std::string, Matrix> user_intent;              // [modality]: N x sum(K)
  Matrix id_user;                                         // N x D_id
  Matrix id_item;                                         // M x D_id

  // Every trainable block with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Matrix*>> blocks();
  std::vector<std::pair<std::string, const Matrix*>> blocks() const;
};

Matrix xavier_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed);

ModelParams init_params(const ModelConfig& config, std::size_t n_users, std::size_t n_items,
                        const std::map<std::string, std::size_t>& feature_dims, std::uint64_t seed);

// ModelParams bound to tape leaves; same block order as ModelParams::blocks().
struct ParamTensors {
  std::map<std::string, std::vector<ad::Tensor>> supernodes;
  std::map<std::string, ad::Tensor> user_intent;
  ad::Tensor id_user;
  ad::Tensor id_item;

  std::vector<ad::Tensor*> blocks();
};

ParamTensors bind_params(ad::Tape& tape, const ModelParams& params, bool requires_grad = true);

// Level-0 intra aggregation Â X with the isolated-node fallback z_i = x_i.
Matrix aggregate_base(const CoGraph& graph, const Matrix& features);

// Intra aggregation on a weighted coarse graph: D^-1/2 A D^-1/2 X with
// degrees taken as row sums (clamped at kRsqrtEps).
ad::Tensor intra_aggregate(const ad::Tensor& adjacency, const ad::Tensor& x);

struct Assignment {
  ad::Tensor affinity;  // E = Z X^T
  ad::Tensor gamma;     // row_softmax(E)
};
Assignment assign(const ad::Tensor& aggregated, const ad::Tensor& supernodes);

// Gamma^T A Gamma. The sparse overload serves level 1, where A is the binary
// item graph.
ad::Tensor coarsen(const ad::Tensor& gamma, const SparseMatrix& adjacency);
ad::Tensor coarsen(const ad::Tensor& gamma, const ad::Tensor& adjacency);

struct TowerOutputs {
  std::vector<ad::Tensor> aggregated;  // Z^(l-1), l = 1..L
  std::vector<ad::Tensor> affinity;    // E^(l)
  std::vector<ad::Tensor> assignment;  // Gamma^(l), K^(l-1) x K^(l)
  std::vector<ad::Tensor> adjacency;   // A^(l)
  std::vector<ad::Tensor> chain;       // Gamma^(1)...Gamma^(l), M x K^(l)
  ad::Tensor item_repr;                // chain blocks side by side, M x sum(K)
};

ad::Tensor item_repr(std::span<const ad::Tensor> chain);

TowerOutputs forward_tower(ad::Tape& tape, const CoGraph& graph, const Matrix& base_aggregate,
                           std::span<const ad::Tensor> supernodes);

// Per-dataset constants shared by every forward pass: the graph and the
// level-0 aggregates of each modality. The graph must outlive the context.
class ModelContext {
 public:
  ModelContext(const CoGraph& graph, const std::map<std::string, Matrix>& features,
               const std::vector<std::string>& modalities);

  const CoGraph& graph() const { return *graph_; }
  const Matrix& base(const std::string& modality) const;
  std::size_t n_items() const { return graph_->n_nodes(); }
  std::map<std::string, std::size_t> feature_dims() const;

 private:
  const CoGraph* graph_;
  std::map<std::string, Matrix> base_;
};

struct ForwardPass {
  std::map<std::string, TowerOutputs> towers;
};

ForwardPass forward(ad::Tape& tape, const ModelContext& context, const ParamTensors& params,
                    const ModelConfig& config);

// Values of a forward pass, reusable as constants on later tapes.
struct ForwardSnapshot {
  std::map<std::string, Matrix> item_repr;
  std::map<std::string, std::vector<Matrix>> assignment;
};
ForwardSnapshot snapshot(const ForwardPass& pass);
ForwardPass replay(ad::Tape& tape, const ForwardSnapshot& snap);

// Scores ū·v̄ for (users[b], items[b]) pairs, B x 1.
ad::Tensor fuse_and_score(const ParamTensors& params, const ForwardPass& pass,
                          std::span<const std::string> modalities, const std::vector<std::size_t>& users,
                          const std::vector<std::size_t>& items);

ad::Tensor loss_assignment(ad::Tape& tape, const ForwardPass& pass, const ModelConfig& config);
ad::Tensor loss_independence(ad::Tape& tape, const ParamTensors& params, const ModelConfig& config);
ad::Tensor loss_bpr(const ad::Tensor& pos_scores, const ad::Tensor& neg_scores);
// Sum of squared entries of every trainable block.
ad::Tensor l2_penalty(ad::Tape& tape, ParamTensors& params);

struct LossTerms {
  ad::Tensor total;
  ad::Tensor assignment;
  ad::Tensor independence;
  ad::Tensor bpr;
  ad::Tensor penalty;
};

LossTerms total_loss(ad::Tape& tape, const ForwardPass& pass, ParamTensors& params, const ModelConfig& config,
                     const LossWeights& weights, std::span<const Triplet> batch);

// Full ū (N x (D_id + sum K)) and v̄ (M x (D_id + sum K)) without gradients.
struct Representations {
  Matrix users;
  Matrix items;
  std::map<std::string, Matrix> item_repr;                // V_m
  std::map<std::string, std::vector<Matrix>> assignment;  // Gamma^(l)
  std::map<std::string, std::vector<Matrix>> chain;       // chain^(l)
};

Representations compute_representations(const ModelContext& context, const ModelParams& params,
                                         const ModelConfig& config);

}  // namespace huign
