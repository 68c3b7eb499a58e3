#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "huign/cograph.hpp"
#include "huign/ingest.hpp"
#include "huign/intents.hpp"

namespace huign {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 1000;
  std::size_t patience = 20;
  LossWeights weights{};
  std::uint64_t seed = 2020;
  // Recompute the towers every this many steps; in between, the last
  // forward pass is reused as a constant.
  std::size_t refresh_interval = 1;
  double clip_norm = 5.0;
  std::size_t eval_k = 10;
  std::size_t eval_threads = 1;

  void validate() const;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& block)
      : std::runtime_error("non-finite gradient in parameter block '" + block + "'"), block_(block) {}
  const std::string& block() const { return block_; }

 private:
  std::string block_;
};

using ParamBlocks = std::vector<std::pair<std::string, Matrix*>>;

// Bias-corrected Adam update. Throws NonFiniteGradient, before touching any
// parameter, when a gradient entry is NaN or infinite.
void adam_step(const ParamBlocks& params, const std::vector<Matrix>& grads, AdamState& state, double lr);

// Rescales in place so the global L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
  double val_recall = 0.0;
};

struct TrainResult {
  ModelParams best;
  std::size_t best_epoch = 0;
  double best_val_recall = -1.0;
  std::vector<EpochRecord> history;
  std::string stop_reason;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const Dataset& data, const CoGraph& graph, const ModelConfig& model, const TrainConfig& config,
                  std::optional<ModelParams> resume = std::nullopt, const EpochCallback& on_epoch = {});

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace huign
