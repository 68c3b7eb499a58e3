#include "huign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "huign/eval.hpp"
#include "huign/log.hpp"

namespace huign {
namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(epoch), std::uint64_t{0x7472}};
  std::mt19937_64 rng(seq);
  return rng();
}

// Smallest candidate pool over the users that will be evaluated.
std::size_t min_candidates(const Dataset& data, Split split) {
  const auto train = data.items_by_user(Split::Train);
  const auto valid = data.items_by_user(Split::Validation);
  const auto truth = data.items_by_user(split);
  std::size_t smallest = data.n_items;
  for (std::size_t u = 0; u < data.n_users; ++u) {
    if (truth[u].empty()) continue;
    const std::size_t excluded = train[u].size() + (split == Split::Test ? valid[u].size() : 0);
    smallest = std::min(smallest, data.n_items - excluded);
  }
  return smallest;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (patience == 0) throw std::invalid_argument("patience must be at least 1");
  if (refresh_interval == 0) throw std::invalid_argument("refresh_interval must be positive");
  if (!(clip_norm > 0)) throw std::invalid_argument("clip_norm must be positive");
  if (eval_k == 0) throw std::invalid_argument("eval_k must be positive");
  if (weights.assignment < 0 || weights.independence < 0 || weights.l2 < 0)
    throw std::invalid_argument("loss weights must be non-negative");
}

void adam_step(const ParamBlocks& params, const std::vector<Matrix>& grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (!params[b].second->same_shape(grads[b]))
      throw ShapeError("adam_step: gradient shape mismatch for '" + params[b].first + "'");
    if (!grads[b].all_finite()) throw NonFiniteGradient(params[b].first);
  }
  if (state.m.empty()) {
    for (const auto& [name, p] : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& theta = params[b].second->data();
    auto& m = state.m[b].data();
    auto& v = state.v[b].data();
    const auto& g = grads[b].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g.data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

TrainResult train(const Dataset& data, const CoGraph& graph, const ModelConfig& model, const TrainConfig& config,
                  std::optional<ModelParams> resume, const EpochCallback& on_epoch) {
  config.validate();
  model.validate();
  data.validate();
  if (graph.n_nodes() != data.n_items)
    throw std::invalid_argument("graph has " + std::to_string(graph.n_nodes()) + " nodes but dataset has " +
                                std::to_string(data.n_items) + " items");

  const ModelContext context(graph, data.features, model.modalities);
  ModelParams params = resume ? std::move(*resume)
                              : init_params(model, data.n_users, data.n_items, context.feature_dims(), config.seed);
  auto blocks = params.blocks();

  std::size_t eval_k = config.eval_k;
  if (!data.validation.empty()) {
    const std::size_t pool = min_candidates(data, Split::Validation);
    if (pool < eval_k) {
      log_warning("validation users have as few as " + std::to_string(pool) + " candidates; evaluating recall@" +
                  std::to_string(pool) + " instead of recall@" + std::to_string(eval_k));
      eval_k = std::max<std::size_t>(pool, 1);
    }
  }

  TrainResult result;
  result.best = params;
  AdamState adam;
  std::size_t since_improvement = 0;
  std::size_t step = 0;
  ForwardSnapshot cached;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const std::uint64_t seed = epoch_seed(config.seed, epoch);
    TripletSample sample = sample_triplets(data, seed);
    std::mt19937_64 order_rng(seed ^ 0x5bd1e995ULL);
    std::shuffle(sample.triplets.begin(), sample.triplets.end(), order_rng);

    EpochRecord record;
    record.epoch = epoch;
    std::size_t n_batches = 0;
    bool aborted = false;
    for (std::size_t start = 0; start < sample.triplets.size(); start += config.batch_size) {
      const std::size_t end = std::min(sample.triplets.size(), start + config.batch_size);
      std::span<const Triplet> batch(sample.triplets.data() + start, end - start);

      ad::Tape tape;
      ParamTensors bound = bind_params(tape, params);
      const bool refresh = step % config.refresh_interval == 0;
      ForwardPass pass = refresh ? forward(tape, context, bound, model) : replay(tape, cached);
      if (refresh && config.refresh_interval > 1) cached = snapshot(pass);
      LossTerms terms = total_loss(tape, pass, bound, model, config.weights, batch);

      const double loss = terms.total.value()(0, 0);
      if (!std::isfinite(loss)) {
        log_warning("non-finite loss at epoch " + std::to_string(epoch) + "; keeping the last good checkpoint");
        result.stop_reason = "non-finite loss";
        aborted = true;
        break;
      }
      record.train_loss += loss;
      record.l1 += terms.assignment.value()(0, 0);
      record.l2 += terms.independence.value()(0, 0);
      record.l3 += terms.bpr.value()(0, 0);

      ad::Gradients grads = ad::backward(tape, terms.total);
      std::vector<Matrix> g;
      g.reserve(blocks.size());
      for (ad::Tensor* t : bound.blocks()) g.push_back(grads[*t]);
      try {
        for (std::size_t b = 0; b < g.size(); ++b)
          if (!g[b].all_finite()) throw NonFiniteGradient(blocks[b].first);
        clip_global_norm(g, config.clip_norm);
        adam_step(blocks, g, adam, config.learning_rate);
      } catch (const NonFiniteGradient& e) {
        log_warning(std::string(e.what()) + " at epoch " + std::to_string(epoch) + "; epoch aborted");
        result.stop_reason = e.what();
        aborted = true;
        break;
      }
      ++step;
      ++n_batches;
    }
    if (aborted) break;

    if (n_batches > 0) {
      const auto n = static_cast<double>(n_batches);
      record.train_loss /= n;
      record.l1 /= n;
      record.l2 /= n;
      record.l3 /= n;
    }

    if (!data.validation.empty()) {
      const Representations reps = compute_representations(context, params, model);
      record.val_recall = rank_users(reps, data, Split::Validation, {eval_k}, config.eval_threads).recall.front();
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (record.val_recall > result.best_val_recall) {
      result.best_val_recall = record.val_recall;
      result.best_epoch = epoch;
      result.best = params;
      since_improvement = 0;
    } else if (++since_improvement >= config.patience) {
      result.stop_reason = "validation recall@" + std::to_string(eval_k) + " did not improve for " +
                           std::to_string(config.patience) + " epochs";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "reached max_epochs";
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,train_loss,l1,l2,l3,val_recall10\n" << std::setprecision(17);
  for (const auto& r : history)
    out << r.epoch << ',' << r.train_loss << ',' << r.l1 << ',' << r.l2 << ',' << r.l3 << ',' << r.val_recall << '\n';
}

}  // namespace huign
