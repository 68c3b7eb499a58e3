#include "huign/intents.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace huign {

std::size_t LevelConfig::total() const {
  std::size_t s = 0;
  for (auto k : counts) s += k;
  return s;
}

void LevelConfig::validate() const {
  if (counts.empty()) throw std::invalid_argument("level structure needs at least one level");
  for (auto k : counts)
    if (k == 0) throw std::invalid_argument("every level needs at least one supernode");
}

void ModelConfig::validate() const {
  levels.validate();
  if (modalities.empty()) throw std::invalid_argument("at least one modality is required");
  auto sorted = modalities;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("duplicate modality");
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::blocks() {
  std::vector<std::pair<std::string, Matrix*>> out;
  for (auto& [m, levels] : supernodes)
    for (std::size_t l = 0; l < levels.size(); ++l)
      out.emplace_back("supernodes/" + m + "/" + std::to_string(l + 1), &levels[l]);
  for (auto& [m, u] : user_intent) out.emplace_back("user_intent/" + m, &u);
  out.emplace_back("id_user", &id_user);
  out.emplace_back("id_item", &id_item);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::blocks() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, ptr] : const_cast<ModelParams*>(this)->blocks()) out.emplace_back(name, ptr);
  return out;
}

Matrix xavier_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = dist(rng);
  return m;
}

ModelParams init_params(const ModelConfig& config, std::size_t n_users, std::size_t n_items,
                        const std::map<std::string, std::size_t>& feature_dims, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  std::seed_seq seq{seed, std::uint64_t{0x48554947}};
  std::mt19937_64 seeder(seq);
  for (const auto& m : config.modalities) {
    auto it = feature_dims.find(m);
    if (it == feature_dims.end()) throw std::invalid_argument("no features for modality '" + m + "'");
    auto& levels = p.supernodes[m];
    for (auto k : config.levels.counts) levels.push_back(xavier_uniform(k, it->second, seeder()));
    p.user_intent[m] = xavier_uniform(n_users, config.levels.total(), seeder());
  }
  p.id_user = xavier_uniform(n_users, config.id_dim, seeder());
  p.id_item = xavier_uniform(n_items, config.id_dim, seeder());
  return p;
}

std::vector<ad::Tensor*> ParamTensors::blocks() {
  std::vector<ad::Tensor*> out;
  for (auto& [m, levels] : supernodes)
    for (auto& t : levels) out.push_back(&t);
  for (auto& [m, t] : user_intent) out.push_back(&t);
  out.push_back(&id_user);
  out.push_back(&id_item);
  return out;
}

ParamTensors bind_params(ad::Tape& tape, const ModelParams& params, bool requires_grad) {
  ParamTensors t;
  for (const auto& [m, levels] : params.supernodes)
    for (const auto& x : levels) t.supernodes[m].push_back(tape.leaf(x, requires_grad));
  for (const auto& [m, u] : params.user_intent) t.user_intent.emplace(m, tape.leaf(u, requires_grad));
  t.id_user = tape.leaf(params.id_user, requires_grad);
  t.id_item = tape.leaf(params.id_item, requires_grad);
  return t;
}

Matrix aggregate_base(const CoGraph& graph, const Matrix& features) {
  if (features.rows() != graph.n_nodes())
    throw ShapeError("aggregate_base: graph has " + std::to_string(graph.n_nodes()) + " nodes, features " +
                     features.shape_string());
  Matrix z = spmm(graph.norm_adj(), features);
  for (std::size_t i = 0; i < graph.n_nodes(); ++i) {
    if (graph.degrees()[i] != 0) continue;
    auto src = features.row(i);
    std::copy(src.begin(), src.end(), z.row(i).begin());
  }
  return z;
}

ad::Tensor intra_aggregate(const ad::Tensor& adjacency, const ad::Tensor& x) {
  if (adjacency.rows() != adjacency.cols() || adjacency.cols() != x.rows())
    throw ShapeError("intra_aggregate: adjacency " + adjacency.value().shape_string() + ", nodes " +
                     x.value().shape_string());
  ad::Tensor inv_sqrt_deg = ad::rsqrt(ad::row_sum(adjacency));
  return ad::mul_rows(ad::matmul(adjacency, ad::mul_rows(x, inv_sqrt_deg)), inv_sqrt_deg);
}

Assignment assign(const ad::Tensor& aggregated, const ad::Tensor& supernodes) {
  if (aggregated.cols() != supernodes.cols())
    throw ShapeError("assign: node dim " + std::to_string(aggregated.cols()) + " vs supernode dim " +
                     std::to_string(supernodes.cols()));
  ad::Tensor affinity = ad::matmul(aggregated, ad::transpose(supernodes));
  return {affinity, ad::row_softmax(affinity)};
}

ad::Tensor coarsen(const ad::Tensor& gamma, const SparseMatrix& adjacency) {
  return ad::matmul(ad::transpose(gamma), ad::spmm_const(adjacency, gamma));
}

ad::Tensor coarsen(const ad::Tensor& gamma, const ad::Tensor& adjacency) {
  return ad::matmul(ad::transpose(gamma), ad::matmul(adjacency, gamma));
}

ad::Tensor item_repr(std::span<const ad::Tensor> chain) { return ad::concat_cols(chain); }

TowerOutputs forward_tower(ad::Tape& tape, const CoGraph& graph, const Matrix& base_aggregate,
                           std::span<const ad::Tensor> supernodes) {
  if (supernodes.empty()) throw std::invalid_argument("forward_tower: no levels");
  TowerOutputs out;
  ad::Tensor z = tape.constant(base_aggregate);
  for (std::size_t l = 0; l < supernodes.size(); ++l) {
    if (l > 0) z = intra_aggregate(out.adjacency.back(), supernodes[l - 1]);
    Assignment a = assign(z, supernodes[l]);
    out.aggregated.push_back(z);
    out.affinity.push_back(a.affinity);
    out.assignment.push_back(a.gamma);
    out.adjacency.push_back(l == 0 ? coarsen(a.gamma, graph.adjacency()) : coarsen(a.gamma, out.adjacency.back()));
    out.chain.push_back(l == 0 ? a.gamma : ad::matmul(out.chain.back(), a.gamma));
  }
  out.item_repr = item_repr(out.chain);
  return out;
}

ModelContext::ModelContext(const CoGraph& graph, const std::map<std::string, Matrix>& features,
                           const std::vector<std::string>& modalities)
    : graph_(&graph) {
  for (const auto& m : modalities) {
    auto it = features.find(m);
    if (it == features.end()) throw std::invalid_argument("no features for modality '" + m + "'");
    base_.emplace(m, aggregate_base(graph, it->second));
  }
}

const Matrix& ModelContext::base(const std::string& modality) const {
  auto it = base_.find(modality);
  if (it == base_.end()) throw std::invalid_argument("modality '" + modality + "' not in model context");
  return it->second;
}

std::map<std::string, std::size_t> ModelContext::feature_dims() const {
  std::map<std::string, std::size_t> dims;
  for (const auto& [m, z] : base_) dims[m] = z.cols();
  return dims;
}

ForwardPass forward(ad::Tape& tape, const ModelContext& context, const ParamTensors& params,
                    const ModelConfig& config) {
  ForwardPass pass;
  for (const auto& m : config.modalities) {
    auto it = params.supernodes.find(m);
    if (it == params.supernodes.end()) throw std::invalid_argument("no supernodes for modality '" + m + "'");
    if (it->second.size() != config.levels.depth())
      throw std::invalid_argument("modality '" + m + "' has " + std::to_string(it->second.size()) +
                                  " supernode levels, config expects " + std::to_string(config.levels.depth()));
    pass.towers.emplace(m, forward_tower(tape, context.graph(), context.base(m), it->second));
  }
  return pass;
}

ForwardSnapshot snapshot(const ForwardPass& pass) {
  ForwardSnapshot snap;
  for (const auto& [m, tower] : pass.towers) {
    snap.item_repr[m] = tower.item_repr.value();
    for (const auto& g : tower.assignment) snap.assignment[m].push_back(g.value());
  }
  return snap;
}

ForwardPass replay(ad::Tape& tape, const ForwardSnapshot& snap) {
  ForwardPass pass;
  for (const auto& [m, repr] : snap.item_repr) {
    TowerOutputs tower;
    tower.item_repr = tape.constant(repr);
    for (const auto& g : snap.assignment.at(m)) tower.assignment.push_back(tape.constant(g));
    pass.towers.emplace(m, std::move(tower));
  }
  return pass;
}

ad::Tensor fuse_and_score(const ParamTensors& params, const ForwardPass& pass,
                          std::span<const std::string> modalities, const std::vector<std::size_t>& users,
                          const std::vector<std::size_t>& items) {
  if (users.size() != items.size()) throw ShapeError("fuse_and_score: user and item batches differ in length");
  if (modalities.empty()) throw std::invalid_argument("fuse_and_score: no modalities requested");
  ad::Tensor u_star, v_star;
  for (const auto& m : modalities) {
    auto ui = params.user_intent.find(m);
    auto tw = pass.towers.find(m);
    if (ui == params.user_intent.end() || tw == pass.towers.end())
      throw std::invalid_argument("modality '" + m + "' missing from model");
    ad::Tensor u = ad::gather_rows(ui->second, users);
    ad::Tensor v = ad::gather_rows(tw->second.item_repr, items);
    u_star = u_star.valid() ? ad::add(u_star, u) : u;
    v_star = v_star.valid() ? ad::add(v_star, v) : v;
  }
  const ad::Tensor u_parts[] = {ad::gather_rows(params.id_user, users), u_star};
  const ad::Tensor v_parts[] = {ad::gather_rows(params.id_item, items), v_star};
  return ad::row_sum(ad::hadamard(ad::concat_cols(u_parts), ad::concat_cols(v_parts)));
}

namespace {

ad::Tensor accumulate(const ad::Tensor& acc, const ad::Tensor& term) {
  return acc.valid() ? ad::add(acc, term) : term;
}

ad::Tensor reduce_modalities(ad::Tape& tape, const std::vector<ad::Tensor>& per_modality, bool sum_over) {
  if (per_modality.empty()) return tape.constant(Matrix(1, 1));
  ad::Tensor total;
  for (const auto& t : per_modality) total = accumulate(total, t);
  if (!sum_over) total = ad::scale(total, 1.0 / static_cast<double>(per_modality.size()));
  return total;
}

}  // namespace

ad::Tensor loss_assignment(ad::Tape& tape, const ForwardPass& pass, const ModelConfig& config) {
  std::vector<ad::Tensor> per_modality;
  for (const auto& [m, tower] : pass.towers) {
    ad::Tensor acc;
    for (const auto& gamma : tower.assignment) {
      const auto rows = static_cast<double>(gamma.rows());
      const auto k = static_cast<double>(gamma.cols());
      ad::Tensor entropy_sum = ad::sum(ad::hadamard(gamma, ad::log(gamma)));
      acc = accumulate(acc, ad::scale(entropy_sum, -1.0 / (k * rows)));
    }
    if (acc.valid()) per_modality.push_back(acc);
  }
  return reduce_modalities(tape, per_modality, config.sum_over_modalities);
}

ad::Tensor loss_independence(ad::Tape& tape, const ParamTensors& params, const ModelConfig& config) {
  std::vector<ad::Tensor> per_modality;
  for (const auto& m : config.modalities) {
    auto it = params.supernodes.find(m);
    if (it == params.supernodes.end()) continue;
    ad::Tensor acc;
    for (const auto& x : it->second) {
      ad::Tensor gram = ad::matmul(x, ad::transpose(x));
      ad::Tensor dev = ad::sub(gram, tape.constant(Matrix::identity(x.rows())));
      acc = accumulate(acc, ad::scale(ad::frobenius_norm(dev), 1.0 / static_cast<double>(x.rows())));
    }
    if (acc.valid()) per_modality.push_back(acc);
  }
  return reduce_modalities(tape, per_modality, config.sum_over_modalities);
}

ad::Tensor loss_bpr(const ad::Tensor& pos_scores, const ad::Tensor& neg_scores) {
  return ad::scale(ad::mean(ad::log_sigmoid(ad::sub(pos_scores, neg_scores))), -1.0);
}

ad::Tensor l2_penalty(ad::Tape& tape, ParamTensors& params) {
  ad::Tensor acc;
  for (ad::Tensor* block : params.blocks()) acc = accumulate(acc, ad::frobenius_sq(*block));
  return acc.valid() ? acc : tape.constant(Matrix(1, 1));
}

LossTerms total_loss(ad::Tape& tape, const ForwardPass& pass, ParamTensors& params, const ModelConfig& config,
                     const LossWeights& weights, std::span<const Triplet> batch) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  std::vector<std::size_t> users, pos, neg;
  users.reserve(batch.size());
  pos.reserve(batch.size());
  neg.reserve(batch.size());
  for (const auto& t : batch) {
    users.push_back(t.user);
    pos.push_back(t.pos_item);
    neg.push_back(t.neg_item);
  }
  LossTerms terms;
  terms.bpr = loss_bpr(fuse_and_score(params, pass, config.modalities, users, pos),
                       fuse_and_score(params, pass, config.modalities, users, neg));
  terms.assignment = loss_assignment(tape, pass, config);
  terms.independence = loss_independence(tape, params, config);
  terms.penalty = l2_penalty(tape, params);

  ad::Tensor total = terms.bpr;
  if (weights.assignment != 0.0) total = ad::add(total, ad::scale(terms.assignment, weights.assignment));
  if (weights.independence != 0.0) total = ad::add(total, ad::scale(terms.independence, weights.independence));
  if (weights.l2 != 0.0) total = ad::add(total, ad::scale(terms.penalty, weights.l2));
  terms.total = total;
  return terms;
}

Representations compute_representations(const ModelContext& context, const ModelParams& params,
                                         const ModelConfig& config) {
  ad::Tape tape;
  ParamTensors bound = bind_params(tape, params, false);
  ForwardPass pass = forward(tape, context, bound, config);

  Representations r;
  Matrix u_star(params.id_user.rows(), config.levels.total());
  Matrix v_star(context.n_items(), config.levels.total());
  for (const auto& m : config.modalities) {
    const auto& tower = pass.towers.at(m);
    u_star += params.user_intent.at(m);
    v_star += tower.item_repr.value();
    r.item_repr[m] = tower.item_repr.value();
    for (const auto& g : tower.assignment) r.assignment[m].push_back(g.value());
    for (const auto& c : tower.chain) r.chain[m].push_back(c.value());
  }
  const Matrix u_parts[] = {params.id_user, u_star};
  const Matrix v_parts[] = {params.id_item, v_star};
  r.users = hstack(u_parts);
  r.items = hstack(v_parts);
  return r;
}

}  // namespace huign
