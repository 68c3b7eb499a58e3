#include "huign/cograph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "huign/log.hpp"

namespace huign {

CoGraph::CoGraph(std::size_t n_nodes, std::vector<CoEdge> edges)
    : n_nodes_(n_nodes), edges_(std::move(edges)), degrees_(n_nodes, 0) {
  std::sort(edges_.begin(), edges_.end(), [](const CoEdge& a, const CoEdge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  std::vector<std::size_t> rows, cols;
  rows.reserve(edges_.size() * 2);
  cols.reserve(edges_.size() * 2);
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const auto& e = edges_[k];
    if (e.i >= e.j || e.j >= n_nodes)
      throw DataError("invalid edge (" + std::to_string(e.i) + "," + std::to_string(e.j) + ")");
    if (k > 0 && edges_[k - 1].i == e.i && edges_[k - 1].j == e.j)
      throw DataError("duplicate edge (" + std::to_string(e.i) + "," + std::to_string(e.j) + ")");
    rows.push_back(e.i);
    cols.push_back(e.j);
    rows.push_back(e.j);
    cols.push_back(e.i);
    ++degrees_[e.i];
    ++degrees_[e.j];
  }
  std::vector<double> ones(rows.size(), 1.0);
  adjacency_ = SparseMatrix::from_triplets(n_nodes, n_nodes, std::move(rows), std::move(cols), std::move(ones));
  norm_adj_ = normalize(adjacency_);
}

CoGraph CoGraph::with_threshold(std::size_t min_cousers) const {
  std::vector<CoEdge> kept;
  for (const auto& e : edges_)
    if (e.co_users >= min_cousers) kept.push_back(e);
  return CoGraph(n_nodes_, std::move(kept));
}

std::vector<CoEdge> count_co_users(std::span<const Interaction> train, std::size_t n_items,
                                   const CoGraphOptions& options) {
  std::size_t n_users = 0;
  for (const auto& x : train) {
    if (x.item >= n_items) throw DataError("item id " + std::to_string(x.item) + " out of range");
    n_users = std::max(n_users, x.user + 1);
  }
  std::vector<std::vector<std::size_t>> items(n_users);
  for (const auto& x : train) items[x.user].push_back(x.item);

  std::unordered_map<std::uint64_t, std::size_t> counts;
  for (std::size_t u = 0; u < n_users; ++u) {
    auto& list = items[u];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    if (list.size() > options.max_items_per_user) {
      std::mt19937_64 rng(options.seed ^ (0x9e3779b97f4a7c15ULL * (u + 1)));
      std::shuffle(list.begin(), list.end(), rng);
      list.resize(options.max_items_per_user);
      std::sort(list.begin(), list.end());
    }
    for (std::size_t a = 0; a < list.size(); ++a)
      for (std::size_t b = a + 1; b < list.size(); ++b)
        ++counts[static_cast<std::uint64_t>(list[a]) * n_items + list[b]];
  }

  std::vector<CoEdge> edges;
  edges.reserve(counts.size());
  for (const auto& [key, c] : counts) edges.push_back({key / n_items, key % n_items, c});
  std::sort(edges.begin(), edges.end(), [](const CoEdge& a, const CoEdge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  return edges;
}

CoGraph build_cograph(std::span<const Interaction> train, std::size_t n_items, const CoGraphOptions& options) {
  if (options.min_cousers < 1) throw std::invalid_argument("min_cousers must be at least 1");
  std::vector<CoEdge> edges;
  for (const auto& e : count_co_users(train, n_items, options))
    if (e.co_users >= options.min_cousers) edges.push_back(e);
  if (edges.empty() && n_items > 1)
    log_warning("co-interaction graph has no edges at min_cousers=" + std::to_string(options.min_cousers));
  return CoGraph(n_items, std::move(edges));
}

SparseMatrix normalize(const SparseMatrix& adjacency) {
  std::vector<double> degree(adjacency.rows, 0.0);
  for (std::size_t r = 0; r < adjacency.rows; ++r)
    for (std::size_t p = adjacency.row_ptr[r]; p < adjacency.row_ptr[r + 1]; ++p)
      degree[r] += adjacency.values[p];
  SparseMatrix out = adjacency;
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t p = out.row_ptr[r]; p < out.row_ptr[r + 1]; ++p) {
      const double dd = degree[r] * degree[out.col_idx[p]];
      out.values[p] = dd > 0.0 ? out.values[p] / std::sqrt(dd) : 0.0;
    }
  }
  return out;
}

void write_edge_list(const std::filesystem::path& path, const CoGraph& graph) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : graph.edges()) out << e.i << ',' << e.j << ',' << e.co_users << '\n';
}

CoGraph read_edge_list(const std::filesystem::path& path, std::size_t n_nodes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list " + path.string());
  std::vector<CoEdge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    CoEdge e;
    if (!(fields >> e.i >> e.j >> e.co_users))
      throw ParseError(path.string(), line_no, "expected item_i,item_j,co_user_count");
    edges.push_back(e);
  }
  return CoGraph(n_nodes, std::move(edges));
}

DegreeHistogram degree_histogram(const CoGraph& graph) {
  DegreeHistogram h;
  std::size_t max_degree = 0;
  for (auto d : graph.degrees()) max_degree = std::max(max_degree, d);
  h.bucket_upper.push_back(0);
  for (std::size_t upper = 1; h.bucket_upper.back() < max_degree; upper = upper * 2 + 1)
    h.bucket_upper.push_back(upper);
  h.counts.assign(h.bucket_upper.size(), 0);
  for (auto d : graph.degrees()) {
    auto it = std::lower_bound(h.bucket_upper.begin(), h.bucket_upper.end(), d);
    ++h.counts[static_cast<std::size_t>(it - h.bucket_upper.begin())];
  }
  return h;
}

}  // namespace huign
