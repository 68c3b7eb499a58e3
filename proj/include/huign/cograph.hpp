#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "huign/ingest.hpp"
#include "huign/matrix.hpp"

namespace huign {

struct CoEdge {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  std::size_t co_users = 0;

  friend bool operator==(const CoEdge&, const CoEdge&) = default;
};

struct CoGraphOptions {
  std::size_t min_cousers = 5;
  // Users with more train items than this contribute a seeded random subset.
  std::size_t max_items_per_user = 512;
  std::uint64_t seed = 0;
};

// Item-item co-interaction graph with binary symmetric adjacency and its
// symmetric normalisation D^-1/2 A D^-1/2. Immutable after construction.
class CoGraph {
 public:
  CoGraph() = default;
  CoGraph(std::size_t n_nodes, std::vector<CoEdge> edges);

  std::size_t n_nodes() const { return n_nodes_; }
  std::size_t n_edges() const { return edges_.size(); }
  const std::vector<CoEdge>& edges() const { return edges_; }
  const std::vector<std::size_t>& degrees() const { return degrees_; }
  const SparseMatrix& adjacency() const { return adjacency_; }
  const SparseMatrix& norm_adj() const { return norm_adj_; }

  // Subgraph keeping edges whose co-user count reaches `min_cousers`.
  CoGraph with_threshold(std::size_t min_cousers) const;

 private:
  std::size_t n_nodes_ = 0;
  std::vector<CoEdge> edges_;
  std::vector<std::size_t> degrees_;
  SparseMatrix adjacency_;
  SparseMatrix norm_adj_;
};

// Co-user counts for every item pair that shares at least one user.
std::vector<CoEdge> count_co_users(std::span<const Interaction> train, std::size_t n_items,
                                   const CoGraphOptions& options = {});
CoGraph build_cograph(std::span<const Interaction> train, std::size_t n_items,
                      const CoGraphOptions& options = {});

// Â = D^-1/2 A D^-1/2; zero-degree rows stay zero.
SparseMatrix normalize(const SparseMatrix& adjacency);

void write_edge_list(const std::filesystem::path& path, const CoGraph& graph);
CoGraph read_edge_list(const std::filesystem::path& path, std::size_t n_nodes);

struct DegreeHistogram {
  std::vector<std::size_t> bucket_upper;  // inclusive upper bound of each bucket
  std::vector<std::size_t> counts;
};
// Buckets 0, 1, 2-3, 4-7, ... by powers of two.
DegreeHistogram degree_histogram(const CoGraph& graph);

}  // namespace huign
