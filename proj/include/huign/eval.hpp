#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "huign/ingest.hpp"
#include "huign/intents.hpp"

namespace huign {

// Binary-relevance metrics. `truth` must be sorted ascending; only the first
// K entries of `ranked` are considered.
double precision_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth, std::size_t k);
double recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth, std::size_t k);
double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth, std::size_t k);

// Candidates ordered by descending score, ties by ascending item id; the
// first k are returned.
std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const std::size_t> candidates, std::size_t k);

struct UserRanking {
  std::size_t user = 0;
  std::vector<std::size_t> top;  // max(K) items
  std::vector<double> precision, recall, ndcg;  // one per K
};

struct RankingReport {
  std::vector<std::size_t> ks;
  std::vector<UserRanking> users;  // ascending user id
  std::vector<double> precision, recall, ndcg;  // means, one per K
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;

  double value(const std::string& metric, std::size_t k) const;
};

// Fills `scores` (length M) for one user.
using UserScorer = std::function<void(std::size_t user, std::span<double> scores)>;

// Full ranking over items the user has not interacted with in train (and
// validation, when ranking the test split). Users without ground truth in
// the split are skipped.
RankingReport rank_users(const UserScorer& scorer, const Dataset& data, Split split, std::vector<std::size_t> ks,
                         std::size_t threads = 1);
RankingReport rank_users(const Representations& reps, const Dataset& data, Split split, std::vector<std::size_t> ks,
                         std::size_t threads = 1);

// Expected recall@K of a uniformly random ranking, averaged over the users
// rank_users would evaluate.
double random_recall_baseline(const Dataset& data, Split split, std::size_t k);

void write_report_csv(const std::filesystem::path& path, const RankingReport& report);
void write_per_user_csv(const std::filesystem::path& path, const RankingReport& report, const IdMap& users,
                        const IdMap& items);

}  // namespace huign
