#include "huign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <thread>

namespace huign {
namespace {

bool contains(std::span<const std::size_t> sorted, std::size_t x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

std::size_t hits(std::span<const std::size_t> ranked, std::span<const std::size_t> truth, std::size_t k) {
  std::size_t h = 0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) h += contains(truth, ranked[r]) ? 1 : 0;
  return h;
}

std::vector<std::size_t> candidate_items(std::size_t n_items, std::span<const std::size_t> excluded_a,
                                         std::span<const std::size_t> excluded_b) {
  std::vector<std::size_t> out;
  out.reserve(n_items);
  for (std::size_t i = 0; i < n_items; ++i)
    if (!contains(excluded_a, i) && !contains(excluded_b, i)) out.push_back(i);
  return out;
}

}  // namespace

double precision_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth, std::size_t k) {
  if (k == 0) throw std::invalid_argument("K must be positive");
  return static_cast<double>(hits(ranked, truth, k)) / static_cast<double>(k);
}

double recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth, std::size_t k) {
  if (k == 0) throw std::invalid_argument("K must be positive");
  if (truth.empty()) return 0.0;
  return static_cast<double>(hits(ranked, truth, k)) / static_cast<double>(truth.size());
}

double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth, std::size_t k) {
  if (k == 0) throw std::invalid_argument("K must be positive");
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r)
    if (contains(truth, ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, truth.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const std::size_t> candidates,
                               std::size_t k) {
  std::vector<std::size_t> order(candidates.begin(), candidates.end());
  k = std::min(k, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  return order;
}

double RankingReport::value(const std::string& metric, std::size_t k) const {
  auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw std::invalid_argument("K=" + std::to_string(k) + " not in report");
  const auto idx = static_cast<std::size_t>(it - ks.begin());
  if (metric == "precision") return precision[idx];
  if (metric == "recall") return recall[idx];
  if (metric == "ndcg") return ndcg[idx];
  throw std::invalid_argument("unknown metric '" + metric + "'");
}

RankingReport rank_users(const UserScorer& scorer, const Dataset& data, Split split, std::vector<std::size_t> ks,
                         std::size_t threads) {
  if (split == Split::Train) throw std::invalid_argument("rank_users evaluates validation or test splits");
  if (ks.empty()) throw std::invalid_argument("no K values requested");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() == 0) throw std::invalid_argument("K must be positive");
  const std::size_t max_k = ks.back();

  const auto train = data.items_by_user(Split::Train);
  const auto valid = data.items_by_user(Split::Validation);
  const auto truth = data.items_by_user(split);
  const std::vector<std::size_t> none;

  RankingReport report;
  report.ks = ks;
  std::vector<std::size_t> evaluated;
  for (std::size_t u = 0; u < data.n_users; ++u) {
    if (truth[u].empty()) {
      ++report.n_skipped;
      continue;
    }
    evaluated.push_back(u);
  }
  report.users.resize(evaluated.size());

  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> scores(data.n_items);
    for (std::size_t idx = begin; idx < end; ++idx) {
      const std::size_t u = evaluated[idx];
      const auto candidates = candidate_items(data.n_items, train[u], split == Split::Test ? std::span(valid[u]) : std::span(none));
      if (candidates.size() < max_k)
        throw std::invalid_argument("user " + std::to_string(u) + " has " + std::to_string(candidates.size()) +
                                    " candidates, fewer than K=" + std::to_string(max_k));
      std::fill(scores.begin(), scores.end(), 0.0);
      scorer(u, scores);
      UserRanking& ur = report.users[idx];
      ur.user = u;
      ur.top = top_k(scores, candidates, max_k);
      for (auto k : ks) {
        ur.precision.push_back(precision_at_k(ur.top, truth[u], k));
        ur.recall.push_back(recall_at_k(ur.top, truth[u], k));
        ur.ndcg.push_back(ndcg_at_k(ur.top, truth[u], k));
      }
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, evaluated.size()));
  if (threads == 1) {
    work(0, evaluated.size());
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      const std::size_t chunk = (evaluated.size() + threads - 1) / threads;
      for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = std::min(evaluated.size(), t * chunk);
        const std::size_t end = std::min(evaluated.size(), begin + chunk);
        pool.emplace_back([&, t, begin, end] {
          try {
            work(begin, end);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  report.n_evaluated = evaluated.size();
  report.precision.assign(ks.size(), 0.0);
  report.recall.assign(ks.size(), 0.0);
  report.ndcg.assign(ks.size(), 0.0);
  for (const auto& ur : report.users) {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      report.precision[i] += ur.precision[i];
      report.recall[i] += ur.recall[i];
      report.ndcg[i] += ur.ndcg[i];
    }
  }
  if (report.n_evaluated > 0) {
    const auto n = static_cast<double>(report.n_evaluated);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      report.precision[i] /= n;
      report.recall[i] /= n;
      report.ndcg[i] /= n;
    }
  }
  return report;
}

RankingReport rank_users(const Representations& reps, const Dataset& data, Split split, std::vector<std::size_t> ks,
                         std::size_t threads) {
  if (reps.items.rows() != data.n_items || reps.users.rows() != data.n_users)
    throw ShapeError("representations do not match the dataset");
  UserScorer scorer = [&reps](std::size_t u, std::span<double> out) {
    auto ur = reps.users.row(u);
    for (std::size_t i = 0; i < out.size(); ++i) {
      auto vr = reps.items.row(i);
      double s = 0.0;
      for (std::size_t c = 0; c < ur.size(); ++c) s += ur[c] * vr[c];
      out[i] = s;
    }
  };
  return rank_users(scorer, data, split, std::move(ks), threads);
}

double random_recall_baseline(const Dataset& data, Split split, std::size_t k) {
  const auto train = data.items_by_user(Split::Train);
  const auto valid = data.items_by_user(Split::Validation);
  const auto truth = data.items_by_user(split);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t u = 0; u < data.n_users; ++u) {
    if (truth[u].empty()) continue;
    std::size_t excluded = train[u].size() + (split == Split::Test ? valid[u].size() : 0);
    const double candidates = static_cast<double>(data.n_items - excluded);
    total += std::min(1.0, static_cast<double>(k) / candidates);
    ++n;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

void write_report_csv(const std::filesystem::path& path, const RankingReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "metric,K,value,n_users\n" << std::setprecision(12);
  for (const char* metric : {"precision", "recall", "ndcg"})
    for (auto k : report.ks) out << metric << ',' << k << ',' << report.value(metric, k) << ',' << report.n_evaluated << '\n';
}

void write_per_user_csv(const std::filesystem::path& path, const RankingReport& report, const IdMap& users,
                        const IdMap& items) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "user_id,K,precision,recall,ndcg,top_items\n" << std::setprecision(12);
  for (const auto& ur : report.users) {
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
      out << users.external(ur.user) << ',' << report.ks[i] << ',' << ur.precision[i] << ',' << ur.recall[i] << ','
          << ur.ndcg[i] << ',';
      for (std::size_t r = 0; r < report.ks[i]; ++r) out << (r ? " " : "") << items.external(ur.top[r]);
      out << '\n';
    }
  }
}

}  // namespace huign
