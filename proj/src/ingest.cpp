#include "huign/ingest.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string_view>

#include "huign/log.hpp"

namespace huign {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    fields.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

template <typename T>
std::optional<T> parse_uint(std::string_view s) {
  if (s.empty()) return std::nullopt;
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

IdMap make_id_map(std::vector<std::uint64_t> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return IdMap(std::move(ids));
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

float read_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<float>(bits);
}

void write_f32_le(std::ostream& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 4);
}

void check_finite_rows(const Matrix& m, const std::string& source) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (double x : m.row(r))
      if (!std::isfinite(x))
        throw DataError(source + ": non-finite feature value in row " + std::to_string(r));
}

Matrix load_text_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file " + path.string());
  const std::string source = path.string();
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError(source, 1, "empty feature file");
  std::istringstream header(line);
  std::size_t rows = 0, cols = 0;
  if (!(header >> rows >> cols)) throw ParseError(source, line_no, "expected header 'M D'");

  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!next_line()) throw ParseError(source, line_no + 1, "missing feature row " + std::to_string(r));
    std::istringstream fields(line);
    std::string token;
    std::size_t c = 0;
    while (fields >> token) {
      if (c >= cols) throw ParseError(source, line_no, "too many values in row " + std::to_string(r));
      char* end = nullptr;
      const double v = std::strtod(token.c_str(), &end);
      if (end != token.c_str() + token.size())
        throw ParseError(source, line_no, "bad number '" + token + "'");
      if (!std::isfinite(v))
        throw DataError(source + ": non-finite feature value in row " + std::to_string(r));
      m(r, c++) = v;
    }
    if (c != cols) throw ParseError(source, line_no, "expected " + std::to_string(cols) + " values in row " + std::to_string(r));
  }
  return m;
}

Matrix load_raw_f32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw DataError(path.string() + ": raw-f32 file shorter than its header");
  const std::uint64_t rows = read_u64_le(bytes.data());
  const std::uint64_t cols = read_u64_le(bytes.data() + 8);
  if (cols != 0 && rows > (bytes.size() / 4) / cols)
    throw DataError(path.string() + ": raw-f32 payload too short for " + std::to_string(rows) + "x" + std::to_string(cols));
  if (bytes.size() != 16 + rows * cols * 4)
    throw DataError(path.string() + ": raw-f32 size " + std::to_string(bytes.size()) + " does not match header " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m(rows, cols);
  const unsigned char* p = bytes.data() + 16;
  for (double& x : m.data()) {
    x = static_cast<double>(read_f32_le(p));
    p += 4;
  }
  check_finite_rows(m, path.string());
  return m;
}

}  // namespace

IdMap::IdMap(std::vector<std::uint64_t> external_by_dense) : external_(std::move(external_by_dense)) {
  dense_.reserve(external_.size());
  for (std::size_t i = 0; i < external_.size(); ++i) {
    if (!dense_.emplace(external_[i], i).second)
      throw DataError("duplicate external id " + std::to_string(external_[i]));
  }
}

std::optional<std::size_t> IdMap::dense(std::uint64_t external) const {
  auto it = dense_.find(external);
  if (it == dense_.end()) return std::nullopt;
  return it->second;
}

IdMap IdMap::identity(std::size_t n) {
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return IdMap(std::move(ids));
}

InteractionLog parse_interactions(std::istream& in, const std::string& source) {
  struct Raw {
    std::uint64_t user, item;
    std::optional<std::int64_t> ts;
  };
  std::vector<Raw> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty()) continue;
    auto fields = split_commas(view);
    if (fields.size() < 2 || fields.size() > 3)
      throw ParseError(source, line_no, "expected user_id,item_id[,timestamp]");
    auto user = parse_uint<std::uint64_t>(fields[0]);
    auto item = parse_uint<std::uint64_t>(fields[1]);
    if (!user || !item) throw ParseError(source, line_no, "ids must be non-negative integers");
    std::optional<std::int64_t> ts;
    if (fields.size() == 3) {
      ts = parse_uint<std::int64_t>(fields[2]);
      if (!ts) throw ParseError(source, line_no, "timestamp must be a non-negative integer");
    }
    raw.push_back({*user, *item, ts});
  }
  if (raw.empty()) throw DataError(source + ": no interactions");

  std::vector<std::uint64_t> users, items;
  users.reserve(raw.size());
  items.reserve(raw.size());
  for (const auto& r : raw) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  InteractionLog log;
  log.users = make_id_map(std::move(users));
  log.items = make_id_map(std::move(items));

  std::map<std::pair<std::size_t, std::size_t>, std::optional<std::int64_t>> merged;
  for (const auto& r : raw) {
    const std::pair key{*log.users.dense(r.user), *log.items.dense(r.item)};
    auto [it, inserted] = merged.emplace(key, r.ts);
    if (!inserted && r.ts && (!it->second || *r.ts < *it->second)) it->second = r.ts;
  }
  log.interactions.reserve(merged.size());
  for (const auto& [key, ts] : merged) log.interactions.push_back({key.first, key.second, ts});
  return log;
}

InteractionLog load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction file " + path.string());
  return parse_interactions(in, path.string());
}

void write_interactions(const std::filesystem::path& path, const InteractionLog& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& x : log.interactions) {
    out << log.users.external(x.user) << ',' << log.items.external(x.item);
    if (x.timestamp) out << ',' << *x.timestamp;
    out << '\n';
  }
}

void write_id_map(const std::filesystem::path& path, const IdMap& map) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "external_id,dense_id\n";
  for (std::size_t i = 0; i < map.size(); ++i) out << map.external(i) << ',' << i << '\n';
}

IdMap read_id_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open id map " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::size_t, std::uint64_t>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty() || (line_no == 1 && view == "external_id,dense_id")) continue;
    auto fields = split_commas(view);
    auto ext = fields.size() == 2 ? parse_uint<std::uint64_t>(fields[0]) : std::nullopt;
    auto dense = fields.size() == 2 ? parse_uint<std::size_t>(fields[1]) : std::nullopt;
    if (!ext || !dense) throw ParseError(path.string(), line_no, "expected external_id,dense_id");
    rows.emplace_back(*dense, *ext);
  }
  std::sort(rows.begin(), rows.end());
  std::vector<std::uint64_t> externals;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != i) throw DataError(path.string() + ": dense ids are not 0..n-1");
    externals.push_back(rows[i].second);
  }
  return IdMap(std::move(externals));
}

const std::vector<Interaction>& Dataset::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Validation: return validation;
    case Split::Test: return test;
  }
  return train;
}

std::vector<std::vector<std::size_t>> Dataset::items_by_user(Split s) const {
  std::vector<std::vector<std::size_t>> out(n_users);
  for (const auto& x : split(s)) out[x.user].push_back(x.item);
  for (auto& items : out) std::sort(items.begin(), items.end());
  return out;
}

void Dataset::validate() const {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<bool> has_train(n_users, false);
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    for (const auto& x : split(s)) {
      if (x.user >= n_users || x.item >= n_items)
        throw DataError("interaction (" + std::to_string(x.user) + "," + std::to_string(x.item) + ") out of range");
      pairs.emplace_back(x.user, x.item);
      if (s == Split::Train) has_train[x.user] = true;
    }
  }
  std::sort(pairs.begin(), pairs.end());
  if (std::adjacent_find(pairs.begin(), pairs.end()) != pairs.end())
    throw DataError("train/validation/test splits overlap");
  for (Split s : {Split::Validation, Split::Test})
    for (const auto& x : split(s))
      if (!has_train[x.user])
        throw DataError("user " + std::to_string(x.user) + " has held-out interactions but no train interaction");
  for (const auto& [name, m] : features) {
    if (m.rows() != n_items)
      throw DataError("feature matrix '" + name + "' has " + std::to_string(m.rows()) + " rows, expected " +
                      std::to_string(n_items));
    check_finite_rows(m, "feature matrix '" + name + "'");
  }
}

void Dataset::set_features(const std::string& modality, Matrix m) {
  if (m.rows() != n_items)
    throw DataError("feature matrix '" + modality + "' has " + std::to_string(m.rows()) + " rows, expected " +
                    std::to_string(n_items));
  check_finite_rows(m, "feature matrix '" + modality + "'");
  features[modality] = std::move(m);
}

Dataset split_dataset(const InteractionLog& log, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0)
    throw std::invalid_argument("split ratios must be positive");
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must sum to 1");

  Dataset data;
  data.n_users = log.users.size();
  data.n_items = log.items.size();
  data.user_ids = log.users;
  data.item_ids = log.items;

  std::vector<std::vector<Interaction>> by_user(data.n_users);
  for (const auto& x : log.interactions) by_user[x.user].push_back(x);

  std::mt19937_64 rng(seed);
  for (auto& list : by_user) {
    const std::size_t n = list.size();
    if (n < 3) {
      data.train.insert(data.train.end(), list.begin(), list.end());
      continue;
    }
    std::shuffle(list.begin(), list.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.validation + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.test + 1e-9));
    const std::size_t n_train = n - n_val - n_test;
    data.train.insert(data.train.end(), list.begin(), list.begin() + static_cast<std::ptrdiff_t>(n_train));
    data.validation.insert(data.validation.end(), list.begin() + static_cast<std::ptrdiff_t>(n_train),
                           list.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    data.test.insert(data.test.end(), list.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), list.end());
  }
  auto by_pair = [](const Interaction& a, const Interaction& b) {
    return a.user != b.user ? a.user < b.user : a.item < b.item;
  };
  std::sort(data.train.begin(), data.train.end(), by_pair);
  std::sort(data.validation.begin(), data.validation.end(), by_pair);
  std::sort(data.test.begin(), data.test.end(), by_pair);
  return data;
}

FeatureFormat parse_feature_format(const std::string& name) {
  if (name == "text" || name == "text-matrix") return FeatureFormat::TextMatrix;
  if (name == "raw" || name == "raw-f32") return FeatureFormat::RawF32;
  throw std::invalid_argument("unknown feature format '" + name + "'");
}

Matrix load_features(const std::filesystem::path& path, FeatureFormat format,
                     std::optional<std::size_t> expected_rows) {
  Matrix m = format == FeatureFormat::TextMatrix ? load_text_matrix(path) : load_raw_f32(path);
  if (expected_rows && m.rows() != *expected_rows)
    throw DataError(path.string() + ": feature matrix has " + std::to_string(m.rows()) + " rows but dataset has " +
                    std::to_string(*expected_rows) + " items");
  return m;
}

void save_features(const std::filesystem::path& path, const Matrix& m, FeatureFormat format) {
  if (format == FeatureFormat::TextMatrix) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << m.rows() << ' ' << m.cols() << '\n' << std::setprecision(17);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
      out << '\n';
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_u64_le(out, m.rows());
  write_u64_le(out, m.cols());
  for (double x : m.data()) write_f32_le(out, static_cast<float>(x));
}

TripletSample sample_triplets(const Dataset& data, std::uint64_t epoch_seed) {
  TripletSample sample;
  const auto train_items = data.items_by_user(Split::Train);
  std::mt19937_64 rng(epoch_seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.n_items - 1);
  sample.triplets.reserve(data.train.size());
  for (const auto& x : data.train) {
    const auto& owned = train_items[x.user];
    if (owned.size() >= data.n_items) {
      if (sample.saturated_users.empty() || sample.saturated_users.back() != x.user) {
        sample.saturated_users.push_back(x.user);
        log_warning("user " + std::to_string(x.user) +
                    " interacted with every item; no negatives available, skipping");
      }
      continue;
    }
    std::size_t neg = 0;
    do {
      neg = pick(rng);
    } while (std::binary_search(owned.begin(), owned.end(), neg));
    sample.triplets.push_back({x.user, x.item, neg});
  }
  return sample;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.levels.empty()) throw std::invalid_argument("synthetic: levels must be non-empty");
  if (!(spec.density > 0.0 && spec.density <= 1.0)) throw std::invalid_argument("synthetic: density must be in (0,1]");
  if (spec.n_users == 0 || spec.n_items == 0) throw std::invalid_argument("synthetic: empty user or item set");
  for (auto k : spec.levels)
    if (k == 0) throw std::invalid_argument("synthetic: group counts must be positive");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PlantedStructure planted;
  const std::size_t n_levels = spec.levels.size();
  planted.groups.assign(n_levels, std::vector<std::size_t>(spec.n_items));

  // Balanced leaf groups over a random item permutation.
  std::vector<std::size_t> perm(spec.n_items);
  for (std::size_t i = 0; i < spec.n_items; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t pos = 0; pos < spec.n_items; ++pos)
    planted.groups[0][perm[pos]] = pos * spec.levels[0] / spec.n_items;
  for (std::size_t l = 1; l < n_levels; ++l)
    for (std::size_t i = 0; i < spec.n_items; ++i)
      planted.groups[l][i] = planted.groups[l - 1][i] * spec.levels[l] / spec.levels[l - 1];

  const auto& leaf = planted.groups.front();
  const auto& coarse = planted.groups.back();
  const std::size_t n_leaf = spec.levels.front();
  const std::size_t n_coarse = spec.levels.back();

  std::vector<std::size_t> coarse_of_leaf(n_leaf, 0);
  for (std::size_t i = 0; i < spec.n_items; ++i) coarse_of_leaf[leaf[i]] = coarse[i];
  std::vector<std::vector<std::size_t>> leaves_in_coarse(n_coarse);
  std::vector<std::size_t> leaf_size(n_leaf, 0);
  for (std::size_t i = 0; i < spec.n_items; ++i) ++leaf_size[leaf[i]];
  for (std::size_t g = 0; g < n_leaf; ++g)
    if (leaf_size[g] > 0) leaves_in_coarse[coarse_of_leaf[g]].push_back(g);
  std::vector<std::size_t> populated_coarse;
  for (std::size_t c = 0; c < n_coarse; ++c)
    if (!leaves_in_coarse[c].empty()) populated_coarse.push_back(c);

  const double p_in = spec.preferred_share * spec.density;
  const double p_out = (1.0 - spec.preferred_share) * spec.density;

  InteractionLog log;
  log.users = IdMap::identity(spec.n_users);
  log.items = IdMap::identity(spec.n_items);
  planted.user_coarse.resize(spec.n_users);
  planted.user_leaf.resize(spec.n_users);
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    const std::size_t c = populated_coarse[std::uniform_int_distribution<std::size_t>(0, populated_coarse.size() - 1)(rng)];
    const auto& leaves = leaves_in_coarse[c];
    const std::size_t fav = leaves[std::uniform_int_distribution<std::size_t>(0, leaves.size() - 1)(rng)];
    planted.user_coarse[u] = c;
    planted.user_leaf[u] = fav;

    const double g = static_cast<double>(leaves.size());
    double focus = spec.leaf_focus;
    if (g > 1.0) focus = std::min(focus, (1.0 / p_in - 1.0) / (g - 1.0));
    else focus = 0.0;
    focus = std::max(focus, 0.0);
    const double p_fav = p_in * (1.0 + focus * (g - 1.0));
    const double p_sibling = p_in * (1.0 - focus);

    std::size_t added = 0;
    for (std::size_t i = 0; i < spec.n_items; ++i) {
      double p = p_out;
      if (coarse[i] == c) p = leaf[i] == fav ? p_fav : p_sibling;
      if (unit(rng) < p) {
        log.interactions.push_back({u, i, std::nullopt});
        ++added;
      }
    }
    if (added == 0) {
      // Every user gets at least one interaction, drawn from the favourite leaf.
      std::vector<std::size_t> fav_items;
      for (std::size_t i = 0; i < spec.n_items; ++i)
        if (leaf[i] == fav) fav_items.push_back(i);
      const std::size_t pick = fav_items[std::uniform_int_distribution<std::size_t>(0, fav_items.size() - 1)(rng)];
      log.interactions.push_back({u, pick, std::nullopt});
    }
  }

  SyntheticData out;
  out.dataset = split_dataset(log, spec.ratios, spec.seed);

  // Features: coarse centroid + leaf offset + per-item noise.
  for (const auto& modality : spec.modalities) {
    Matrix coarse_centroid(n_coarse, spec.feature_dim);
    for (double& x : coarse_centroid.data()) x = gauss(rng);
    Matrix leaf_centroid(n_leaf, spec.feature_dim);
    for (std::size_t g = 0; g < n_leaf; ++g)
      for (std::size_t d = 0; d < spec.feature_dim; ++d)
        leaf_centroid(g, d) = coarse_centroid(coarse_of_leaf[g], d) + gauss(rng);
    Matrix features(spec.n_items, spec.feature_dim);
    for (std::size_t i = 0; i < spec.n_items; ++i)
      for (std::size_t d = 0; d < spec.feature_dim; ++d)
        features(i, d) = leaf_centroid(leaf[i], d) + spec.noise * gauss(rng);
    out.dataset.set_features(modality, std::move(features));
  }

  out.log = std::move(log);
  out.planted = std::move(planted);
  return out;
}

}  // namespace huign
