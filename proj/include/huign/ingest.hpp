#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "huign/matrix.hpp"

namespace huign {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Interaction {
  std::size_t user = 0;
  std::size_t item = 0;
  std::optional<std::int64_t> timestamp;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Dense id <-> external id bijection. Dense ids follow ascending external id.
class IdMap {
 public:
  IdMap() = default;
  explicit IdMap(std::vector<std::uint64_t> external_by_dense);

  std::size_t size() const { return external_.size(); }
  std::uint64_t external(std::size_t dense) const { return external_.at(dense); }
  std::optional<std::size_t> dense(std::uint64_t external) const;
  const std::vector<std::uint64_t>& externals() const { return external_; }

  // Identity map 0..n-1.
  static IdMap identity(std::size_t n);

  friend bool operator==(const IdMap& a, const IdMap& b) {
    return a.external_ == b.external_;
  }

 private:
  std::vector<std::uint64_t> external_;
  std::unordered_map<std::uint64_t, std::size_t> dense_;
};

struct InteractionLog {
  std::vector<Interaction> interactions;  // sorted by (user, item)
  IdMap users;
  IdMap items;
};

InteractionLog parse_interactions(std::istream& in, const std::string& source = "<stream>");
InteractionLog load_interactions(const std::filesystem::path& path);
void write_interactions(const std::filesystem::path& path, const InteractionLog& log);

void write_id_map(const std::filesystem::path& path, const IdMap& map);
IdMap read_id_map(const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

enum class Split { Train, Validation, Test };

struct Dataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  std::map<std::string, Matrix> features;
  IdMap user_ids;
  IdMap item_ids;

  const std::vector<Interaction>& split(Split s) const;
  // Per-user sorted item lists for one split.
  std::vector<std::vector<std::size_t>> items_by_user(Split s) const;
  // Throws DataError when an invariant is broken.
  void validate() const;
  void set_features(const std::string& modality, Matrix features);
};

// Per-user seeded shuffle, then cut by ratios; remainders go to train and
// users with fewer than three interactions stay entirely in train.
Dataset split_dataset(const InteractionLog& log, SplitRatios ratios, std::uint64_t seed);

enum class FeatureFormat { TextMatrix, RawF32 };

FeatureFormat parse_feature_format(const std::string& name);
Matrix load_features(const std::filesystem::path& path, FeatureFormat format,
                     std::optional<std::size_t> expected_rows = std::nullopt);
void save_features(const std::filesystem::path& path, const Matrix& m, FeatureFormat format);

struct Triplet {
  std::size_t user = 0;
  std::size_t pos_item = 0;
  std::size_t neg_item = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletSample {
  std::vector<Triplet> triplets;
  std::vector<std::size_t> saturated_users;  // users who interacted with every item
};

// One triplet per train interaction, negatives by rejection sampling.
TripletSample sample_triplets(const Dataset& data, std::uint64_t epoch_seed);

struct SyntheticSpec {
  std::size_t n_users = 200;
  std::size_t n_items = 400;
  std::vector<std::size_t> levels{8, 2};  // leaf groups first, coarsest last
  double density = 0.05;
  std::uint64_t seed = 7;
  std::size_t feature_dim = 16;
  std::vector<std::string> modalities{"visual", "textual"};
  double preferred_share = 0.9;
  // Extra weight on the user's preferred leaf inside the preferred coarse
  // group; clamped so no probability exceeds 1.
  double leaf_focus = 0.6;
  double noise = 0.3;
  SplitRatios ratios{};
};

struct PlantedStructure {
  // groups[l][item] is the planted group of `item` at level l (0 = leaf).
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> user_coarse;
  std::vector<std::size_t> user_leaf;
};

struct SyntheticData {
  InteractionLog log;
  Dataset dataset;
  PlantedStructure planted;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace huign
