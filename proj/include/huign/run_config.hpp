#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "huign/ingest.hpp"
#include "huign/intents.hpp"
#include "huign/trainer.hpp"

namespace huign {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every setting of a pipeline run. Serialised as `key = value` lines under
// [data], [graph], [model], [train] and [eval] headers; unknown keys are
// rejected.
struct RunConfig {
  std::string interactions;
  std::map<std::string, std::string> features;  // modality -> path
  std::string feature_format = "text";
  SplitRatios ratios{};
  std::uint64_t split_seed = 2020;

  std::size_t min_cousers = 5;
  std::size_t max_items_per_user = 512;

  ModelConfig model{};
  TrainConfig train{};

  std::vector<std::size_t> ks{1, 5, 10};

  // Applies one setting; `section` may be empty when the key is unambiguous.
  void set(const std::string& section, const std::string& key, const std::string& value);
  // Fills defaults that depend on other keys (modalities from feature keys).
  void resolve();
  void validate() const;

  std::string serialize() const;
  // 16 hex digits of FNV-1a over serialize().
  std::string content_hash() const;

  static RunConfig parse(std::string_view text, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

std::vector<std::size_t> parse_size_list(const std::string& text);
std::vector<std::string> parse_name_list(const std::string& text);
std::string format_double(double v);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace huign
