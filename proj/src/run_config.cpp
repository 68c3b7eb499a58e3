#include "huign/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace huign {
namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError("invalid value '" + value + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("invalid boolean '" + value + "' for " + key);
}

bool valid_modality_name(const std::string& name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

const std::map<std::string, std::vector<std::string>>& known_keys() {
  static const std::map<std::string, std::vector<std::string>> keys{
      {"data", {"interactions", "feature_format", "split", "split_seed"}},
      {"graph", {"min_cousers", "max_items_per_user"}},
      {"model", {"levels", "id_dim", "modalities", "sum_over_modalities"}},
      {"train",
       {"learning_rate", "batch_size", "max_epochs", "patience", "lambda1", "lambda2", "lambda3", "seed",
        "refresh_interval", "clip_norm", "eval_k", "eval_threads"}},
      {"eval", {"ks"}},
  };
  return keys;
}

std::string section_of(const std::string& key) {
  if (key.rfind("features.", 0) == 0) return "data";
  for (const auto& [section, keys] : known_keys())
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) return section;
  throw ConfigError("unknown config key '" + key + "'");
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

}  // namespace

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_number<std::size_t>("list", item));
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

std::vector<std::string> parse_name_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw ConfigError("cannot format number");
  return std::string(buf, ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void RunConfig::set(const std::string& section_in, const std::string& key, const std::string& value) {
  const std::string section = section_of(key);
  if (!section_in.empty() && section_in != section)
    throw ConfigError("key '" + key + "' does not belong in [" + section_in + "]");

  if (key.rfind("features.", 0) == 0) {
    const std::string modality = key.substr(9);
    if (!valid_modality_name(modality)) throw ConfigError("invalid modality name '" + modality + "'");
    features[modality] = value;
  } else if (key == "interactions") {
    interactions = value;
  } else if (key == "feature_format") {
    parse_feature_format(value);
    feature_format = value;
  } else if (key == "split") {
    std::vector<double> parts;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(parse_number<double>(key, trim(item)));
    if (parts.size() != 3) throw ConfigError("split needs three ratios");
    ratios = {parts[0], parts[1], parts[2]};
  } else if (key == "split_seed") {
    split_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "min_cousers") {
    min_cousers = parse_number<std::size_t>(key, value);
  } else if (key == "max_items_per_user") {
    max_items_per_user = parse_number<std::size_t>(key, value);
  } else if (key == "levels") {
    model.levels.counts = parse_size_list(value);
  } else if (key == "id_dim") {
    model.id_dim = parse_number<std::size_t>(key, value);
  } else if (key == "modalities") {
    model.modalities = parse_name_list(value);
  } else if (key == "sum_over_modalities") {
    model.sum_over_modalities = parse_bool(key, value);
  } else if (key == "learning_rate") {
    train.learning_rate = parse_number<double>(key, value);
  } else if (key == "batch_size") {
    train.batch_size = parse_number<std::size_t>(key, value);
  } else if (key == "max_epochs") {
    train.max_epochs = parse_number<std::size_t>(key, value);
  } else if (key == "patience") {
    train.patience = parse_number<std::size_t>(key, value);
  } else if (key == "lambda1") {
    train.weights.assignment = parse_number<double>(key, value);
  } else if (key == "lambda2") {
    train.weights.independence = parse_number<double>(key, value);
  } else if (key == "lambda3") {
    train.weights.l2 = parse_number<double>(key, value);
  } else if (key == "seed") {
    train.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "refresh_interval") {
    train.refresh_interval = parse_number<std::size_t>(key, value);
  } else if (key == "clip_norm") {
    train.clip_norm = parse_number<double>(key, value);
  } else if (key == "eval_k") {
    train.eval_k = parse_number<std::size_t>(key, value);
  } else if (key == "eval_threads") {
    train.eval_threads = parse_number<std::size_t>(key, value);
  } else if (key == "ks") {
    ks = parse_size_list(value);
  }
}

void RunConfig::resolve() {
  if (model.modalities.empty())
    for (const auto& [m, path] : features) model.modalities.push_back(m);
}

void RunConfig::validate() const {
  if (min_cousers < 1) throw ConfigError("min_cousers must be at least 1");
  if (max_items_per_user < 2) throw ConfigError("max_items_per_user must be at least 2");
  for (const auto& m : model.modalities) {
    if (!valid_modality_name(m)) throw ConfigError("invalid modality name '" + m + "'");
    if (!features.contains(m)) throw ConfigError("modality '" + m + "' has no features.<name> path");
  }
  try {
    model.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (auto k : ks)
    if (k == 0) throw ConfigError("ks must be positive");
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  out << "[data]\n"
      << "interactions = " << interactions << '\n';
  for (const auto& [m, path] : features) out << "features." << m << " = " << path << '\n';
  out << "feature_format = " << feature_format << '\n'
      << "split = " << format_double(ratios.train) << ',' << format_double(ratios.validation) << ','
      << format_double(ratios.test) << '\n'
      << "split_seed = " << split_seed << '\n'
      << "\n[graph]\n"
      << "min_cousers = " << min_cousers << '\n'
      << "max_items_per_user = " << max_items_per_user << '\n'
      << "\n[model]\n"
      << "levels = " << join(model.levels.counts) << '\n'
      << "id_dim = " << model.id_dim << '\n'
      << "modalities = " << join(model.modalities) << '\n'
      << "sum_over_modalities = " << (model.sum_over_modalities ? "true" : "false") << '\n'
      << "\n[train]\n"
      << "learning_rate = " << format_double(train.learning_rate) << '\n'
      << "batch_size = " << train.batch_size << '\n'
      << "max_epochs = " << train.max_epochs << '\n'
      << "patience = " << train.patience << '\n'
      << "lambda1 = " << format_double(train.weights.assignment) << '\n'
      << "lambda2 = " << format_double(train.weights.independence) << '\n'
      << "lambda3 = " << format_double(train.weights.l2) << '\n'
      << "seed = " << train.seed << '\n'
      << "refresh_interval = " << train.refresh_interval << '\n'
      << "clip_norm = " << format_double(train.clip_norm) << '\n'
      << "eval_k = " << train.eval_k << '\n'
      << "eval_threads = " << train.eval_threads << '\n'
      << "\n[eval]\n"
      << "ks = " << join(ks) << '\n';
  return out.str();
}

std::string RunConfig::content_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(serialize())));
  return buf;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source + ":" + std::to_string(line_no) + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!known_keys().contains(section))
        throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      cfg.set(section, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << serialize();
}

}  // namespace huign
