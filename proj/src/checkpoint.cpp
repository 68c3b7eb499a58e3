#include "huign/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace huign {
namespace {

constexpr const char* kManifestHeader = "format huign-checkpoint 1";

std::string block_file(std::string name) {
  std::replace(name.begin(), name.end(), '/', '_');
  return name + ".f32";
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, const ModelConfig& config) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("cannot write checkpoint manifest in " + dir.string());
  std::vector<std::string> levels;
  for (auto k : config.levels.counts) levels.push_back(std::to_string(k));
  manifest << kManifestHeader << '\n'
           << "id_dim " << config.id_dim << '\n'
           << "levels " << join(levels) << '\n'
           << "modalities " << join(config.modalities) << '\n'
           << "sum_over_modalities " << (config.sum_over_modalities ? 1 : 0) << '\n';
  for (const auto& [name, m] : params.blocks()) {
    const std::string file = block_file(name);
    manifest << "block " << name << ' ' << m->rows() << ' ' << m->cols() << ' ' << file << '\n';
    save_features(dir / file, *m, FeatureFormat::RawF32);
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("no checkpoint manifest in " + dir.string());
  std::string line;
  if (!std::getline(manifest, line) || line != kManifestHeader)
    throw DataError(dir.string() + ": not a checkpoint manifest");

  Checkpoint ck;
  ck.config.levels.counts.clear();
  std::size_t line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "id_dim") {
      fields >> ck.config.id_dim;
    } else if (key == "levels") {
      std::string v;
      fields >> v;
      for (const auto& k : split_list(v)) ck.config.levels.counts.push_back(std::stoul(k));
    } else if (key == "modalities") {
      std::string v;
      fields >> v;
      ck.config.modalities = split_list(v);
    } else if (key == "sum_over_modalities") {
      int flag = 1;
      fields >> flag;
      ck.config.sum_over_modalities = flag != 0;
    } else if (key == "block") {
      std::string name, file;
      std::size_t rows = 0, cols = 0;
      if (!(fields >> name >> rows >> cols >> file)) throw ParseError((dir / "manifest.txt").string(), line_no, "bad block line");
      Matrix m = load_features(dir / file, FeatureFormat::RawF32, rows);
      if (m.cols() != cols) throw DataError(file + ": column count differs from manifest");
      if (name == "id_user") {
        ck.params.id_user = std::move(m);
      } else if (name == "id_item") {
        ck.params.id_item = std::move(m);
      } else if (name.rfind("user_intent/", 0) == 0) {
        ck.params.user_intent[name.substr(12)] = std::move(m);
      } else if (name.rfind("supernodes/", 0) == 0) {
        const auto rest = name.substr(11);
        const auto slash = rest.rfind('/');
        if (slash == std::string::npos) throw DataError("bad block name " + name);
        const std::string modality = rest.substr(0, slash);
        const std::size_t level = std::stoul(rest.substr(slash + 1));
        auto& levels = ck.params.supernodes[modality];
        if (levels.size() < level) levels.resize(level);
        levels[level - 1] = std::move(m);
      } else {
        throw DataError("unknown checkpoint block " + name);
      }
    } else {
      throw ParseError((dir / "manifest.txt").string(), line_no, "unknown key '" + key + "'");
    }
  }
  ck.config.validate();
  for (const auto& m : ck.config.modalities) {
    auto it = ck.params.supernodes.find(m);
    if (it == ck.params.supernodes.end() || it->second.size() != ck.config.levels.depth() ||
        !ck.params.user_intent.contains(m))
      throw DataError(dir.string() + ": checkpoint is missing blocks for modality '" + m + "'");
  }
  return ck;
}

void export_assignments(const std::filesystem::path& dir, const Representations& reps) {
  std::filesystem::create_directories(dir);
  for (const auto& [m, chain] : reps.chain) {
    for (std::size_t l = 0; l < chain.size(); ++l) {
      const std::string stem = m + "_level" + std::to_string(l + 1);
      std::ofstream out(dir / ("assignments_" + stem + ".csv"));
      if (!out) throw DataError("cannot write assignments in " + dir.string());
      out << "item_id,argmax_intent,max_weight\n" << std::setprecision(9);
      const Matrix& c = chain[l];
      for (std::size_t i = 0; i < c.rows(); ++i) {
        auto row = c.row(i);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        out << i << ',' << best << ',' << row[best] << '\n';
      }
      save_features(dir / ("gamma_" + stem + ".f32"), reps.assignment.at(m)[l], FeatureFormat::RawF32);
    }
  }
}

void export_embeddings(const std::filesystem::path& dir, const Representations& reps) {
  std::filesystem::create_directories(dir);
  save_features(dir / "users.f32", reps.users, FeatureFormat::RawF32);
  save_features(dir / "items.f32", reps.items, FeatureFormat::RawF32);
  for (const auto& [m, v] : reps.item_repr) save_features(dir / ("item_repr_" + m + ".f32"), v, FeatureFormat::RawF32);
}

}  // namespace huign
