#include "huign/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "huign/checkpoint.hpp"
#include "huign/cograph.hpp"
#include "huign/eval.hpp"
#include "huign/ingest.hpp"
#include "huign/intents.hpp"
#include "huign/log.hpp"
#include "huign/run_config.hpp"
#include "huign/trainer.hpp"

namespace fs = std::filesystem;

namespace huign {
namespace {

// Flags that map one-to-one onto RunConfig keys.
const std::vector<std::string> kDataKeys{"interactions", "feature_format", "split", "split_seed", "max_items_per_user"};
const std::vector<std::string> kModelKeys{"levels", "id_dim", "modalities", "sum_over_modalities"};
const std::vector<std::string> kTrainKeys{"learning_rate", "batch_size", "max_epochs", "patience",
                                          "lambda1",       "lambda2",    "lambda3",    "seed",
                                          "refresh_interval", "clip_norm", "eval_k",   "eval_threads"};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::vector<std::string> features;
  CLI::Option* features_opt = nullptr;

  void add(CLI::App& app, const std::vector<std::string>& keys) {
    for (const auto& key : keys) options[key] = app.add_option(flag_name(key), values[key], "config key " + key);
  }

  void add_common(CLI::App& app) {
    app.add_option("--config", config_path, "run config file (key = value with [section] headers)");
    features_opt = app.add_option("--features", features, "modality=path, repeatable");
    add(app, kDataKeys);
  }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) cfg.set("", key, values.at(key));
    if (features_opt && features_opt->count() > 0) {
      for (const auto& spec : features) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--features expects modality=path, got '" + spec + "'");
        cfg.set("data", "features." + spec.substr(0, eq), spec.substr(eq + 1));
      }
    }
    return cfg;
  }
};

struct Pipeline {
  InteractionLog log;
  Dataset data;
  std::vector<CoEdge> co_counts;
  CoGraph graph;
};

Pipeline load_pipeline(const RunConfig& cfg, bool with_features) {
  if (cfg.interactions.empty()) throw ConfigError("no interactions file given (--interactions)");
  Pipeline p;
  p.log = load_interactions(cfg.interactions);
  p.data = split_dataset(p.log, cfg.ratios, cfg.split_seed);
  if (p.data.train.empty()) throw DataError("train split is empty");
  if (with_features) {
    const FeatureFormat format = parse_feature_format(cfg.feature_format);
    for (const auto& m : cfg.model.modalities)
      p.data.set_features(m, load_features(cfg.features.at(m), format, p.data.n_items));
  }
  p.data.validate();
  CoGraphOptions options;
  options.min_cousers = cfg.min_cousers;
  options.max_items_per_user = cfg.max_items_per_user;
  p.co_counts = count_co_users(p.data.train, p.data.n_items, options);
  p.graph = build_cograph(p.data.train, p.data.n_items, options);
  return p;
}

fs::path make_run_dir(const fs::path& base, const std::string& prefix, const RunConfig& cfg) {
  fs::path dir = base / (prefix + "-" + cfg.content_hash());
  fs::create_directories(dir);
  cfg.save(dir / "run.conf");
  return dir;
}

void print_graph_stats(std::ostream& out, const CoGraph& graph, std::size_t threshold) {
  out << "min_cousers=" << threshold << " nodes=" << graph.n_nodes() << " edges=" << graph.n_edges() << '\n';
  const auto hist = degree_histogram(graph);
  out << "degree_histogram";
  std::size_t lower = 0;
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    out << ' ' << lower;
    if (hist.bucket_upper[b] != lower) out << '-' << hist.bucket_upper[b];
    out << ':' << hist.counts[b];
    lower = hist.bucket_upper[b] + 1;
  }
  out << '\n';
}

std::vector<std::size_t> parse_threshold_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) return parse_size_list(text);
  const auto lo = parse_size_list(text.substr(0, dots));
  const auto hi = parse_size_list(text.substr(dots + 2));
  if (lo.size() != 1 || hi.size() != 1 || lo[0] > hi[0]) throw ConfigError("bad threshold range '" + text + "'");
  std::vector<std::size_t> out;
  for (std::size_t k = lo[0]; k <= hi[0]; ++k) out.push_back(k);
  return out;
}

int cmd_synth(const SyntheticSpec& spec, const fs::path& out_base, std::ostream& out) {
  std::ostringstream desc;
  desc << "[synth]\nusers = " << spec.n_users << "\nitems = " << spec.n_items << "\nlevels = ";
  for (std::size_t i = 0; i < spec.levels.size(); ++i) desc << (i ? "," : "") << spec.levels[i];
  desc << "\ndensity = " << format_double(spec.density) << "\nseed = " << spec.seed
       << "\nfeature_dim = " << spec.feature_dim << "\nmodalities = ";
  for (std::size_t i = 0; i < spec.modalities.size(); ++i) desc << (i ? "," : "") << spec.modalities[i];
  desc << '\n';
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(fnv1a64(desc.str())));

  const fs::path dir = out_base / (std::string("synth-") + hash);
  fs::create_directories(dir);
  std::ofstream(dir / "synth.conf") << desc.str();

  const SyntheticData synth = generate_synthetic(spec);
  write_interactions(dir / "interactions.csv", synth.log);
  RunConfig dataset_cfg;
  dataset_cfg.interactions = fs::absolute(dir / "interactions.csv").lexically_normal().string();
  // Loading re-indexes items by ascending external id, keeping only items
  // that occur in the log; feature rows follow the same order.
  std::vector<bool> present(spec.n_items, false);
  for (const auto& x : synth.log.interactions) present[x.item] = true;
  for (const auto& [m, features] : synth.dataset.features) {
    std::vector<double> rows;
    for (std::size_t i = 0; i < spec.n_items; ++i)
      if (present[i]) rows.insert(rows.end(), features.row(i).begin(), features.row(i).end());
    const std::size_t n_rows = rows.size() / features.cols();
    const Matrix kept(n_rows, features.cols(), std::move(rows));
    const fs::path path = dir / ("features." + m + ".txt");
    save_features(path, kept, FeatureFormat::TextMatrix);
    dataset_cfg.features[m] = fs::absolute(path).lexically_normal().string();
  }
  dataset_cfg.split_seed = spec.seed;
  dataset_cfg.resolve();
  dataset_cfg.save(dir / "dataset.conf");

  std::ofstream items(dir / "planted_items.csv");
  items << "item_id";
  for (std::size_t l = 0; l < synth.planted.groups.size(); ++l) items << ",level" << l + 1;
  items << '\n';
  for (std::size_t i = 0; i < spec.n_items; ++i) {
    items << i;
    for (const auto& g : synth.planted.groups) items << ',' << g[i];
    items << '\n';
  }
  std::ofstream users(dir / "planted_users.csv");
  users << "user_id,coarse_intent,leaf_intent\n";
  for (std::size_t u = 0; u < spec.n_users; ++u)
    users << u << ',' << synth.planted.user_coarse[u] << ',' << synth.planted.user_leaf[u] << '\n';

  out << "interactions=" << synth.log.interactions.size() << " users=" << spec.n_users << " items=" << spec.n_items
      << '\n'
      << "run_dir=" << dir.string() << '\n';
  return 0;
}

int cmd_build_graph(RunConfig cfg, const std::string& thresholds, const fs::path& out_base, std::ostream& out) {
  cfg.resolve();
  std::vector<std::size_t> sweep{cfg.min_cousers};
  if (!thresholds.empty()) sweep = parse_threshold_range(thresholds);
  for (auto t : sweep)
    if (t < 1) throw ConfigError("min_cousers must be at least 1");

  const InteractionLog log = load_interactions(cfg.interactions);
  const Dataset data = split_dataset(log, cfg.ratios, cfg.split_seed);
  if (data.train.empty()) throw DataError("train split is empty");
  CoGraphOptions options;
  options.min_cousers = 1;
  options.max_items_per_user = cfg.max_items_per_user;
  const CoGraph all = CoGraph(data.n_items, count_co_users(data.train, data.n_items, options));

  for (auto t : sweep) {
    cfg.min_cousers = t;
    const fs::path dir = make_run_dir(out_base, "graph", cfg);
    const CoGraph graph = all.with_threshold(t);
    if (graph.n_edges() == 0) log_warning("co-interaction graph has no edges at min_cousers=" + std::to_string(t));
    write_edge_list(dir / "graph.csv", graph);
    write_id_map(dir / "items.csv", log.items);
    std::ostringstream stats;
    print_graph_stats(stats, graph, t);
    std::ofstream(dir / "stats.txt") << stats.str();
    out << stats.str() << "run_dir=" << dir.string() << '\n';
  }
  return 0;
}

struct TrainFlags {
  bool no_l1 = false;
  bool no_l2 = false;
  bool quiet = false;
  std::string resume;
};

int cmd_train(RunConfig cfg, const TrainFlags& flags, const fs::path& out_base, std::ostream& out) {
  if (flags.no_l1) cfg.train.weights.assignment = 0.0;
  if (flags.no_l2) cfg.train.weights.independence = 0.0;
  cfg.resolve();
  cfg.validate();

  const Pipeline p = load_pipeline(cfg, true);
  const fs::path dir = make_run_dir(out_base, "run", cfg);
  write_id_map(dir / "users.csv", p.log.users);
  write_id_map(dir / "items.csv", p.log.items);
  write_edge_list(dir / "graph.csv", p.graph);

  std::optional<ModelParams> resume;
  if (!flags.resume.empty()) {
    Checkpoint ck = load_checkpoint(flags.resume);
    if (ck.config.levels.counts != cfg.model.levels.counts || ck.config.modalities != cfg.model.modalities ||
        ck.config.id_dim != cfg.model.id_dim)
      throw ConfigError("checkpoint " + flags.resume + " does not match the model configuration");
    resume = std::move(ck.params);
  }

  const auto started = std::chrono::steady_clock::now();
  const TrainResult result = train(p.data, p.graph, cfg.model, cfg.train, std::move(resume), [&](const EpochRecord& r) {
    if (flags.quiet) return;
    out << "epoch=" << r.epoch << " loss=" << std::setprecision(6) << r.train_loss << " l1=" << r.l1
        << " l2=" << r.l2 << " l3=" << r.l3 << " val_recall@" << cfg.train.eval_k << '=' << r.val_recall << '\n';
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  save_checkpoint(dir / "checkpoint", result.best, cfg.model);
  write_history_csv(dir / "history.csv", result.history);

  const ModelContext context(p.graph, p.data.features, cfg.model.modalities);
  const Representations reps = compute_representations(context, result.best, cfg.model);
  const RankingReport report = rank_users(reps, p.data, Split::Test, cfg.ks, cfg.train.eval_threads);
  write_report_csv(dir / "report_test.csv", report);

  std::ofstream summary(dir / "summary.txt");
  summary << "best_epoch=" << result.best_epoch << "\nbest_val_recall=" << format_double(result.best_val_recall)
          << "\nepochs_run=" << result.history.size() << "\nstop_reason=" << result.stop_reason << '\n';
  out << "best_epoch=" << result.best_epoch << " epochs_run=" << result.history.size()
      << " stop_reason=\"" << result.stop_reason << "\" seconds=" << std::setprecision(3) << seconds << '\n';
  out << std::setprecision(6);
  for (auto k : report.ks)
    out << "test P@" << k << '=' << report.value("precision", k) << " R@" << k << '=' << report.value("recall", k)
        << " NDCG@" << k << '=' << report.value("ndcg", k) << '\n';
  out << "run_dir=" << dir.string() << '\n';
  return 0;
}

struct RunArtifacts {
  RunConfig cfg;
  Checkpoint checkpoint;
};

RunArtifacts open_run(const fs::path& run_dir, const std::string& checkpoint_dir) {
  if (run_dir.empty()) throw ConfigError("--run is required");
  RunArtifacts a;
  a.cfg = RunConfig::load(run_dir / "run.conf");
  const fs::path ck = checkpoint_dir.empty() ? run_dir / "checkpoint" : fs::path(checkpoint_dir);
  if (!fs::exists(ck / "manifest.txt")) throw DataError("checkpoint not found at " + ck.string());
  a.checkpoint = load_checkpoint(ck);
  a.cfg.model = a.checkpoint.config;
  return a;
}

int cmd_evaluate(const fs::path& run_dir, const std::string& checkpoint_dir, const std::string& split_name,
                 const std::string& ks, bool per_user, std::ostream& out) {
  RunArtifacts a = open_run(run_dir, checkpoint_dir);
  if (!ks.empty()) a.cfg.ks = parse_size_list(ks);
  Split split = Split::Test;
  if (split_name == "validation") split = Split::Validation;
  else if (split_name != "test") throw ConfigError("--split must be 'test' or 'validation'");

  const Pipeline p = load_pipeline(a.cfg, true);
  const ModelContext context(p.graph, p.data.features, a.cfg.model.modalities);
  const Representations reps = compute_representations(context, a.checkpoint.params, a.cfg.model);
  const RankingReport report = rank_users(reps, p.data, split, a.cfg.ks, a.cfg.train.eval_threads);

  a.cfg.save(run_dir / "evaluate.conf");
  const fs::path report_path = run_dir / ("report_" + split_name + ".csv");
  write_report_csv(report_path, report);
  if (per_user) write_per_user_csv(run_dir / ("report_" + split_name + "_users.csv"), report, p.log.users, p.log.items);

  out << std::setprecision(6);
  for (auto k : report.ks)
    out << split_name << " P@" << k << '=' << report.value("precision", k) << " R@" << k << '='
        << report.value("recall", k) << " NDCG@" << k << '=' << report.value("ndcg", k) << '\n';
  out << "evaluated_users=" << report.n_evaluated << " skipped_users=" << report.n_skipped << '\n'
      << "report=" << report_path.string() << '\n';
  return 0;
}

int cmd_export(const fs::path& run_dir, const std::string& checkpoint_dir, const std::string& what,
               std::ostream& out) {
  if (what != "embeddings" && what != "assignments") throw ConfigError("--what must be 'embeddings' or 'assignments'");
  RunArtifacts a = open_run(run_dir, checkpoint_dir);
  const Pipeline p = load_pipeline(a.cfg, true);
  const ModelContext context(p.graph, p.data.features, a.cfg.model.modalities);
  const Representations reps = compute_representations(context, a.checkpoint.params, a.cfg.model);

  const fs::path dir = run_dir / "export" / what;
  if (what == "embeddings") export_embeddings(dir, reps);
  else export_assignments(dir, reps);
  write_id_map(dir / "users.csv", p.log.users);
  write_id_map(dir / "items.csv", p.log.items);
  a.cfg.save(dir / "run.conf");
  out << "export_dir=" << dir.string() << '\n';
  return 0;
}

std::string single_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical user-intent graph recommender: graph building, training, evaluation, exports", "huign"};
  app.require_subcommand(1);
  std::string out_base = "runs";

  SyntheticSpec spec;
  std::string synth_levels = "8,2", synth_modalities = "visual,textual";
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with planted intent hierarchy");
  synth->add_option("--users", spec.n_users, "number of users")->capture_default_str();
  synth->add_option("--items", spec.n_items, "number of items")->capture_default_str();
  synth->add_option("--levels", synth_levels, "planted group counts, finest first")->capture_default_str();
  synth->add_option("--density", spec.density, "interaction density in (0,1]")->capture_default_str();
  synth->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  synth->add_option("--feature-dim", spec.feature_dim, "feature dimension per modality")->capture_default_str();
  synth->add_option("--modalities", synth_modalities, "comma-separated modality names")->capture_default_str();
  synth->add_option("--out", out_base, "base output directory")->capture_default_str();

  ConfigFlags graph_flags;
  std::string thresholds;
  auto* build_graph = app.add_subcommand("build-graph", "build the co-interaction item graph from train interactions");
  graph_flags.add_common(*build_graph);
  build_graph->add_option("--min-cousers", thresholds, "threshold or range lo..hi (one run per value)");
  build_graph->add_option("--out", out_base, "base output directory")->capture_default_str();

  ConfigFlags train_flags;
  TrainFlags tflags;
  std::string train_min_cousers, train_ks;
  auto* train_cmd = app.add_subcommand("train", "train the model and evaluate the best checkpoint on test");
  train_flags.add_common(*train_cmd);
  train_flags.add(*train_cmd, kModelKeys);
  train_flags.add(*train_cmd, kTrainKeys);
  train_flags.add(*train_cmd, {"min_cousers", "ks"});
  train_cmd->add_flag("--no-l1", tflags.no_l1, "zero the assignment (cross-entropy) loss weight");
  train_cmd->add_flag("--no-l2", tflags.no_l2, "zero the independence loss weight");
  train_cmd->add_flag("--quiet", tflags.quiet, "suppress per-epoch lines");
  train_cmd->add_option("--resume", tflags.resume, "checkpoint directory to start from");
  train_cmd->add_option("--out", out_base, "base output directory")->capture_default_str();

  std::string run_dir, checkpoint_dir, split_name = "test", eval_ks;
  bool per_user = false;
  auto* evaluate = app.add_subcommand("evaluate", "full-ranking top-K evaluation of a trained run");
  evaluate->add_option("--run", run_dir, "run directory written by train")->required();
  evaluate->add_option("--checkpoint", checkpoint_dir, "checkpoint directory (default <run>/checkpoint)");
  evaluate->add_option("--split", split_name, "test or validation")->capture_default_str();
  evaluate->add_option("--ks", eval_ks, "comma-separated K values (default from run config)");
  evaluate->add_flag("--per-user", per_user, "also write per-user metrics");

  std::string what;
  auto* export_cmd = app.add_subcommand("export", "export embeddings or intent assignments");
  export_cmd->add_option("--run", run_dir, "run directory written by train")->required();
  export_cmd->add_option("--checkpoint", checkpoint_dir, "checkpoint directory (default <run>/checkpoint)");
  export_cmd->add_option("--what", what, "embeddings or assignments")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << single_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (*synth) {
      spec.levels = parse_size_list(synth_levels);
      spec.modalities = parse_name_list(synth_modalities);
      return cmd_synth(spec, out_base, out);
    }
    if (*build_graph) return cmd_build_graph(graph_flags.resolve(), thresholds, out_base, out);
    if (*train_cmd) return cmd_train(train_flags.resolve(), tflags, out_base, out);
    if (*evaluate) return cmd_evaluate(run_dir, checkpoint_dir, split_name, eval_ks, per_user, out);
    if (*export_cmd) return cmd_export(run_dir, checkpoint_dir, what, out);
  } catch (const std::exception& e) {
    err << "error: " << single_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}

}  // namespace huign
