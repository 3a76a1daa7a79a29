#include "vcsoup/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vcsoup/rng.hpp"

namespace fs = std::filesystem;

namespace vcsoup {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

double PipelineConfig::effective_grid_step() const {
  if (grid_step > 0.0) return grid_step;
  return values.size() == 2 ? 0.1 : 0.2;
}

double PipelineConfig::labeler_angle_degrees() const {
  if (conflict == "high") return 120.0;
  if (conflict == "medium") return 90.0;
  if (conflict == "low") return 40.0;
  throw ConfigError("unknown conflict level \"" + conflict + "\"");
}

namespace {

bool valid_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') {
      return false;
    }
  }
  return true;
}

}  // namespace

void PipelineConfig::validate() const {
  if (values.size() < 2) throw ConfigError("need at least 2 values");
  if (universe_path.empty()) {
    if (num_prompts < 1 || responses_per_prompt < 2 || feature_dim < 1) {
      throw ConfigError("universe needs >= 1 prompt, >= 2 responses, >= 1 feature");
    }
  }
  labeler_angle_degrees();  // validates the conflict level
  for (const ValueSpec& v : values) {
    if (!valid_name(v.name)) {
      throw ConfigError("value name \"" + v.name +
                        "\" must be non-empty [A-Za-z0-9_-]");
    }
    if (v.tau < -1.0 || v.tau > 1.0) {
      throw ConfigError("tau for value \"" + v.name + "\" must lie in [-1, 1]");
    }
  }
  for (size_t i = 0; i < values.size(); ++i) {
    for (size_t j = i + 1; j < values.size(); ++j) {
      if (values[i].name == values[j].name) {
        throw ConfigError("duplicate value name \"" + values[i].name + "\"");
      }
    }
  }
  if (pairs_per_value < 1) throw ConfigError("pairs_per_value must be >= 1");
  if (!(reward_train.learning_rate > 0.0) || reward_train.epochs < 1 ||
      reward_train.l2 < 0.0) {
    throw ConfigError("invalid reward_train settings");
  }
  if (!(dpo.beta > 0.0) || !(dpo.learning_rate > 0.0) || dpo.epochs < 0) {
    throw ConfigError("invalid dpo settings");
  }
  if (grid_step < 0.0 || grid_step > 1.0) {
    throw ConfigError("grid_step must lie in (0, 1] or 0 for the default");
  }
  // split sizes are clamped to the universe when splits are derived
  if (validation_prompts < 1) {
    throw ConfigError("validation_prompts must be >= 1");
  }
  if (test_prompts < 1) throw ConfigError("test_prompts must be >= 1");
}

PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.values = {ValueSpec{"helpful", 0.7, std::nullopt, ""},
                ValueSpec{"harmless", 0.7, std::nullopt, ""}};
  return cfg;
}

namespace {

void require_known_keys(const json& obj, std::initializer_list<const char*> keys,
                        const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known |= (it.key() == k);
    if (!known) {
      throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

ZeroNormPolicy parse_zero_norm_policy(const std::string& s) {
  if (s == "drop") return ZeroNormPolicy::drop;
  if (s == "keep-as-zero") return ZeroNormPolicy::keep_as_zero;
  throw ConfigError("zero_norm_policy must be \"drop\" or \"keep-as-zero\"");
}

}  // namespace

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    throw ConfigError("malformed config JSON in " + path);
  }
  require_known_keys(j,
                     {"seed", "out", "universe", "conflict", "values",
                      "pairs_per_value", "reward_train", "dpo", "grid_step",
                      "validation_prompts", "test_prompts", "zero_norm_policy",
                      "dedupe"},
                     path);
  PipelineConfig cfg = default_config();
  try {
    if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
    if (j.contains("universe")) {
      const json& u = j["universe"];
      require_known_keys(
          u, {"num_prompts", "responses_per_prompt", "feature_dim", "path"},
          "universe");
      if (u.contains("path")) {
        cfg.universe_path = u["path"].get<std::string>();
      }
      if (u.contains("num_prompts")) cfg.num_prompts = u["num_prompts"].get<int>();
      if (u.contains("responses_per_prompt")) {
        cfg.responses_per_prompt = u["responses_per_prompt"].get<int>();
      }
      if (u.contains("feature_dim")) cfg.feature_dim = u["feature_dim"].get<int>();
    }
    if (j.contains("conflict")) cfg.conflict = j["conflict"].get<std::string>();
    if (j.contains("values")) {
      cfg.values.clear();
      for (const json& v : j["values"]) {
        require_known_keys(v, {"name", "tau", "labeler", "pairs"}, "value spec");
        ValueSpec spec;
        spec.name = v.at("name").get<std::string>();
        spec.tau = v.value("tau", 0.7);
        if (v.contains("labeler")) {
          const json& l = v["labeler"];
          require_known_keys(l, {"weight", "bias"}, "labeler");
          RewardModel m;
          m.kind = RewardKind::linear_analytic;
          m.weight = l.at("weight").get<std::vector<double>>();
          m.bias = l.value("bias", 0.0);
          spec.labeler = std::move(m);
        }
        if (v.contains("pairs")) spec.pairs_path = v["pairs"].get<std::string>();
        cfg.values.push_back(std::move(spec));
      }
    }
    if (j.contains("pairs_per_value")) {
      cfg.pairs_per_value = j["pairs_per_value"].get<int>();
    }
    if (j.contains("reward_train")) {
      const json& r = j["reward_train"];
      require_known_keys(r, {"learning_rate", "epochs", "l2"}, "reward_train");
      cfg.reward_train.learning_rate =
          r.value("learning_rate", cfg.reward_train.learning_rate);
      cfg.reward_train.epochs = r.value("epochs", cfg.reward_train.epochs);
      cfg.reward_train.l2 = r.value("l2", cfg.reward_train.l2);
    }
    if (j.contains("dpo")) {
      const json& d = j["dpo"];
      require_known_keys(d, {"beta", "learning_rate", "epochs"}, "dpo");
      cfg.dpo.beta = d.value("beta", cfg.dpo.beta);
      cfg.dpo.learning_rate = d.value("learning_rate", cfg.dpo.learning_rate);
      cfg.dpo.epochs = d.value("epochs", cfg.dpo.epochs);
    }
    if (j.contains("grid_step")) cfg.grid_step = j["grid_step"].get<double>();
    if (j.contains("validation_prompts")) {
      cfg.validation_prompts = j["validation_prompts"].get<int>();
    }
    if (j.contains("test_prompts")) cfg.test_prompts = j["test_prompts"].get<int>();
    if (j.contains("zero_norm_policy")) {
      cfg.zero_norm_policy =
          parse_zero_norm_policy(j["zero_norm_policy"].get<std::string>());
    }
    if (j.contains("dedupe")) cfg.pareto_dedupe = j["dedupe"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError("invalid config " + path + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string config_canonical_json(const PipelineConfig& config) {
  json j;  // plain json sorts keys, giving a canonical dump
  j["seed"] = config.seed;
  j["universe"] = {{"num_prompts", config.num_prompts},
                   {"responses_per_prompt", config.responses_per_prompt},
                   {"feature_dim", config.feature_dim},
                   {"path", config.universe_path}};
  j["conflict"] = config.conflict;
  json values = json::array();
  for (const ValueSpec& v : config.values) {
    json jv;
    jv["name"] = v.name;
    jv["tau"] = v.tau;
    if (v.labeler) {
      jv["labeler"] = {{"weight", v.labeler->weight}, {"bias", v.labeler->bias}};
    }
    if (!v.pairs_path.empty()) jv["pairs"] = v.pairs_path;
    values.push_back(std::move(jv));
  }
  j["values"] = std::move(values);
  j["pairs_per_value"] = config.pairs_per_value;
  j["reward_train"] = {{"learning_rate", config.reward_train.learning_rate},
                       {"epochs", config.reward_train.epochs},
                       {"l2", config.reward_train.l2}};
  j["dpo"] = {{"beta", config.dpo.beta},
              {"learning_rate", config.dpo.learning_rate},
              {"epochs", config.dpo.epochs}};
  j["grid_step"] = config.effective_grid_step();
  j["validation_prompts"] = config.validation_prompts;
  j["test_prompts"] = config.test_prompts;
  j["zero_norm_policy"] =
      config.zero_norm_policy == ZeroNormPolicy::drop ? "drop" : "keep-as-zero";
  j["dedupe"] = config.pareto_dedupe;
  return j.dump();
}

std::string config_hash(const PipelineConfig& config) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(config_canonical_json(config))));
  return buf;
}

PromptSplits derive_splits(const PipelineConfig& config) {
  // Splits are drawn against the universe actually in play.
  int num_prompts = config.num_prompts;
  if (!config.universe_path.empty()) {
    num_prompts = read_universe_json(config.universe_path).num_prompts;
  }
  const int v = std::min(config.validation_prompts, num_prompts - 1);
  const int t = std::min(config.test_prompts, num_prompts - v);
  if (v < 1 || t < 1) throw ConfigError("splits need at least one prompt each");

  std::vector<int> ids(static_cast<size_t>(num_prompts));
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng = Rng::substream(config.seed, "split");
  for (size_t i = ids.size() - 1; i > 0; --i) {
    const size_t k = rng.uniform_index(i + 1);
    std::swap(ids[i], ids[k]);
  }
  PromptSplits splits;
  splits.validation.assign(ids.begin(), ids.begin() + v);
  splits.test.assign(ids.begin() + v, ids.begin() + v + t);
  std::sort(splits.validation.begin(), splits.validation.end());
  std::sort(splits.test.begin(), splits.test.end());
  return splits;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  char buf[28];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

namespace {

std::string out_path(const PipelineConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

void update_manifest(const PipelineConfig& cfg, const std::string& stage,
                     const std::vector<std::string>& files) {
  const std::string manifest_path = out_path(cfg, "MANIFEST.json");
  json manifest;
  {
    std::ifstream in(manifest_path);
    if (in) {
      manifest = json::parse(in, nullptr, /*allow_exceptions=*/false);
      if (manifest.is_discarded() || !manifest.is_object()) manifest = json{};
    }
  }
  manifest["config_hash"] = config_hash(cfg);
  manifest["seed"] = cfg.seed;
  json entry;
  for (const std::string& f : files) {
    entry[f] = file_digest(out_path(cfg, f));
  }
  manifest["stages"][stage] = std::move(entry);
  std::ofstream out(manifest_path);
  if (!out) throw std::runtime_error("cannot write " + manifest_path);
  out << manifest.dump(2) << '\n';
}

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ValueVector restrict_value_vector(const ValueVector& theta,
                                  std::span<const int> prompt_ids) {
  ValueVector out;
  out.num_prompts = static_cast<int>(prompt_ids.size());
  out.responses_per_prompt = theta.responses_per_prompt;
  const size_t r = static_cast<size_t>(theta.responses_per_prompt);
  for (int id : prompt_ids) {
    out.delta.insert(out.delta.end(), theta.delta.begin() + id * r,
                     theta.delta.begin() + (id + 1) * r);
  }
  return out;
}

Universe load_universe(const PipelineConfig& cfg) {
  return read_universe_json(out_path(cfg, "universe.json"));
}

PreferenceDataset load_pairs(const PipelineConfig& cfg,
                             const std::string& value_name,
                             const std::string& prefix) {
  return read_pairs_jsonl(out_path(cfg, prefix + value_name + ".jsonl"));
}

std::vector<RewardModel> load_reward_models(const PipelineConfig& cfg) {
  std::vector<RewardModel> models;
  for (const ValueSpec& v : cfg.values) {
    models.push_back(read_reward_json(out_path(cfg, "reward_" + v.name + ".json")));
  }
  return models;
}

std::vector<RewardStats> load_reward_stats(const PipelineConfig& cfg) {
  std::vector<RewardStats> stats;
  for (const ValueSpec& v : cfg.values) {
    stats.push_back(
        read_stats_json(out_path(cfg, "reward_stats_" + v.name + ".json")));
  }
  return stats;
}

std::vector<ValueVector> load_thetas(const PipelineConfig& cfg) {
  std::vector<ValueVector> thetas;
  for (const ValueSpec& v : cfg.values) {
    thetas.push_back(
        read_value_vector_json(out_path(cfg, "theta_" + v.name + ".json")));
  }
  return thetas;
}

PromptSplits load_splits(const PipelineConfig& cfg) {
  std::ifstream in(out_path(cfg, "splits.json"));
  if (!in) throw std::runtime_error("cannot open splits.json (run gen-data first)");
  json j;
  in >> j;
  PromptSplits splits;
  splits.validation = j.at("validation").get<std::vector<int>>();
  splits.test = j.at("test").get<std::vector<int>>();
  return splits;
}

// ---- stages ----

void stage_gen_data(const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  Universe universe =
      cfg.universe_path.empty()
          ? generate_universe(cfg.num_prompts, cfg.responses_per_prompt,
                              cfg.feature_dim,
                              substream_seed(cfg.seed, "universe"))
          : read_universe_json(cfg.universe_path);
  universe.validate();
  write_universe_json(universe, out_path(cfg, "universe.json"));

  std::vector<std::string> files = {"universe.json"};

  const int n = static_cast<int>(cfg.values.size());
  std::vector<RewardModel> auto_labelers;
  for (const ValueSpec& v : cfg.values) {
    if (!v.labeler && v.pairs_path.empty()) {
      auto_labelers = make_planar_labelers(n, cfg.labeler_angle_degrees(),
                                           universe.feature_dim);
      break;
    }
  }

  std::vector<const RewardModel*> labelers(cfg.values.size(), nullptr);
  std::vector<PreferenceDataset> datasets;
  for (size_t i = 0; i < cfg.values.size(); ++i) {
    const ValueSpec& v = cfg.values[i];
    PreferenceDataset d;
    if (!v.pairs_path.empty()) {
      d = read_pairs_jsonl(v.pairs_path);
      d.validate_against(universe);
    } else {
      labelers[i] = v.labeler ? &*v.labeler : &auto_labelers[i];
      d = generate_pairs(universe, *labelers[i], cfg.pairs_per_value,
                         substream_seed(cfg.seed, "pairs/" + v.name));
    }
    d.value_name = v.name;
    d.universe_ref = "universe.json";
    write_pairs_jsonl(d, out_path(cfg, "pairs_" + v.name + ".jsonl"));
    files.push_back("pairs_" + v.name + ".jsonl");
    files.push_back("pairs_" + v.name + ".jsonl.meta.json");
    if (labelers[i]) {
      write_reward_json(*labelers[i], out_path(cfg, "labeler_" + v.name + ".json"));
      files.push_back("labeler_" + v.name + ".json");
    }
    datasets.push_back(std::move(d));
  }

  const PromptSplits splits = derive_splits(cfg);
  {
    ordered_json j;
    j["validation"] = splits.validation;
    j["test"] = splits.test;
    std::ofstream out(out_path(cfg, "splits.json"));
    out << j.dump() << '\n';
    files.push_back("splits.json");
  }

  {
    // effective configuration, for provenance next to the artifacts
    std::ofstream out(out_path(cfg, "config.json"));
    out << config_canonical_json(cfg) << '\n';
    files.push_back("config.json");
  }

  ordered_json report;
  report["seed"] = cfg.seed;
  report["config_hash"] = config_hash(cfg);
  report["pairs_per_value"] = cfg.pairs_per_value;
  const bool all_labeled =
      std::all_of(labelers.begin(), labelers.end(),
                  [](const RewardModel* m) { return m != nullptr; });
  if (all_labeled) {
    PreferenceDataset pair_union;
    for (const PreferenceDataset& d : datasets) {
      pair_union.pairs.insert(pair_union.pairs.end(), d.pairs.begin(),
                              d.pairs.end());
    }
    std::vector<RewardModel> models;
    for (const RewardModel* m : labelers) models.push_back(*m);
    report["conflict_fraction_union"] =
        conflict_fraction(pair_union, universe, models);
  }
  {
    std::ofstream out(out_path(cfg, "gen_report.json"));
    out << report.dump(2) << '\n';
    files.push_back("gen_report.json");
  }
  update_manifest(cfg, "gen-data", files);
}

void stage_train_reward(const PipelineConfig& cfg) {
  const Universe universe = load_universe(cfg);
  std::vector<std::string> files;
  std::ofstream report(out_path(cfg, "reward_report.csv"));
  report << "value,pairwise_accuracy,initial_loss,final_loss\n";
  for (const ValueSpec& v : cfg.values) {
    const PreferenceDataset pairs = load_pairs(cfg, v.name, "pairs_");
    std::vector<double> trajectory;
    const RewardModel model =
        train_bradley_terry(pairs, universe, cfg.reward_train, &trajectory);
    write_reward_json(model, out_path(cfg, "reward_" + v.name + ".json"));
    const RewardStats stats = compute_stats(model, pairs, universe);
    write_stats_json(stats, out_path(cfg, "reward_stats_" + v.name + ".json"));
    report << v.name << ',' << format17(pairwise_accuracy(model, pairs, universe))
           << ',' << format17(trajectory.front()) << ','
           << format17(trajectory.back()) << '\n';
    files.push_back("reward_" + v.name + ".json");
    files.push_back("reward_stats_" + v.name + ".json");
  }
  report.close();
  files.push_back("reward_report.csv");
  update_manifest(cfg, "train-reward", files);
}

void stage_score(const PipelineConfig& cfg) {
  const Universe universe = load_universe(cfg);
  const std::vector<RewardModel> models = load_reward_models(cfg);
  const std::vector<RewardStats> stats = load_reward_stats(cfg);
  std::vector<std::string> files;

  std::ofstream gaps(out_path(cfg, "fig_gaps.csv"));
  gaps << "gap_value_1,gap_value_2,quadrant\n";
  for (const ValueSpec& v : cfg.values) {
    const PreferenceDataset pairs = load_pairs(cfg, v.name, "pairs_");
    const std::vector<ConsistencyRecord> records =
        score_dataset(pairs, models, stats, universe);
    write_scores_jsonl(records, out_path(cfg, "scores_" + v.name + ".jsonl"));
    files.push_back("scores_" + v.name + ".jsonl");
    for (const ConsistencyRecord& rec : records) {
      gaps << format17(rec.raw_gaps[0]) << ',' << format17(rec.raw_gaps[1])
           << ',' << quadrant_label(rec.raw_gaps[0], rec.raw_gaps[1]) << '\n';
    }
  }
  gaps.close();
  files.push_back("fig_gaps.csv");
  update_manifest(cfg, "score", files);
}

void stage_filter(const PipelineConfig& cfg) {
  std::vector<std::string> files;
  std::ofstream retention(out_path(cfg, "retention.csv"));
  retention << "value,tau,total,kept,fraction\n";
  for (const ValueSpec& v : cfg.values) {
    const std::vector<ConsistencyRecord> records =
        read_scores_jsonl(out_path(cfg, "scores_" + v.name + ".jsonl"));
    FilterConfig filter{v.tau, cfg.zero_norm_policy};
    const PreferenceDataset filtered =
        filter_dataset(records, filter, v.name, "universe.json");
    write_pairs_jsonl(filtered, out_path(cfg, "filtered_" + v.name + ".jsonl"));
    files.push_back("filtered_" + v.name + ".jsonl");
    files.push_back("filtered_" + v.name + ".jsonl.meta.json");
    const double fraction =
        records.empty() ? 0.0
                        : static_cast<double>(filtered.pairs.size()) /
                              static_cast<double>(records.size());
    retention << v.name << ',' << format17(v.tau) << ',' << records.size()
              << ',' << filtered.pairs.size() << ',' << format17(fraction)
              << '\n';
  }
  retention.close();
  files.push_back("retention.csv");
  update_manifest(cfg, "filter", files);
}

void stage_train_dpo(const PipelineConfig& cfg) {
  const Universe universe = load_universe(cfg);
  const TabularPolicy ref = uniform_policy(universe, "universe.json");
  std::vector<std::string> files;
  for (const ValueSpec& v : cfg.values) {
    const PreferenceDataset filtered = load_pairs(cfg, v.name, "filtered_");
    std::vector<double> trajectory;
    ValueVector theta;
    try {
      theta = train_dpo(ref, filtered, cfg.dpo, &trajectory);
    } catch (const std::exception& e) {
      throw std::runtime_error("value '" + v.name + "': " + e.what());
    }
    ValueVectorMeta meta{v.name, v.tau, cfg.dpo};
    write_value_vector_json(theta, meta, out_path(cfg, "theta_" + v.name + ".json"));
    files.push_back("theta_" + v.name + ".json");
    std::ofstream loss_csv(out_path(cfg, "dpo_loss_" + v.name + ".csv"));
    loss_csv << "epoch,loss\n";
    for (size_t e = 0; e < trajectory.size(); ++e) {
      loss_csv << e << ',' << format17(trajectory[e]) << '\n';
    }
    files.push_back("dpo_loss_" + v.name + ".csv");
  }
  update_manifest(cfg, "train-dpo", files);
}

void stage_merge(const PipelineConfig& cfg) {
  const Universe universe = load_universe(cfg);
  const std::vector<ValueVector> thetas = load_thetas(cfg);
  const std::vector<RewardModel> models = load_reward_models(cfg);
  const PromptSplits splits = load_splits(cfg);

  const Universe val_universe = restrict_universe(universe, splits.validation);
  const TabularPolicy ref = uniform_policy(universe, "universe.json");
  const TabularPolicy ref_val = restrict_policy(ref, splits.validation);
  std::vector<ValueVector> thetas_val;
  for (const ValueVector& t : thetas) {
    thetas_val.push_back(restrict_value_vector(t, splits.validation));
  }
  const std::vector<WeightVector> grid = simplex_grid(
      static_cast<int>(cfg.values.size()), cfg.effective_grid_step());
  const std::vector<CandidateModel> candidates =
      build_candidates(ref_val, thetas_val, grid, models, val_universe);
  write_candidates_csv(candidates, out_path(cfg, "candidates.csv"));
  update_manifest(cfg, "merge", {"candidates.csv"});
}

void stage_pareto(const PipelineConfig& cfg) {
  const std::vector<CandidateModel> candidates =
      read_candidates_csv(out_path(cfg, "candidates.csv"));
  const ParetoFrontier frontier = pareto_filter(candidates, cfg.pareto_dedupe);
  write_frontier_csv(candidates, frontier, out_path(cfg, "frontier.csv"));

  // Re-score the frontier members on the held-out test prompts so selection
  // bias is visible next to the validation scores used for selection.
  const Universe universe = load_universe(cfg);
  const std::vector<ValueVector> thetas = load_thetas(cfg);
  const std::vector<RewardModel> models = load_reward_models(cfg);
  const PromptSplits splits = load_splits(cfg);
  const Universe test_universe = restrict_universe(universe, splits.test);
  const TabularPolicy ref = uniform_policy(universe, "universe.json");
  const TabularPolicy ref_test = restrict_policy(ref, splits.test);
  std::vector<ValueVector> thetas_test;
  for (const ValueVector& t : thetas) {
    thetas_test.push_back(restrict_value_vector(t, splits.test));
  }

  std::ofstream out(out_path(cfg, "frontier_report.csv"));
  const size_t n = cfg.values.size();
  for (size_t i = 0; i < n; ++i) out << "lambda_" << (i + 1) << ',';
  for (size_t i = 0; i < n; ++i) out << "val_score_" << (i + 1) << ',';
  for (size_t i = 0; i < n; ++i) {
    out << "test_score_" << (i + 1) << (i + 1 < n ? "," : "\n");
  }
  for (const CandidateModel& member : frontier.members) {
    const TabularPolicy merged = merge(ref_test, thetas_test, member.weights);
    for (double l : member.weights.lambdas) out << format17(l) << ',';
    for (double s : member.scores) out << format17(s) << ',';
    for (size_t i = 0; i < n; ++i) {
      out << format17(expected_reward(merged, models[i], test_universe))
          << (i + 1 < n ? "," : "\n");
    }
  }
  out.close();
  update_manifest(cfg, "pareto", {"frontier.csv", "frontier_report.csv"});
}

void stage_verify(const PipelineConfig& cfg) {
  const Universe universe = load_universe(cfg);
  const TabularPolicy ref = uniform_policy(universe, "universe.json");
  const std::vector<ValueVector> thetas_vc = load_thetas(cfg);

  std::vector<PreferenceDataset> raw;
  std::vector<PreferenceDataset> filtered;
  for (const ValueSpec& v : cfg.values) {
    raw.push_back(load_pairs(cfg, v.name, "pairs_"));
    filtered.push_back(load_pairs(cfg, v.name, "filtered_"));
  }

  // Unfiltered counterparts for the comparison; identical training recipe.
  std::vector<ValueVector> thetas_vs;
  for (const PreferenceDataset& d : raw) {
    thetas_vs.push_back(train_dpo(ref, d, cfg.dpo));
  }

  std::vector<std::string> files;
  ordered_json summary;

  ordered_json conflicts = ordered_json::array();
  for (size_t i = 0; i < cfg.values.size(); ++i) {
    for (size_t j = i + 1; j < cfg.values.size(); ++j) {
      const ConflictReport raw_report =
          gradient_conflict(ref, raw[i], raw[j], cfg.dpo.beta);
      const ConflictReport filt_report =
          gradient_conflict(ref, filtered[i], filtered[j], cfg.dpo.beta);
      ordered_json entry;
      entry["value_i"] = cfg.values[i].name;
      entry["value_j"] = cfg.values[j].name;
      auto dump = [](const ConflictReport& r) {
        return ordered_json{{"matched_prompts", r.matched_prompts.size()},
                            {"mean_cosine", r.mean_cosine},
                            {"negative_fraction", r.negative_fraction},
                            {"batch_cosine", r.batch_cosine}};
      };
      entry["raw"] = dump(raw_report);
      entry["filtered"] = dump(filt_report);
      conflicts.push_back(std::move(entry));
    }
  }
  summary["conflict"] = conflicts;
  {
    std::ofstream out(out_path(cfg, "conflict_report.json"));
    out << conflicts.dump(2) << '\n';
    files.push_back("conflict_report.json");
  }

  ordered_json scans;
  for (size_t v = 0; v < cfg.values.size(); ++v) {
    const LossFunction loss =
        make_dpo_loss_function(ref, filtered[v], cfg.dpo.beta);
    const MergeGapReport report = merging_gap_scan(
        loss, thetas_vc[0].delta, thetas_vc[1].delta, /*num_lambdas=*/21);
    const std::string csv = "gap_scan_" + cfg.values[v].name + ".csv";
    write_gap_scan_csv(report, out_path(cfg, csv));
    files.push_back(csv);
    double max_gap = report.gaps.front();
    for (double g : report.gaps) max_gap = std::max(max_gap, g);
    scans[cfg.values[v].name] = {{"l_h", report.l_h},
                                 {"theta_distance_sq", report.theta_distance_sq},
                                 {"max_gap", max_gap},
                                 {"bound_holds", report.bound_holds}};
  }
  summary["gap_scans"] = scans;

  const GeometryReport geom_vc = vector_geometry(thetas_vc[0], thetas_vc[1]);
  const GeometryReport geom_vs = vector_geometry(thetas_vs[0], thetas_vs[1]);
  write_geometry_csv(geom_vc, out_path(cfg, "geometry_vc.csv"));
  write_geometry_csv(geom_vs, out_path(cfg, "geometry_vs.csv"));
  files.push_back("geometry_vc.csv");
  files.push_back("geometry_vs.csv");
  summary["geometry"] = {
      {"vc", {{"l2_distance", geom_vc.l2_distance}, {"cosine", geom_vc.cosine}}},
      {"vs", {{"l2_distance", geom_vs.l2_distance}, {"cosine", geom_vs.cosine}}}};

  {
    std::ofstream out(out_path(cfg, "verify_report.json"));
    out << summary.dump(2) << '\n';
    files.push_back("verify_report.json");
  }
  update_manifest(cfg, "verify", files);
}

}  // namespace

void run_stage(const PipelineConfig& config, std::string_view stage) {
  config.validate();
  try {
    if (stage == "gen-data") {
      stage_gen_data(config);
    } else if (stage == "train-reward") {
      stage_train_reward(config);
    } else if (stage == "score") {
      stage_score(config);
    } else if (stage == "filter") {
      stage_filter(config);
    } else if (stage == "train-dpo") {
      stage_train_dpo(config);
    } else if (stage == "merge") {
      stage_merge(config);
    } else if (stage == "pareto") {
      stage_pareto(config);
    } else if (stage == "verify") {
      stage_verify(config);
    } else {
      throw ConfigError("unknown stage \"" + std::string(stage) + "\"");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(std::string(stage), e.what());
  }
}

void run_pipeline(const PipelineConfig& config) {
  for (std::string_view stage : kStageNames) {
    run_stage(config, stage);
  }
}

}  // namespace vcsoup
