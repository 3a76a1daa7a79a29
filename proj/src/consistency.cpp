#include "vcsoup/consistency.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace vcsoup {

double raw_gap(const RewardModel& model, const Universe& u,
               const PreferencePair& pair) {
  return model.score(u, pair.prompt_id, pair.chosen_id) -
         model.score(u, pair.prompt_id, pair.rejected_id);
}

std::vector<double> normalized_gap_vector(std::span<const RewardModel> models,
                                          std::span<const RewardStats> stats,
                                          const Universe& u,
                                          const PreferencePair& pair,
                                          const NormalizeOptions& options) {
  if (models.size() < 2) {
    throw std::invalid_argument("need at least 2 value models");
  }
  if (models.size() != stats.size()) {
    throw std::invalid_argument("models and stats length mismatch");
  }
  std::vector<double> g(models.size());
  for (size_t j = 0; j < models.size(); ++j) {
    double sigma = stats[j].stddev;
    if (sigma == 0.0) {
      if (!options.substitute_unit_sigma) {
        throw std::runtime_error("degenerate reward scale for value " +
                                 std::to_string(j));
      }
      sigma = 1.0;
    }
    g[j] = raw_gap(models[j], u, pair) / sigma;
  }
  return g;
}

double vc_score(std::span<const double> g) {
  if (g.size() < 2) throw std::invalid_argument("gap vector needs n >= 2");
  double sum = 0.0;
  double sq = 0.0;
  for (double v : g) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("non-finite gap component");
    }
    sum += v;
    sq += v * v;
  }
  if (sq == 0.0) return 0.0;
  return sum / (std::sqrt(sq) * std::sqrt(static_cast<double>(g.size())));
}

std::vector<ConsistencyRecord> score_dataset(
    const PreferenceDataset& dataset, std::span<const RewardModel> models,
    std::span<const RewardStats> stats, const Universe& u,
    const NormalizeOptions& options) {
  std::vector<ConsistencyRecord> records;
  records.reserve(dataset.pairs.size());
  for (size_t i = 0; i < dataset.pairs.size(); ++i) {
    const PreferencePair& pair = dataset.pairs[i];
    try {
      ConsistencyRecord rec;
      rec.pair = pair;
      rec.raw_gaps.resize(models.size());
      for (size_t j = 0; j < models.size(); ++j) {
        rec.raw_gaps[j] = raw_gap(models[j], u, pair);
      }
      rec.norm_gaps = normalized_gap_vector(models, stats, u, pair, options);
      double sq = 0.0;
      for (double v : rec.norm_gaps) sq += v * v;
      rec.degenerate = (sq == 0.0);
      rec.vc = vc_score(rec.norm_gaps);
      records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw std::runtime_error("pair " + std::to_string(i) + ": " + e.what());
    }
  }
  return records;
}

PreferenceDataset filter_dataset(std::span<const ConsistencyRecord> records,
                                 const FilterConfig& config,
                                 const std::string& value_name,
                                 const std::string& universe_ref) {
  if (config.tau < -1.0 || config.tau > 1.0) {
    throw std::invalid_argument("tau must lie in [-1, 1]");
  }
  PreferenceDataset d;
  d.value_name = value_name;
  d.universe_ref = universe_ref;
  for (const ConsistencyRecord& rec : records) {
    if (rec.degenerate) {
      if (config.zero_norm_policy == ZeroNormPolicy::keep_as_zero &&
          0.0 >= config.tau) {
        d.pairs.push_back(rec.pair);
      }
      continue;
    }
    if (rec.vc >= config.tau) d.pairs.push_back(rec.pair);
  }
  return d;
}

std::string quadrant_label(double gap1, double gap2) {
  if (gap1 == 0.0 || gap2 == 0.0) return "AXIS";
  if (gap1 > 0.0 && gap2 > 0.0) return "PP";
  if (gap1 < 0.0 && gap2 < 0.0) return "NN";
  return "MIXED";
}

std::vector<ConsistencyRecord> read_scores_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<ConsistencyRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j =
        nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
      throw std::runtime_error("malformed line " + std::to_string(line_no) +
                               " in " + path);
    }
    try {
      ConsistencyRecord rec;
      rec.pair.prompt_id = j.at("prompt_id").get<int>();
      rec.pair.chosen_id = j.at("chosen_id").get<int>();
      rec.pair.rejected_id = j.at("rejected_id").get<int>();
      rec.raw_gaps = j.at("raw_gaps").get<std::vector<double>>();
      rec.norm_gaps = j.at("norm_gaps").get<std::vector<double>>();
      rec.vc = j.at("vc").get<double>();
      rec.degenerate = j.at("degenerate").get<bool>();
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("invalid record at line " +
                               std::to_string(line_no) + " in " + path + ": " +
                               e.what());
    }
  }
  return records;
}

void write_scores_jsonl(std::span<const ConsistencyRecord> records,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const ConsistencyRecord& rec : records) {
    nlohmann::ordered_json j;
    j["prompt_id"] = rec.pair.prompt_id;
    j["chosen_id"] = rec.pair.chosen_id;
    j["rejected_id"] = rec.pair.rejected_id;
    j["raw_gaps"] = rec.raw_gaps;
    j["norm_gaps"] = rec.norm_gaps;
    j["vc"] = rec.vc;
    j["degenerate"] = rec.degenerate;
    out << j.dump() << '\n';
  }
}

}  // namespace vcsoup
