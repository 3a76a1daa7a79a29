#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vcsoup/consistency.hpp"
#include "vcsoup/data.hpp"
#include "vcsoup/datagen.hpp"
#include "vcsoup/pareto.hpp"
#include "vcsoup/policy.hpp"
#include "vcsoup/reward.hpp"
#include "vcsoup/soup.hpp"
#include "vcsoup/theory.hpp"

namespace vcsoup {

// Invalid or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A stage aborted; carries the stage name (CLI exit code 3).
struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string stage_name, const std::string& msg)
      : std::runtime_error(msg), stage(std::move(stage_name)) {}
};

struct ValueSpec {
  std::string name;
  double tau = 0.7;
  std::optional<RewardModel> labeler;  // scores pairs during generation
  std::string pairs_path;              // or ingest an existing pairs JSONL
};

struct PipelineConfig {
  uint64_t seed = 0;
  std::string out_dir = "out";

  // universe: generated from the counts below unless universe_path is set
  int num_prompts = 200;
  int responses_per_prompt = 4;
  int feature_dim = 4;
  std::string universe_path;

  // labeler spread for values without an explicit labeler or pairs file:
  // high = 120deg, medium = 90deg, low = 40deg between adjacent values
  std::string conflict = "high";

  std::vector<ValueSpec> values;
  int pairs_per_value = 2000;

  BTTrainConfig reward_train;
  DPOTrainConfig dpo;

  double grid_step = 0.0;  // 0 -> 0.1 for two values, 0.2 otherwise
  int validation_prompts = 50;
  int test_prompts = 200;  // clamped to the prompts left after validation
  ZeroNormPolicy zero_norm_policy = ZeroNormPolicy::drop;
  bool pareto_dedupe = false;  // collapse exact-equal score vectors

  double effective_grid_step() const;
  double labeler_angle_degrees() const;
  void validate() const;
};

// Two auto-labeled values ("helpful", "harmless") at tau 0.7 over a
// 200-prompt, 4-response universe with 2000 pairs per value.
PipelineConfig default_config();

PipelineConfig load_config(const std::string& path);

// Effective config as canonical JSON (sorted keys, defaults filled), and its
// digest as recorded in the run manifest.
std::string config_canonical_json(const PipelineConfig& config);
std::string config_hash(const PipelineConfig& config);

// Deterministic evaluation splits: disjoint sorted prompt id sets drawn from
// a seed-derived shuffle. Validation scores drive Pareto selection; test
// scores are reported.
struct PromptSplits {
  std::vector<int> validation;
  std::vector<int> test;
};
PromptSplits derive_splits(const PipelineConfig& config);

inline constexpr std::string_view kStageNames[] = {
    "gen-data",  "train-reward", "score",  "filter",
    "train-dpo", "merge",        "pareto", "verify"};

// Runs one stage against the artifacts in config.out_dir and updates the
// MANIFEST. Throws StageError on failure.
void run_stage(const PipelineConfig& config, std::string_view stage);

// All stages in order; equivalent to running them one by one.
void run_pipeline(const PipelineConfig& config);

std::string file_digest(const std::string& path);

}  // namespace vcsoup
