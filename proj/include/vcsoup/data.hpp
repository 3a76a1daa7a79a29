#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vcsoup {

// Finite prompt/response world. Responses are feature vectors scored by
// linear reward models; prompt_weights is the sampling distribution over
// prompts used both for pair generation and exact policy evaluation.
struct Universe {
  int num_prompts = 0;
  int responses_per_prompt = 0;
  int feature_dim = 0;
  std::vector<double> prompt_features;    // [num_prompts][feature_dim]
  std::vector<double> response_features;  // [num_prompts][responses][feature_dim]
  std::vector<double> prompt_weights;     // [num_prompts], sums to 1

  std::span<const double> prompt_feature(int prompt_id) const;
  std::span<const double> response_feature(int prompt_id, int response_id) const;

  void check_prompt(int prompt_id) const;
  void check_response(int prompt_id, int response_id) const;

  // Enforces shape consistency, finite features and a normalized weight
  // vector. Throws std::runtime_error on violation.
  void validate() const;

  bool operator==(const Universe&) const = default;
};

struct PreferencePair {
  int prompt_id = 0;
  int chosen_id = 0;    // preferred response
  int rejected_id = 0;  // dispreferred response

  bool operator==(const PreferencePair&) const = default;
};

struct PreferenceDataset {
  std::string universe_ref;
  std::string value_name;
  std::vector<PreferencePair> pairs;

  void validate_against(const Universe& u) const;

  bool operator==(const PreferenceDataset&) const = default;
};

// Features i.i.d. standard normal from the seeded stream, uniform prompt
// weights. Identical arguments and seed reproduce the universe bit for bit.
Universe generate_universe(int num_prompts, int responses_per_prompt,
                           int feature_dim, uint64_t seed);

// Sub-universe over the given prompt ids, with prompt weights re-normalized.
Universe restrict_universe(const Universe& u, std::span<const int> prompt_ids);

Universe read_universe_json(const std::string& path);
void write_universe_json(const Universe& u, const std::string& path);

// Pairs JSONL: one {"prompt_id", "chosen_id", "rejected_id"} object per line,
// strict schema. A sidecar <path>.meta.json carries value_name/universe_ref
// when set, so write-then-read is the identity.
PreferenceDataset read_pairs_jsonl(const std::string& path);
void write_pairs_jsonl(const PreferenceDataset& dataset, const std::string& path);

}  // namespace vcsoup
