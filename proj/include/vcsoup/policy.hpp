#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vcsoup/data.hpp"
#include "vcsoup/reward.hpp"
#include "vcsoup/rng.hpp"

namespace vcsoup {

// Tabular softmax policy: one logits row per prompt, pi(y|x) = softmax(row x).
struct TabularPolicy {
  int num_prompts = 0;
  int responses_per_prompt = 0;
  std::vector<double> logits;  // row-major [num_prompts][responses_per_prompt]
  std::string universe_ref;

  std::span<const double> row(int prompt_id) const;
  std::span<double> row(int prompt_id);
  double log_prob(int prompt_id, int response_id) const;
  void check_shape(const TabularPolicy& other) const;

  bool operator==(const TabularPolicy&) const = default;
};

// Parameter delta between a fine-tuned policy and the reference, in logit
// space; same shape as the policy logits table.
struct ValueVector {
  int num_prompts = 0;
  int responses_per_prompt = 0;
  std::vector<double> delta;

  bool operator==(const ValueVector&) const = default;
};

struct DPOTrainConfig {
  double beta = 0.1;
  double learning_rate = 0.05;
  int epochs = 300;
  uint64_t seed = 0;  // reserved; full-batch training is deterministic
};

// All-zero logits (uniform distribution per prompt), the default reference.
TabularPolicy uniform_policy(const Universe& u,
                             const std::string& universe_ref = "");

TabularPolicy restrict_policy(const TabularPolicy& policy,
                              std::span<const int> prompt_ids);

ValueVector policy_delta(const TabularPolicy& policy, const TabularPolicy& ref);
TabularPolicy apply_delta(const TabularPolicy& ref, const ValueVector& theta);

// Mean over pairs of -log sigmoid(beta * h), where h is the policy-vs-
// reference log-probability ratio margin between chosen and rejected.
double dpo_loss(const TabularPolicy& policy, const TabularPolicy& ref,
                const PreferenceDataset& dataset, double beta);

// Exact gradient of dpo_loss with respect to every logit, flattened row-major.
// For a tabular policy the softmax terms cancel, leaving mass only on the
// chosen and rejected entries of each pair's row.
std::vector<double> dpo_gradient(const TabularPolicy& policy,
                                 const TabularPolicy& ref,
                                 const PreferenceDataset& dataset, double beta);

// Full-batch gradient descent from the reference; returns the logit delta.
// Appends per-epoch loss (initial value first) to *loss_trajectory when given.
ValueVector train_dpo(const TabularPolicy& ref, const PreferenceDataset& dataset,
                      const DPOTrainConfig& config,
                      std::vector<double>* loss_trajectory = nullptr);

// Exact expected reward: sum_x w_x sum_y pi(y|x) r(x, y).
double expected_reward(const TabularPolicy& policy, const RewardModel& model,
                       const Universe& u);

int sample_response(const TabularPolicy& policy, int prompt_id, Rng& rng);
int sample_response(const TabularPolicy& policy, int prompt_id, uint64_t seed);

TabularPolicy read_policy_json(const std::string& path);
void write_policy_json(const TabularPolicy& policy, const std::string& path);

// Value-vector files carry the training provenance next to the flat delta.
struct ValueVectorMeta {
  std::string value_name;
  double tau = 0.0;
  DPOTrainConfig train_config;
};

ValueVector read_value_vector_json(const std::string& path,
                                   ValueVectorMeta* meta = nullptr);
void write_value_vector_json(const ValueVector& theta,
                             const ValueVectorMeta& meta,
                             const std::string& path);

}  // namespace vcsoup
