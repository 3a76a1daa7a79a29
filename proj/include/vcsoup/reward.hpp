#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vcsoup/data.hpp"

namespace vcsoup {

enum class RewardKind { linear_analytic, trained_bt };

// Linear scorer over response features: score = weight . features + bias.
// Serves both as ground-truth labeler (linear_analytic) and as the output of
// the Bradley-Terry trainer (trained_bt).
struct RewardModel {
  RewardKind kind = RewardKind::linear_analytic;
  std::vector<double> weight;
  double bias = 0.0;

  double score(const Universe& u, int prompt_id, int response_id) const;

  bool operator==(const RewardModel&) const = default;
};

// Dataset-level score statistics over the multiset of (prompt, response)
// occurrences contributed by each pair's chosen and rejected response.
// stddev is the population standard deviation (divide by count).
struct RewardStats {
  double mean = 0.0;
  double stddev = 0.0;
  int64_t count = 0;

  bool operator==(const RewardStats&) const = default;
};

struct BTTrainConfig {
  double learning_rate = 0.1;
  int epochs = 500;
  double l2 = 1e-4;
};

// Pairwise logistic loss to be minimized: -mean log sigmoid(s_w - s_l) plus
// l2 * |weight|^2. The bias cancels in every score difference and stays 0.
double bt_loss(const RewardModel& model, const PreferenceDataset& dataset,
               const Universe& u, double l2);
std::vector<double> bt_loss_gradient(const RewardModel& model,
                                     const PreferenceDataset& dataset,
                                     const Universe& u, double l2);

// Full-batch gradient descent from zero weights; deterministic.
// Appends per-epoch loss (including the initial value) to *loss_trajectory
// when given.
RewardModel train_bradley_terry(const PreferenceDataset& dataset,
                                const Universe& u, const BTTrainConfig& config,
                                std::vector<double>* loss_trajectory = nullptr);

RewardStats compute_stats(const RewardModel& model,
                          const PreferenceDataset& dataset, const Universe& u);

// Fraction of pairs scored with chosen above rejected; exact ties count 0.5.
double pairwise_accuracy(const RewardModel& model,
                         const PreferenceDataset& dataset, const Universe& u);

RewardModel read_reward_json(const std::string& path);
void write_reward_json(const RewardModel& model, const std::string& path);

RewardStats read_stats_json(const std::string& path);
void write_stats_json(const RewardStats& stats, const std::string& path);

// log(1 + exp(-x)), overflow-safe; equals -log sigmoid(x).
double softplus_neg(double x);
double sigmoid(double x);

}  // namespace vcsoup
