#pragma once

#include <span>
#include <string>
#include <vector>

#include "vcsoup/data.hpp"
#include "vcsoup/reward.hpp"

namespace vcsoup {

// One scored preference pair: raw per-value reward gaps, the normalized gap
// vector g, and the consistency score vc = cos(g, all-ones). A zero-norm g
// leaves vc undefined; such records carry vc = 0 and degenerate = true.
struct ConsistencyRecord {
  PreferencePair pair;
  std::vector<double> raw_gaps;
  std::vector<double> norm_gaps;
  double vc = 0.0;
  bool degenerate = false;
};

enum class ZeroNormPolicy { drop, keep_as_zero };

struct FilterConfig {
  double tau = 0.0;  // in [-1, 1], retention is inclusive (vc >= tau)
  ZeroNormPolicy zero_norm_policy = ZeroNormPolicy::drop;
};

struct NormalizeOptions {
  // With a zero stddev the normalized gap is undefined; opting in substitutes
  // sigma := 1 instead of raising an error.
  bool substitute_unit_sigma = false;
};

double raw_gap(const RewardModel& model, const Universe& u,
               const PreferencePair& pair);

// Component j is (score_w - score_l) / sigma_j; the means cancel exactly, so
// they are never subtracted (numerically stabler for large means).
std::vector<double> normalized_gap_vector(std::span<const RewardModel> models,
                                          std::span<const RewardStats> stats,
                                          const Universe& u,
                                          const PreferencePair& pair,
                                          const NormalizeOptions& options = {});

// (sum g_j) / (|g|_2 * sqrt(n)); 0 for the zero vector.
double vc_score(std::span<const double> g);

std::vector<ConsistencyRecord> score_dataset(
    const PreferenceDataset& dataset, std::span<const RewardModel> models,
    std::span<const RewardStats> stats, const Universe& u,
    const NormalizeOptions& options = {});

// Keeps pairs with vc >= tau, in input order. Degenerate records follow
// zero_norm_policy: drop removes them, keep_as_zero treats vc as 0.
PreferenceDataset filter_dataset(std::span<const ConsistencyRecord> records,
                                 const FilterConfig& config,
                                 const std::string& value_name = "",
                                 const std::string& universe_ref = "");

// Quadrant label for a two-value raw gap: PP both positive, NN both negative,
// MIXED opposite signs, AXIS when either gap is exactly zero.
std::string quadrant_label(double gap1, double gap2);

std::vector<ConsistencyRecord> read_scores_jsonl(const std::string& path);
void write_scores_jsonl(std::span<const ConsistencyRecord> records,
                        const std::string& path);

}  // namespace vcsoup
