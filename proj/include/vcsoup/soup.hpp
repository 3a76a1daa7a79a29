#pragma once

#include <span>
#include <string>
#include <vector>

#include "vcsoup/policy.hpp"

namespace vcsoup {

// Convex combination weights over the value vectors: all entries >= 0,
// summing to 1 (within 1e-9).
struct WeightVector {
  std::vector<double> lambdas;

  void validate() const;

  bool operator==(const WeightVector&) const = default;
};

// A merged policy with its weights and exact per-value expected rewards on
// the evaluation universe.
struct CandidateModel {
  WeightVector weights;
  TabularPolicy policy;
  std::vector<double> scores;
};

// logits = ref + sum_i lambda_i * theta_i. Zero-weight terms are skipped, so
// a one-hot weight vector reproduces ref + theta_i bit for bit.
TabularPolicy merge(const TabularPolicy& ref, std::span<const ValueVector> thetas,
                    const WeightVector& weights);

// All weight vectors with components in {0, step, ..., 1} summing to 1, in
// ascending lexicographic order. Requires 1/step to be an integer.
std::vector<WeightVector> simplex_grid(int n, double step);

std::vector<CandidateModel> build_candidates(
    const TabularPolicy& ref, std::span<const ValueVector> thetas,
    std::span<const WeightVector> grid, std::span<const RewardModel> models,
    const Universe& validation);

void write_candidates_csv(std::span<const CandidateModel> candidates,
                          const std::string& path);

// Reads the weight/score columns back; candidate policies are left empty.
std::vector<CandidateModel> read_candidates_csv(const std::string& path);

}  // namespace vcsoup
