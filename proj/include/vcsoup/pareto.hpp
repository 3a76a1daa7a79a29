#pragma once

#include <span>
#include <string>
#include <vector>

#include "vcsoup/soup.hpp"

namespace vcsoup {

struct ParetoFrontier {
  std::vector<CandidateModel> members;  // non-dominated, in input order
  std::vector<size_t> member_indices;   // positions in the input list
  int64_t dominated_count = 0;
};

// a dominates b: a >= b on every coordinate and a > b on at least one.
bool dominates(std::span<const double> a, std::span<const double> b);

// Pairwise dominance elimination. Candidates with identical scores do not
// dominate each other and are all retained; dedupe collapses exact-equal
// score vectors to the first occurrence.
ParetoFrontier pareto_filter(std::span<const CandidateModel> candidates,
                             bool dedupe = false);

// Exact dominated hypervolume against the reference point, for 2 or 3
// values. Members that do not weakly dominate the reference are clipped out.
double hypervolume(const ParetoFrontier& frontier,
                   std::span<const double> reference_point);

// Componentwise minimum over all candidates minus 1e-6.
std::vector<double> default_reference_point(
    std::span<const CandidateModel> candidates);

// Candidates CSV columns plus a trailing pareto flag column.
void write_frontier_csv(std::span<const CandidateModel> candidates,
                        const ParetoFrontier& frontier,
                        const std::string& path);

}  // namespace vcsoup
