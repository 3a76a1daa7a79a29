#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vcsoup/data.hpp"
#include "vcsoup/reward.hpp"

namespace vcsoup {

// Samples num_pairs preference pairs with replacement: prompt from
// prompt_weights, two distinct responses uniformly. The response the labeler
// scores higher becomes chosen; exact ties go to the lower response index.
PreferenceDataset generate_pairs(const Universe& u, const RewardModel& labeler,
                                 int num_pairs, uint64_t seed);

// Fraction of pairs whose raw per-value reward gaps contain both a strictly
// positive and a strictly negative component.
double conflict_fraction(const PreferenceDataset& dataset, const Universe& u,
                         std::span<const RewardModel> models);

// n unit-weight labelers laid out in the plane of the first two feature
// coordinates with pairwise angular spread angle_degrees. Larger spread means
// the values disagree on more response pairs.
std::vector<RewardModel> make_planar_labelers(int n, double angle_degrees,
                                              int feature_dim);

}  // namespace vcsoup
