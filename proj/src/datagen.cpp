#include "vcsoup/datagen.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vcsoup/rng.hpp"

namespace vcsoup {

PreferenceDataset generate_pairs(const Universe& u, const RewardModel& labeler,
                                 int num_pairs, uint64_t seed) {
  u.validate();
  if (u.responses_per_prompt < 2) {
    throw std::runtime_error("insufficient responses");
  }
  if (num_pairs < 0) throw std::invalid_argument("num_pairs must be >= 0");

  // prompt sampling by inverse CDF over prompt_weights
  std::vector<double> cdf(u.prompt_weights.size());
  double acc = 0.0;
  for (size_t i = 0; i < u.prompt_weights.size(); ++i) {
    acc += u.prompt_weights[i];
    cdf[i] = acc;
  }
  cdf.back() = 1.0;

  Rng rng(seed);
  PreferenceDataset d;
  d.pairs.reserve(static_cast<size_t>(num_pairs));
  for (int k = 0; k < num_pairs; ++k) {
    const double ux = rng.uniform();
    int prompt = 0;
    while (cdf[prompt] <= ux) ++prompt;

    const int r = u.responses_per_prompt;
    int a = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(r)));
    int b = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(r - 1)));
    if (b >= a) ++b;

    const double sa = labeler.score(u, prompt, a);
    const double sb = labeler.score(u, prompt, b);
    PreferencePair p;
    p.prompt_id = prompt;
    if (sa > sb || (sa == sb && a < b)) {
      p.chosen_id = a;
      p.rejected_id = b;
    } else {
      p.chosen_id = b;
      p.rejected_id = a;
    }
    d.pairs.push_back(p);
  }
  return d;
}

double conflict_fraction(const PreferenceDataset& dataset, const Universe& u,
                         std::span<const RewardModel> models) {
  if (models.size() < 2) {
    throw std::invalid_argument("conflict_fraction needs at least 2 models");
  }
  if (dataset.pairs.empty()) throw std::runtime_error("empty dataset");
  size_t mixed = 0;
  for (const PreferencePair& p : dataset.pairs) {
    bool has_pos = false;
    bool has_neg = false;
    for (const RewardModel& m : models) {
      const double gap = m.score(u, p.prompt_id, p.chosen_id) -
                         m.score(u, p.prompt_id, p.rejected_id);
      has_pos |= gap > 0.0;
      has_neg |= gap < 0.0;
    }
    if (has_pos && has_neg) ++mixed;
  }
  return static_cast<double>(mixed) / static_cast<double>(dataset.pairs.size());
}

std::vector<RewardModel> make_planar_labelers(int n, double angle_degrees,
                                              int feature_dim) {
  if (n < 1) throw std::invalid_argument("need at least one labeler");
  if (feature_dim < 2) {
    throw std::invalid_argument("planar labelers need feature_dim >= 2");
  }
  std::vector<RewardModel> labelers;
  labelers.reserve(static_cast<size_t>(n));
  const double spread = angle_degrees * std::numbers::pi / 180.0;
  for (int i = 0; i < n; ++i) {
    // angles centered around 0 so adjacent labelers differ by `spread`
    const double angle = (i - 0.5 * (n - 1)) * spread;
    RewardModel m;
    m.kind = RewardKind::linear_analytic;
    m.weight.assign(static_cast<size_t>(feature_dim), 0.0);
    m.weight[0] = std::cos(angle);
    m.weight[1] = std::sin(angle);
    m.bias = 0.0;
    labelers.push_back(std::move(m));
  }
  return labelers;
}

}  // namespace vcsoup
