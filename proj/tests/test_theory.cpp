#include <doctest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "vcsoup/consistency.hpp"
#include "vcsoup/datagen.hpp"
#include "vcsoup/theory.hpp"

using namespace vcsoup;
using vcsoup::testing::linear_model;
using vcsoup::testing::make_universe;

namespace {

LossFunction quadratic_loss(std::vector<double> hessian, bool with_gradient) {
  LossFunction f;
  const size_t n = static_cast<size_t>(std::lround(std::sqrt(
      static_cast<double>(hessian.size()))));
  f.value = [hessian, n](std::span<const double> w) {
    double acc = 0.0;
    for (size_t r = 0; r < n; ++r) {
      double hw = 0.0;
      for (size_t c = 0; c < n; ++c) hw += hessian[r * n + c] * w[c];
      acc += w[r] * hw;
    }
    return 0.5 * acc;
  };
  if (with_gradient) {
    f.gradient = [hessian, n](std::span<const double> w) {
      std::vector<double> g(n, 0.0);
      for (size_t r = 0; r < n; ++r) {
        for (size_t c = 0; c < n; ++c) g[r] += hessian[r * n + c] * w[c];
      }
      return g;
    };
  }
  return f;
}

std::vector<double> random_psd_hessian(size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  std::vector<double> b(n * n);
  for (double& v : b) v = normal(gen);
  std::vector<double> h(n * n, 0.0);  // B^T B
  for (size_t r = 0; r < n; ++r) {
    for (size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (size_t k = 0; k < n; ++k) acc += b[k * n + r] * b[k * n + c];
      h[r * n + c] = acc;
    }
  }
  return h;
}

ValueVector vector_of(int num_prompts, int responses, std::vector<double> delta) {
  ValueVector v;
  v.num_prompts = num_prompts;
  v.responses_per_prompt = responses;
  v.delta = std::move(delta);
  return v;
}

}  // namespace

TEST_CASE("gradient_conflict on identical and swapped datasets") {
  const Universe u = make_universe(3, 3, 1, {1, 0, -1, 2, 1, 0, 0, 1, 2});
  const TabularPolicy ref = uniform_policy(u);
  PreferenceDataset d;
  d.pairs = {{0, 0, 1}, {1, 0, 2}, {2, 2, 0}};

  const ConflictReport same = gradient_conflict(ref, d, d, 0.1);
  REQUIRE(same.per_pair_cosines.size() == 3);
  for (double c : same.per_pair_cosines) {
    CHECK(c == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(same.mean_cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(same.negative_fraction == 0.0);
  CHECK(same.batch_cosine == doctest::Approx(1.0).epsilon(1e-12));

  PreferenceDataset swapped = d;
  for (PreferencePair& p : swapped.pairs) std::swap(p.chosen_id, p.rejected_id);
  const ConflictReport opposite = gradient_conflict(ref, d, swapped, 0.1);
  for (double c : opposite.per_pair_cosines) {
    CHECK(c == doctest::Approx(-1.0).epsilon(1e-12));
  }
  CHECK(opposite.negative_fraction == 1.0);
  CHECK(opposite.batch_cosine == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("gradient_conflict antisymmetry of the underlying dot products") {
  const Universe u = generate_universe(4, 3, 2, 41);
  const TabularPolicy ref = uniform_policy(u);
  const PreferenceDataset a = generate_pairs(u, linear_model({1.0, 0.5}), 40, 1);
  const PreferenceDataset b = generate_pairs(u, linear_model({-0.5, 1.0}), 40, 2);
  PreferenceDataset b_swapped = b;
  for (PreferencePair& p : b_swapped.pairs) std::swap(p.chosen_id, p.rejected_id);

  const ConflictReport fwd = gradient_conflict(ref, a, b, 0.1);
  const ConflictReport rev = gradient_conflict(ref, a, b_swapped, 0.1);
  REQUIRE(fwd.per_pair_cosines.size() == rev.per_pair_cosines.size());
  for (size_t i = 0; i < fwd.per_pair_cosines.size(); ++i) {
    CHECK(fwd.per_pair_cosines[i] ==
          doctest::Approx(-rev.per_pair_cosines[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradient_conflict requires a shared prompt") {
  const Universe u = generate_universe(4, 2, 1, 42);
  const TabularPolicy ref = uniform_policy(u);
  PreferenceDataset a;
  a.pairs = {{0, 0, 1}, {1, 0, 1}};
  PreferenceDataset b;
  b.pairs = {{2, 0, 1}, {3, 1, 0}};
  CHECK_THROWS_WITH_AS(gradient_conflict(ref, a, b, 0.1),
                       doctest::Contains("disjoint prompt supports"),
                       std::runtime_error);
}

TEST_CASE("consistency filtering raises the cross-value gradient cosine") {
  for (uint64_t seed : {11ull, 12ull}) {
    const Universe u = generate_universe(30, 4, 3, seed);
    const auto labelers = make_planar_labelers(2, 120.0, 3);
    const PreferenceDataset d1 =
        generate_pairs(u, labelers[0], 400, substream_seed(seed, "a"));
    const PreferenceDataset d2 =
        generate_pairs(u, labelers[1], 400, substream_seed(seed, "b"));
    const std::vector<RewardStats> stats = {compute_stats(labelers[0], d1, u),
                                            compute_stats(labelers[1], d2, u)};
    const FilterConfig config{0.7, ZeroNormPolicy::drop};
    const PreferenceDataset f1 =
        filter_dataset(score_dataset(d1, labelers, stats, u), config);
    const PreferenceDataset f2 =
        filter_dataset(score_dataset(d2, labelers, stats, u), config);

    const TabularPolicy ref = uniform_policy(u);
    const ConflictReport raw = gradient_conflict(ref, d1, d2, 0.1);
    const ConflictReport filtered = gradient_conflict(ref, f1, f2, 0.1);
    CHECK(filtered.mean_cosine > raw.mean_cosine);
  }
}

TEST_CASE("merging gap of the identity quadratic") {
  const LossFunction f = quadratic_loss({1, 0, 0, 1}, /*with_gradient=*/true);
  const std::vector<double> ti = {1, 0};
  const std::vector<double> tj = {0, 1};
  const MergeGapReport report = merging_gap_scan(f, ti, tj, 3);
  REQUIRE(report.lambdas.size() == 3);
  CHECK(report.gaps[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(report.gaps[2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(report.gaps[1] == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(report.theta_distance_sq == doctest::Approx(2.0));
  CHECK(report.l_h == doctest::Approx(1.0).epsilon(1e-4));
  // bound at the midpoint: 0.5 * 0.25 * 1 * 2 = 0.25 >= -0.25
  CHECK(report.bound_values[1] == doctest::Approx(0.25).epsilon(1e-3));
  CHECK(report.bound_holds);
}

TEST_CASE("merging gap is zero for identical endpoints and at the endpoints") {
  const LossFunction f = quadratic_loss({2, 0.5, 0.5, 1}, true);
  const std::vector<double> t = {0.3, -0.7};
  const MergeGapReport report = merging_gap_scan(f, t, t, 7);
  for (double gap : report.gaps) CHECK(gap == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(report.gaps.front() == 0.0);
  CHECK(report.gaps.back() == 0.0);
}

TEST_CASE("gap scan matches the closed form on random PSD quadratics") {
  std::mt19937_64 gen(201);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 10; ++trial) {
    const size_t n = 2 + trial % 5;
    const std::vector<double> h = random_psd_hessian(n, gen);
    std::vector<double> ti(n);
    std::vector<double> tj(n);
    for (double& v : ti) v = normal(gen);
    for (double& v : tj) v = normal(gen);
    const bool with_gradient = trial % 2 == 0;
    const LossFunction f = quadratic_loss(h, with_gradient);
    const MergeGapReport report = merging_gap_scan(f, ti, tj, 21);
    for (size_t k = 0; k < report.lambdas.size(); ++k) {
      const double expected =
          quadratic_gap_closed_form(h, ti, tj, report.lambdas[k]);
      CHECK(report.gaps[k] == doctest::Approx(expected).epsilon(1e-10));
      CHECK(report.gaps[k] <= 1e-12);  // convex: interpolation below the chord
    }
    CHECK(report.bound_holds);
  }
}

TEST_CASE("gap scan reports the lambda of a non-finite loss") {
  LossFunction f;
  f.value = [](std::span<const double> w) {
    return w[0] > 0.5 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  const std::vector<double> ti = {1.0};
  const std::vector<double> tj = {0.0};
  CHECK_THROWS_WITH_AS(merging_gap_scan(f, ti, tj, 5),
                       doctest::Contains("lambda"), std::runtime_error);
}

TEST_CASE("quadratic closed form") {
  const std::vector<double> identity = {1, 0, 0, 1};
  const std::vector<double> ti = {1, 0};
  const std::vector<double> tj = {0, 1};
  CHECK(quadratic_gap_closed_form(identity, ti, tj, 0.5) ==
        doctest::Approx(-0.25));
  CHECK(quadratic_gap_closed_form(identity, ti, tj, 0.0) == 0.0);
  CHECK(quadratic_gap_closed_form(identity, ti, tj, 1.0) == 0.0);
  const std::vector<double> asym = {1, 0.5, -0.5, 1};
  CHECK_THROWS_WITH_AS(quadratic_gap_closed_form(asym, ti, tj, 0.5),
                       doctest::Contains("asymmetric"), std::invalid_argument);
}

TEST_CASE("estimate_LH recovers a known spectral norm") {
  const std::vector<double> ti = {1, 0};
  const std::vector<double> tj = {-1, 0.5};
  for (bool with_gradient : {true, false}) {
    const LossFunction f = quadratic_loss({1, 0, 0, 4}, with_gradient);
    const double est = estimate_LH(f, ti, tj, 3);
    CHECK(std::abs(est - 4.0) < 1e-3);
    CHECK(std::abs(est - 4.0) / 4.0 < 1e-4);
  }
}

TEST_CASE("estimate_LH of a linear loss is zero") {
  LossFunction f;
  f.value = [](std::span<const double> w) { return 3.0 * w[0] - 2.0 * w[1]; };
  const std::vector<double> ti = {0, 0};
  const std::vector<double> tj = {1, 1};
  CHECK(estimate_LH(f, ti, tj, 2) < 1e-6);
}

TEST_CASE("estimate_LH is non-decreasing in the probe count") {
  // position-dependent curvature so extra probes can only raise the max
  LossFunction f;
  f.value = [](std::span<const double> w) {
    double acc = 0.0;
    for (double v : w) acc += std::cos(3.0 * v);
    return acc;
  };
  const std::vector<double> ti = {0.0, 0.2};
  const std::vector<double> tj = {1.0, -0.5};
  double previous = 0.0;
  for (int probes : {2, 3, 5, 9}) {
    const double est = estimate_LH(f, ti, tj, probes);
    CHECK(est >= previous - 1e-12);
    previous = est;
  }
  CHECK_THROWS_AS(estimate_LH(f, ti, tj, 1), std::invalid_argument);
}

TEST_CASE("vector_geometry basics") {
  const ValueVector a = vector_of(1, 3, {1, 2, 3});
  GeometryReport same = vector_geometry(a, a);
  CHECK(same.l2_distance == 0.0);
  CHECK(same.cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(same.degenerate);

  ValueVector neg = a;
  for (double& v : neg.delta) v = -v;
  CHECK(vector_geometry(a, neg).cosine == doctest::Approx(-1.0).epsilon(1e-12));

  const ValueVector e1 = vector_of(1, 3, {1, 0, 0});
  const ValueVector e2 = vector_of(1, 3, {0, 1, 0});
  const GeometryReport ortho = vector_geometry(e1, e2);
  CHECK(ortho.l2_distance == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(ortho.cosine == 0.0);

  const ValueVector zero = vector_of(1, 3, {0, 0, 0});
  const GeometryReport degenerate = vector_geometry(a, zero);
  CHECK(degenerate.degenerate);
  CHECK(degenerate.cosine == 0.0);

  const ValueVector other_shape = vector_of(2, 3, {0, 0, 0, 0, 0, 0});
  CHECK_THROWS_AS(vector_geometry(a, other_shape), std::invalid_argument);
}

TEST_CASE("vector_geometry per-block breakdown and norm identity") {
  const ValueVector a = vector_of(2, 2, {1, 0, 0, 2});
  const ValueVector b = vector_of(2, 2, {0, 1, 0, 4});
  const GeometryReport report = vector_geometry(a, b);
  REQUIRE(report.per_block.size() == 2);
  CHECK(report.per_block[0].block_id == 0);
  CHECK(report.per_block[0].l2_distance == doctest::Approx(std::sqrt(2.0)));
  CHECK(report.per_block[0].cosine == 0.0);
  CHECK(report.per_block[1].l2_distance == doctest::Approx(2.0));
  CHECK(report.per_block[1].cosine == doctest::Approx(1.0));

  double ni = 0.0;
  double nj = 0.0;
  for (double v : a.delta) ni += v * v;
  for (double v : b.delta) nj += v * v;
  const double lhs = report.l2_distance * report.l2_distance;
  const double rhs = ni + nj - 2.0 * report.cosine * std::sqrt(ni) * std::sqrt(nj);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
}

TEST_CASE("DPO losses interpolate below their chord") {
  const Universe u = generate_universe(5, 3, 2, 61);
  const PreferenceDataset d = generate_pairs(u, linear_model({1.0, -0.2}), 60, 3);
  const TabularPolicy ref = uniform_policy(u);
  const LossFunction loss = make_dpo_loss_function(ref, d, 0.1);

  std::mt19937_64 gen(202);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> ti(ref.logits.size());
  std::vector<double> tj(ref.logits.size());
  for (double& v : ti) v = dist(gen);
  for (double& v : tj) v = dist(gen);
  const MergeGapReport report = merging_gap_scan(loss, ti, tj, 11);
  for (double gap : report.gaps) CHECK(gap <= 1e-10);
  CHECK(report.bound_holds);
}
