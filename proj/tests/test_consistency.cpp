#include <doctest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "vcsoup/consistency.hpp"
#include "vcsoup/datagen.hpp"

using namespace vcsoup;
using vcsoup::testing::linear_model;
using vcsoup::testing::make_universe;
using vcsoup::testing::scratch_dir;

namespace {

// independent cosine-against-ones oracle
double generic_cosine(std::span<const double> g) {
  double dot_ones = 0.0;
  double norm_g = 0.0;
  double norm_ones = 0.0;
  for (double v : g) {
    dot_ones += v * 1.0;
    norm_g += v * v;
    norm_ones += 1.0;
  }
  return dot_ones / (std::sqrt(norm_g) * std::sqrt(norm_ones));
}

ConsistencyRecord record_for(std::vector<double> g) {
  ConsistencyRecord rec;
  rec.norm_gaps = g;
  rec.raw_gaps = g;
  double sq = 0.0;
  for (double v : g) sq += v * v;
  rec.degenerate = (sq == 0.0);
  rec.vc = vc_score(rec.norm_gaps);
  return rec;
}

}  // namespace

TEST_CASE("raw_gap is score difference") {
  const Universe u = make_universe(1, 3, 1, {2.0, 0.0, 2.0});
  const RewardModel m = linear_model({1.0});
  CHECK(raw_gap(m, u, {0, 0, 1}) == 2.0);
  CHECK(raw_gap(m, u, {0, 0, 2}) == 0.0);
  CHECK(raw_gap(m, u, {0, 1, 0}) == -2.0);
}

TEST_CASE("normalized gaps divide by sigma and drop the mean") {
  // responses with 1-d features 2 and 0 under weight 1 -> raw gap 2
  const Universe u = make_universe(1, 2, 2, {2, 2, 0, -2});
  const std::vector<RewardModel> models = {linear_model({1, 0}),
                                           linear_model({0, 1})};
  const PreferencePair pair{0, 0, 1};

  std::vector<RewardStats> stats = {{5.0, 1.0, 4}, {-3.0, 1.0, 4}};
  std::vector<double> g = normalized_gap_vector(models, stats, u, pair);
  CHECK(g[0] == doctest::Approx(2.0));

  stats[0].stddev = 2.0;
  g = normalized_gap_vector(models, stats, u, pair);
  CHECK(g[0] == doctest::Approx(1.0));

  // raw gaps (2, 4) with sigmas (1, 2) -> (2, 2); here raw gaps are (2, 4)
  stats = {{0.0, 1.0, 4}, {0.0, 2.0, 4}};
  g = normalized_gap_vector(models, stats, u, pair);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(2.0));
}

TEST_CASE("componentwise normalization example") {
  // raw gaps (2, -2), sigma (1, 2) -> (2, -1)
  const Universe u = make_universe(1, 2, 2, {2, 0, 0, 2});
  const std::vector<RewardModel> models = {linear_model({1, 0}),
                                           linear_model({0, 1})};
  const std::vector<RewardStats> stats = {{0.0, 1.0, 4}, {0.0, 2.0, 4}};
  const std::vector<double> g =
      normalized_gap_vector(models, stats, u, {0, 0, 1});
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(-1.0));
}

TEST_CASE("zero stddev is an error unless explicitly substituted") {
  const Universe u = make_universe(1, 2, 2, {2, 0, 0, 2});
  const std::vector<RewardModel> models = {linear_model({1, 0}),
                                           linear_model({0, 1})};
  const std::vector<RewardStats> stats = {{0.0, 1.0, 4}, {0.0, 0.0, 4}};
  CHECK_THROWS_WITH_AS(
      normalized_gap_vector(models, stats, u, {0, 0, 1}),
      doctest::Contains("degenerate reward scale for value 1"),
      std::runtime_error);
  NormalizeOptions opt;
  opt.substitute_unit_sigma = true;
  const std::vector<double> g =
      normalized_gap_vector(models, stats, u, {0, 0, 1}, opt);
  CHECK(g[1] == doctest::Approx(-2.0));
}

TEST_CASE("vc_score basics") {
  CHECK(vc_score(std::vector<double>{1, 1}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(vc_score(std::vector<double>{1, -1}) == doctest::Approx(0.0));
  for (double c : {0.1, 1.0, 123.0}) {
    CHECK(vc_score(std::vector<double>{-c, -c}) ==
          doctest::Approx(-1.0).epsilon(1e-12));
  }
  // 3 / (3 * sqrt(3))
  const std::vector<double> g = {3, 0, 0};
  CHECK(vc_score(g) == doctest::Approx(3.0 / (3.0 * std::sqrt(3.0))).epsilon(1e-12));
  CHECK(vc_score(g) == doctest::Approx(0.57735).epsilon(1e-5));

  CHECK(vc_score(std::vector<double>{0, 0}) == 0.0);
  CHECK_THROWS_AS(vc_score(std::vector<double>{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(
      vc_score(std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN()}),
      std::runtime_error);
}

TEST_CASE("vc_score agrees with a generic cosine and is scale invariant") {
  std::mt19937_64 gen(42);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> scale(1e-3, 10.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const size_t n = 2 + trial % 4;
    std::vector<double> g(n);
    for (double& v : g) v = normal(gen);
    const double vc = vc_score(g);
    CHECK(std::abs(vc - generic_cosine(g)) < 1e-12);
    CHECK(std::abs(vc) <= 1.0 + 1e-12);

    const double c = scale(gen);
    std::vector<double> scaled = g;
    for (double& v : scaled) v *= c;
    CHECK(std::abs(vc_score(scaled) - vc) < 1e-12);
  }
}

TEST_CASE("vc satisfies its defining identity") {
  // vc * |g| * sqrt(n) == sum(g) whenever |g| > 0
  std::mt19937_64 gen(46);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> g(2 + trial % 4);
    double sum = 0.0;
    double sq = 0.0;
    for (double& v : g) {
      v = normal(gen);
      sum += v;
      sq += v * v;
    }
    const double lhs =
        vc_score(g) * std::sqrt(sq) * std::sqrt(static_cast<double>(g.size()));
    CHECK(lhs == doctest::Approx(sum).epsilon(1e-9));
  }
}

TEST_CASE("vc_score sign soundness") {
  std::mt19937_64 gen(43);
  std::uniform_real_distribution<double> pos(1e-6, 5.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> g(2 + trial % 3);
    for (double& v : g) v = pos(gen);
    CHECK(vc_score(g) > 0.0);
    for (double& v : g) v = -v;
    CHECK(vc_score(g) < 0.0);
  }
}

TEST_CASE("two-value quadrant property") {
  const double tau45 = std::sqrt(0.5);
  std::mt19937_64 gen(44);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100000; ++trial) {
    const std::vector<double> g = {normal(gen), normal(gen)};
    const bool both_positive = g[0] > 0.0 && g[1] > 0.0;
    CHECK((vc_score(g) > tau45) == both_positive);
  }
  // one component exactly zero, the other positive: vc == cos 45
  CHECK(vc_score(std::vector<double>{0.0, 5.0}) ==
        doctest::Approx(tau45).epsilon(1e-15));
  CHECK(vc_score(std::vector<double>{3.0, 0.0}) ==
        doctest::Approx(tau45).epsilon(1e-15));
}

TEST_CASE("score_dataset keeps order and propagates pair indices") {
  const Universe u = make_universe(2, 2, 2, {1, 1, 0, 0, 1, 0, 0, 1});
  const std::vector<RewardModel> models = {linear_model({1, 0}),
                                           linear_model({0, 1})};
  const std::vector<RewardStats> stats = {{0.0, 1.0, 6}, {0.0, 1.0, 6}};
  PreferenceDataset d;
  d.pairs = {{0, 0, 1}, {1, 0, 1}, {0, 1, 0}};
  const auto records = score_dataset(d, models, stats, u);
  REQUIRE(records.size() == 3);
  for (size_t i = 0; i < 3; ++i) CHECK(records[i].pair == d.pairs[i]);
  CHECK(records[0].vc > 0.0);  // both gaps positive

  const std::vector<RewardStats> degenerate = {{0.0, 1.0, 6}, {0.0, 0.0, 6}};
  CHECK_THROWS_WITH_AS(score_dataset(d, models, degenerate, u),
                       doctest::Contains("pair 0"), std::runtime_error);
}

TEST_CASE("vc is invariant under affine reward rescaling") {
  const Universe u = generate_universe(6, 4, 3, 55);
  std::vector<RewardModel> models = {linear_model({1.0, 0.1, -0.4}),
                                     linear_model({-0.6, 1.0, 0.2})};
  const PreferenceDataset d = generate_pairs(u, models[0], 120, 10);
  std::vector<RewardStats> stats = {compute_stats(models[0], d, u),
                                    compute_stats(models[1], d, u)};
  const auto before = score_dataset(d, models, stats, u);

  // s' = 2.3 s - 4 for value 0: weights and bias scale, stats recomputed
  for (double& w : models[0].weight) w *= 2.3;
  models[0].bias = models[0].bias * 2.3 - 4.0;
  stats[0] = compute_stats(models[0], d, u);
  const auto after = score_dataset(d, models, stats, u);
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(after[i].vc == doctest::Approx(before[i].vc).epsilon(1e-9));
  }
}

TEST_CASE("filter_dataset thresholds inclusively and preserves order") {
  std::vector<ConsistencyRecord> records;
  records.push_back(record_for({1.0, 1.0}));    // vc = 1
  records.push_back(record_for({1.0, -1.0}));   // vc = 0
  records.push_back(record_for({-1.0, -1.0}));  // vc = -1
  records[0].pair = {0, 1, 0};
  records[1].pair = {1, 1, 0};
  records[2].pair = {2, 1, 0};

  const PreferenceDataset all = filter_dataset(records, {-1.0, ZeroNormPolicy::drop});
  REQUIRE(all.pairs.size() == 3);
  CHECK(all.pairs[0].prompt_id == 0);
  CHECK(all.pairs[2].prompt_id == 2);

  const PreferenceDataset nonneg = filter_dataset(records, {0.0, ZeroNormPolicy::drop});
  CHECK(nonneg.pairs.size() == 2);  // vc = 0 retained inclusively

  const PreferenceDataset strict = filter_dataset(records, {0.5, ZeroNormPolicy::drop});
  CHECK(strict.pairs.size() == 1);

  FilterConfig bad{1.5, ZeroNormPolicy::drop};
  CHECK_THROWS_AS(filter_dataset(records, bad), std::invalid_argument);
}

TEST_CASE("zero-norm records follow the configured policy") {
  std::vector<ConsistencyRecord> records;
  records.push_back(record_for({0.0, 0.0}));
  REQUIRE(records[0].degenerate);
  CHECK(filter_dataset(records, {-1.0, ZeroNormPolicy::drop}).pairs.empty());
  CHECK(filter_dataset(records, {0.0, ZeroNormPolicy::keep_as_zero}).pairs.size() == 1);
  CHECK(filter_dataset(records, {0.5, ZeroNormPolicy::keep_as_zero}).pairs.empty());
}

TEST_CASE("filtering is monotone in tau") {
  std::mt19937_64 gen(45);
  std::normal_distribution<double> normal;
  std::vector<ConsistencyRecord> records;
  for (int i = 0; i < 300; ++i) {
    records.push_back(record_for({normal(gen), normal(gen)}));
    records.back().pair = {i, 1, 0};
  }
  size_t previous = records.size() + 1;
  for (double tau : {-1.0, -0.5, 0.0, 0.5, 0.9, 1.0}) {
    const auto kept = filter_dataset(records, {tau, ZeroNormPolicy::drop});
    CHECK(kept.pairs.size() <= previous);
    previous = kept.pairs.size();
    for (const PreferencePair& p : kept.pairs) {
      CHECK(records[static_cast<size_t>(p.prompt_id)].vc >= tau);
    }
  }
}

TEST_CASE("filtering commutes with scoring") {
  const Universe u = generate_universe(5, 3, 2, 66);
  const std::vector<RewardModel> models = {linear_model({1.0, 0.3}),
                                           linear_model({-0.2, 1.0})};
  const PreferenceDataset d = generate_pairs(u, models[0], 80, 4);
  const std::vector<RewardStats> stats = {compute_stats(models[0], d, u),
                                          compute_stats(models[1], d, u)};
  const FilterConfig config{0.3, ZeroNormPolicy::drop};

  const auto records = score_dataset(d, models, stats, u);
  const PreferenceDataset filtered = filter_dataset(records, config);
  const auto rescored = score_dataset(filtered, models, stats, u);
  const PreferenceDataset refiltered = filter_dataset(rescored, config);
  CHECK(refiltered.pairs == filtered.pairs);
}

TEST_CASE("quadrant labels") {
  CHECK(quadrant_label(1.0, 2.0) == "PP");
  CHECK(quadrant_label(-0.5, -2.0) == "NN");
  CHECK(quadrant_label(1.0, -1.0) == "MIXED");
  CHECK(quadrant_label(-1.0, 1.0) == "MIXED");
  CHECK(quadrant_label(0.0, 1.0) == "AXIS");
  CHECK(quadrant_label(1.0, 0.0) == "AXIS");
}

TEST_CASE("scores JSONL round-trip") {
  const Universe u = generate_universe(4, 3, 2, 99);
  const std::vector<RewardModel> models = {linear_model({1.0, 0.0}),
                                           linear_model({0.0, 1.0})};
  const PreferenceDataset d = generate_pairs(u, models[0], 25, 1);
  const std::vector<RewardStats> stats = {compute_stats(models[0], d, u),
                                          compute_stats(models[1], d, u)};
  const auto records = score_dataset(d, models, stats, u);

  const std::string path = scratch_dir("scores") + "/scores.jsonl";
  write_scores_jsonl(records, path);
  const auto loaded = read_scores_jsonl(path);
  REQUIRE(loaded.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].pair == records[i].pair);
    CHECK(loaded[i].raw_gaps == records[i].raw_gaps);
    CHECK(loaded[i].norm_gaps == records[i].norm_gaps);
    CHECK(loaded[i].vc == records[i].vc);
    CHECK(loaded[i].degenerate == records[i].degenerate);
  }
}
