#include <mps/permutation.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include <mps/rng.hpp>
#include <mps/stats.hpp>

#include "test_support.hpp"

namespace {

using mps::CandidateSet;
using mps::MpsConfig;
using mps::PValueMode;

mps::DistanceMatrix golden_fixture() {
  return mps::validate_matrix(
      {
          {0.10, 0.20, 0.30},
          {0.40, 0.50, 0.60},
          {0.70, 0.80, 0.90},
          {0.25, 0.35, 0.45},
      },
      mps_test::ids(3));
}

// Recorded once from the implementation and frozen: any change to the
// generator, the stream derivation, or the shuffle order breaks replay of
// archived reports and must show up here.
TEST(PermuteOnce, GoldenFixedSeed) {
  const auto m = golden_fixture();
  mps::Rng rng(42);
  const auto permuted =
      mps::permute_once(m, CandidateSet::all_active(m.model_ids), rng);
  const std::vector<std::vector<double>> expected = {
      {0.20, 0.10, 0.30},
      {0.50, 0.60, 0.40},
      {0.90, 0.80, 0.70},
      {0.45, 0.35, 0.25},
  };
  ASSERT_EQ(permuted.size(), expected.size());
  for (std::size_t t = 0; t < expected.size(); ++t)
    for (std::size_t i = 0; i < expected[t].size(); ++i)
      EXPECT_EQ(permuted[t][i], expected[t][i]) << "row " << t << " col " << i;
}

TEST(PermuteOnce, GoldenNullSamples) {
  const auto m = golden_fixture();
  MpsConfig config;
  config.seed = 7;
  config.permutations = 5;
  const auto null = mps::null_distribution(
      m, CandidateSet::all_active(m.model_ids), config, 0, 1);
  const std::vector<double> expected = {
      -1.5000000000000011, -1.4999999999999984, -0.26111648393354725,
      -0.2611164839335462, -1.5000000000000022};
  ASSERT_EQ(null.samples.size(), expected.size());
  for (std::size_t r = 0; r < expected.size(); ++r)
    EXPECT_EQ(null.samples[r], expected[r]) << "round " << r;
}

TEST(PermuteOnce, PreservesPerPromptMultisets) {
  mps::Rng meta(555);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t prompts = 1 + meta.bounded(12);
    const std::size_t models = 2 + meta.bounded(6);
    const auto m = mps_test::random_matrix(prompts, models, meta);
    mps::Rng rng(meta.next_u64());
    const auto permuted =
        mps::permute_once(m, CandidateSet::all_active(m.model_ids), rng);
    ASSERT_EQ(permuted.size(), prompts);
    for (std::size_t t = 0; t < prompts; ++t) {
      std::vector<double> original(m.row(t), m.row(t) + models);
      std::vector<double> shuffled = permuted[t];
      std::sort(original.begin(), original.end());
      std::sort(shuffled.begin(), shuffled.end());
      EXPECT_EQ(original, shuffled);
    }
  }
}

TEST(PermuteOnce, RespectsActiveMask) {
  const auto m = mps_test::matrix_from_columns(
      {{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}, {0.7, 0.8}});
  auto set = CandidateSet::all_active(m.model_ids);
  set.deactivate(1);
  set.deactivate(3);
  mps::Rng rng(1);
  const auto permuted = mps::permute_once(m, set, rng);
  for (std::size_t t = 0; t < 2; ++t) {
    std::multiset<double> got(permuted[t].begin(), permuted[t].end());
    std::multiset<double> want{m.at(t, 0), m.at(t, 2)};
    EXPECT_EQ(got, want);
  }
}

TEST(PermuteOnce, RejectsSingletonActiveSet) {
  const auto m = mps_test::matrix_from_columns({{0.1, 0.2}, {0.3, 0.4}});
  auto set = CandidateSet::all_active(m.model_ids);
  set.deactivate(0);
  mps::Rng rng(3);
  try {
    mps::permute_once(m, set, rng);
    FAIL() << "expected inactive_set_too_small";
  } catch (const mps::Error& e) {
    EXPECT_EQ(e.code(), mps::errc::inactive_set_too_small);
  }
}

// The fused kernel must equal the compositional path bit for bit: gather the
// permuted submatrix permute_once produces, run the public statistics on it,
// compare minima. This is the equality that lets tiny-instance oracles and
// archived golden samples stand in for the production kernel.
TEST(NullDistribution, MatchesCompositionalPathBitForBit) {
  mps::Rng meta(4242);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t prompts = 2 + meta.bounded(8);
    const std::size_t models = 2 + meta.bounded(5);
    const auto m = mps_test::random_matrix(prompts, models, meta);
    const auto set = CandidateSet::all_active(m.model_ids);

    MpsConfig config;
    config.seed = meta.next_u64();
    config.permutations = 16;
    const std::uint64_t iteration = meta.bounded(3);
    const auto null = mps::null_distribution(m, set, config, iteration, 1);

    for (std::uint64_t r = 0; r < config.permutations; ++r) {
      mps::Rng round_rng(mps::derive_seed(config.seed, iteration, r));
      const auto rows = mps::permute_once(m, set, round_rng);
      const auto permuted = mps::validate_matrix(rows, m.model_ids);
      const auto stats = mps::t_statistics(
          permuted, CandidateSet::all_active(permuted.model_ids), config);
      const auto minimum = mps::t_min(stats);
      EXPECT_EQ(null.samples[r], minimum.value)
          << "trial " << trial << " round " << r;
    }
  }
}

TEST(NullDistribution, ConstantMatrixGivesAllZeroSamples) {
  const auto m = mps_test::matrix_from_columns(
      {{0.6, 0.6, 0.6}, {0.6, 0.6, 0.6}, {0.6, 0.6, 0.6}});
  MpsConfig config;
  config.permutations = 32;
  const auto null = mps::null_distribution(
      m, CandidateSet::all_active(m.model_ids), config, 0, 1);
  for (double sample : null.samples) EXPECT_DOUBLE_EQ(sample, 0.0);
}

TEST(NullDistribution, SingleRoundWorks) {
  const auto m = mps_test::matrix_from_columns({{0.1, 0.9}, {0.9, 0.1}});
  MpsConfig config;
  config.permutations = 1;
  const auto null = mps::null_distribution(
      m, CandidateSet::all_active(m.model_ids), config, 0, 1);
  ASSERT_EQ(null.samples.size(), 1u);
  EXPECT_TRUE(std::isfinite(null.samples[0]));
}

// Every sampled minimum must be one of the values the full permutation group
// can produce: enumerate all (M'!)^N arrangements of a tiny instance and
// check membership.
TEST(NullDistribution, SamplesComeFromTheEnumeratedGroup) {
  const auto m = mps_test::matrix_from_columns(
      {{0.05, 0.40, 0.75}, {0.60, 0.20, 0.90}});
  const auto set = CandidateSet::all_active(m.model_ids);
  MpsConfig config;
  config.seed = 99;
  config.permutations = 64;

  // 2 models, 3 prompts -> 8 arrangements: flip or keep each row.
  std::set<double> reachable;
  for (int mask = 0; mask < 8; ++mask) {
    std::vector<std::vector<double>> rows(3);
    for (std::size_t t = 0; t < 3; ++t) {
      rows[t] = {m.at(t, 0), m.at(t, 1)};
      if (mask & (1 << t)) std::swap(rows[t][0], rows[t][1]);
    }
    const auto arranged = mps::validate_matrix(rows, m.model_ids);
    const auto stats = mps::t_statistics(
        arranged, CandidateSet::all_active(arranged.model_ids), config);
    reachable.insert(mps::t_min(stats).value);
  }

  const auto null = mps::null_distribution(m, set, config, 0, 1);
  for (double sample : null.samples)
    EXPECT_TRUE(reachable.count(sample) == 1)
        << "sample " << sample << " not reachable by any arrangement";
}

TEST(NullDistribution, BitIdenticalAcrossThreadCounts) {
  mps::Rng meta(31337);
  const auto m = mps_test::random_matrix(40, 5, meta);
  const auto set = CandidateSet::all_active(m.model_ids);
  MpsConfig config;
  config.seed = 2718;
  config.permutations = 257;  // deliberately not a multiple of the pool sizes
  const auto serial = mps::null_distribution(m, set, config, 1, 1);
  for (unsigned threads : {2u, 3u, 8u}) {
    const auto parallel = mps::null_distribution(m, set, config, 1, threads);
    EXPECT_EQ(serial.samples, parallel.samples) << threads << " threads";
  }
}

TEST(NullDistribution, IterationIndexChangesTheStream) {
  mps::Rng meta(60601);
  const auto m = mps_test::random_matrix(12, 4, meta);
  const auto set = CandidateSet::all_active(m.model_ids);
  MpsConfig config;
  config.seed = 5;
  config.permutations = 50;
  const auto it0 = mps::null_distribution(m, set, config, 0, 1);
  const auto it1 = mps::null_distribution(m, set, config, 1, 1);
  EXPECT_NE(it0.samples, it1.samples);
}

TEST(PValue, HandComputedFixtures) {
  mps::NullDistribution null;
  null.samples = {-2.0, -1.0, 0.0, 1.0};
  null.rounds = 4;
  EXPECT_DOUBLE_EQ(mps::p_value(-1.0, null, PValueMode::raw), 0.5);  // ties count
  EXPECT_DOUBLE_EQ(mps::p_value(-3.0, null, PValueMode::raw), 0.0);
  EXPECT_DOUBLE_EQ(mps::p_value(2.0, null, PValueMode::raw), 1.0);
  EXPECT_DOUBLE_EQ(mps::p_value(-1.0, null, PValueMode::add_one_smoothing),
                   3.0 / 5.0);
  EXPECT_DOUBLE_EQ(mps::p_value(-3.0, null, PValueMode::add_one_smoothing),
                   1.0 / 5.0);
}

TEST(PValue, AllTiedSamplesGiveOne) {
  mps::NullDistribution null;
  null.samples = {0.0, 0.0, 0.0};
  null.rounds = 3;
  EXPECT_DOUBLE_EQ(mps::p_value(0.0, null, PValueMode::raw), 1.0);
}

TEST(PValue, EmptyNullIsAnError) {
  mps::NullDistribution null;
  try {
    mps::p_value(0.0, null, PValueMode::raw);
    FAIL() << "expected empty_null_distribution";
  } catch (const mps::Error& e) {
    EXPECT_EQ(e.code(), mps::errc::empty_null_distribution);
  }
}

// Under a true null (all columns i.i.d.), rejection rates stay within a
// 3-sigma Monte Carlo band of the nominal level at both 0.05 and 0.1.
TEST(PValue, ExchangeableNullKeepsNominalLevels) {
  constexpr int kTrials = 2000;
  constexpr std::size_t kModels = 5;
  constexpr std::size_t kPrompts = 40;
  int hits_05 = 0;
  int hits_10 = 0;
  for (int k = 0; k < kTrials; ++k) {
    mps::Rng data_rng(mps::derive_seed(555, static_cast<std::uint64_t>(k)));
    const auto matrix = mps_test::random_matrix(kPrompts, kModels, data_rng);
    const auto active = mps::CandidateSet::all_active(matrix.model_ids);
    mps::MpsConfig config;
    config.permutations = 99;  // p lands exactly on the 0.05 / 0.1 grid
    config.seed = mps::derive_seed(556, static_cast<std::uint64_t>(k));
    const auto observed = mps::t_min(mps::t_statistics(matrix, active, config));
    const auto null = mps::null_distribution(matrix, active, config);
    const double p = mps::p_value(observed.value, null, config.p_value_mode);
    if (p <= 0.05) ++hits_05;
    if (p <= 0.1) ++hits_10;
  }
  const double n = kTrials;
  EXPECT_LE(hits_05 / n, 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / n));
  EXPECT_LE(hits_10 / n, 0.10 + 3.0 * std::sqrt(0.10 * 0.90 / n));
}

TEST(PValue, MonotoneInObservedStatistic) {
  mps::Rng rng(777);
  for (int trial = 0; trial < 120; ++trial) {
    mps::NullDistribution null;
    const std::size_t rounds = 1 + rng.bounded(200);
    null.samples.resize(rounds);
    for (auto& s : null.samples) s = -3.0 + 6.0 * rng.next_unit();
    null.rounds = rounds;
    const double a = -3.5 + 7.0 * rng.next_unit();
    const double b = -3.5 + 7.0 * rng.next_unit();
    const double lo = std::min(a, b), hi = std::max(a, b);
    for (auto mode : {PValueMode::raw, PValueMode::add_one_smoothing})
      EXPECT_LE(mps::p_value(lo, null, mode), mps::p_value(hi, null, mode));
  }
}

}  // namespace
