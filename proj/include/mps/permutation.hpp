#pragma once

// Permutation null for the minimum studentized deviation.
//
// Under the null that all active models are exchangeable on a prompt,
// shuffling each matrix row within the active columns leaves the joint
// distribution unchanged. Each permutation round therefore re-shuffles every
// row independently, recomputes all t-statistics, and records the minimum;
// R rounds give the reference distribution for the observed minimum.
//
// Determinism contract: round r of iteration k draws from an Rng seeded by
// derive_seed(config.seed, k, r) and from nothing else, so rounds can be
// computed in any order by any number of threads and still produce the same
// samples vector. The inner loop reuses the moment kernel from stats.hpp;
// a test pins that samples match the compositional path (permute_once ->
// t_statistics -> t_min) bit for bit.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <mps/core.hpp>
#include <mps/parallel.hpp>
#include <mps/rng.hpp>
#include <mps/stats.hpp>

namespace mps {

struct NullDistribution {
  std::vector<double> samples;  // one minimum t-statistic per round
  std::uint64_t rounds = 0;
  std::uint64_t master_seed = 0;
};

// One within-prompt shuffle of the active submatrix, indexed
// [prompt][active model]. Rows are shuffled in ascending prompt order with
// one high-index-first Fisher-Yates pass each; the permutation kernel
// consumes its Rng in exactly this pattern.
inline std::vector<std::vector<double>> permute_once(const DistanceMatrix& matrix,
                                                     const CandidateSet& active,
                                                     Rng& rng) {
  const auto idx = active.active_indices();
  if (idx.size() < 2)
    raise(errc::inactive_set_too_small,
          "permutation needs at least 2 active models, got " +
              std::to_string(idx.size()));
  std::vector<std::vector<double>> rows(matrix.prompt_count);
  for (std::size_t t = 0; t < matrix.prompt_count; ++t) {
    auto& row = rows[t];
    row.reserve(idx.size());
    const double* src = matrix.row(t);
    for (auto j : idx) row.push_back(src[j]);
    shuffle(row, rng);
  }
  return rows;
}

inline NullDistribution null_distribution(const DistanceMatrix& matrix,
                                          const CandidateSet& active,
                                          const MpsConfig& config,
                                          std::uint64_t iteration_index = 0,
                                          unsigned threads = 1) {
  config.validate();
  const auto slice = detail::gather_active(matrix, active);
  const std::size_t models = slice.models();
  const std::size_t prompts = slice.prompts;
  if (models < 2)
    raise(errc::inactive_set_too_small,
          "permutation needs at least 2 active models, got " +
              std::to_string(models));
  if (prompts < 2)
    raise(errc::insufficient_prompts,
          "permutation needs at least 2 prompts, got " + std::to_string(prompts));

  NullDistribution null;
  null.rounds = config.permutations;
  null.master_seed = config.seed;
  null.samples.resize(config.permutations);

  const auto rounds = static_cast<std::size_t>(config.permutations);
  detail::parallel_for(rounds, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> scratch(models);
    std::vector<double> sum(models);
    std::vector<double> sum_sq(models);
    std::vector<double> t_values(models);
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng(derive_seed(config.seed, iteration_index, r));
      std::fill(sum.begin(), sum.end(), 0.0);
      std::fill(sum_sq.begin(), sum_sq.end(), 0.0);
      for (std::size_t t = 0; t < prompts; ++t) {
        const double* src = slice.row(t);
        for (std::size_t i = 0; i < models; ++i) scratch[i] = src[i];
        shuffle(scratch.data(), models, rng);
        detail::accumulate_row(scratch.data(), models, sum.data(), sum_sq.data());
      }
      detail::t_stats_from_moments(sum.data(), sum_sq.data(), prompts, models,
                                   config, t_values.data());
      double min_t = t_values[0];
      for (std::size_t i = 1; i < models; ++i)
        if (t_values[i] < min_t) min_t = t_values[i];
      null.samples[r] = min_t;
    }
  });
  return null;
}

// Left-tail permutation p-value: the fraction of null minima at or below the
// observed minimum (ties count, which keeps the test exact under
// exchangeability). add_one_smoothing folds the observed statistic into the
// reference set, bounding the p-value away from zero at 1/(R+1).
inline double p_value(double t_min_observed, const NullDistribution& null,
                      PValueMode mode) {
  if (null.samples.empty())
    raise(errc::empty_null_distribution, "null distribution has no samples");
  std::uint64_t count = 0;
  for (double sample : null.samples)
    if (sample <= t_min_observed) ++count;
  const auto r = static_cast<double>(null.samples.size());
  if (mode == PValueMode::add_one_smoothing)
    return (1.0 + static_cast<double>(count)) / (1.0 + r);
  return static_cast<double>(count) / r;
}

}  // namespace mps
