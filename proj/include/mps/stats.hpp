#pragma once

// Per-model relative-deviation statistics over the active candidate set.
//
// For active models j in M' and prompts t:
//   d_{i,t} = L_{i,t} - (1/|M'|) * sum_{j in M'} L_{j,t}
//   dbar_i  = (1/N) * sum_t d_{i,t}
//   var_i   = (1/(N-1)) * sum_t (d_{i,t} - dbar_i)^2     (paper_literal)
//           = the above / N                              (mean_scaled)
//   t_i     = dbar_i / sqrt(var_i)
//
// A provenance model sits systematically closer to the target than the
// ensemble, so its t_i is pushed negative. The exclusion loop and the
// permutation null both evaluate exactly the code in this header, which is
// what makes sampled nulls bit-comparable with directly computed statistics.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <mps/core.hpp>

namespace mps {

// Studentized deviations for the active models, aligned with active_ids.
struct TStatVector {
  std::vector<double> values;
  std::vector<std::string> active_ids;
};

struct TMin {
  double value = 0.0;
  std::string argmin_id;
  std::size_t argmin_index = 0;  // position within the active ordering
};

namespace detail {

// Active submatrix gathered into a dense prompt-major buffer. Column k of
// the slice is original column columns[k]; gathering preserves declared
// order, which keeps tie-breaking stable.
struct ActiveSlice {
  std::vector<double> data;  // prompt-major [prompt][active model]
  std::vector<std::size_t> columns;
  std::size_t prompts = 0;

  std::size_t models() const { return columns.size(); }
  const double* row(std::size_t t) const { return data.data() + t * columns.size(); }
};

inline ActiveSlice gather_active(const DistanceMatrix& matrix,
                                 const CandidateSet& active) {
  ActiveSlice slice;
  slice.columns = active.active_indices();
  if (slice.columns.empty())
    raise(errc::inactive_set_empty, "no active models in candidate set");
  slice.prompts = matrix.prompt_count;
  slice.data.resize(slice.prompts * slice.columns.size());
  for (std::size_t t = 0; t < slice.prompts; ++t) {
    const double* src = matrix.row(t);
    double* dst = slice.data.data() + t * slice.columns.size();
    for (std::size_t k = 0; k < slice.columns.size(); ++k)
      dst[k] = src[slice.columns[k]];
  }
  return slice;
}

// Accumulates centered first and second moments for one prompt row. The
// ensemble mean is taken over the row itself, so feeding a permuted row
// yields exactly the statistics of the permuted matrix — the permutation
// kernel and the direct path share this code by construction.
inline void accumulate_row(const double* row, std::size_t models, double* sum,
                           double* sum_sq) {
  double row_sum = 0.0;
  for (std::size_t i = 0; i < models; ++i) row_sum += row[i];
  const double row_mean = row_sum / static_cast<double>(models);
  for (std::size_t i = 0; i < models; ++i) {
    const double dev = row[i] - row_mean;
    sum[i] += dev;
    sum_sq[i] += dev * dev;
  }
}

inline double variance_from_moments(double sum, double sum_sq,
                                    std::size_t prompts, VarianceMode mode) {
  const double n = static_cast<double>(prompts);
  const double mean = sum / n;
  double var = (sum_sq - n * mean * mean) / (n - 1.0);
  if (var < 0.0) var = 0.0;  // guard fp cancellation
  if (mode == VarianceMode::mean_scaled) var /= n;
  return var;
}

// Degenerate variance means near-identical traces: report 0 when the mean
// deviation is also negligible, otherwise a signed sentinel so exact copies
// float to the front of the exclusion order instead of dividing by ~zero.
inline double studentize(double mean_dev, double variance, double epsilon) {
  if (variance < epsilon) {
    if (std::fabs(mean_dev) < epsilon) return 0.0;
    return mean_dev < 0.0 ? -kDegenerateTStat : kDegenerateTStat;
  }
  return mean_dev / std::sqrt(variance);
}

inline void t_stats_from_moments(const double* sum, const double* sum_sq,
                                 std::size_t prompts, std::size_t models,
                                 const MpsConfig& config, double* out) {
  for (std::size_t i = 0; i < models; ++i) {
    const double mean = sum[i] / static_cast<double>(prompts);
    const double var =
        variance_from_moments(sum[i], sum_sq[i], prompts, config.variance_mode);
    out[i] = studentize(mean, var, config.degenerate_epsilon);
  }
}

}  // namespace detail

// Per-prompt deviations d_{i,t} for active models, indexed [prompt][active i].
inline std::vector<std::vector<double>> sample_relative_deviations(
    const DistanceMatrix& matrix, const CandidateSet& active) {
  const auto idx = active.active_indices();
  if (idx.empty())
    raise(errc::inactive_set_empty, "no active models in candidate set");
  std::vector<std::vector<double>> deviations(matrix.prompt_count);
  for (std::size_t t = 0; t < matrix.prompt_count; ++t) {
    const double* row = matrix.row(t);
    double row_sum = 0.0;
    for (auto j : idx) row_sum += row[j];
    const double row_mean = row_sum / static_cast<double>(idx.size());
    auto& out = deviations[t];
    out.reserve(idx.size());
    for (auto j : idx) out.push_back(row[j] - row_mean);
  }
  return deviations;
}

inline std::vector<double> mean_relative_deviation(
    const std::vector<std::vector<double>>& deviations) {
  if (deviations.empty())
    raise(errc::insufficient_prompts, "need at least one prompt");
  const std::size_t models = deviations.front().size();
  std::vector<double> means(models, 0.0);
  for (const auto& row : deviations)
    for (std::size_t i = 0; i < models; ++i) means[i] += row[i];
  for (auto& m : means) m /= static_cast<double>(deviations.size());
  return means;
}

// Textbook two-pass sample variance of the deviations; the moment kernel in
// detail:: must agree with this within fp tolerance (property-tested).
inline std::vector<double> variance_of_relative(
    const std::vector<std::vector<double>>& deviations, VarianceMode mode) {
  const std::size_t prompts = deviations.size();
  if (prompts < 2)
    raise(errc::insufficient_prompts,
          "variance needs at least 2 prompts, got " + std::to_string(prompts));
  const auto means = mean_relative_deviation(deviations);
  std::vector<double> variances(means.size(), 0.0);
  for (const auto& row : deviations)
    for (std::size_t i = 0; i < means.size(); ++i) {
      const double dev = row[i] - means[i];
      variances[i] += dev * dev;
    }
  for (auto& v : variances) {
    v /= static_cast<double>(prompts - 1);
    if (mode == VarianceMode::mean_scaled) v /= static_cast<double>(prompts);
  }
  return variances;
}

inline TStatVector t_statistics(const DistanceMatrix& matrix,
                                const CandidateSet& active,
                                const MpsConfig& config) {
  config.validate();
  const auto slice = detail::gather_active(matrix, active);
  if (slice.models() < 2)
    raise(errc::inactive_set_too_small,
          "t-statistics need at least 2 active models, got " +
              std::to_string(slice.models()));
  if (slice.prompts < 2)
    raise(errc::insufficient_prompts,
          "t-statistics need at least 2 prompts, got " +
              std::to_string(slice.prompts));

  std::vector<double> sum(slice.models(), 0.0);
  std::vector<double> sum_sq(slice.models(), 0.0);
  for (std::size_t t = 0; t < slice.prompts; ++t)
    detail::accumulate_row(slice.row(t), slice.models(), sum.data(), sum_sq.data());

  TStatVector stats;
  stats.values.resize(slice.models());
  detail::t_stats_from_moments(sum.data(), sum_sq.data(), slice.prompts,
                               slice.models(), config, stats.values.data());
  stats.active_ids.reserve(slice.models());
  for (auto j : slice.columns) stats.active_ids.push_back(matrix.model_ids[j]);
  return stats;
}

// Minimum statistic with deterministic ties: strict < scan keeps the
// earliest active model in declared column order.
inline TMin t_min(const TStatVector& stats) {
  if (stats.values.empty())
    raise(errc::inactive_set_empty, "t_min of empty statistic vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < stats.values.size(); ++i)
    if (stats.values[i] < stats.values[best]) best = i;
  return TMin{stats.values[best], stats.active_ids[best], best};
}

}  // namespace mps
