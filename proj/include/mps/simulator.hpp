#pragma once

// Synthetic lineage scenarios and the Monte Carlo harness that turns them
// into coverage / efficiency / calibration estimates.
//
// A scenario plants 0..3 provenance models among otherwise-exchangeable
// unrelated candidates. Related models sit at hop 1 (direct copy or light
// fine-tune), hop 2, or hop 3 of a derivation chain, with per-prompt
// distance means mu_1 <= mu_2 <= mu_3 < mu_u: signal decays with distance
// in the lineage but stays separated from the unrelated population.
//
// Column c of a generated matrix is drawn from its own stream
// derive_seed(seed, kColumnStream, c), so scenarios with the same seed are
// reproducible column by column and growing N extends a matrix instead of
// rewriting it.
//
// exhaustive_p_value enumerates the full permutation group — the oracle the
// sampled null is checked against on tiny instances.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <mps/core.hpp>
#include <mps/mps.hpp>
#include <mps/parallel.hpp>
#include <mps/permutation.hpp>
#include <mps/rng.hpp>
#include <mps/stats.hpp>

namespace mps {

enum class DistanceModel { bernoulli, truncated_gaussian };

inline const char* distance_model_name(DistanceModel m) {
  return m == DistanceModel::bernoulli ? "bernoulli" : "truncated_gaussian";
}

// A planted provenance model: which column, and how many derivation hops
// separate it from the target (1 = closest, 3 = faintest signal).
struct PlantedModel {
  std::size_t index = 0;
  int hop = 1;

  bool operator==(const PlantedModel&) const = default;
};

struct ScenarioParams {
  double mu_unrelated = 0.95;
  std::array<double, 3> mu_hop = {0.35, 0.6, 0.8};
  double spread = 0.0;  // stddev for truncated_gaussian; unused by bernoulli

  bool operator==(const ScenarioParams&) const = default;
};

struct SyntheticScenario {
  std::size_t candidate_count = 0;
  std::size_t prompt_count = 0;
  std::vector<PlantedModel> true_provenance;
  DistanceModel distance_model = DistanceModel::bernoulli;
  ScenarioParams params;
  std::uint64_t seed = 0;

  // Defaults shaped like greedy-token agreement data: unrelated models
  // disagree on ~95% of prompts, a direct copy on ~35%.
  static ScenarioParams token_defaults() { return ScenarioParams{}; }

  // Defaults shaped like cosine dissimilarities of sentence embeddings.
  static ScenarioParams semantic_defaults() {
    return ScenarioParams{0.5, {0.1, 0.25, 0.35}, 0.08};
  }

  void validate() const {
    if (candidate_count == 0 || prompt_count == 0)
      raise(errc::invalid_scenario, "need at least 1 candidate and 1 prompt");
    if (true_provenance.size() > 3)
      raise(errc::invalid_scenario, "at most 3 planted models supported");
    std::vector<std::uint8_t> used(candidate_count, 0);
    for (const auto& planted : true_provenance) {
      if (planted.index >= candidate_count)
        raise(errc::invalid_scenario,
              "planted index " + std::to_string(planted.index) +
                  " out of range for " + std::to_string(candidate_count) +
                  " candidates");
      if (used[planted.index]++)
        raise(errc::invalid_scenario, "planted index " +
                                          std::to_string(planted.index) +
                                          " appears twice");
      if (planted.hop < 1 || planted.hop > 3)
        raise(errc::invalid_scenario, "hop must be 1, 2, or 3");
    }
    // Means live on the distance scale. The closed boundary is allowed so
    // degenerate rates (mu = 0: an exact copy) stay expressible.
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(params.mu_unrelated) || !in_unit(params.mu_hop[0]) ||
        !in_unit(params.mu_hop[1]) || !in_unit(params.mu_hop[2]))
      raise(errc::invalid_scenario, "all means must lie in [0, 1]");
    if (!(params.mu_hop[0] <= params.mu_hop[1] &&
          params.mu_hop[1] <= params.mu_hop[2] &&
          params.mu_hop[2] < params.mu_unrelated))
      raise(errc::invalid_scenario,
            "hop means must satisfy mu_1 <= mu_2 <= mu_3 < mu_unrelated");
    if (distance_model == DistanceModel::truncated_gaussian &&
        !(params.spread > 0.0))
      raise(errc::invalid_scenario, "truncated_gaussian needs spread > 0");
    if (params.spread < 0.0)
      raise(errc::invalid_scenario, "spread must be non-negative");
  }
};

struct GeneratedScenario {
  DistanceMatrix matrix;
  std::vector<std::string> true_ids;  // planted model ids, by column order
};

namespace detail {

inline constexpr std::uint64_t kColumnStream = 0x636f6c;    // per-column draws
inline constexpr std::uint64_t kScenarioStream = 0x7363;    // per-trial scenario
inline constexpr std::uint64_t kRunStream = 0x72756e;       // per-trial audit

inline double sample_distance(DistanceModel model, double mu, double spread,
                              Rng& rng) {
  if (model == DistanceModel::bernoulli)
    return rng.next_unit() < mu ? 1.0 : 0.0;
  double v = mu + spread * rng.next_normal();
  if (v < 0.0) v = 0.0;
  if (v > 1.0) v = 1.0;
  return v;
}

}  // namespace detail

inline GeneratedScenario generate_scenario(const SyntheticScenario& scenario) {
  scenario.validate();
  const std::size_t models = scenario.candidate_count;
  const std::size_t prompts = scenario.prompt_count;

  std::vector<double> mu(models, scenario.params.mu_unrelated);
  std::vector<std::uint8_t> planted(models, 0);
  for (const auto& p : scenario.true_provenance) {
    mu[p.index] = scenario.params.mu_hop[static_cast<std::size_t>(p.hop - 1)];
    planted[p.index] = 1;
  }

  std::vector<double> flat(prompts * models);
  for (std::size_t c = 0; c < models; ++c) {
    Rng rng(derive_seed(scenario.seed, detail::kColumnStream, c));
    for (std::size_t t = 0; t < prompts; ++t)
      flat[t * models + c] = detail::sample_distance(
          scenario.distance_model, mu[c], scenario.params.spread, rng);
  }

  GeneratedScenario generated;
  std::vector<std::string> ids(models);
  for (std::size_t c = 0; c < models; ++c) ids[c] = "m" + std::to_string(c);
  for (std::size_t c = 0; c < models; ++c)
    if (planted[c]) generated.true_ids.push_back(ids[c]);
  generated.matrix = validate_matrix(std::move(flat), prompts, std::move(ids));
  return generated;
}

struct TrialRecord {
  std::uint64_t trial = 0;
  std::vector<std::string> truth;
  std::vector<std::string> predicted;
  double ni_score = 1.0;
  std::size_t iterations = 0;
  bool covered = false;  // truth is a subset of predicted
  bool exact = false;    // predicted equals truth as a set

  bool operator==(const TrialRecord&) const = default;
};

struct EvaluationReport {
  std::uint64_t trials = 0;
  double coverage_rate = 0.0;
  double mean_set_size = 0.0;
  double exact_recovery_rate = 0.0;
  double precision = 0.0;  // micro-averaged over all trials
  double recall = 0.0;
  double risky_rate = 0.0;  // fraction of trials with a non-empty prediction
  std::vector<TrialRecord> per_trial;

  bool operator==(const EvaluationReport&) const = default;
};

// Runs `trials` independent draws of the scenario through the audit. Trial k
// generates its matrix from derive_seed(scenario.seed, kScenarioStream, k)
// and audits with config.seed replaced by derive_seed(config.seed,
// kRunStream, k): the scenario seed controls the data, the config seed the
// permutation randomness, and both campaigns replay exactly.
inline EvaluationReport monte_carlo(const SyntheticScenario& scenario,
                                    std::uint64_t trials,
                                    const MpsConfig& config,
                                    unsigned threads = 1) {
  scenario.validate();
  config.validate();
  if (trials < 1) raise(errc::invalid_scenario, "need at least 1 trial");

  EvaluationReport report;
  report.trials = trials;
  report.per_trial.resize(trials);

  detail::parallel_for(
      static_cast<std::size_t>(trials), threads,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
          SyntheticScenario trial_scenario = scenario;
          trial_scenario.seed = derive_seed(scenario.seed, detail::kScenarioStream, k);
          MpsConfig trial_config = config;
          trial_config.seed = derive_seed(config.seed, detail::kRunStream, k);

          const GeneratedScenario data = generate_scenario(trial_scenario);
          const MpsResult result =
              run_mps(data.matrix, CandidateSet::all_active(data.matrix.model_ids),
                      trial_config, /*threads=*/1);

          TrialRecord& record = report.per_trial[k];
          record.trial = k;
          record.truth = data.true_ids;
          record.predicted = result.predicted_set;
          record.ni_score = result.ni_score;
          record.iterations = result.iterations.size();

          auto contains = [](const std::vector<std::string>& haystack,
                             const std::string& needle) {
            return std::find(haystack.begin(), haystack.end(), needle) !=
                   haystack.end();
          };
          record.covered = true;
          for (const auto& id : record.truth)
            if (!contains(record.predicted, id)) record.covered = false;
          record.exact =
              record.covered && record.predicted.size() == record.truth.size();
        }
      });

  std::uint64_t covered = 0, exact = 0, risky = 0;
  std::uint64_t predicted_total = 0, truth_total = 0, true_positive = 0;
  double size_sum = 0.0;
  for (const auto& record : report.per_trial) {
    covered += record.covered;
    exact += record.exact;
    risky += !record.predicted.empty();
    size_sum += static_cast<double>(record.predicted.size());
    predicted_total += record.predicted.size();
    truth_total += record.truth.size();
    for (const auto& id : record.predicted)
      if (std::find(record.truth.begin(), record.truth.end(), id) !=
          record.truth.end())
        ++true_positive;
  }
  const auto n = static_cast<double>(trials);
  report.coverage_rate = static_cast<double>(covered) / n;
  report.exact_recovery_rate = static_cast<double>(exact) / n;
  report.risky_rate = static_cast<double>(risky) / n;
  report.mean_set_size = size_sum / n;
  // Empty denominators mean "nothing to get wrong": score perfect.
  report.precision = predicted_total == 0
                         ? 1.0
                         : static_cast<double>(true_positive) /
                               static_cast<double>(predicted_total);
  report.recall = truth_total == 0 ? 1.0
                                   : static_cast<double>(true_positive) /
                                         static_cast<double>(truth_total);
  return report;
}

// Exact left-tail probability of the minimum t-statistic under the full
// within-prompt permutation group: all (M'!)^N combinations enumerated, no
// sampling. Exponential in the instance size — guarded to 1e6 combinations —
// but on tiny instances it is the ground truth the sampled null must match.
// Uses the variance mode and degenerate epsilon from `config`; permutation
// count, seed, and p-value smoothing do not apply to an exact enumeration.
inline double exhaustive_p_value(const DistanceMatrix& matrix,
                                 const CandidateSet& active,
                                 const MpsConfig& config = MpsConfig{}) {
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

  double factorial = 1.0;
  for (std::size_t k = 2; k <= models; ++k) factorial *= static_cast<double>(k);
  double combinations = 1.0;
  for (std::size_t t = 0; t < prompts; ++t) {
    combinations *= factorial;
    if (combinations > 1e6)
      raise(errc::search_space_too_large,
            "permutation group has more than 1e6 elements; use the sampled null");
  }

  // All M'! row permutations, lexicographic.
  std::vector<std::size_t> identity(models);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> perms;
  perms.push_back(identity);
  {
    auto perm = identity;
    while (std::next_permutation(perm.begin(), perm.end())) perms.push_back(perm);
  }

  std::vector<double> sum(models), sum_sq(models), t_values(models), row(models);
  auto min_t_for = [&](const std::vector<std::size_t>& digits) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(sum_sq.begin(), sum_sq.end(), 0.0);
    for (std::size_t t = 0; t < prompts; ++t) {
      const double* src = slice.row(t);
      const auto& perm = perms[digits[t]];
      for (std::size_t i = 0; i < models; ++i) row[i] = src[perm[i]];
      detail::accumulate_row(row.data(), models, sum.data(), sum_sq.data());
    }
    detail::t_stats_from_moments(sum.data(), sum_sq.data(), prompts, models,
                                 config, t_values.data());
    double min_t = t_values[0];
    for (std::size_t i = 1; i < models; ++i)
      if (t_values[i] < min_t) min_t = t_values[i];
    return min_t;
  };

  std::vector<std::size_t> digits(prompts, 0);
  const double observed = min_t_for(digits);

  // Odometer over per-prompt permutation choices.
  std::uint64_t below = 0, total = 0;
  for (;;) {
    if (min_t_for(digits) <= observed) ++below;
    ++total;
    std::size_t pos = 0;
    while (pos < prompts) {
      if (++digits[pos] < perms.size()) break;
      digits[pos] = 0;
      ++pos;
    }
    if (pos == prompts) break;
  }
  return static_cast<double>(below) / static_cast<double>(total);
}

}  // namespace mps
