#pragma once

// Sequential test-and-exclusion over the candidate set.
//
// Each iteration tests H0 "all active models are exchangeable" via the
// permutation null of the minimum t-statistic. A p-value above alpha means
// no remaining model is significantly closer to the target than the
// ensemble, and the loop stops with the current exclusions as the predicted
// provenance set. Otherwise the argmin model is moved into the predicted
// set and the test repeats on the survivors. Because each round of testing
// spends alpha only on the decision to continue, the probability that the
// final set misses a true provenance model is at most alpha (the guarantee
// the coverage acceptance run exercises empirically).
//
// Iteration k draws its permutation null from streams derived from
// (config.seed, k), so the first iteration of a run and a standalone
// ni_score evaluation see identical randomness.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <mps/core.hpp>
#include <mps/permutation.hpp>
#include <mps/stats.hpp>

namespace mps {

enum class Decision { reject_exclude, accept_stop, singleton_stop };

inline const char* decision_name(Decision d) {
  switch (d) {
    case Decision::reject_exclude: return "reject_exclude";
    case Decision::accept_stop: return "accept_stop";
    case Decision::singleton_stop: return "singleton_stop";
  }
  return "unknown";
}

// Full audit trail for one iteration. For singleton_stop (one model left,
// nothing to test against) the statistical fields stay empty.
struct IterationRecord {
  std::vector<std::string> active_ids;
  std::vector<double> t_statistics;
  std::optional<double> t_min_observed;
  std::string argmin_id;
  std::optional<double> p_value;
  Decision decision = Decision::accept_stop;

  bool operator==(const IterationRecord&) const = default;
};

struct MpsResult {
  // Models excluded as provenance, in exclusion order (most suspicious
  // first). Empty means the audit found no provenance signal.
  std::vector<std::string> predicted_set;
  std::vector<IterationRecord> iterations;
  // First-iteration p-value; 1.0 with untestable=true when the candidate
  // set had nothing to compare (fewer than 2 active models).
  double ni_score = 1.0;
  bool ni_score_untestable = false;
  // p-value of the stopping iteration; 1.0 if no test ever ran.
  double terminal_p_value = 1.0;

  bool operator==(const MpsResult&) const = default;
};

enum class RiskVerdict { risk_free, risky };

inline const char* risk_verdict_name(RiskVerdict v) {
  return v == RiskVerdict::risk_free ? "risk_free" : "risky";
}

inline MpsResult run_mps(const DistanceMatrix& matrix,
                         const CandidateSet& candidates,
                         const MpsConfig& config, unsigned threads = 1) {
  config.validate();
  if (candidates.model_ids.size() != candidates.active.size())
    raise(errc::length_mismatch, "candidate mask length does not match ids");
  CandidateSet active = candidates;
  if (active.active_count() == 0)
    raise(errc::empty_candidate_set, "candidate set has no active models");
  if (matrix.prompt_count < 2)
    raise(errc::insufficient_prompts,
          "auditing needs at least 2 prompts, got " +
              std::to_string(matrix.prompt_count));

  MpsResult result;
  std::uint64_t iteration = 0;
  bool accepted = false;

  while (active.active_count() > 1) {
    const TStatVector stats = t_statistics(matrix, active, config);
    const TMin minimum = t_min(stats);
    const NullDistribution null =
        null_distribution(matrix, active, config, iteration, threads);
    const double p = p_value(minimum.value, null, config.p_value_mode);

    if (iteration == 0) result.ni_score = p;
    result.terminal_p_value = p;

    IterationRecord record;
    record.active_ids = stats.active_ids;
    record.t_statistics = stats.values;
    record.t_min_observed = minimum.value;
    record.argmin_id = minimum.argmin_id;
    record.p_value = p;

    if (p > config.alpha) {
      record.decision = Decision::accept_stop;
      result.iterations.push_back(std::move(record));
      accepted = true;
      break;
    }

    record.decision = Decision::reject_exclude;
    result.iterations.push_back(std::move(record));
    // argmin_index addresses the active ordering; map back to the column.
    const auto columns = active.active_indices();
    active.deactivate(columns[minimum.argmin_index]);
    result.predicted_set.push_back(minimum.argmin_id);
    ++iteration;
  }

  if (!accepted) {
    // Loop exhausted the set down to one model (or started there): no
    // counterfactual ensemble remains, so the survivor stays untested.
    IterationRecord record;
    record.active_ids = active.active_ids();
    record.decision = Decision::singleton_stop;
    result.iterations.push_back(std::move(record));
  }

  if (iteration == 0 && !accepted) {
    // No test ever ran: a singleton input is untestable by definition.
    result.ni_score = 1.0;
    result.ni_score_untestable = true;
    result.terminal_p_value = 1.0;
  }
  return result;
}

// Negative-information score: the first-iteration p-value on its own. Low
// values mean at least one candidate hugs the target too closely for an
// unrelated-models explanation. Identical in distribution AND in realized
// value to run_mps(...).iterations[0].p_value under the same seed.
inline double ni_score(const DistanceMatrix& matrix,
                       const CandidateSet& candidates, const MpsConfig& config,
                       unsigned threads = 1) {
  config.validate();
  if (candidates.active.size() != candidates.model_ids.size())
    raise(errc::length_mismatch, "candidate mask length does not match ids");
  if (candidates.active_count() < 2)
    raise(errc::candidate_set_too_small_for_ni,
          "ni_score needs at least 2 active models; add reference models to "
          "the candidate set");
  const TStatVector stats = t_statistics(matrix, candidates, config);
  const TMin minimum = t_min(stats);
  const NullDistribution null =
      null_distribution(matrix, candidates, config, /*iteration_index=*/0, threads);
  return p_value(minimum.value, null, config.p_value_mode);
}

// Empty predicted set == every candidate survived == no provenance signal.
inline RiskVerdict risk_verdict(const MpsResult& result) {
  return result.predicted_set.empty() ? RiskVerdict::risk_free
                                      : RiskVerdict::risky;
}

// Suspect-vs-controls protocol: audit {suspect} + controls and ask whether
// the suspect lands in the predicted set. Controls that get excluded too are
// reported as contamination — they make the verdict less trustworthy.
struct PairwiseVerdict {
  std::string suspect_id;
  bool is_provenance = false;
  std::optional<std::size_t> suspect_excluded_at;  // iteration index
  std::vector<std::string> control_contamination;
  MpsResult audit;

  bool operator==(const PairwiseVerdict&) const = default;
};

inline PairwiseVerdict pairwise_verdict(const DistanceMatrix& matrix,
                                        const std::string& suspect_id,
                                        const std::vector<std::string>& control_ids,
                                        const MpsConfig& config,
                                        unsigned threads = 1) {
  if (control_ids.empty())
    raise(errc::empty_candidate_set, "pairwise audit needs at least 1 control");

  auto column_of = [&](const std::string& id) {
    for (std::size_t j = 0; j < matrix.model_ids.size(); ++j)
      if (matrix.model_ids[j] == id) return j;
    raise(errc::unknown_model_id, "model id '" + id + "' not in matrix");
  };

  CandidateSet set;
  set.model_ids = matrix.model_ids;
  set.active.assign(matrix.model_ids.size(), 0);
  set.active[column_of(suspect_id)] = 1;
  for (const auto& id : control_ids) {
    if (id == suspect_id)
      raise(errc::overlapping_suspect_control,
            "control '" + id + "' is also the suspect");
    const std::size_t j = column_of(id);
    if (set.active[j])
      raise(errc::config_error, "duplicate control id '" + id + "'");
    set.active[j] = 1;
  }

  PairwiseVerdict verdict;
  verdict.suspect_id = suspect_id;
  verdict.audit = run_mps(matrix, set, config, threads);
  for (std::size_t k = 0; k < verdict.audit.predicted_set.size(); ++k) {
    const auto& excluded = verdict.audit.predicted_set[k];
    if (excluded == suspect_id) {
      verdict.is_provenance = true;
      verdict.suspect_excluded_at = k;
    } else {
      verdict.control_contamination.push_back(excluded);
    }
  }
  return verdict;
}

}  // namespace mps
