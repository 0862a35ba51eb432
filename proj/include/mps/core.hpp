#pragma once

// Core domain types for provenance-set auditing: the per-prompt distance
// matrix, the shrinking candidate set, and run configuration.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace mps {

// Every failure surfaced by the library carries one of these codes so that
// callers (and the CLI exit-code table) can dispatch without string matching.
enum class errc {
  non_finite,
  out_of_range,
  duplicate_model_id,
  empty_matrix,
  inactive_set_empty,
  inactive_set_too_small,
  insufficient_prompts,
  empty_candidate_set,
  empty_null_distribution,
  candidate_set_too_small_for_ni,
  unknown_model_id,
  overlapping_suspect_control,
  kind_mismatch,
  length_mismatch,
  dimension_mismatch,
  zero_norm_embedding,
  invalid_scenario,
  search_space_too_large,
  parse_error,
  config_error,
  io_error,
};

inline const char* errc_name(errc code) {
  switch (code) {
    case errc::non_finite: return "NonFinite";
    case errc::out_of_range: return "OutOfRange";
    case errc::duplicate_model_id: return "DuplicateModelId";
    case errc::empty_matrix: return "EmptyMatrix";
    case errc::inactive_set_empty: return "InactiveSetEmpty";
    case errc::inactive_set_too_small: return "InactiveSetTooSmall";
    case errc::insufficient_prompts: return "InsufficientPrompts";
    case errc::empty_candidate_set: return "EmptyCandidateSet";
    case errc::empty_null_distribution: return "EmptyNullDistribution";
    case errc::candidate_set_too_small_for_ni: return "CandidateSetTooSmallForNI";
    case errc::unknown_model_id: return "UnknownModelId";
    case errc::overlapping_suspect_control: return "OverlappingSuspectControl";
    case errc::kind_mismatch: return "KindMismatch";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::zero_norm_embedding: return "ZeroNormEmbedding";
    case errc::invalid_scenario: return "InvalidScenario";
    case errc::search_space_too_large: return "SearchSpaceTooLarge";
    case errc::parse_error: return "ParseError";
    case errc::config_error: return "ConfigError";
    case errc::io_error: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& message) {
  throw Error(code, message);
}

// How the per-model sample variance enters the studentized statistic.
//   paper_literal: (1/(N-1)) * sum_t (d_{i,t} - dbar_i)^2
//   mean_scaled:   paper_literal / N  (variance of the mean)
// Both are valid inside the permutation test because the same statistic is
// applied to observed and permuted data; they can disagree on the argmin
// when per-model variances differ, so reports always echo the mode.
enum class VarianceMode { paper_literal, mean_scaled };

inline const char* variance_mode_name(VarianceMode m) {
  return m == VarianceMode::paper_literal ? "paper_literal" : "mean_scaled";
}

// raw: exact fraction of permuted statistics <= observed (can be 0).
// add_one_smoothing: (1 + count) / (1 + R), strictly positive.
enum class PValueMode { raw, add_one_smoothing };

inline const char* p_value_mode_name(PValueMode m) {
  return m == PValueMode::raw ? "raw" : "add_one_smoothing";
}

struct MpsConfig {
  double alpha = 0.05;
  std::uint64_t permutations = 1000;
  std::uint64_t seed = 0;
  VarianceMode variance_mode = VarianceMode::paper_literal;
  PValueMode p_value_mode = PValueMode::raw;
  // Variances below this are treated as degenerate (identical traces);
  // the statistic then becomes 0 or a signed sentinel instead of dividing
  // by ~zero.
  double degenerate_epsilon = 1e-12;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0))
      raise(errc::config_error, "alpha must lie strictly between 0 and 1");
    if (permutations < 1)
      raise(errc::config_error, "permutations must be at least 1");
    if (!(degenerate_epsilon > 0.0))
      raise(errc::config_error, "degenerate_epsilon must be positive");
  }
};

// Signed magnitude assigned to a zero-variance model with a nonzero mean
// deviation, so an exact-copy model is excluded first instead of crashing
// the audit.
inline constexpr double kDegenerateTStat = 1e9;

// N x M matrix of per-prompt dissimilarity scores between each candidate
// model (column) and the target. Row-major, one row per prompt. All entries
// lie in [0, 1]; construction goes through validate_matrix. Immutable after
// construction by convention, safe to share across threads.
struct DistanceMatrix {
  std::vector<double> values;  // row-major [prompt][model]
  std::size_t prompt_count = 0;
  std::vector<std::string> model_ids;

  std::size_t model_count() const { return model_ids.size(); }
  double at(std::size_t prompt, std::size_t model) const {
    return values[prompt * model_ids.size() + model];
  }
  const double* row(std::size_t prompt) const {
    return values.data() + prompt * model_ids.size();
  }
  bool operator==(const DistanceMatrix&) const = default;
};

// Candidate identities plus the active mask that Algorithm-style exclusion
// loops shrink. Column order of the matrix fixes member order everywhere;
// deterministic tie-breaking depends on it.
struct CandidateSet {
  std::vector<std::string> model_ids;
  std::vector<std::uint8_t> active;  // same length as model_ids

  static CandidateSet all_active(std::vector<std::string> ids) {
    CandidateSet set;
    set.active.assign(ids.size(), 1);
    set.model_ids = std::move(ids);
    return set;
  }

  std::size_t size() const { return model_ids.size(); }
  bool is_active(std::size_t i) const { return active[i] != 0; }
  void deactivate(std::size_t i) { active[i] = 0; }

  std::size_t active_count() const {
    std::size_t n = 0;
    for (auto a : active) n += (a != 0);
    return n;
  }

  std::vector<std::size_t> active_indices() const {
    std::vector<std::size_t> idx;
    idx.reserve(model_ids.size());
    for (std::size_t i = 0; i < model_ids.size(); ++i)
      if (active[i]) idx.push_back(i);
    return idx;
  }

  std::vector<std::string> active_ids() const {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < model_ids.size(); ++i)
      if (active[i]) ids.push_back(model_ids[i]);
    return ids;
  }
};

namespace detail {

inline void check_model_ids(const std::vector<std::string>& ids) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second)
      raise(errc::duplicate_model_id, "duplicate model id '" + id + "'");
  }
}

inline void check_entries(const std::vector<double>& values) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double v = values[k];
    if (!std::isfinite(v))
      raise(errc::non_finite,
            "matrix entry #" + std::to_string(k) + " is not finite");
    if (v < 0.0 || v > 1.0)
      raise(errc::out_of_range, "matrix entry #" + std::to_string(k) + " = " +
                                    std::to_string(v) +
                                    " lies outside [0, 1]");
  }
}

}  // namespace detail

// Checks all invariants and returns the validated matrix. Idempotent:
// validating an already-valid matrix reproduces it exactly.
inline DistanceMatrix validate_matrix(std::vector<double> flat_row_major,
                                      std::size_t prompt_count,
                                      std::vector<std::string> model_ids) {
  if (prompt_count == 0 || model_ids.empty())
    raise(errc::empty_matrix, "matrix must have at least one prompt and one model");
  if (flat_row_major.size() != prompt_count * model_ids.size())
    raise(errc::length_mismatch,
          "matrix has " + std::to_string(flat_row_major.size()) +
              " entries, expected " +
              std::to_string(prompt_count * model_ids.size()));
  detail::check_model_ids(model_ids);
  detail::check_entries(flat_row_major);
  DistanceMatrix m;
  m.values = std::move(flat_row_major);
  m.prompt_count = prompt_count;
  m.model_ids = std::move(model_ids);
  return m;
}

inline DistanceMatrix validate_matrix(
    const std::vector<std::vector<double>>& rows,
    std::vector<std::string> model_ids) {
  if (rows.empty() || model_ids.empty())
    raise(errc::empty_matrix, "matrix must have at least one prompt and one model");
  std::vector<double> flat;
  flat.reserve(rows.size() * model_ids.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != model_ids.size())
      raise(errc::length_mismatch,
            "row " + std::to_string(t) + " has " +
                std::to_string(rows[t].size()) + " entries, expected " +
                std::to_string(model_ids.size()));
    flat.insert(flat.end(), rows[t].begin(), rows[t].end());
  }
  return validate_matrix(std::move(flat), rows.size(), std::move(model_ids));
}

inline DistanceMatrix validate_matrix(const DistanceMatrix& m) {
  return validate_matrix(m.values, m.prompt_count, m.model_ids);
}

}  // namespace mps
