#pragma once

// Per-prompt dissimilarity between model outputs on a shared prompt set.
//
// Token mode compares greedy next-token choices: distance 0 on agreement,
// 1 on disagreement. Semantic mode embeds each output and uses cosine
// dissimilarity 1 - cos(a, b), clamped into [0, 1]; anti-correlated
// embeddings are treated as maximally distant rather than letting the
// matrix leave its domain.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <mps/core.hpp>

namespace mps {

enum class TraceKind { token, embedding };

inline const char* trace_kind_name(TraceKind k) {
  return k == TraceKind::token ? "token" : "embedding";
}

// One model's outputs across the prompt set: either a greedy token id per
// prompt or an embedding vector per prompt (stored flat, fixed dimension).
struct ModelTrace {
  std::string model_id;
  TraceKind kind = TraceKind::token;
  std::vector<std::int64_t> tokens;
  std::vector<double> embeddings;  // prompt-major, embedding_dim per prompt
  std::size_t embedding_dim = 0;

  std::size_t prompt_count() const {
    if (kind == TraceKind::token) return tokens.size();
    return embedding_dim == 0 ? 0 : embeddings.size() / embedding_dim;
  }

  const double* embedding(std::size_t prompt) const {
    return embeddings.data() + prompt * embedding_dim;
  }

  static ModelTrace from_tokens(std::string id, std::vector<std::int64_t> tokens) {
    ModelTrace trace;
    trace.model_id = std::move(id);
    trace.kind = TraceKind::token;
    trace.tokens = std::move(tokens);
    return trace;
  }

  static ModelTrace from_embeddings(std::string id,
                                    const std::vector<std::vector<double>>& rows) {
    ModelTrace trace;
    trace.model_id = std::move(id);
    trace.kind = TraceKind::embedding;
    if (!rows.empty()) {
      trace.embedding_dim = rows.front().size();
      if (trace.embedding_dim == 0)
        raise(errc::dimension_mismatch, "embedding dimension must be positive");
      trace.embeddings.reserve(rows.size() * trace.embedding_dim);
      for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != trace.embedding_dim)
          raise(errc::dimension_mismatch,
                "embedding at prompt " + std::to_string(t) + " has dimension " +
                    std::to_string(rows[t].size()) + ", expected " +
                    std::to_string(trace.embedding_dim));
        trace.embeddings.insert(trace.embeddings.end(), rows[t].begin(),
                                rows[t].end());
      }
    }
    return trace;
  }
};

namespace detail {

inline void check_aligned(const ModelTrace& a, const ModelTrace& b,
                          TraceKind expected) {
  if (a.kind != expected || b.kind != expected)
    raise(errc::kind_mismatch,
          std::string("expected ") + trace_kind_name(expected) + " traces, got " +
              trace_kind_name(a.kind) + " and " + trace_kind_name(b.kind));
  if (a.prompt_count() != b.prompt_count())
    raise(errc::length_mismatch,
          "traces '" + a.model_id + "' and '" + b.model_id + "' cover " +
              std::to_string(a.prompt_count()) + " vs " +
              std::to_string(b.prompt_count()) + " prompts");
}

}  // namespace detail

// 1 - indicator(agree) per prompt.
inline std::vector<double> next_token_distance(const ModelTrace& a,
                                               const ModelTrace& b) {
  detail::check_aligned(a, b, TraceKind::token);
  std::vector<double> distances(a.tokens.size());
  for (std::size_t t = 0; t < a.tokens.size(); ++t)
    distances[t] = a.tokens[t] == b.tokens[t] ? 0.0 : 1.0;
  return distances;
}

// 1 - cosine similarity per prompt, clamped to [0, 1].
inline std::vector<double> semantic_distance(const ModelTrace& a,
                                             const ModelTrace& b) {
  detail::check_aligned(a, b, TraceKind::embedding);
  if (a.embedding_dim != b.embedding_dim)
    raise(errc::dimension_mismatch,
          "traces '" + a.model_id + "' and '" + b.model_id +
              "' have embedding dimensions " + std::to_string(a.embedding_dim) +
              " vs " + std::to_string(b.embedding_dim));
  const std::size_t prompts = a.prompt_count();
  std::vector<double> distances(prompts);
  for (std::size_t t = 0; t < prompts; ++t) {
    const double* u = a.embedding(t);
    const double* v = b.embedding(t);
    double dot = 0.0, norm_u = 0.0, norm_v = 0.0;
    for (std::size_t k = 0; k < a.embedding_dim; ++k) {
      dot += u[k] * v[k];
      norm_u += u[k] * u[k];
      norm_v += v[k] * v[k];
    }
    if (norm_u == 0.0 || norm_v == 0.0)
      raise(errc::zero_norm_embedding,
            "zero-norm embedding at prompt " + std::to_string(t));
    double d = 1.0 - dot / (std::sqrt(norm_u) * std::sqrt(norm_v));
    if (d < 0.0) d = 0.0;
    if (d > 1.0) d = 1.0;
    distances[t] = d;
  }
  return distances;
}

// The target's trace plus every candidate's, all on the same prompt list.
struct TraceBundle {
  ModelTrace target;
  std::vector<ModelTrace> candidates;
};

// Column i holds the per-prompt distance between candidate i and the target.
inline DistanceMatrix build_distance_matrix(const TraceBundle& bundle) {
  if (bundle.candidates.empty())
    raise(errc::empty_candidate_set, "bundle has no candidate traces");
  const std::size_t prompts = bundle.target.prompt_count();
  const std::size_t models = bundle.candidates.size();
  std::vector<std::string> ids;
  ids.reserve(models);
  std::vector<std::vector<double>> columns;
  columns.reserve(models);
  for (const auto& candidate : bundle.candidates) {
    ids.push_back(candidate.model_id);
    columns.push_back(bundle.target.kind == TraceKind::token
                          ? next_token_distance(bundle.target, candidate)
                          : semantic_distance(bundle.target, candidate));
  }
  std::vector<double> flat(prompts * models);
  for (std::size_t t = 0; t < prompts; ++t)
    for (std::size_t i = 0; i < models; ++i) flat[t * models + i] = columns[i][t];
  return validate_matrix(std::move(flat), prompts, std::move(ids));
}

}  // namespace mps
