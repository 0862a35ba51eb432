#pragma once

// File formats and report serialization.
//
//   matrix CSV    header `prompt_id,<model>,...`, one row per prompt,
//                 doubles written shortest-round-trip so read(write(m)) == m
//                 bit for bit
//   matrix binary magic "MPSB", version, dims, id table, row-major f64
//                 little-endian payload
//   traces        JSONL, one prompt per line: {"prompt_id": "...", "token": n}
//                 or {"prompt_id": "...", "embedding": [..]}
//   reports       JSON with stable key order (schema_version "1")
//
// Parse failures carry 1-based line numbers. Validation failures (entries
// out of range and the like) come from validate_matrix and keep their own
// error codes — a well-formed file with bad values is not a parse error.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include <mps/core.hpp>
#include <mps/distances.hpp>
#include <mps/mps.hpp>
#include <mps/simulator.hpp>

namespace mps {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

inline double parse_double(const std::string& field, std::size_t line_number) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc{} || result.ptr != end)
    raise(errc::parse_error, "line " + std::to_string(line_number) +
                                 ": cannot parse number '" + field + "'");
  return value;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

inline std::ifstream open_for_read(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) raise(errc::io_error, "cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_for_write(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) raise(errc::io_error, "cannot open '" + path + "' for writing");
  return out;
}

}  // namespace detail

// ===========================================================================
// Matrix CSV
// ===========================================================================

inline void write_matrix_csv(std::ostream& out, const DistanceMatrix& matrix,
                             const std::vector<std::string>* prompt_ids = nullptr) {
  out << "prompt_id";
  for (const auto& id : matrix.model_ids) out << ',' << id;
  out << '\n';
  for (std::size_t t = 0; t < matrix.prompt_count; ++t) {
    if (prompt_ids)
      out << (*prompt_ids)[t];
    else
      out << 'p' << t;
    const double* row = matrix.row(t);
    for (std::size_t i = 0; i < matrix.model_count(); ++i)
      out << ',' << detail::format_double(row[i]);
    out << '\n';
  }
}

inline void write_matrix_csv(const std::string& path, const DistanceMatrix& matrix,
                             const std::vector<std::string>* prompt_ids = nullptr) {
  auto out = detail::open_for_write(path);
  write_matrix_csv(out, matrix, prompt_ids);
  if (!out) raise(errc::io_error, "failed writing '" + path + "'");
}

inline DistanceMatrix read_matrix_csv(std::istream& in) {
  std::string line;
  std::size_t line_number = 0;

  if (!std::getline(in, line))
    raise(errc::parse_error, "line 1: empty input, expected CSV header");
  ++line_number;
  line = detail::strip_cr(line);
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "prompt_id")
    raise(errc::parse_error,
          "line 1: header must be 'prompt_id,<model>,...', got '" + line + "'");
  std::vector<std::string> model_ids(header.begin() + 1, header.end());

  std::vector<double> values;
  std::size_t prompts = 0;
  while (std::getline(in, line)) {
    ++line_number;
    line = detail::strip_cr(line);
    if (line.empty()) continue;  // tolerate blank separator lines
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != model_ids.size() + 1)
      raise(errc::parse_error, "line " + std::to_string(line_number) + ": has " +
                                   std::to_string(fields.size()) +
                                   " fields, expected " +
                                   std::to_string(model_ids.size() + 1));
    for (std::size_t i = 1; i < fields.size(); ++i)
      values.push_back(detail::parse_double(fields[i], line_number));
    ++prompts;
  }
  return validate_matrix(std::move(values), prompts, std::move(model_ids));
}

inline DistanceMatrix read_matrix_csv(const std::string& path) {
  auto in = detail::open_for_read(path);
  return read_matrix_csv(in);
}

// ===========================================================================
// Matrix binary (magic "MPSB", version 1, little-endian payload)
// ===========================================================================

namespace detail {

inline constexpr char kMatrixMagic[4] = {'M', 'P', 'S', 'B'};
inline constexpr std::uint32_t kMatrixVersion = 1;

template <typename T>
inline void write_raw(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(bytes, sizeof(T));
}

template <typename T>
inline T read_raw(std::istream& in, const char* what) {
  char bytes[sizeof(T)];
  in.read(bytes, sizeof(T));
  if (in.gcount() != sizeof(T))
    raise(errc::parse_error, std::string("truncated binary matrix: ") + what);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

inline void write_matrix_binary(std::ostream& out, const DistanceMatrix& matrix) {
  out.write(detail::kMatrixMagic, 4);
  detail::write_raw(out, detail::kMatrixVersion);
  detail::write_raw(out, static_cast<std::uint64_t>(matrix.prompt_count));
  detail::write_raw(out, static_cast<std::uint64_t>(matrix.model_count()));
  for (const auto& id : matrix.model_ids) {
    detail::write_raw(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  for (double v : matrix.values) detail::write_raw(out, v);
}

inline void write_matrix_binary(const std::string& path,
                                const DistanceMatrix& matrix) {
  auto out = detail::open_for_write(path, /*binary=*/true);
  write_matrix_binary(out, matrix);
  if (!out) raise(errc::io_error, "failed writing '" + path + "'");
}

inline DistanceMatrix read_matrix_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, detail::kMatrixMagic, 4) != 0)
    raise(errc::parse_error, "not a binary distance matrix (bad magic)");
  const auto version = detail::read_raw<std::uint32_t>(in, "version");
  if (version != detail::kMatrixVersion)
    raise(errc::parse_error,
          "unsupported binary matrix version " + std::to_string(version));
  const auto prompts = detail::read_raw<std::uint64_t>(in, "prompt count");
  const auto models = detail::read_raw<std::uint64_t>(in, "model count");
  if (prompts > (1ull << 32) || models > (1ull << 24))
    raise(errc::parse_error, "implausible binary matrix dimensions");
  std::vector<std::string> model_ids;
  model_ids.reserve(models);
  for (std::uint64_t i = 0; i < models; ++i) {
    const auto length = detail::read_raw<std::uint32_t>(in, "id length");
    std::string id(length, '\0');
    in.read(id.data(), length);
    if (in.gcount() != static_cast<std::streamsize>(length))
      raise(errc::parse_error, "truncated binary matrix: model id");
    model_ids.push_back(std::move(id));
  }
  std::vector<double> values(prompts * models);
  for (auto& v : values) v = detail::read_raw<double>(in, "matrix entry");
  return validate_matrix(std::move(values), prompts, std::move(model_ids));
}

inline DistanceMatrix read_matrix_binary(const std::string& path) {
  auto in = detail::open_for_read(path, /*binary=*/true);
  return read_matrix_binary(in);
}

// Sniffs the magic bytes and dispatches to the right reader.
inline DistanceMatrix read_matrix_file(const std::string& path) {
  {
    auto probe = detail::open_for_read(path, /*binary=*/true);
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    if (probe.gcount() == 4 && std::memcmp(magic, detail::kMatrixMagic, 4) == 0)
      return read_matrix_binary(path);
  }
  return read_matrix_csv(path);
}

// ===========================================================================
// Trace JSONL
// ===========================================================================

struct TraceFile {
  ModelTrace trace;
  std::vector<std::string> prompt_ids;
};

inline std::string path_stem(const std::string& path) {
  const std::size_t slash = path.find_last_of("/\\");
  std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
  const std::size_t dot = name.find_last_of('.');
  if (dot != std::string::npos && dot > 0) name = name.substr(0, dot);
  return name;
}

// One prompt per line. The model id defaults to the file stem so a directory
// of `<model>.jsonl` files names its own candidate set.
inline TraceFile read_trace_jsonl(const std::string& path,
                                  std::optional<std::string> model_id = {}) {
  auto in = detail::open_for_read(path);
  TraceFile file;
  file.trace.model_id = model_id.value_or(path_stem(path));

  std::string line;
  std::size_t line_number = 0;
  bool kind_known = false;
  std::vector<std::vector<double>> embedding_rows;

  auto fail = [&](const std::string& message) {
    raise(errc::parse_error,
          path + ", line " + std::to_string(line_number) + ": " + message);
  };

  while (std::getline(in, line)) {
    ++line_number;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    ordered_json record = ordered_json::parse(line, nullptr, false);
    if (record.is_discarded()) fail("malformed JSON");
    if (!record.is_object()) fail("expected a JSON object");
    if (!record.contains("prompt_id") || !record["prompt_id"].is_string())
      fail("missing string field 'prompt_id'");
    const bool has_token = record.contains("token");
    const bool has_embedding = record.contains("embedding");
    if (has_token == has_embedding)
      fail("each record needs exactly one of 'token' or 'embedding'");

    const TraceKind kind = has_token ? TraceKind::token : TraceKind::embedding;
    if (!kind_known) {
      file.trace.kind = kind;
      kind_known = true;
    } else if (kind != file.trace.kind) {
      fail(std::string("mixed trace kinds: file started with ") +
           trace_kind_name(file.trace.kind));
    }

    file.prompt_ids.push_back(record["prompt_id"].get<std::string>());
    if (has_token) {
      if (!record["token"].is_number_integer()) fail("'token' must be an integer");
      file.trace.tokens.push_back(record["token"].get<std::int64_t>());
    } else {
      if (!record["embedding"].is_array() || record["embedding"].empty())
        fail("'embedding' must be a non-empty array");
      std::vector<double> row;
      row.reserve(record["embedding"].size());
      for (const auto& v : record["embedding"]) {
        if (!v.is_number()) fail("'embedding' entries must be numbers");
        row.push_back(v.get<double>());
      }
      embedding_rows.push_back(std::move(row));
    }
  }
  if (line_number == 0 || file.prompt_ids.empty())
    raise(errc::parse_error, path + ": trace file has no records");

  if (file.trace.kind == TraceKind::embedding) {
    auto assembled =
        ModelTrace::from_embeddings(file.trace.model_id, embedding_rows);
    file.trace = std::move(assembled);
  }
  return file;
}

// Loads target + candidates and checks every file covers the same prompts in
// the same order; provenance statistics are per-prompt pairings, so silent
// misalignment would corrupt every downstream number.
inline TraceBundle load_trace_bundle(const std::string& target_path,
                                     const std::vector<std::string>& candidate_paths) {
  if (candidate_paths.empty())
    raise(errc::empty_candidate_set, "no candidate trace files given");
  TraceFile target = read_trace_jsonl(target_path);
  TraceBundle bundle;
  bundle.target = std::move(target.trace);
  for (const auto& path : candidate_paths) {
    TraceFile candidate = read_trace_jsonl(path);
    if (candidate.prompt_ids != target.prompt_ids) {
      std::size_t at = 0;
      const std::size_t limit =
          std::min(candidate.prompt_ids.size(), target.prompt_ids.size());
      while (at < limit && candidate.prompt_ids[at] == target.prompt_ids[at]) ++at;
      raise(errc::parse_error,
            path + ", line " + std::to_string(at + 1) +
                ": prompt ids do not match target trace '" + target_path + "'");
    }
    bundle.candidates.push_back(std::move(candidate.trace));
  }
  return bundle;
}

// ===========================================================================
// Scenario JSON
// ===========================================================================

inline ordered_json scenario_to_json(const SyntheticScenario& scenario) {
  ordered_json planted = ordered_json::array();
  for (const auto& p : scenario.true_provenance)
    planted.push_back({{"index", p.index}, {"hop", p.hop}});
  return ordered_json{
      {"candidates", scenario.candidate_count},
      {"prompts", scenario.prompt_count},
      {"distance_model", distance_model_name(scenario.distance_model)},
      {"true_provenance", planted},
      {"params",
       {{"mu_unrelated", scenario.params.mu_unrelated},
        {"mu_hop", {scenario.params.mu_hop[0], scenario.params.mu_hop[1],
                    scenario.params.mu_hop[2]}},
        {"spread", scenario.params.spread}}},
      {"seed", scenario.seed},
  };
}

inline SyntheticScenario scenario_from_json(const ordered_json& j) {
  auto fail = [](const std::string& message) {
    raise(errc::parse_error, "scenario: " + message);
  };
  if (!j.is_object()) fail("expected a JSON object");
  SyntheticScenario scenario;
  if (!j.contains("candidates") || !j["candidates"].is_number_unsigned())
    fail("missing unsigned field 'candidates'");
  scenario.candidate_count = j["candidates"].get<std::size_t>();
  if (!j.contains("prompts") || !j["prompts"].is_number_unsigned())
    fail("missing unsigned field 'prompts'");
  scenario.prompt_count = j["prompts"].get<std::size_t>();

  if (!j.contains("distance_model") || !j["distance_model"].is_string())
    fail("missing string field 'distance_model'");
  const auto model_name = j["distance_model"].get<std::string>();
  if (model_name == "bernoulli") {
    scenario.distance_model = DistanceModel::bernoulli;
    scenario.params = SyntheticScenario::token_defaults();
  } else if (model_name == "truncated_gaussian") {
    scenario.distance_model = DistanceModel::truncated_gaussian;
    scenario.params = SyntheticScenario::semantic_defaults();
  } else {
    fail("unknown distance_model '" + model_name + "'");
  }

  if (j.contains("true_provenance")) {
    if (!j["true_provenance"].is_array()) fail("'true_provenance' must be an array");
    for (const auto& entry : j["true_provenance"]) {
      if (!entry.is_object() || !entry.contains("index") || !entry.contains("hop"))
        fail("each planted model needs 'index' and 'hop'");
      PlantedModel planted;
      planted.index = entry["index"].get<std::size_t>();
      planted.hop = entry["hop"].get<int>();
      scenario.true_provenance.push_back(planted);
    }
  }
  if (j.contains("params")) {
    const auto& params = j["params"];
    if (!params.is_object()) fail("'params' must be an object");
    if (params.contains("mu_unrelated"))
      scenario.params.mu_unrelated = params["mu_unrelated"].get<double>();
    if (params.contains("mu_hop")) {
      if (!params["mu_hop"].is_array() || params["mu_hop"].size() != 3)
        fail("'mu_hop' must be an array of 3 means");
      for (std::size_t i = 0; i < 3; ++i)
        scenario.params.mu_hop[i] = params["mu_hop"][i].get<double>();
    }
    if (params.contains("spread"))
      scenario.params.spread = params["spread"].get<double>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) fail("'seed' must be unsigned");
    scenario.seed = j["seed"].get<std::uint64_t>();
  }
  scenario.validate();
  return scenario;
}

inline SyntheticScenario read_scenario_json(const std::string& path) {
  auto in = detail::open_for_read(path);
  ordered_json j = ordered_json::parse(in, nullptr, false);
  if (j.is_discarded())
    raise(errc::parse_error, path + ": malformed scenario JSON");
  return scenario_from_json(j);
}

// ===========================================================================
// Report JSON
// ===========================================================================

inline constexpr const char* kReportSchemaVersion = "1";

inline ordered_json config_to_json(const MpsConfig& config) {
  return ordered_json{
      {"alpha", config.alpha},
      {"permutations", config.permutations},
      {"seed", config.seed},
      {"variance_mode", variance_mode_name(config.variance_mode)},
      {"p_value_mode", p_value_mode_name(config.p_value_mode)},
      {"degenerate_epsilon", config.degenerate_epsilon},
  };
}

inline ordered_json iteration_to_json(const IterationRecord& record) {
  ordered_json j;
  j["active_ids"] = record.active_ids;
  j["t_statistics"] = record.t_statistics;
  if (record.t_min_observed)
    j["t_min_observed"] = *record.t_min_observed;
  else
    j["t_min_observed"] = nullptr;
  j["argmin_id"] = record.argmin_id.empty() ? ordered_json(nullptr)
                                            : ordered_json(record.argmin_id);
  if (record.p_value)
    j["p_value"] = *record.p_value;
  else
    j["p_value"] = nullptr;
  j["decision"] = decision_name(record.decision);
  return j;
}

inline ordered_json result_to_json(const MpsResult& result) {
  ordered_json iterations = ordered_json::array();
  for (const auto& record : result.iterations)
    iterations.push_back(iteration_to_json(record));
  return ordered_json{
      {"predicted_set", result.predicted_set},
      {"iterations", iterations},
      {"ni_score", result.ni_score},
      {"ni_score_untestable", result.ni_score_untestable},
      {"terminal_p_value", result.terminal_p_value},
      {"risk_verdict", risk_verdict_name(risk_verdict(result))},
  };
}

inline ordered_json pairwise_to_json(const PairwiseVerdict& verdict) {
  ordered_json j{
      {"suspect_id", verdict.suspect_id},
      {"is_provenance", verdict.is_provenance},
      {"control_contamination", verdict.control_contamination},
  };
  if (verdict.suspect_excluded_at)
    j["suspect_excluded_at"] = *verdict.suspect_excluded_at;
  else
    j["suspect_excluded_at"] = nullptr;
  j["audit"] = result_to_json(verdict.audit);
  return j;
}

inline ordered_json trial_to_json(const TrialRecord& record) {
  return ordered_json{
      {"trial", record.trial},       {"truth", record.truth},
      {"predicted", record.predicted}, {"ni_score", record.ni_score},
      {"iterations", record.iterations}, {"covered", record.covered},
      {"exact", record.exact},
  };
}

inline ordered_json evaluation_to_json(const EvaluationReport& report,
                                       bool include_per_trial = true) {
  ordered_json j{
      {"trials", report.trials},
      {"coverage_rate", report.coverage_rate},
      {"mean_set_size", report.mean_set_size},
      {"exact_recovery_rate", report.exact_recovery_rate},
      {"precision", report.precision},
      {"recall", report.recall},
      {"risky_rate", report.risky_rate},
  };
  if (include_per_trial) {
    ordered_json trials = ordered_json::array();
    for (const auto& record : report.per_trial)
      trials.push_back(trial_to_json(record));
    j["per_trial"] = trials;
  }
  return j;
}

// ===========================================================================
// Digests
// ===========================================================================

// FNV-1a over the raw bytes; enough to pin "which file produced this report"
// inside the report itself (not a cryptographic commitment).
inline std::string fnv1a64_hex(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ull;
  }
  char buffer[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buffer[i] = digits[hash & 0xf];
    hash >>= 4;
  }
  buffer[16] = '\0';
  return std::string("fnv1a64:") + buffer;
}

inline std::string digest_file(const std::string& path) {
  auto in = detail::open_for_read(path, /*binary=*/true);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();
  return fnv1a64_hex(bytes.data(), bytes.size());
}

}  // namespace mps
