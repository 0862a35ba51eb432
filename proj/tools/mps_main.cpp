// mps — command-line front end for provenance-set audits.
//
// Subcommands:
//   run       audit a distance matrix (or build one from trace files)
//   ni-score  first-iteration negative-information score only
//   pairwise  suspect-vs-controls verdict
//   simulate  synthetic-lineage Monte Carlo evaluation
//
// Every command emits a single JSON report (stdout or --output). Reports are
// byte-identical across reruns with the same flags and seed, except for the
// "timings" block. Exit codes: 0 success, 2 configuration, 3 parse,
// 4 validation, 5 domain, 6 I/O.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <mps/core.hpp>
#include <mps/distances.hpp>
#include <mps/io.hpp>
#include <mps/mps.hpp>
#include <mps/simulator.hpp>

namespace {

using mps::ordered_json;

int exit_code_for(mps::errc code) {
  switch (code) {
    case mps::errc::config_error:
      return 2;
    case mps::errc::parse_error:
      return 3;
    case mps::errc::non_finite:
    case mps::errc::out_of_range:
    case mps::errc::duplicate_model_id:
    case mps::errc::empty_matrix:
    case mps::errc::kind_mismatch:
    case mps::errc::length_mismatch:
    case mps::errc::dimension_mismatch:
    case mps::errc::zero_norm_embedding:
      return 4;
    case mps::errc::io_error:
      return 6;
    default:
      return 5;  // domain errors: unknown ids, undersized sets, guards, ...
  }
}

struct CommonOptions {
  double alpha = 0.05;
  std::uint64_t permutations = 1000;
  std::optional<std::uint64_t> seed_flag;
  std::string variance_mode = "paper_literal";
  std::string p_value_mode = "raw";
  unsigned threads = 1;
  std::string output;
};

void add_common_flags(CLI::App* cmd, CommonOptions& options) {
  cmd->add_option("--alpha", options.alpha,
                  "Significance level in (0, 1) [default 0.05]");
  cmd->add_option("--permutations", options.permutations,
                  "Permutation rounds per test [default 1000]");
  cmd->add_option("--seed", options.seed_flag,
                  "Master seed (overrides MPS_SEED) [default 0]");
  cmd->add_option("--variance-mode", options.variance_mode,
                  "paper_literal | mean_scaled")
      ->check(CLI::IsMember({"paper_literal", "mean_scaled"}));
  cmd->add_option("--p-value-mode", options.p_value_mode,
                  "raw | add_one_smoothing")
      ->check(CLI::IsMember({"raw", "add_one_smoothing"}));
  cmd->add_option("--threads", options.threads,
                  "Worker threads; never affects results [default 1]")
      ->check(CLI::Range(1u, 256u));
  cmd->add_option("--output", options.output,
                  "Write the JSON report here instead of stdout");
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MPS_SEED")) {
    const std::string text(env);
    std::uint64_t value = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto result = std::from_chars(begin, end, value);
    if (result.ec != std::errc{} || result.ptr != end || text.empty())
      mps::raise(mps::errc::config_error,
                 "MPS_SEED must be an unsigned integer, got '" + text + "'");
    return value;
  }
  return 0;
}

mps::MpsConfig build_config(const CommonOptions& options) {
  mps::MpsConfig config;
  config.alpha = options.alpha;
  config.permutations = options.permutations;
  config.seed = resolve_seed(options.seed_flag);
  config.variance_mode = options.variance_mode == "mean_scaled"
                             ? mps::VarianceMode::mean_scaled
                             : mps::VarianceMode::paper_literal;
  config.p_value_mode = options.p_value_mode == "add_one_smoothing"
                            ? mps::PValueMode::add_one_smoothing
                            : mps::PValueMode::raw;
  config.validate();
  return config;
}

ordered_json report_skeleton(const std::string& command,
                             const mps::MpsConfig& config,
                             const CommonOptions& options) {
  return ordered_json{
      {"schema_version", mps::kReportSchemaVersion},
      {"command", command},
      {"config", mps::config_to_json(config)},
      {"threads", options.threads},
  };
}

void emit_report(ordered_json report, const CommonOptions& options,
                 std::chrono::steady_clock::time_point started) {
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  report["timings"] = ordered_json{{"elapsed_ms", elapsed}};
  const std::string text = report.dump(2) + "\n";
  if (options.output.empty()) {
    std::cout << text;
  } else {
    auto out = mps::detail::open_for_write(options.output);
    out << text;
    if (!out)
      mps::raise(mps::errc::io_error, "failed writing '" + options.output + "'");
  }
}

// Shared input plumbing for run/ni-score/pairwise: load a matrix directly or
// derive one from trace files.
struct MatrixInput {
  std::string matrix_path;
  std::string target_trace;
  std::vector<std::string> candidate_traces;
  std::string distance = "token";
};

void add_matrix_flags(CLI::App* cmd, MatrixInput& input, bool traces_allowed) {
  auto* matrix =
      cmd->add_option("--matrix", input.matrix_path,
                      "Distance matrix (CSV, or the MPSB binary format)");
  if (!traces_allowed) {
    matrix->required();
    return;
  }
  auto* target = cmd->add_option("--target-trace", input.target_trace,
                                 "Target model trace (JSONL)");
  auto* candidates =
      cmd->add_option("--candidate-traces", input.candidate_traces,
                      "Candidate trace files (JSONL, repeatable)");
  cmd->add_option("--distance", input.distance,
                  "Distance for traces: token | semantic")
      ->check(CLI::IsMember({"token", "semantic"}));
  matrix->excludes(target);
  matrix->excludes(candidates);
  target->needs(candidates);
  candidates->needs(target);
}

mps::DistanceMatrix load_matrix(const MatrixInput& input, ordered_json& input_block) {
  if (!input.matrix_path.empty()) {
    mps::DistanceMatrix matrix = mps::read_matrix_file(input.matrix_path);
    input_block["matrix_path"] = input.matrix_path;
    input_block["matrix_digest"] = mps::digest_file(input.matrix_path);
    input_block["prompt_count"] = matrix.prompt_count;
    input_block["model_ids"] = matrix.model_ids;
    return matrix;
  }
  if (input.target_trace.empty())
    mps::raise(mps::errc::config_error,
               "need either --matrix or --target-trace with --candidate-traces");

  mps::TraceBundle bundle =
      mps::load_trace_bundle(input.target_trace, input.candidate_traces);
  const bool want_token = input.distance == "token";
  const auto found = bundle.target.kind;
  if (want_token != (found == mps::TraceKind::token))
    mps::raise(mps::errc::kind_mismatch,
               std::string("--distance ") + input.distance + " but traces hold " +
                   mps::trace_kind_name(found) + " records");
  mps::DistanceMatrix matrix = mps::build_distance_matrix(bundle);

  input_block["target_trace"] = input.target_trace;
  input_block["target_digest"] = mps::digest_file(input.target_trace);
  ordered_json candidate_list = ordered_json::array();
  for (const auto& path : input.candidate_traces)
    candidate_list.push_back(
        ordered_json{{"path", path}, {"digest", mps::digest_file(path)}});
  input_block["candidate_traces"] = candidate_list;
  input_block["distance"] = input.distance;
  input_block["prompt_count"] = matrix.prompt_count;
  input_block["model_ids"] = matrix.model_ids;
  return matrix;
}

int cmd_run(const CommonOptions& options, const MatrixInput& input) {
  const auto started = std::chrono::steady_clock::now();
  const mps::MpsConfig config = build_config(options);
  ordered_json report = report_skeleton("run", config, options);
  ordered_json input_block;
  const mps::DistanceMatrix matrix = load_matrix(input, input_block);
  report["input"] = input_block;

  const mps::MpsResult result =
      mps::run_mps(matrix, mps::CandidateSet::all_active(matrix.model_ids),
                   config, options.threads);
  report["result"] = mps::result_to_json(result);
  emit_report(std::move(report), options, started);
  return 0;
}

int cmd_ni_score(const CommonOptions& options, const MatrixInput& input) {
  const auto started = std::chrono::steady_clock::now();
  const mps::MpsConfig config = build_config(options);
  ordered_json report = report_skeleton("ni-score", config, options);
  ordered_json input_block;
  const mps::DistanceMatrix matrix = load_matrix(input, input_block);
  report["input"] = input_block;

  const double score =
      mps::ni_score(matrix, mps::CandidateSet::all_active(matrix.model_ids),
                    config, options.threads);
  report["result"] = ordered_json{{"ni_score", score}};
  emit_report(std::move(report), options, started);
  return 0;
}

int cmd_pairwise(const CommonOptions& options, const MatrixInput& input,
                 const std::string& suspect,
                 const std::vector<std::string>& controls) {
  const auto started = std::chrono::steady_clock::now();
  const mps::MpsConfig config = build_config(options);
  ordered_json report = report_skeleton("pairwise", config, options);
  ordered_json input_block;
  const mps::DistanceMatrix matrix = load_matrix(input, input_block);
  input_block["suspect"] = suspect;
  input_block["controls"] = controls;
  report["input"] = input_block;

  const mps::PairwiseVerdict verdict =
      mps::pairwise_verdict(matrix, suspect, controls, config, options.threads);
  report["result"] = mps::pairwise_to_json(verdict);
  emit_report(std::move(report), options, started);
  return 0;
}

struct SimulateOptions {
  std::string scenario_path;
  std::uint64_t candidates = 10;
  std::uint64_t prompts = 500;
  std::string distance_model = "truncated_gaussian";
  std::uint64_t tam = 1;
  std::optional<double> mu_unrelated;
  std::vector<double> mu_hop;
  std::optional<double> spread;
  std::uint64_t scenario_seed = 0;
  std::uint64_t trials = 100;
  std::string per_trial_csv;
};

mps::SyntheticScenario build_scenario(const SimulateOptions& options) {
  if (!options.scenario_path.empty())
    return mps::read_scenario_json(options.scenario_path);

  mps::SyntheticScenario scenario;
  scenario.candidate_count = options.candidates;
  scenario.prompt_count = options.prompts;
  if (options.distance_model == "bernoulli") {
    scenario.distance_model = mps::DistanceModel::bernoulli;
    scenario.params = mps::SyntheticScenario::token_defaults();
  } else {
    scenario.distance_model = mps::DistanceModel::truncated_gaussian;
    scenario.params = mps::SyntheticScenario::semantic_defaults();
  }
  if (options.tam > 3)
    mps::raise(mps::errc::config_error, "--tam must be 0, 1, 2, or 3");
  for (std::uint64_t k = 0; k < options.tam; ++k)
    scenario.true_provenance.push_back(
        mps::PlantedModel{static_cast<std::size_t>(k), static_cast<int>(k + 1)});
  if (options.mu_unrelated) scenario.params.mu_unrelated = *options.mu_unrelated;
  if (!options.mu_hop.empty()) {
    if (options.mu_hop.size() != 3)
      mps::raise(mps::errc::config_error,
                 "--mu-hop needs exactly 3 values (hop 1, 2, 3)");
    for (std::size_t i = 0; i < 3; ++i) scenario.params.mu_hop[i] = options.mu_hop[i];
  }
  if (options.spread) scenario.params.spread = *options.spread;
  scenario.seed = options.scenario_seed;
  scenario.validate();
  return scenario;
}

void write_per_trial_csv(const std::string& path, const mps::EvaluationReport& report) {
  auto out = mps::detail::open_for_write(path);
  out << "trial,covered,exact,set_size,ni_score,truth,predicted\n";
  auto join = [](const std::vector<std::string>& ids) {
    std::string joined;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) joined += ';';
      joined += ids[i];
    }
    return joined;
  };
  for (const auto& record : report.per_trial) {
    out << record.trial << ',' << (record.covered ? 1 : 0) << ','
        << (record.exact ? 1 : 0) << ',' << record.predicted.size() << ','
        << mps::detail::format_double(record.ni_score) << ',' << join(record.truth)
        << ',' << join(record.predicted) << '\n';
  }
  if (!out) mps::raise(mps::errc::io_error, "failed writing '" + path + "'");
}

int cmd_simulate(const CommonOptions& options, const SimulateOptions& sim) {
  const auto started = std::chrono::steady_clock::now();
  const mps::MpsConfig config = build_config(options);
  if (sim.trials < 1)
    mps::raise(mps::errc::config_error, "--trials must be at least 1");
  const mps::SyntheticScenario scenario = build_scenario(sim);

  ordered_json report = report_skeleton("simulate", config, options);
  report["scenario"] = mps::scenario_to_json(scenario);
  if (!sim.scenario_path.empty()) {
    report["scenario_path"] = sim.scenario_path;
    report["scenario_digest"] = mps::digest_file(sim.scenario_path);
  }
  report["trials"] = sim.trials;

  const mps::EvaluationReport evaluation =
      mps::monte_carlo(scenario, sim.trials, config, options.threads);
  report["result"] = mps::evaluation_to_json(evaluation);
  if (!sim.per_trial_csv.empty()) {
    write_per_trial_csv(sim.per_trial_csv, evaluation);
    report["per_trial_csv"] = sim.per_trial_csv;
  }
  emit_report(std::move(report), options, started);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model provenance set auditing via permutation tests"};
  app.require_subcommand(1);

  CommonOptions run_common, ni_common, pair_common, sim_common;
  MatrixInput run_input, ni_input, pair_input;
  std::string suspect;
  std::vector<std::string> controls;
  SimulateOptions sim;

  auto* run = app.add_subcommand("run", "Audit a distance matrix");
  add_common_flags(run, run_common);
  add_matrix_flags(run, run_input, /*traces_allowed=*/true);

  auto* ni = app.add_subcommand("ni-score", "First-iteration p-value only");
  add_common_flags(ni, ni_common);
  add_matrix_flags(ni, ni_input, /*traces_allowed=*/false);

  auto* pairwise =
      app.add_subcommand("pairwise", "Suspect-vs-controls provenance verdict");
  add_common_flags(pairwise, pair_common);
  add_matrix_flags(pairwise, pair_input, /*traces_allowed=*/false);
  pairwise->add_option("--suspect", suspect, "Model id under suspicion")
      ->required();
  pairwise
      ->add_option("--controls", controls,
                   "Control model ids (repeatable or comma-separated)")
      ->required()
      ->delimiter(',');

  auto* simulate =
      app.add_subcommand("simulate", "Synthetic-lineage Monte Carlo evaluation");
  add_common_flags(simulate, sim_common);
  auto* scenario_file = simulate->add_option(
      "--scenario", sim.scenario_path, "Scenario description (JSON file)");
  simulate->add_option("--models", sim.candidates, "Candidate count [default 10]");
  simulate->add_option("--prompts", sim.prompts, "Prompt count [default 500]");
  simulate
      ->add_option("--distance-model", sim.distance_model,
                   "bernoulli | truncated_gaussian")
      ->check(CLI::IsMember({"bernoulli", "truncated_gaussian"}));
  simulate->add_option(
      "--tam", sim.tam,
      "True-answer models: plants hops 1..k at columns 0..k-1 [default 1]");
  simulate->add_option("--mu-unrelated", sim.mu_unrelated,
                       "Mean distance for unrelated models");
  simulate
      ->add_option("--mu-hop", sim.mu_hop,
                   "Mean distances for hops 1,2,3 (three values)")
      ->expected(3);
  simulate->add_option("--spread", sim.spread,
                       "Per-prompt stddev (truncated_gaussian only)");
  simulate->add_option("--scenario-seed", sim.scenario_seed,
                       "Seed for scenario generation [default 0]");
  simulate->add_option("--trials", sim.trials, "Monte Carlo trials [default 100]");
  simulate->add_option("--per-trial-csv", sim.per_trial_csv,
                       "Also write one CSV row per trial");
  scenario_file->excludes("--models")
      ->excludes("--prompts")
      ->excludes("--distance-model")
      ->excludes("--tam")
      ->excludes("--mu-unrelated")
      ->excludes("--mu-hop")
      ->excludes("--spread")
      ->excludes("--scenario-seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& help) {
    return app.exit(help);
  } catch (const CLI::ParseError& error) {
    app.exit(error);
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_common, run_input);
    if (ni->parsed()) return cmd_ni_score(ni_common, ni_input);
    if (pairwise->parsed())
      return cmd_pairwise(pair_common, pair_input, suspect, controls);
    if (simulate->parsed()) return cmd_simulate(sim_common, sim);
  } catch (const mps::Error& error) {
    std::cerr << "error (" << mps::errc_name(error.code()) << "): " << error.what()
              << "\n";
    return exit_code_for(error.code());
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << "\n";
    return 1;
  }
  return 0;
}
