#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neon/evolution.hpp"
#include "neon/task.hpp"

namespace neon {

// One row of the problems TSV: id, arity, formula s-expression, and a
// comma-separated `lo:hi` sampling range per variable.
struct ProblemSpec {
  std::string id;
  int arity = 0;
  std::string formula;
  std::vector<std::pair<double, double>> ranges;
  int samples = 100;
  ExprTree tree;
};

struct ProblemsFile {
  std::vector<ProblemSpec> problems;
  std::vector<std::string> rejections;  // rows using functions outside the DSL
};

ProblemsFile load_problems(const std::filesystem::path& path);
std::optional<const ProblemSpec*> find_problem(const ProblemsFile& pf,
                                               const std::string& id);

// Uniform inputs within the per-variable ranges; non-finite rows rejected and
// resampled; deterministic per (spec, seed).
SrTask materialize_task(const ProblemSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentPlan {
  std::vector<ProblemSpec> problems;
  std::vector<Variant> variants;
  std::vector<int> pops;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  RunConfig base;                   // per-cell variant/pop/seed are overridden
  const GatModel* model = nullptr;  // required when any variant needs it
  std::string model_digest;         // folded into the config hash
  int threads = 1;
};

struct ExperimentOutcome {
  int total = 0;
  int executed = 0;
  int resumed = 0;  // cells skipped because a completed result file existed
};

std::uint64_t cell_config_hash(const ProblemSpec& spec, const RunConfig& config,
                               const std::string& model_digest);
std::string cell_file_name(const std::string& problem, Variant v, int pop,
                           std::uint64_t seed);

// Runs every (problem, variant, pop, seed) cell into one JSON-lines file each
// plus a manifest; completed cells are skipped on resume.
ExperimentOutcome run_experiment(const ExperimentPlan& plan);

void write_run_jsonl(std::ostream& os, const ProblemSpec& spec, const RunConfig& config,
                     const RunResult& result, std::uint64_t config_hash);

// ---------------------------------------------------------------------------
// Reports

struct SummaryRow {
  std::string problem;
  std::string variant;
  int pop = 0;
  std::uint64_t seed = 0;
  int arity = 0;
  bool success = false;
  double best_mse = 0.0;
  int best_size = 0;
};

struct ReportData {
  std::vector<SummaryRow> rows;
  // (variant, pop) -> (successes, runs)
  std::map<std::pair<std::string, int>, std::pair<int, int>> by_variant_pop;
  // (variant, arity, pop) -> (successes, runs)
  std::map<std::tuple<std::string, int, int>, std::pair<int, int>> by_variant_arity_pop;
  // (variant, arity, pop) -> sizes of successful solutions
  std::map<std::tuple<std::string, int, int>, std::vector<int>> solved_sizes;
};

ReportData collect_report(const std::filesystem::path& results_dir);
// Writes success_rates.csv, success_by_arity.csv, solved_sizes.csv and prints
// the tables; "--" marks cells with no successful runs.
void write_report(const ReportData& data, const std::filesystem::path& csv_dir,
                  std::ostream& console);

std::string file_sha_hex(const std::filesystem::path& path);  // content digest

}  // namespace neon
