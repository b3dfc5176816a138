#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dbb/oracle.hpp"
#include "dbb/solvers.hpp"
#include "dbb/stats.hpp"

namespace dbb {

enum class Family {
  TimeToExpiration,
  Moneyness,
  LongTermVariance,
  TimeSteps,
  BatchSize,
  Epochs
};

Family family_from_string(const std::string& name);
std::string to_string(Family f);

// One ablation experiment: exactly one parameter sweeps, everything else is
// pinned to the base configs.
struct ExperimentSpec {
  Family family = Family::BatchSize;
  std::vector<double> sweep_values;
  std::vector<Method> methods;
  std::size_t runs_per_setting = 10;
  HestonParams base_market;
  SolverConfig base_solver;
  std::uint64_t seed_base = 0;
  std::size_t mc_paths = 100000;  // reference oracle budget
  std::size_t mc_steps = 1000;
  std::size_t workers = 0;  // 0 = hardware concurrency
  bool save_loss_curves = false;
  std::filesystem::path mc_cache_dir;  // empty = no on-disk cache

  void validate() const;
};

// Returns the (market, solver) configs for one sweep setting.
std::pair<HestonParams, SolverConfig> apply_setting(const ExperimentSpec& spec, double value);

// Deterministic per-run seed; pairwise distinct across
// (method index, setting index, run index).
std::uint64_t run_seed(const ExperimentSpec& spec, std::size_t method_idx,
                       std::size_t setting_idx, std::size_t run_idx);

struct RawRun {
  Method method = Method::DBSDE;
  double setting = 0.0;
  std::size_t run_index = 0;
  std::uint64_t seed = 0;
  double price = 0.0;
  bool diverged = false;
};

struct SummaryRow {
  Method method = Method::DBSDE;
  double setting = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double median_pe = 0.0;
  double iqr = 0.0;
  std::size_t n_runs = 0;
  double mc_reference = 0.0;
  std::size_t n_failed = 0;
};

struct ExperimentResult {
  std::vector<RawRun> runs;        // ordered by (method, setting, run index)
  std::vector<SummaryRow> rows;
  std::vector<McEstimate> references;  // one per setting, sweep order
};

// Monte Carlo reference for one market, with an optional on-disk cache keyed
// by the full parameter hash (a cache hit skips the simulation).
McEstimate mc_reference(const HestonParams& p, std::size_t n_paths, std::size_t n_steps,
                        const std::filesystem::path& cache_dir);

// Runs runs_per_setting solver runs per (method, setting), persists every raw
// run, then aggregates into quartile summaries. Diverged runs are excluded
// from the statistics but counted in n_failed. When out_dir is set, raw runs
// (and loss curves on request) are written there before aggregation.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::optional<std::filesystem::path>& out_dir = {});

// Pure re-aggregation of persisted raw runs; run_experiment uses exactly this.
std::vector<SummaryRow> aggregate_runs(const ExperimentSpec& spec,
                                       const std::vector<RawRun>& runs,
                                       const std::vector<McEstimate>& references);

void write_raw_csv(const std::filesystem::path& file, const std::vector<RawRun>& runs);
std::vector<RawRun> read_raw_csv(const std::filesystem::path& file);

// One CSV per experiment family with a stable column order plus an aligned
// text table on the given stream.
void emit_report(const std::vector<SummaryRow>& rows, Family family,
                 const std::filesystem::path& out_dir, std::ostream& text_out);

std::filesystem::path summary_csv_path(const std::filesystem::path& out_dir, Family family);
std::filesystem::path raw_csv_path(const std::filesystem::path& out_dir, Family family);

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& file);

}  // namespace dbb
