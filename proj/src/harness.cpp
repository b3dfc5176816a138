#include "dbb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "dbb/format.hpp"
#include "dbb/rng.hpp"

namespace dbb {

namespace {

constexpr const char* kQuantileNote = "# quantile_convention=linear_interpolation_type7";
constexpr std::uint64_t kMcReferenceSeed = 0x6d635265664ULL;  // fixed: references are
                                                              // method-independent

std::string family_slug(Family f) {
  switch (f) {
    case Family::TimeToExpiration: return "time_to_expiration";
    case Family::Moneyness: return "moneyness";
    case Family::LongTermVariance: return "long_term_variance";
    case Family::TimeSteps: return "time_steps";
    case Family::BatchSize: return "batch_size";
    case Family::Epochs: return "epochs";
  }
  return "?";
}

// FNV-1a over the full market parameter set plus the oracle budget.
std::uint64_t mc_cache_key(const HestonParams& p, std::size_t n_paths, std::size_t n_steps) {
  std::string blob;
  blob += std::to_string(p.d) + "|" + format_double(p.s0) + "|" + format_double(p.r) + "|" +
          format_double(p.t_mat) + "|" + format_double(p.nu0) + "|" + format_double(p.theta) +
          "|" + format_double(p.rho) + "|" + format_double(p.kappa) + "|" +
          format_double(p.xi) + "|" + format_double(p.moneyness) + "|" +
          std::to_string(n_paths) + "|" + std::to_string(n_steps);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : blob) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Family family_from_string(const std::string& name) {
  if (name == "TimeToExpiration") return Family::TimeToExpiration;
  if (name == "Moneyness") return Family::Moneyness;
  if (name == "LongTermVariance") return Family::LongTermVariance;
  if (name == "TimeSteps") return Family::TimeSteps;
  if (name == "BatchSize") return Family::BatchSize;
  if (name == "Epochs") return Family::Epochs;
  throw std::invalid_argument("unknown experiment family '" + name +
                              "' (TimeToExpiration, Moneyness, LongTermVariance, TimeSteps, "
                              "BatchSize, Epochs)");
}

std::string to_string(Family f) {
  switch (f) {
    case Family::TimeToExpiration: return "TimeToExpiration";
    case Family::Moneyness: return "Moneyness";
    case Family::LongTermVariance: return "LongTermVariance";
    case Family::TimeSteps: return "TimeSteps";
    case Family::BatchSize: return "BatchSize";
    case Family::Epochs: return "Epochs";
  }
  return "?";
}

void ExperimentSpec::validate() const {
  if (sweep_values.empty()) throw std::invalid_argument("experiment: sweep values are empty");
  if (methods.empty()) throw std::invalid_argument("experiment: no methods selected");
  if (runs_per_setting < 1)
    throw std::invalid_argument("experiment: runs_per_setting must be >= 1");
  if (mc_paths < 2) throw std::invalid_argument("experiment: mc_paths must be >= 2");
  if (mc_steps < 1) throw std::invalid_argument("experiment: mc_steps must be >= 1");
  base_market.validate();
  for (double v : sweep_values) {
    switch (family) {
      case Family::TimeToExpiration:
      case Family::Moneyness:
        if (!(v > 0.0)) throw std::invalid_argument("experiment: sweep values must be positive");
        break;
      case Family::LongTermVariance:
        if (v < 0.0) throw std::invalid_argument("experiment: variance sweep must be >= 0");
        break;
      case Family::TimeSteps:
      case Family::BatchSize:
      case Family::Epochs:
        if (!(v >= 1.0) || v != std::floor(v))
          throw std::invalid_argument("experiment: sweep values must be positive integers");
        break;
    }
  }
}

std::pair<HestonParams, SolverConfig> apply_setting(const ExperimentSpec& spec, double value) {
  HestonParams market = spec.base_market;
  SolverConfig solver = spec.base_solver;
  switch (spec.family) {
    case Family::TimeToExpiration: market.t_mat = value; break;
    case Family::Moneyness: market.moneyness = value; break;
    case Family::LongTermVariance: market.theta = value; break;
    case Family::TimeSteps: solver.n_steps = static_cast<std::size_t>(value); break;
    case Family::BatchSize: solver.batch = static_cast<std::size_t>(value); break;
    case Family::Epochs:
      // Sweeps the training budget: the whole budget for the forward scheme,
      // the first-step budget for backward schemes (later steps keep the base
      // iters_rest).
      solver.iters_forward = static_cast<std::size_t>(value);
      solver.iters_first = static_cast<std::size_t>(value);
      break;
  }
  return {market, solver};
}

std::uint64_t run_seed(const ExperimentSpec& spec, std::size_t method_idx,
                       std::size_t setting_idx, std::size_t run_idx) {
  // Structured arithmetic keeps seeds pairwise distinct across
  // (method, setting, run) for any seed_base.
  const std::uint64_t stride_runs = spec.runs_per_setting;
  const std::uint64_t stride_settings = spec.sweep_values.size();
  return spec.seed_base +
         (static_cast<std::uint64_t>(method_idx) * stride_settings + setting_idx) * stride_runs +
         run_idx;
}

McEstimate mc_reference(const HestonParams& p, std::size_t n_paths, std::size_t n_steps,
                        const std::filesystem::path& cache_dir) {
  std::filesystem::path cache_file;
  if (!cache_dir.empty()) {
    std::ostringstream name;
    name << "mcref_" << std::hex << std::setw(16) << std::setfill('0')
         << mc_cache_key(p, n_paths, n_steps) << ".txt";
    cache_file = cache_dir / name.str();
    if (std::filesystem::exists(cache_file)) {
      const CsvTable t = read_csv(cache_file);
      if (t.rows.size() == 1 && t.rows[0].size() == 4) {
        McEstimate est;
        est.price = parse_double(t.rows[0][0]);
        est.std_error = parse_double(t.rows[0][1]);
        est.n_paths = static_cast<std::size_t>(parse_u64(t.rows[0][2]));
        est.n_steps = static_cast<std::size_t>(parse_u64(t.rows[0][3]));
        return est;
      }
    }
  }

  const McEstimate est = mc_price(p, n_paths, n_steps, kMcReferenceSeed);
  if (!cache_file.empty()) {
    std::filesystem::create_directories(cache_dir);
    CsvTable t;
    t.header = {"price", "std_error", "n_paths", "n_steps"};
    t.rows.push_back({format_double(est.price), format_double(est.std_error),
                      std::to_string(est.n_paths), std::to_string(est.n_steps)});
    write_csv(cache_file, t);
  }
  return est;
}

std::vector<SummaryRow> aggregate_runs(const ExperimentSpec& spec,
                                       const std::vector<RawRun>& runs,
                                       const std::vector<McEstimate>& references) {
  if (references.size() != spec.sweep_values.size())
    throw std::invalid_argument("aggregate_runs: one reference per setting required");

  std::vector<SummaryRow> rows;
  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
    for (std::size_t si = 0; si < spec.sweep_values.size(); ++si) {
      const double setting = spec.sweep_values[si];
      std::vector<double> prices;
      std::size_t failed = 0;
      for (const RawRun& r : runs) {
        if (r.method != spec.methods[mi] || r.setting != setting) continue;
        if (r.diverged || !std::isfinite(r.price))
          ++failed;
        else
          prices.push_back(r.price);
      }
      if (prices.empty())
        throw std::runtime_error("aggregate_runs: no usable runs for " +
                                 to_string(spec.methods[mi]) + " at setting " +
                                 format_double(setting));
      // A singleton sample degenerates to q1 = median = q3 = the value.
      const Quartiles q = prices.size() == 1 ? Quartiles{prices[0], prices[0], prices[0]}
                                             : quartiles(prices);
      SummaryRow row;
      row.method = spec.methods[mi];
      row.setting = setting;
      row.q1 = q.q1;
      row.median = q.median;
      row.q3 = q.q3;
      row.median_pe = median_pe(q.median, references[si].price);
      row.iqr = iqr(q.q1, q.q3);
      row.n_runs = prices.size();
      row.mc_reference = references[si].price;
      row.n_failed = failed;
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {

// Fixed-size worker pool over an index range; the output slots make results
// independent of scheduling.
void parallel_for(std::size_t n_tasks, std::size_t workers,
                  const std::function<void(std::size_t)>& task) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n_tasks);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n_tasks) break;
        task(i);
      }
    });
  for (auto& th : pool) th.join();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::optional<std::filesystem::path>& out_dir) {
  spec.validate();

  ExperimentResult result;
  for (double v : spec.sweep_values) {
    const auto [market, solver] = apply_setting(spec, v);
    (void)solver;
    result.references.push_back(mc_reference(market, spec.mc_paths, spec.mc_steps,
                                             spec.mc_cache_dir));
  }

  const std::size_t n_methods = spec.methods.size();
  const std::size_t n_settings = spec.sweep_values.size();
  const std::size_t n_tasks = n_methods * n_settings * spec.runs_per_setting;
  result.runs.resize(n_tasks);
  std::vector<SolverRun> full_runs(spec.save_loss_curves ? n_tasks : 0);

  parallel_for(n_tasks, spec.workers, [&](std::size_t idx) {
    const std::size_t mi = idx / (n_settings * spec.runs_per_setting);
    const std::size_t si = (idx / spec.runs_per_setting) % n_settings;
    const std::size_t ri = idx % spec.runs_per_setting;
    auto [market, solver] = apply_setting(spec, spec.sweep_values[si]);
    solver.method = spec.methods[mi];
    solver.seed = run_seed(spec, mi, si, ri);
    const DiscountDriver drv(market.r);
    const SolverRun run = solve(solver, market, drv);

    RawRun raw;
    raw.method = spec.methods[mi];
    raw.setting = spec.sweep_values[si];
    raw.run_index = ri;
    raw.seed = solver.seed;
    raw.price = run.price;
    raw.diverged = run.diverged;
    result.runs[idx] = raw;
    if (spec.save_loss_curves) full_runs[idx] = run;
  });

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_raw_csv(raw_csv_path(*out_dir, spec.family), result.runs);
    if (spec.save_loss_curves) {
      for (std::size_t idx = 0; idx < n_tasks; ++idx) {
        const RawRun& raw = result.runs[idx];
        CsvTable t;
        t.header = {"iteration", "val_loss"};
        for (const LossPoint& lp : full_runs[idx].loss_curve)
          t.rows.push_back({std::to_string(lp.iteration), format_double(lp.loss)});
        std::ostringstream name;
        name << "loss_" << to_string(raw.method) << "_" << format_double(raw.setting) << "_r"
             << raw.run_index << ".csv";
        write_csv(*out_dir / name.str(), t);
      }
    }
  }

  result.rows = aggregate_runs(spec, result.runs, result.references);
  return result;
}

void write_raw_csv(const std::filesystem::path& file, const std::vector<RawRun>& runs) {
  CsvTable t;
  t.header = {"method", "setting", "run_index", "seed", "price", "diverged"};
  for (const RawRun& r : runs)
    t.rows.push_back({to_string(r.method), format_double(r.setting), std::to_string(r.run_index),
                      std::to_string(r.seed), format_double(r.price),
                      r.diverged ? "true" : "false"});
  write_csv(file, t);
}

std::vector<RawRun> read_raw_csv(const std::filesystem::path& file) {
  const CsvTable t = read_csv(file);
  const std::vector<std::string> expect = {"method", "setting",
                                           "run_index", "seed",
                                           "price",  "diverged"};
  if (t.header != expect) throw std::runtime_error("unexpected raw run CSV header in " +
                                                   file.string());
  std::vector<RawRun> runs;
  for (const auto& row : t.rows) {
    if (row.size() != 6) throw std::runtime_error("bad raw run row in " + file.string());
    RawRun r;
    r.method = method_from_string(row[0]);
    r.setting = parse_double(row[1]);
    r.run_index = static_cast<std::size_t>(parse_u64(row[2]));
    r.seed = parse_u64(row[3]);
    r.price = parse_double(row[4]);
    r.diverged = parse_bool(row[5]);
    runs.push_back(r);
  }
  return runs;
}

std::filesystem::path summary_csv_path(const std::filesystem::path& out_dir, Family family) {
  return out_dir / ("summary_" + family_slug(family) + ".csv");
}

std::filesystem::path raw_csv_path(const std::filesystem::path& out_dir, Family family) {
  return out_dir / ("runs_" + family_slug(family) + ".csv");
}

void emit_report(const std::vector<SummaryRow>& rows, Family family,
                 const std::filesystem::path& out_dir, std::ostream& text_out) {
  if (rows.empty()) throw std::invalid_argument("emit_report: no rows");
  std::filesystem::create_directories(out_dir);

  CsvTable t;
  t.comments = {kQuantileNote};
  t.header = {"method", "setting",  "q1",     "median",       "q3",
              "median_pe", "iqr", "n_runs", "mc_reference", "n_failed"};
  for (const SummaryRow& r : rows)
    t.rows.push_back({to_string(r.method), format_double(r.setting), format_double(r.q1),
                      format_double(r.median), format_double(r.q3), format_double(r.median_pe),
                      format_double(r.iqr), std::to_string(r.n_runs),
                      format_double(r.mc_reference), std::to_string(r.n_failed)});
  write_csv(summary_csv_path(out_dir, family), t);

  text_out << to_string(family) << " (headline metric: "
           << (family == Family::BatchSize ? "IQR" : "MedianPE") << ")\n";
  text_out << std::left << std::setw(8) << "method" << std::right << std::setw(12) << "setting"
           << std::setw(12) << "q1" << std::setw(12) << "median" << std::setw(12) << "q3"
           << std::setw(12) << "medianPE%" << std::setw(12) << "iqr" << std::setw(8) << "runs"
           << std::setw(12) << "mc_ref" << std::setw(8) << "failed" << "\n";
  for (const SummaryRow& r : rows) {
    text_out << std::left << std::setw(8) << to_string(r.method) << std::right << std::fixed
             << std::setprecision(4) << std::setw(12) << r.setting << std::setw(12) << r.q1
             << std::setw(12) << r.median << std::setw(12) << r.q3 << std::setw(12)
             << r.median_pe << std::setw(12) << r.iqr << std::setw(8) << r.n_runs
             << std::setw(12) << r.mc_reference << std::setw(8) << r.n_failed << "\n";
    text_out.unsetf(std::ios::fixed);
  }
  text_out.flush();
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& file) {
  const CsvTable t = read_csv(file);
  std::vector<SummaryRow> rows;
  for (const auto& row : t.rows) {
    if (row.size() != 10) throw std::runtime_error("bad summary row in " + file.string());
    SummaryRow r;
    r.method = method_from_string(row[0]);
    r.setting = parse_double(row[1]);
    r.q1 = parse_double(row[2]);
    r.median = parse_double(row[3]);
    r.q3 = parse_double(row[4]);
    r.median_pe = parse_double(row[5]);
    r.iqr = parse_double(row[6]);
    r.n_runs = static_cast<std::size_t>(parse_u64(row[7]));
    r.mc_reference = parse_double(row[8]);
    r.n_failed = static_cast<std::size_t>(parse_u64(row[9]));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace dbb
