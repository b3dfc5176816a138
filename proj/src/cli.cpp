#include "dbb/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "dbb/config.hpp"
#include "dbb/format.hpp"

namespace dbb {

namespace {

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("DBB_OUTPUT_DIR")) return std::filesystem::path(env);
  return std::filesystem::path("dbb-out");
}

void build_parser(CLI::App& app, Command& cmd) {
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub, bool seed_required) {
    sub->add_option("--config", cmd.config, "INI config file")->required();
    sub->add_option("--set", cmd.overrides, "override, e.g. solver.method=DS (repeatable)");
    auto* seed_opt = sub->add_option_function<std::uint64_t>(
        "--seed", [&cmd](const std::uint64_t& s) { cmd.seed = s; }, "run seed");
    if (seed_required) seed_opt->required();
    sub->add_option("--out", cmd.out_dir, "output directory (default $DBB_OUTPUT_DIR)");
  };

  auto* simulate = app.add_subcommand("simulate", "simulate a path batch and dump it");
  add_common(simulate, false);
  simulate->add_option("--steps", cmd.n_steps, "time steps");
  simulate->add_option("--batch", cmd.batch, "number of paths");

  auto* mc = app.add_subcommand("mc-price", "Monte Carlo reference price");
  add_common(mc, false);
  mc->add_option("--paths", cmd.mc_paths, "Monte Carlo paths");
  mc->add_option("--steps", cmd.mc_steps, "Monte Carlo time steps");
  mc->add_option("--workers", cmd.workers, "thread count (default: cores)");

  auto* solvecmd = app.add_subcommand("solve", "train one solver and report the price");
  add_common(solvecmd, true);
  solvecmd->add_flag("--loss-curve", cmd.loss_curve, "also write the validation loss curve CSV");

  auto* exp = app.add_subcommand("experiment", "run a seeded multi-run experiment");
  add_common(exp, true);
  exp->add_option("--workers", cmd.workers, "worker threads (default: cores)");
  exp->add_flag("--loss-curve", cmd.loss_curve, "persist per-run loss curves");

  auto* report = app.add_subcommand("report", "re-aggregate persisted raw runs");
  add_common(report, false);
  report->add_option("--runs", cmd.runs_file, "raw runs CSV from a previous experiment")
      ->required();
}

ConfigMap load_config(const Command& cmd) {
  ConfigMap cfg = parse_config_file(cmd.config);
  apply_overrides(cfg, cmd.overrides);
  return cfg;
}

void write_manifest(const std::filesystem::path& out_dir, const Command& cmd,
                    const ConfigMap& cfg, double wall_time_s) {
  std::ofstream os(out_dir / "manifest.txt", std::ios::binary);
  os << "subcommand=" << cmd.subcommand << '\n';
  os << "config=" << cmd.config.string() << '\n';
  for (const auto& ov : cmd.overrides) os << "override=" << ov << '\n';
  {
    std::ostringstream hex;
    hex << std::hex << config_hash(cfg);
    os << "config_hash=" << hex.str() << '\n';
  }
  os << "seed=" << (cmd.seed ? std::to_string(*cmd.seed) : std::string("none")) << '\n';
  os << "version=" << kVersion << '\n';
  os << "wall_time_s=" << format_double(wall_time_s) << '\n';
}

int do_simulate(const Command& cmd, const ConfigMap& cfg) {
  const HestonParams market = market_from_config(cfg);
  const std::uint64_t seed = cmd.seed.value_or(0);
  const auto t0 = std::chrono::steady_clock::now();
  const PathBatch paths = simulate_paths(market, cmd.n_steps, cmd.batch, seed);
  std::filesystem::create_directories(cmd.out_dir);
  save_tensors(cmd.out_dir / "paths.bin", {{"states", paths.states}, {"dw", paths.dw}});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(cmd.out_dir, cmd, cfg, secs);
  std::cout << "paths=" << cmd.batch << " steps=" << cmd.n_steps
            << " dt=" << format_double(paths.dt) << " file="
            << (cmd.out_dir / "paths.bin").string() << "\n";
  return kExitOk;
}

int do_mc_price(const Command& cmd, const ConfigMap& cfg) {
  const HestonParams market = market_from_config(cfg);
  const std::uint64_t seed = cmd.seed.value_or(0);
  const auto t0 = std::chrono::steady_clock::now();
  const McEstimate est = mc_price(market, cmd.mc_paths, cmd.mc_steps, seed, cmd.workers);
  std::filesystem::create_directories(cmd.out_dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(cmd.out_dir, cmd, cfg, secs);
  std::cout << "price=" << format_double(est.price) << " stderr=" << format_double(est.std_error)
            << "\n";
  return kExitOk;
}

int do_solve(const Command& cmd, const ConfigMap& cfg) {
  const HestonParams market = market_from_config(cfg);
  SolverConfig solver = solver_from_config(cfg);
  solver.seed = *cmd.seed;
  const DiscountDriver drv(market.r);
  const SolverRun run = solve(solver, market, drv);

  std::filesystem::create_directories(cmd.out_dir);
  CsvTable t;
  t.header = {"method", "n_steps", "batch", "seed", "price", "diverged"};
  t.rows.push_back({to_string(solver.method), std::to_string(solver.n_steps),
                    std::to_string(solver.batch), std::to_string(solver.seed),
                    format_double(run.price), run.diverged ? "true" : "false"});
  write_csv(cmd.out_dir / "run.csv", t);
  if (cmd.loss_curve) {
    CsvTable lc;
    lc.header = {"iteration", "val_loss"};
    for (const LossPoint& lp : run.loss_curve)
      lc.rows.push_back({std::to_string(lp.iteration), format_double(lp.loss)});
    write_csv(cmd.out_dir / "loss_curve.csv", lc);
  }
  write_manifest(cmd.out_dir, cmd, cfg, run.wall_time);

  if (run.diverged) {
    std::cerr << run.note << "\n";
    return kExitDiverged;
  }
  std::cout << "method=" << to_string(solver.method) << " price=" << format_double(run.price)
            << "\n";
  return kExitOk;
}

int do_experiment(const Command& cmd, const ConfigMap& cfg) {
  ExperimentSpec spec = experiment_from_config(cfg);
  spec.seed_base = *cmd.seed;
  if (cmd.workers) spec.workers = cmd.workers;
  if (cmd.loss_curve) spec.save_loss_curves = true;
  std::filesystem::create_directories(cmd.out_dir);
  if (spec.mc_cache_dir.empty()) spec.mc_cache_dir = cmd.out_dir / "mc_cache";

  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentResult result = run_experiment(spec, cmd.out_dir);
  emit_report(result.rows, spec.family, cmd.out_dir, std::cout);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(cmd.out_dir, cmd, cfg, secs);
  return kExitOk;
}

int do_report(const Command& cmd, const ConfigMap& cfg) {
  ExperimentSpec spec = experiment_from_config(cfg);
  if (cmd.seed) spec.seed_base = *cmd.seed;
  std::filesystem::create_directories(cmd.out_dir);
  if (spec.mc_cache_dir.empty()) spec.mc_cache_dir = cmd.out_dir / "mc_cache";

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<RawRun> runs = read_raw_csv(cmd.runs_file);
  std::vector<McEstimate> references;
  for (double v : spec.sweep_values) {
    const auto [market, solver] = apply_setting(spec, v);
    (void)solver;
    references.push_back(mc_reference(market, spec.mc_paths, spec.mc_steps, spec.mc_cache_dir));
  }
  const std::vector<SummaryRow> rows = aggregate_runs(spec, runs, references);
  emit_report(rows, spec.family, cmd.out_dir, std::cout);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(cmd.out_dir, cmd, cfg, secs);
  return kExitOk;
}

}  // namespace

Command parse_args(const std::vector<std::string>& argv) {
  Command cmd;
  cmd.out_dir = default_out_dir();
  CLI::App app{"deep BSDE/PDE option pricing bench"};
  build_parser(app, cmd);

  std::vector<const char*> cargs;
  cargs.push_back("dbb");
  for (const auto& a : argv) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  cmd.subcommand = app.get_subcommands().front()->get_name();
  return cmd;
}

int dispatch(const Command& cmd) {
  try {
    const ConfigMap cfg = load_config(cmd);
    if (cmd.subcommand == "simulate") return do_simulate(cmd, cfg);
    if (cmd.subcommand == "mc-price") return do_mc_price(cmd, cfg);
    if (cmd.subcommand == "solve") return do_solve(cmd, cfg);
    if (cmd.subcommand == "experiment") return do_experiment(cmd, cfg);
    if (cmd.subcommand == "report") return do_report(cmd, cfg);
    std::cerr << "unknown subcommand '" << cmd.subcommand << "'\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int run_cli(int argc, const char* const* argv) {
  Command cmd;
  cmd.out_dir = default_out_dir();
  CLI::App app{"deep BSDE/PDE option pricing bench"};
  build_parser(app, cmd);
  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and usage hint
    return kExitConfig;
  }
  cmd.subcommand = app.get_subcommands().front()->get_name();
  return dispatch(cmd);
}

}  // namespace dbb
