// qkdfl: run, report and validate experiment configs.
//
//   qkdfl run configs/channel_a.json --out runs/a --jobs 4
//   qkdfl report runs/a
//   qkdfl validate configs/channel_a.json
//
// Exit status: 0 success, 1 config or usage error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qkdfl/errors.hpp"
#include "qkdfl/experiment.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

qkdfl::exp::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed,
                                  const std::optional<std::string>& out) {
  auto cfg = qkdfl::exp::load_config(path);
  if (seed) cfg.seed = *seed;
  if (out) cfg.output_dir = *out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator of QKD-secured federated learning"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, run_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t jobs = 1;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config's master seed");
  run->add_option("--out", out, "Output directory (default: config output_dir)");
  run->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Rebuild leakage.csv from a run directory");
  report->add_option("rundir", run_dir, "Directory written by `run`")->required()->check(CLI::ExistingDirectory);

  auto* validate = app.add_subcommand("validate", "Check a config file without running it");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();
  validate->add_option("--seed", seed, "Override the config's master seed");
  validate->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*validate) {
      const auto cfg = load(config_path, seed, out);
      fmt::print("ok: experiment {} on {} (config hash {})\n", qkdfl::exp::experiment_name(cfg.experiment),
                 qkdfl::tasks::task_name(cfg.task), cfg.hash());
      return 0;
    }
    if (*run) {
      const auto cfg = load(config_path, seed, out);
      spdlog::info("experiment {} on {}, config hash {}", qkdfl::exp::experiment_name(cfg.experiment),
                   qkdfl::tasks::task_name(cfg.task), cfg.hash());
      const auto result = qkdfl::exp::run_experiment(cfg, jobs);
      const auto files = qkdfl::exp::write_outputs(result, cfg.output_dir);
      for (const auto& f : files) fmt::print("{}\n", (cfg.output_dir / f).string());
      return 0;
    }
    if (*report) {
      const auto rows = qkdfl::exp::report_leakage(run_dir);
      fmt::print("{} ({} secure rounds)\n", (std::filesystem::path(run_dir) / "leakage.csv").string(), rows);
      return 0;
    }
  } catch (const qkdfl::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
