#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qkdfl/bb84.hpp"
#include "qkdfl/model.hpp"
#include "qkdfl/orchestrator.hpp"
#include "qkdfl/partition.hpp"
#include "qkdfl/training.hpp"

namespace qkdfl::exp {

inline constexpr int kSchemaVersion = 1;

enum class ExperimentKind { A, B, C };

/// Synthetic data and partitioning for experiments A and B.
struct DataConfig {
  std::size_t train_samples = 0;   // per SNR level (channel) or total (radar)
  std::size_t val_samples = 0;
  std::vector<double> snr_db;      // channel only
  std::size_t height = 0;          // channel only
  std::size_t width = 0;           // channel only
  std::size_t image_size = 0;      // radar only
  double skew = fl::kUniformSkew;  // Dirichlet concentration; "uniform" in JSON for infinity
};

/// Declarative description of one experiment. Every field that influences
/// numerics must be present in the JSON file; only `output_dir` may be omitted.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::A;
  tasks::TaskKind task = tasks::TaskKind::channel;
  std::uint64_t seed = 0;
  double qber_threshold = 0.08;
  qkd::Bb84Config bb84;

  // A and B
  std::vector<std::size_t> clients;
  std::size_t rounds = 0;
  std::vector<fl::AggregationMode> modes;
  bool eve = false;                     // A: Eve attacks every round
  std::vector<std::string> scenarios;   // B: subset of {"baseline", "eve"}
  double mask_scale = 1e-3;
  std::size_t key_bits = 256;
  std::size_t prg_seed_bits = 256;
  tasks::TrainOptions train;
  DataConfig data;
  std::string model_scale;              // "desk" or "paper"

  // C
  std::vector<double> eta_grid;
  std::size_t sessions_per_eta = 0;

  std::filesystem::path output_dir = "run";

  /// Canonical JSON form; round-trips through parse_config.
  nlohmann::json to_json() const;
  /// First 16 hex digits of SHA-256 over the canonical JSON (output_dir excluded).
  std::string hash() const;
};

const char* experiment_name(ExperimentKind k) noexcept;

/// Throws ConfigError naming the JSON path of the first problem.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// One (K, mode, scenario) cell of experiment A or B.
struct CellResult {
  std::size_t clients = 0;
  fl::AggregationMode mode = fl::AggregationMode::plain;
  std::string scenario;  // "baseline" or "eve"
  std::vector<fl::RoundReport> reports;
  fl::Utility final_utility;
  std::uint64_t param_count = 0;
};

/// One noise level of experiment C.
struct EtaPoint {
  double eta = 0.0;
  std::size_t sessions = 0;
  double mean_qber = 0.0;
  double qber_stderr = 0.0;
  double abort_rate = 0.0;
  double mean_sifted_len = 0.0;
  double mean_final_len = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<CellResult> cells;
  std::vector<EtaPoint> eta_points;
};

ExperimentResult run_experiment_a(const ExperimentConfig& cfg, std::size_t jobs = 1);
ExperimentResult run_experiment_b(const ExperimentConfig& cfg, std::size_t jobs = 1);
ExperimentResult run_experiment_c(const ExperimentConfig& cfg, std::size_t jobs = 1);
/// Dispatches on cfg.experiment.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1);

/// Column names of each CSV table, in order.
std::vector<std::string> csv_columns(const std::string& table);

/// Writes manifest.json, summary.json, rounds.jsonl (A/B) and the CSV
/// tables into `dir`. Returns the written file names.
std::vector<std::string> write_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

/// Rebuilds leakage.csv from a run directory's rounds.jsonl: one row per
/// SECURE round with utility, QBER and the mean leakage proxies. Logs a
/// warning and writes only the header if there are no secure rounds.
/// Returns the number of data rows.
std::size_t report_leakage(const std::filesystem::path& run_dir);

}  // namespace qkdfl::exp
