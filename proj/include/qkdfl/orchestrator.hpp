#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qkdfl/bb84.hpp"
#include "qkdfl/datasets.hpp"
#include "qkdfl/model.hpp"
#include "qkdfl/param_vec.hpp"
#include "qkdfl/training.hpp"

namespace qkdfl::fl {

enum class AggregationMode { plain, classical_sa, qkd_sa };

AggregationMode mode_from_name(const std::string& name);
const char* mode_name(AggregationMode m) noexcept;
inline bool is_masked(AggregationMode m) noexcept { return m != AggregationMode::plain; }

enum class RoundStatus { secure, aborted };
const char* status_name(RoundStatus s) noexcept;

/// Validation metrics; the fields used depend on the task.
struct Utility {
  std::optional<double> nmse;
  std::optional<double> accuracy;
  std::optional<double> miou;
};

struct ClientLeakage {
  std::size_t client = 0;
  std::optional<double> cosine;   // absent when the delta is degenerate
  std::optional<double> pearson;
};

struct RoundReport {
  std::uint64_t round_index = 0;
  AggregationMode mode = AggregationMode::plain;
  bool eve_present = false;
  RoundStatus status = RoundStatus::secure;
  std::optional<double> qber;              // qkd_sa only
  std::optional<std::size_t> sifted_len;
  std::optional<std::size_t> final_len;
  Utility utility;                         // of the global model after the round
  std::optional<double> recon_error;       // absent in aborted rounds
  std::vector<ClientLeakage> leakage;
  std::optional<double> mean_cosine;       // mean over clients with defined proxies
  std::optional<double> mean_pearson;
  std::uint64_t bytes_down = 0;            // one broadcast of the global model
  std::uint64_t bytes_up = 0;              // K uploads
};

nlohmann::json to_json(const RoundReport& report);

struct RoundConfig {
  std::uint64_t round_index = 0;
  std::size_t num_clients = 0;
  AggregationMode mode = AggregationMode::qkd_sa;
  tasks::TrainOptions train;        // seed ignored; derived per round and client
  double qber_threshold = 0.08;
  qkd::Bb84Config bb84;             // rng_seed ignored; derived per round
  double mask_scale = 1e-3;
  std::size_t key_bits = 256;
  std::size_t prg_seed_bits = 256;  // classical_sa round-seed length
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void validate() const;
};

/// Client shards plus the validation set of one task.
class FederatedTask {
 public:
  virtual ~FederatedTask() = default;
  virtual const tasks::ModelSpec& spec() const noexcept = 0;
  virtual std::size_t num_clients() const noexcept = 0;
  virtual ParamVec train_client(const ParamVec& global, std::size_t client,
                                const tasks::TrainOptions& options) const = 0;
  virtual Utility evaluate(const ParamVec& params) const = 0;
};

std::unique_ptr<FederatedTask> make_channel_task(tasks::ModelSpec spec,
                                                 std::vector<std::vector<tasks::ChannelSample>> shards,
                                                 std::vector<tasks::ChannelSample> validation);
std::unique_ptr<FederatedTask> make_radar_task(tasks::ModelSpec spec,
                                               std::vector<std::vector<tasks::RadarSample>> shards,
                                               std::vector<tasks::RadarSample> validation);

struct RoundResult {
  ParamVec global;
  RoundReport report;
};

/// One federated round.
///
/// qkd_sa: one BB84 session; QBER >= threshold aborts the round before any
/// training or masking and returns `global` unchanged. Otherwise every
/// client trains from `global`, masked modes mask the uploads, the server
/// averages, and the report carries reconstruction error (max-norm between
/// the plain and masked means), per-client leakage proxies and byte counts.
RoundResult run_round(const ParamVec& global, const FederatedTask& task, const RoundConfig& cfg);

/// Seed key used by masked modes in round `cfg.round_index`: the BB84 key in
/// qkd_sa, PRG output in classical_sa.
struct RoundKey {
  BitString seed;
  std::optional<qkd::QkdSession> session;
};
RoundKey establish_round_key(const RoundConfig& cfg);

struct TrainingRun {
  ParamVec final_global;
  std::vector<RoundReport> reports;
};

/// Folds run_round over rounds 0..rounds-1 using `cfg` as the template.
TrainingRun run_training(ParamVec initial, const FederatedTask& task, std::size_t rounds,
                         const RoundConfig& cfg,
                         const std::function<void(const RoundReport&)>& on_round = {});

}  // namespace qkdfl::fl
