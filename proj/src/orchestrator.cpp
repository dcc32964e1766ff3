#include "qkdfl/orchestrator.hpp"

#include <numeric>
#include <stdexcept>

#include "qkdfl/errors.hpp"
#include "qkdfl/masking.hpp"
#include "qkdfl/metrics.hpp"
#include "qkdfl/parallel.hpp"
#include "qkdfl/rng.hpp"

namespace qkdfl::fl {

AggregationMode mode_from_name(const std::string& name) {
  if (name == "plain") return AggregationMode::plain;
  if (name == "classical_sa") return AggregationMode::classical_sa;
  if (name == "qkd_sa") return AggregationMode::qkd_sa;
  throw std::invalid_argument("unknown aggregation mode: " + name);
}

const char* mode_name(AggregationMode m) noexcept {
  switch (m) {
    case AggregationMode::plain: return "plain";
    case AggregationMode::classical_sa: return "classical_sa";
    case AggregationMode::qkd_sa: return "qkd_sa";
  }
  return "?";
}

const char* status_name(RoundStatus s) noexcept { return s == RoundStatus::secure ? "SECURE" : "ABORTED"; }

namespace {

template <class T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const RoundReport& r) {
  nlohmann::json leakage = nlohmann::json::array();
  for (const auto& l : r.leakage) {
    leakage.push_back({{"client", l.client}, {"cosine", opt(l.cosine)}, {"pearson", opt(l.pearson)}});
  }
  nlohmann::json utility = nlohmann::json::object();
  if (r.utility.nmse) utility["nmse"] = *r.utility.nmse;
  if (r.utility.accuracy) utility["accuracy"] = *r.utility.accuracy;
  if (r.utility.miou) utility["miou"] = *r.utility.miou;
  return {{"round", r.round_index},
          {"mode", mode_name(r.mode)},
          {"eve", r.eve_present},
          {"status", status_name(r.status)},
          {"qber", opt(r.qber)},
          {"sifted_len", opt(r.sifted_len)},
          {"final_len", opt(r.final_len)},
          {"utility", utility},
          {"recon_error", opt(r.recon_error)},
          {"leakage", leakage},
          {"mean_cosine", opt(r.mean_cosine)},
          {"mean_pearson", opt(r.mean_pearson)},
          {"bytes_down", r.bytes_down},
          {"bytes_up", r.bytes_up}};
}

void RoundConfig::validate() const {
  if (num_clients == 0) throw std::invalid_argument("round needs at least one client");
  if (is_masked(mode) && num_clients < 2) throw std::invalid_argument("masked modes need K >= 2");
  if (!(qber_threshold > 0.0 && qber_threshold < 1.0)) {
    throw std::invalid_argument("qber_threshold must be in (0, 1)");
  }
  if (prg_seed_bits < 256) throw std::invalid_argument("prg_seed_bits must be >= 256");
  bb84.validate();
}

namespace {

template <class Sample>
class ShardedTask final : public FederatedTask {
 public:
  ShardedTask(tasks::ModelSpec spec, std::vector<std::vector<Sample>> shards, std::vector<Sample> validation)
      : spec_(std::move(spec)), shards_(std::move(shards)), validation_(std::move(validation)) {
    spec_.validate();
    for (std::size_t k = 0; k < shards_.size(); ++k) {
      if (shards_[k].empty()) throw std::invalid_argument("shard " + std::to_string(k) + " is empty");
    }
    if (validation_.empty()) throw std::invalid_argument("validation set is empty");
  }

  const tasks::ModelSpec& spec() const noexcept override { return spec_; }
  std::size_t num_clients() const noexcept override { return shards_.size(); }

  ParamVec train_client(const ParamVec& global, std::size_t client,
                        const tasks::TrainOptions& options) const override {
    return tasks::train_local(spec_, global, std::span<const Sample>(shards_.at(client)), options);
  }

  Utility evaluate(const ParamVec& params) const override {
    Utility u;
    if constexpr (std::is_same_v<Sample, tasks::ChannelSample>) {
      u.nmse = tasks::eval_channel(spec_, params, validation_);
    } else {
      const auto s = tasks::eval_radar(spec_, params, validation_);
      u.accuracy = s.accuracy;
      u.miou = s.miou;
    }
    return u;
  }

 private:
  tasks::ModelSpec spec_;
  std::vector<std::vector<Sample>> shards_;
  std::vector<Sample> validation_;
};

}  // namespace

std::unique_ptr<FederatedTask> make_channel_task(tasks::ModelSpec spec,
                                                 std::vector<std::vector<tasks::ChannelSample>> shards,
                                                 std::vector<tasks::ChannelSample> validation) {
  if (spec.task != tasks::TaskKind::channel) throw std::invalid_argument("spec is not a channel model");
  return std::make_unique<ShardedTask<tasks::ChannelSample>>(std::move(spec), std::move(shards),
                                                             std::move(validation));
}

std::unique_ptr<FederatedTask> make_radar_task(tasks::ModelSpec spec,
                                               std::vector<std::vector<tasks::RadarSample>> shards,
                                               std::vector<tasks::RadarSample> validation) {
  if (spec.task != tasks::TaskKind::radar) throw std::invalid_argument("spec is not a radar model");
  return std::make_unique<ShardedTask<tasks::RadarSample>>(std::move(spec), std::move(shards),
                                                           std::move(validation));
}

RoundKey establish_round_key(const RoundConfig& cfg) {
  RoundKey key;
  switch (cfg.mode) {
    case AggregationMode::plain:
      break;
    case AggregationMode::classical_sa: {
      Rng prg(derive_seed(cfg.seed, "round.prg", cfg.round_index));
      key.seed = BitString(cfg.prg_seed_bits);
      for (std::size_t i = 0; i < cfg.prg_seed_bits; ++i) key.seed.set(i, prg.bit());
      break;
    }
    case AggregationMode::qkd_sa: {
      qkd::Bb84Config bb = cfg.bb84;
      bb.rng_seed = derive_seed(cfg.seed, "round.qkd", cfg.round_index);
      key.session = qkd::run_bb84(bb);
      key.seed = key.session->key;
      break;
    }
  }
  return key;
}

RoundResult run_round(const ParamVec& global, const FederatedTask& task, const RoundConfig& cfg) {
  cfg.validate();
  const std::size_t K = cfg.num_clients;
  if (task.num_clients() != K) {
    throw std::invalid_argument("task has " + std::to_string(task.num_clients()) + " shards but K=" +
                                std::to_string(K));
  }
  if (!global.same_structure(tasks::init_params(task.spec()))) {
    throw std::invalid_argument("global parameters do not match the task model");
  }

  RoundReport report;
  report.round_index = cfg.round_index;
  report.mode = cfg.mode;
  report.eve_present = cfg.bb84.eve_present;

  const RoundKey key = establish_round_key(cfg);
  if (key.session) {
    report.qber = key.session->qber;
    report.sifted_len = key.session->sifted_len;
    report.final_len = key.session->final_len;
    if (key.session->aborted(cfg.qber_threshold)) {
      report.status = RoundStatus::aborted;
      report.utility = task.evaluate(global);
      return {global, std::move(report)};
    }
  }

  const std::uint64_t train_root = derive_seed(cfg.seed, "round.train", cfg.round_index);
  std::vector<ParamVec> local(K);
  parallel_for(K, cfg.jobs, [&](std::size_t k) {
    tasks::TrainOptions opts = cfg.train;
    opts.seed = derive_seed(train_root, "client", k);
    local[k] = task.train_client(global, k, opts);
  });

  std::vector<masking::MaskedUpdate> plain(K);
  for (std::size_t k = 0; k < K; ++k) plain[k] = {k, cfg.round_index, local[k]};

  std::vector<masking::MaskedUpdate> uploads;
  if (is_masked(cfg.mode)) {
    const masking::MaskingContext ctx{key.seed, cfg.round_index, K, cfg.mask_scale, cfg.key_bits};
    uploads.resize(K);
    parallel_for(K, cfg.jobs, [&](std::size_t k) { uploads[k] = masking::apply_pairwise_masks(local[k], k, ctx); });
  } else {
    uploads = plain;
  }

  ParamVec aggregated;
  if (K >= 2) {
    aggregated = masking::aggregate(uploads);
    const ParamVec plain_mean = masking::aggregate(plain);
    report.recon_error = max_abs_difference(plain_mean, aggregated);
  } else {
    aggregated = uploads.front().params;
    report.recon_error = 0.0;
  }

  double cos_sum = 0.0, pearson_sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < K; ++k) {
    ClientLeakage l{k, std::nullopt, std::nullopt};
    try {
      const auto p = masking::leakage_proxies(difference(local[k], global), difference(uploads[k].params, global));
      l.cosine = p.cosine;
      l.pearson = p.pearson;
      cos_sum += p.cosine;
      pearson_sum += p.pearson;
      ++defined;
    } catch (const UndefinedProxyError&) {
    }
    report.leakage.push_back(l);
  }
  if (defined > 0) {
    report.mean_cosine = cos_sum / static_cast<double>(defined);
    report.mean_pearson = pearson_sum / static_cast<double>(defined);
  }

  report.bytes_down = global.byte_size();
  report.bytes_up = static_cast<std::uint64_t>(K) * global.byte_size();
  report.status = RoundStatus::secure;
  report.utility = task.evaluate(aggregated);
  return {std::move(aggregated), std::move(report)};
}

TrainingRun run_training(ParamVec initial, const FederatedTask& task, std::size_t rounds,
                         const RoundConfig& cfg, const std::function<void(const RoundReport&)>& on_round) {
  if (rounds == 0) throw std::invalid_argument("run_training: rounds must be >= 1");
  TrainingRun run{std::move(initial), {}};
  for (std::size_t r = 0; r < rounds; ++r) {
    RoundConfig round_cfg = cfg;
    round_cfg.round_index = r;
    auto [next, report] = run_round(run.final_global, task, round_cfg);
    run.final_global = std::move(next);
    if (on_round) on_round(report);
    run.reports.push_back(std::move(report));
  }
  return run;
}

}  // namespace qkdfl::fl
