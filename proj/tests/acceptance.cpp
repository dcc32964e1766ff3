// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "gradcheck.hpp"
#include "qkdfl/bb84.hpp"
#include "qkdfl/experiment.hpp"
#include "qkdfl/masking.hpp"
#include "qkdfl/metrics.hpp"
#include "qkdfl/orchestrator.hpp"
#include "qkdfl/partition.hpp"
#include "qkdfl/rng.hpp"

using namespace qkdfl;
namespace fs = std::filesystem;

namespace {

const std::string kDataDir = QKDFL_TEST_DATA_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Records a check; the first failing check's message is kept.
class Checks {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok && pass_) {
      pass_ = false;
      failure_ = what;
    }
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
  Outcome outcome() const { return {pass_, pass_ ? notes_ : failure_ + (notes_.empty() ? "" : " | " + notes_)}; }

 private:
  bool pass_ = true;
  std::string failure_, notes_;
};

fl::RoundConfig round_cfg(std::size_t k, fl::AggregationMode mode, bool eve, std::uint64_t seed) {
  fl::RoundConfig c;
  c.num_clients = k;
  c.mode = mode;
  c.train.epochs = 1;
  c.train.batch_size = 4;
  c.bb84.eve_present = eve;
  c.seed = seed;
  return c;
}

std::unique_ptr<fl::FederatedTask> channel_task(const tasks::ModelSpec& spec, std::size_t k, std::size_t per_client,
                                                std::uint64_t seed) {
  const auto train = tasks::gen_channel_dataset(k * per_client, 10.0, {48, 14}, seed);
  auto val = tasks::gen_channel_dataset(8, 10.0, {48, 14}, seed + 1);
  std::vector<std::size_t> keys(train.size(), 0);
  const auto shards = fl::partition_non_iid(keys, k, fl::kUniformSkew, seed);
  return fl::make_channel_task(spec, fl::materialize(std::span<const tasks::ChannelSample>(train), shards),
                               std::move(val));
}

std::unique_ptr<fl::FederatedTask> radar_task(const tasks::ModelSpec& spec, std::size_t k, std::uint64_t seed) {
  const auto train = tasks::gen_radar_dataset(k, 32, seed);
  auto val = tasks::gen_radar_dataset(2, 32, seed + 1);
  std::vector<std::size_t> keys(train.size(), 0);
  const auto shards = fl::partition_non_iid(keys, k, fl::kUniformSkew, seed);
  return fl::make_radar_task(spec, fl::materialize(std::span<const tasks::RadarSample>(train), shards),
                             std::move(val));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. Masked and plain means agree in every secure round.
Outcome mask_cancellation() {
  Checks c;
  double worst = 0.0;
  std::size_t rounds = 0;
  for (auto spec : {tasks::ModelSpec::channel_desk(1), tasks::ModelSpec::radar_desk(1)}) {
    const auto init = tasks::init_params(spec);
    c.require(init.total_len() >= 1000 && init.total_len() <= 1000000, "desk model outside 1e3..1e6 params");
    for (std::size_t k : {2, 3, 10, 20}) {
      const auto task = spec.task == tasks::TaskKind::channel ? channel_task(spec, k, 2, 10 + k) : radar_task(spec, k, 10 + k);
      for (auto mode : {fl::AggregationMode::qkd_sa, fl::AggregationMode::classical_sa}) {
        const auto run = fl::run_training(init, *task, 2, round_cfg(k, mode, false, 100 + k));
        for (const auto& r : run.reports) {
          c.require(r.status == fl::RoundStatus::secure, "unexpected abort");
          worst = std::max(worst, r.recon_error.value_or(1.0));
          ++rounds;
        }
      }
    }
  }
  c.require(worst < 1e-5, fmt::format("recon error {:.3e} >= 1e-5", worst));
  c.note(fmt::format("{} secure rounds over K in {{2,3,10,20}}, channel and radar; max recon error {:.3e}", rounds, worst));
  return c.outcome();
}

// 2. Intercept-resend Eve is always detected and the model stays frozen.
Outcome eve_detection() {
  Checks c;
  double sum = 0.0, lo = 1.0, hi = 0.0;
  std::size_t sifted = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    qkd::Bb84Config cfg;
    cfg.eve_present = true;
    cfg.rng_seed = derive_seed(2024, "acceptance.eve", s);
    const auto session = qkd::run_bb84(cfg);
    c.require(session.qber > 0.08, fmt::format("session {} QBER {:.4f} <= tau", s, session.qber));
    sum += session.qber * static_cast<double>(session.sifted_len);
    sifted += session.sifted_len;
    lo = std::min(lo, session.qber);
    hi = std::max(hi, session.qber);
  }
  const double pooled = sum / static_cast<double>(sifted);
  c.require(pooled >= 0.235 && pooled <= 0.265, fmt::format("pooled QBER {:.4f} outside [0.235, 0.265]", pooled));

  const auto spec = tasks::ModelSpec::channel_desk(3);
  const auto init = tasks::init_params(spec);
  const auto task = channel_task(spec, 3, 4, 31);
  const auto run = fl::run_training(init, *task, 5, round_cfg(3, fl::AggregationMode::qkd_sa, true, 32));
  std::size_t aborted = 0;
  for (const auto& r : run.reports) aborted += r.status == fl::RoundStatus::aborted;
  c.require(aborted == 5, fmt::format("{}/5 rounds aborted", aborted));
  c.require(run.final_global == init, "global model changed during aborted rounds");
  c.note(fmt::format("QBER range [{:.4f}, {:.4f}], pooled {:.4f}; R=5 run aborted {}/5, model bit-identical", lo, hi,
                     pooled, aborted));
  return c.outcome();
}

// 3. Without noise or Eve the QBER is exactly zero and sifting keeps half.
Outcome clean_channel() {
  Checks c;
  double sifted = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    qkd::Bb84Config cfg;
    cfg.rng_seed = derive_seed(2024, "acceptance.clean", s);
    const auto session = qkd::run_bb84(cfg);
    c.require(session.qber == 0.0, fmt::format("session {} QBER {}", s, session.qber));
    sifted += static_cast<double>(session.sifted_len);
  }
  const double mean = sifted / 1000.0;
  c.require(std::abs(mean - 1000.0) <= 10.0, fmt::format("mean sifted length {:.2f} not within 1% of 1000", mean));
  c.note(fmt::format("1000 sessions, all QBER 0; mean sifted length {:.2f}", mean));
  return c.outcome();
}

// 4. QBER follows eta/2 across the noise grid.
Outcome noise_sweep() {
  Checks c;
  const auto cfg = exp::load_config(kDataDir + "/../configs/noise_sweep_c.json");
  c.require(cfg.sessions_per_eta >= 1000, "config has fewer than 1000 sessions per eta");
  const auto result = exp::run_experiment_c(cfg);
  const std::vector<double> grid = {0.0, 0.05, 0.10, 0.15, 0.20};
  c.require(cfg.eta_grid == grid, "config grid differs from {0, 0.05, 0.10, 0.15, 0.20}");
  c.require(cfg.qber_threshold == 0.08, "config threshold is not 0.08");
  std::string cells;
  for (std::size_t i = 0; i < result.eta_points.size(); ++i) {
    const auto& p = result.eta_points[i];
    const double oracle = p.eta / 2.0;
    c.require(std::abs(p.mean_qber - oracle) <= 0.01,
              fmt::format("eta={} mean QBER {:.4f} vs eta/2 = {:.4f}", p.eta, p.mean_qber, oracle));
    if (i > 0) c.require(p.mean_qber >= result.eta_points[i - 1].mean_qber, "QBER not monotone in eta");
    cells += fmt::format("{}{:.2f}:{:.4f}/{:.3f}", i ? " " : "", p.eta, p.mean_qber, p.abort_rate);
  }
  c.require(result.eta_points.front().abort_rate == 0.0, "abort rate at eta=0 is not 0");
  c.require(result.eta_points.back().abort_rate > 0.5, "abort rate at eta=0.20 is not > 0.5");
  c.note("eta:qber/abort_rate " + cells);
  return c.outcome();
}

// 5. qkd_sa final NMSE within 5% of plain on the desk channel task.
Outcome utility_parity() {
  Checks c;
  const auto cfg = exp::load_config(kDataDir + "/../configs/channel_parity.json");
  c.require(cfg.clients == std::vector<std::size_t>{3} && cfg.rounds == 5, "parity config is not K=3, R=5");
  const auto result = exp::run_experiment_a(cfg);
  std::optional<double> plain, qkd;
  for (const auto& cell : result.cells) {
    if (cell.mode == fl::AggregationMode::plain) plain = cell.final_utility.nmse;
    if (cell.mode == fl::AggregationMode::qkd_sa) {
      qkd = cell.final_utility.nmse;
      for (const auto& r : cell.reports) c.require(r.status == fl::RoundStatus::secure, "qkd_sa round aborted");
    }
  }
  c.require(plain && qkd, "missing plain or qkd_sa cell");
  if (plain && qkd) {
    const double rel = std::abs(*plain - *qkd) / *plain;
    c.require(rel < 0.05, fmt::format("relative NMSE gap {:.3e} >= 0.05", rel));
    c.note(fmt::format("NMSE plain {:.6f}, qkd_sa {:.6f}, relative gap {:.3e}", *plain, *qkd, rel));
  }
  return c.outcome();
}

// 6. Uplink grows linearly in K, downlink does not depend on K.
Outcome communication_scaling() {
  Checks c;
  const auto spec = tasks::ModelSpec::channel_desk(6);
  const auto init = tasks::init_params(spec);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> bytes;
  for (std::size_t k : {3, 10, 20}) {
    const auto task = channel_task(spec, k, 1, 60 + k);
    const auto rep = fl::run_round(init, *task, round_cfg(k, fl::AggregationMode::qkd_sa, false, 61)).report;
    bytes.emplace_back(rep.bytes_down, rep.bytes_up);
  }
  c.require(bytes[1].second * 3 == bytes[0].second * 10, "uplink K=10 / K=3 is not exactly 10/3");
  c.require(bytes[2].second * 3 == bytes[0].second * 20, "uplink K=20 / K=3 is not exactly 20/3");
  c.require(bytes[0].first == bytes[1].first && bytes[1].first == bytes[2].first, "downlink varies with K");
  c.require(bytes[0].first == init.total_len() * 8, "downlink is not one serialized model");
  c.note(fmt::format("down {} B for all K; up {}/{}/{} B for K=3/10/20", bytes[0].first, bytes[0].second,
                     bytes[1].second, bytes[2].second));
  return c.outcome();
}

// 7. Metrics on hand-computed toy cases.
Outcome metric_oracles() {
  Checks c;
  const std::vector<Tensor> y = {Tensor({1, 1, 3}, {1, 2, 3}), Tensor({1, 1, 3}, {0, 2, 5})};
  c.require(tasks::nmse(y, y) == 0.0, "perfect predictor NMSE != 0");
  const std::vector<Tensor> zero = {Tensor({1, 1, 3}), Tensor({1, 1, 3})};
  const double energy = (1.0 + 4 + 9 + 0 + 4 + 25) / 2.0;
  const double zero_oracle = energy / (energy + 1e-12);
  c.require(std::abs(tasks::nmse(zero, y) - zero_oracle) <= 1e-9 * zero_oracle, "zero predictor NMSE");
  const std::vector<Tensor> constant = {Tensor({1, 1, 3}, 1.5), Tensor({1, 1, 3}, 1.5)};
  double num = 0.0;
  for (const auto& t : y) {
    for (double v : t.values()) num += (1.5 - v) * (1.5 - v);
  }
  const double const_oracle = (num / 2.0) / (energy + 1e-12);
  const double got = tasks::nmse(constant, y);
  c.require(std::abs(got - const_oracle) <= 1e-9 * const_oracle, "constant predictor NMSE");

  const std::vector<std::uint8_t> truth = {0, 0, 1, 1}, pred = {0, 1, 1, 1};
  const auto toy = tasks::segmentation_scores(pred, truth, 4);
  c.require(toy.accuracy == 0.75, fmt::format("toy accuracy {}", toy.accuracy));
  c.require(toy.miou == (0.5 + 2.0 / 3.0) / 2.0, fmt::format("toy mIoU {} != 7/12", toy.miou));
  const auto perfect = tasks::segmentation_scores(truth, truth, 4);
  c.require(perfect.accuracy == 1.0 && perfect.miou == 1.0, "perfect prediction");
  const std::vector<std::uint8_t> noise(16, 0);
  const auto all_noise = tasks::segmentation_scores(noise, noise, 4);
  c.require(all_noise.accuracy == 1.0 && all_noise.miou == 1.0, "all-noise prediction");
  c.note(fmt::format("constant-predictor NMSE {:.12f}; toy accuracy {}, mIoU {:.12f}", got, toy.accuracy, toy.miou));
  return c.outcome();
}

// 8. Analytic gradients against central differences.
Outcome gradient_check() {
  Checks c;
  const auto ch = tasks::ModelSpec::channel_desk(81);
  const auto chp = tasks::init_params(ch);
  const auto cs = tasks::gen_channel_dataset(1, 5.0, {48, 14}, 82)[0];
  auto cg = chp.zeros_like();
  tasks::channel_loss(ch, chp, cs, &cg);
  const auto cres = qkdfl::testing::check_gradient(
      [&](const ParamVec& p) { return tasks::channel_loss(ch, p, cs, nullptr); }, chp, cg, {.per_tensor = 40, .seed = 83});

  const auto rd = tasks::ModelSpec::radar_desk(84);
  const auto rdp = tasks::init_params(rd);
  const auto rs = tasks::gen_radar_dataset(1, 32, 85)[0];
  auto rg = rdp.zeros_like();
  tasks::radar_loss(rd, rdp, rs, &rg);
  const auto rres = qkdfl::testing::check_gradient(
      [&](const ParamVec& p) { return tasks::radar_loss(rd, p, rs, nullptr); }, rdp, rg, {.per_tensor = 10, .seed = 86, .step = 3e-5});

  c.require(cres.coords >= 100 && rres.coords >= 100, "fewer than 100 coordinates sampled");
  c.require(cres.max_rel_error < 1e-4, fmt::format("channel max rel error {:.3e}", cres.max_rel_error));
  c.require(rres.max_rel_error < 1e-4, fmt::format("radar max rel error {:.3e}", rres.max_rel_error));
  c.note(fmt::format("channel {} coords ({} unresolved) max rel {:.3e}; radar {} coords ({} unresolved) max rel {:.3e}",
                     cres.coords, cres.skipped, cres.max_rel_error, rres.coords, rres.skipped, rres.max_rel_error));
  return c.outcome();
}

// 9. Same config and seeds give byte-identical outputs.
Outcome determinism() {
  Checks c;
  const auto root = fs::temp_directory_path() / "qkdfl_acceptance_determinism";
  std::size_t compared = 0;
  for (const char* name : {"channel_b", "noise_sweep_c"}) {
    const auto cfg = exp::load_config(kDataDir + "/../configs/" + name + ".json");
    const auto d1 = root / name / "first", d2 = root / name / "second";
    fs::remove_all(d1);
    fs::remove_all(d2);
    const auto files = exp::write_outputs(exp::run_experiment(cfg), d1);
    exp::write_outputs(exp::run_experiment(cfg), d2);
    for (const auto& f : files) {
      c.require(slurp(d1 / f) == slurp(d2 / f), fmt::format("{}/{} differs between runs", name, f));
      ++compared;
    }
  }
  c.note(fmt::format("{} output files byte-identical across two runs of channel_b and noise_sweep_c", compared));
  return c.outcome();
}

// 10. KDF symmetry and hash layouts against committed vectors.
Outcome golden_vectors() {
  Checks c;
  std::size_t pairs = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed);
    BitString round_seed(256);
    for (std::size_t i = 0; i < 256; ++i) round_seed.set(i, rng.bit());
    for (std::size_t k = 2; k <= 8; ++k) {
      const masking::MaskingContext ctx{round_seed, seed, k, 1e-3, 256};
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
          c.require(masking::derive_pair_key(ctx, i, j) == masking::derive_pair_key(ctx, j, i), "asymmetric pair key");
          ++pairs;
        }
      }
    }
  }
  std::ifstream in(kDataDir + "/golden/vectors.json");
  c.require(in.good(), "golden/vectors.json missing");
  const auto doc = nlohmann::json::parse(in);
  std::size_t vectors = 0;
  for (const auto& v : doc.at("privacy_amplification")) {
    const auto key = qkd::privacy_amplify(BitString::from_text(v.at("sifted").get<std::string>()),
                                          v.at("final_len").get<std::size_t>());
    c.require(key.to_text() == v.at("key").get<std::string>(), "privacy amplification vector mismatch");
    ++vectors;
  }
  for (const auto& v : doc.at("pair_kdf")) {
    const auto i = v.at("i").get<std::size_t>(), j = v.at("j").get<std::size_t>();
    const masking::MaskingContext ctx{BitString::from_text(v.at("round_seed").get<std::string>()),
                                      v.at("round").get<std::uint64_t>(), std::max(i, j) + 1, 1e-3,
                                      v.at("key_bits").get<std::size_t>()};
    c.require(masking::derive_pair_key(ctx, i, j).to_text() == v.at("key").get<std::string>(), "KDF vector mismatch");
    ++vectors;
  }
  for (const auto& v : doc.at("keystream")) {
    const auto expect = v.at("bits").get<std::string>();
    masking::Keystream ks(BitString::from_text(v.at("key").get<std::string>()), v.at("ordinal").get<std::uint64_t>());
    std::string got;
    for (std::size_t i = 0; i < expect.size(); ++i) got.push_back(ks.next_bit() ? '1' : '0');
    c.require(got == expect, "keystream vector mismatch");
    ++vectors;
  }
  c.note(fmt::format("{} pairs symmetric for K<=8; {} vectors match", pairs, vectors));
  return c.outcome();
}

}  // namespace

// With arguments, only the listed criterion numbers run.
int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  spdlog::set_level(spdlog::level::warn);
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "mask cancellation", mask_cancellation},
      {2, "eve detection", eve_detection},
      {3, "clean channel", clean_channel},
      {4, "noise sweep", noise_sweep},
      {5, "utility parity", utility_parity},
      {6, "communication scaling", communication_scaling},
      {7, "metric oracles", metric_oracles},
      {8, "gradient check", gradient_check},
      {9, "determinism", determinism},
      {10, "golden vectors", golden_vectors},
  };
  int failures = 0, ran = 0;
  for (const auto& cr : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), cr.id) == only.end()) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = cr.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += out.pass ? 0 : 1;
    fmt::print("[{}] {:2d} {:<22} {:7.2f}s  {}\n", out.pass ? "PASS" : "FAIL", cr.id, cr.name, secs, out.detail);
    std::fflush(stdout);
  }
  fmt::print("{}/{} criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
