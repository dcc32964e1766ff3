#include <gtest/gtest.h>

#include "qkdfl/orchestrator.hpp"
#include "qkdfl/partition.hpp"

using namespace qkdfl;
using namespace qkdfl::fl;

namespace {

struct Fixture {
  tasks::ModelSpec spec = tasks::ModelSpec::channel_desk(5);
  std::unique_ptr<FederatedTask> task;
  ParamVec init;

  explicit Fixture(std::size_t k) {
    const auto train = tasks::gen_channel_dataset(8 * k, 10.0, {16, 8}, 1);
    auto val = tasks::gen_channel_dataset(6, 10.0, {16, 8}, 2);
    std::vector<std::size_t> keys(train.size(), 0);
    const auto shards = partition_non_iid(keys, k, kUniformSkew, 3);
    task = make_channel_task(spec, materialize(std::span<const tasks::ChannelSample>(train), shards), std::move(val));
    init = tasks::init_params(spec);
  }
};

RoundConfig config(std::size_t k, AggregationMode mode, bool eve = false) {
  RoundConfig c;
  c.num_clients = k;
  c.mode = mode;
  c.train.epochs = 1;
  c.train.batch_size = 4;
  c.bb84.eve_present = eve;
  c.seed = 77;
  return c;
}

}  // namespace

TEST(RunRound, CleanQkdRoundIsSecure) {
  Fixture f(3);
  const auto [global, rep] = run_round(f.init, *f.task, config(3, AggregationMode::qkd_sa));
  EXPECT_EQ(rep.status, RoundStatus::secure);
  EXPECT_EQ(rep.qber.value(), 0.0);
  EXPECT_NE(global, f.init);
  EXPECT_LT(rep.recon_error.value(), 1e-5);
  EXPECT_TRUE(rep.utility.nmse.has_value());
  ASSERT_EQ(rep.leakage.size(), 3u);
  for (const auto& l : rep.leakage) {
    ASSERT_TRUE(l.cosine.has_value());
    EXPECT_LT(*l.cosine, 1.0);
    EXPECT_LE(std::abs(*l.cosine), 1.0);
    EXPECT_LE(std::abs(*l.pearson), 1.0);
  }
}

TEST(RunRound, EveAbortsAndFreezesModel) {
  Fixture f(3);
  const auto [global, rep] = run_round(f.init, *f.task, config(3, AggregationMode::qkd_sa, true));
  EXPECT_EQ(rep.status, RoundStatus::aborted);
  EXPECT_GE(rep.qber.value(), 0.08);
  EXPECT_EQ(global, f.init);
  EXPECT_FALSE(rep.recon_error.has_value());
  EXPECT_TRUE(rep.leakage.empty());
  EXPECT_EQ(rep.bytes_up, 0u);
  EXPECT_TRUE(rep.utility.nmse.has_value());
}

TEST(RunRound, PlainModeHasNoQberAndUnitCosine) {
  Fixture f(3);
  const auto [global, rep] = run_round(f.init, *f.task, config(3, AggregationMode::plain, true));
  EXPECT_EQ(rep.status, RoundStatus::secure);
  EXPECT_FALSE(rep.qber.has_value());
  EXPECT_EQ(rep.recon_error.value(), 0.0);
  for (const auto& l : rep.leakage) EXPECT_NEAR(l.cosine.value(), 1.0, 1e-12);
}

TEST(RunRound, ClassicalMaskingCancels) {
  Fixture f(4);
  const auto [g_plain, r_plain] = run_round(f.init, *f.task, config(4, AggregationMode::plain));
  const auto [g_sa, r_sa] = run_round(f.init, *f.task, config(4, AggregationMode::classical_sa));
  EXPECT_FALSE(r_sa.qber.has_value());
  EXPECT_LT(r_sa.recon_error.value(), 1e-5);
  EXPECT_LE(max_abs_difference(g_plain, g_sa), 1e-5);
}

TEST(RunRound, ByteCounts) {
  Fixture f(3);
  const auto rep = run_round(f.init, *f.task, config(3, AggregationMode::qkd_sa)).report;
  EXPECT_EQ(rep.bytes_down, f.init.total_len() * 8);
  EXPECT_EQ(rep.bytes_up, 3 * f.init.total_len() * 8);
}

TEST(RunRound, JobsDoNotChangeResults) {
  Fixture f(3);
  auto c1 = config(3, AggregationMode::qkd_sa);
  auto c3 = c1;
  c3.jobs = 3;
  EXPECT_EQ(run_round(f.init, *f.task, c1).global, run_round(f.init, *f.task, c3).global);
}

TEST(RunRound, Preconditions) {
  Fixture f(3);
  EXPECT_THROW(run_round(f.init, *f.task, config(4, AggregationMode::plain)), std::invalid_argument);
  EXPECT_THROW(run_round(tasks::init_params(tasks::ModelSpec::channel_paper(1)), *f.task,
                         config(3, AggregationMode::plain)),
               std::invalid_argument);
  auto bad = config(3, AggregationMode::qkd_sa);
  bad.qber_threshold = 1.0;
  EXPECT_THROW(run_round(f.init, *f.task, bad), std::invalid_argument);
}

TEST(RunTraining, EveEveryRoundAbortsAll) {
  Fixture f(3);
  std::size_t seen = 0;
  const auto run = run_training(f.init, *f.task, 5, config(3, AggregationMode::qkd_sa, true),
                                [&](const RoundReport&) { ++seen; });
  EXPECT_EQ(seen, 5u);
  for (const auto& r : run.reports) EXPECT_EQ(r.status, RoundStatus::aborted);
  EXPECT_EQ(run.final_global, f.init);
}

TEST(RunTraining, SecureRunsMatchPlain) {
  Fixture f(3);
  const auto plain = run_training(f.init, *f.task, 3, config(3, AggregationMode::plain));
  const auto qkd = run_training(f.init, *f.task, 3, config(3, AggregationMode::qkd_sa));
  for (const auto& r : qkd.reports) EXPECT_EQ(r.status, RoundStatus::secure);
  EXPECT_LE(max_abs_difference(plain.final_global, qkd.final_global), 1e-5);
  EXPECT_EQ(qkd.reports[2].round_index, 2u);
  EXPECT_THROW(run_training(f.init, *f.task, 0, config(3, AggregationMode::plain)), std::invalid_argument);
}

TEST(RoundReportJson, Fields) {
  Fixture f(2);
  const auto rep = run_round(f.init, *f.task, config(2, AggregationMode::qkd_sa, true)).report;
  const auto j = to_json(rep);
  EXPECT_EQ(j.at("status"), "ABORTED");
  EXPECT_EQ(j.at("mode"), "qkd_sa");
  EXPECT_TRUE(j.at("recon_error").is_null());
  EXPECT_TRUE(j.at("utility").contains("nmse"));
}
