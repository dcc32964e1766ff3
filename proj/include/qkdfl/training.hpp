#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qkdfl/datasets.hpp"
#include "qkdfl/model.hpp"

namespace qkdfl::tasks {

struct TrainOptions {
  std::size_t epochs = 3;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainOutcome {
  ParamVec params;
  /// Mean minibatch loss of each epoch, measured before each step.
  std::vector<double> epoch_losses;
};

/// Minibatch Adam on a client's shard. Optimizer state starts fresh on every
/// call. Shuffling is seeded by `options.seed`; identical inputs give
/// bit-identical outputs. Throws DivergenceError on a non-finite loss.
TrainOutcome train_local_detailed(const ModelSpec& spec, ParamVec params,
                                  std::span<const ChannelSample> data, const TrainOptions& options);
TrainOutcome train_local_detailed(const ModelSpec& spec, ParamVec params,
                                  std::span<const RadarSample> data, const TrainOptions& options);

ParamVec train_local(const ModelSpec& spec, ParamVec params, std::span<const ChannelSample> data,
                     const TrainOptions& options);
ParamVec train_local(const ModelSpec& spec, ParamVec params, std::span<const RadarSample> data,
                     const TrainOptions& options);

/// Mean loss over a dataset.
double dataset_loss(const ModelSpec& spec, const ParamVec& params, std::span<const ChannelSample> data);
double dataset_loss(const ModelSpec& spec, const ParamVec& params, std::span<const RadarSample> data);

}  // namespace qkdfl::tasks
