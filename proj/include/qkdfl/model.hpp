#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qkdfl/datasets.hpp"
#include "qkdfl/layers.hpp"
#include "qkdfl/param_vec.hpp"

namespace qkdfl::tasks {

enum class TaskKind { channel, radar };

TaskKind task_from_name(const std::string& name);
const char* task_name(TaskKind t) noexcept;

/// Architecture description for either task.
///
/// channel: a stack of same-padded convolutions. `widths` holds the hidden
///   widths (1 -> widths... -> 1), `kernel_sizes` one entry per layer and
///   `activations` one per layer.
/// radar: a U-Net. `widths` is the encoder ladder followed by the bottleneck
///   width; every block is two convs of `kernel_sizes[0]` with ReLU, then a
///   1x1 head to `out_channels` classes and a softmax.
struct ModelSpec {
  TaskKind task = TaskKind::channel;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::vector<std::size_t> widths;
  std::vector<std::size_t> kernel_sizes;
  std::vector<nn::Activation> activations;
  std::uint64_t init_seed = 0;

  /// 1 -> 12 -> 8 -> 1 with 9x9/5x5/5x5 kernels, SELU/Softplus/SELU.
  static ModelSpec channel_desk(std::uint64_t seed);
  /// 1 -> 48 -> 16 -> 1, the full-size estimator.
  static ModelSpec channel_paper(std::uint64_t seed);
  /// Ladder (8, 16, 32) with bottleneck 64, 3 input planes, 4 classes.
  static ModelSpec radar_desk(std::uint64_t seed);
  /// (64, 128, 256, 512) + 1024 divided by `divisor`.
  static ModelSpec radar_scaled(std::size_t divisor, std::uint64_t seed);

  void validate() const;
  /// Number of 2x2 pooling stages (radar); inputs must be divisible by 2^levels.
  std::size_t levels() const noexcept;
};

/// Seeded truncated-normal fan-in initialization; biases start at zero.
ParamVec init_params(const ModelSpec& spec);

/// Channel: (1, H, W) estimate. Radar: (C, S, S) class probabilities.
Tensor forward(const ModelSpec& spec, const ParamVec& params, const Tensor& input);

/// Per-element mean squared error of one sample. If `grad` is non-null,
/// dLoss/dparams is accumulated into it.
double channel_loss(const ModelSpec& spec, const ParamVec& params, const ChannelSample& sample,
                    ParamVec* grad);

/// Pixel-mean categorical cross-entropy of one sample, with optional gradient.
double radar_loss(const ModelSpec& spec, const ParamVec& params, const RadarSample& sample,
                  ParamVec* grad);

/// Per-pixel argmax of radar probabilities.
std::vector<std::uint8_t> predict_labels(const Tensor& probabilities);

}  // namespace qkdfl::tasks
