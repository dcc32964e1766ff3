#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qkdfl/datasets.hpp"
#include "qkdfl/model.hpp"

namespace qkdfl::tasks {

inline constexpr double kNmseEpsilon = 1e-12;

/// E[||pred - target||^2] / (E[||target||^2] + 1e-12), expectations over samples.
double nmse(std::span<const Tensor> predictions, std::span<const Tensor> targets);

/// Pixel confusion counts accumulated over any number of label maps.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void add(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

  std::uint64_t count(std::size_t truth, std::size_t predicted) const;
  std::uint64_t total() const noexcept { return total_; }

  double accuracy() const;
  /// Intersection over union; empty when the class appears in neither map.
  std::optional<double> iou(std::size_t cls) const;
  /// Mean IoU over classes present in prediction or truth.
  double miou() const;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct SegmentationScores {
  double accuracy = 0.0;
  double miou = 0.0;
};

SegmentationScores segmentation_scores(std::span<const std::uint8_t> predicted,
                                       std::span<const std::uint8_t> truth, std::size_t num_classes);

/// NMSE of the model over a dataset. Throws std::invalid_argument if empty.
double eval_channel(const ModelSpec& spec, const ParamVec& params, std::span<const ChannelSample> data);

/// Pixel accuracy and mIoU of the model over a dataset.
SegmentationScores eval_radar(const ModelSpec& spec, const ParamVec& params,
                              std::span<const RadarSample> data);

}  // namespace qkdfl::tasks
