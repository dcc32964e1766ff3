#include "qkdfl/metrics.hpp"

#include <stdexcept>

namespace qkdfl::tasks {

double nmse(std::span<const Tensor> predictions, std::span<const Tensor> targets) {
  if (predictions.empty()) throw std::invalid_argument("nmse: empty dataset");
  if (predictions.size() != targets.size()) throw std::invalid_argument("nmse: count mismatch");
  double err = 0.0;
  double energy = 0.0;
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const auto& p = predictions[s];
    const auto& y = targets[s];
    if (p.shape() != y.shape()) throw std::invalid_argument("nmse: shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - y[i];
      err += d * d;
      energy += y[i] * y[i];
    }
  }
  const auto n = static_cast<double>(predictions.size());
  return (err / n) / (energy / n + kNmseEpsilon);
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw std::invalid_argument("confusion matrix needs >= 1 class");
}

void ConfusionMatrix::add(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("label maps differ in size");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes_ || predicted[i] >= classes_) throw std::invalid_argument("label out of range");
    ++counts_[truth[i] * classes_ + predicted[i]];
  }
  total_ += truth.size();
}

std::uint64_t ConfusionMatrix::count(std::size_t truth, std::size_t predicted) const {
  return counts_.at(truth * classes_ + predicted);
}

double ConfusionMatrix::accuracy() const {
  if (total_ == 0) throw std::invalid_argument("accuracy of an empty confusion matrix");
  std::uint64_t correct = 0;
  for (std::size_t c = 0; c < classes_; ++c) correct += count(c, c);
  return static_cast<double>(correct) / static_cast<double>(total_);
}

std::optional<double> ConfusionMatrix::iou(std::size_t cls) const {
  std::uint64_t truth_total = 0;
  std::uint64_t pred_total = 0;
  for (std::size_t o = 0; o < classes_; ++o) {
    truth_total += count(cls, o);
    pred_total += count(o, cls);
  }
  const std::uint64_t inter = count(cls, cls);
  const std::uint64_t uni = truth_total + pred_total - inter;
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double ConfusionMatrix::miou() const {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes_; ++c) {
    if (auto v = iou(c)) {
      sum += *v;
      ++present;
    }
  }
  if (present == 0) throw std::invalid_argument("mIoU of an empty confusion matrix");
  return sum / static_cast<double>(present);
}

SegmentationScores segmentation_scores(std::span<const std::uint8_t> predicted,
                                       std::span<const std::uint8_t> truth, std::size_t num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(predicted, truth);
  return {cm.accuracy(), cm.miou()};
}

double eval_channel(const ModelSpec& spec, const ParamVec& params, std::span<const ChannelSample> data) {
  if (data.empty()) throw std::invalid_argument("eval_channel: empty dataset");
  std::vector<Tensor> preds;
  std::vector<Tensor> targets;
  preds.reserve(data.size());
  targets.reserve(data.size());
  for (const auto& s : data) {
    preds.push_back(forward(spec, params, s.pilots));
    targets.push_back(s.truth);
  }
  return nmse(preds, targets);
}

SegmentationScores eval_radar(const ModelSpec& spec, const ParamVec& params,
                              std::span<const RadarSample> data) {
  if (data.empty()) throw std::invalid_argument("eval_radar: empty dataset");
  ConfusionMatrix cm(spec.out_channels);
  for (const auto& s : data) cm.add(predict_labels(forward(spec, params, s.spectrogram)), s.labels);
  return {cm.accuracy(), cm.miou()};
}

}  // namespace qkdfl::tasks
