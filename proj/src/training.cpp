#include "qkdfl/training.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "qkdfl/errors.hpp"
#include "qkdfl/rng.hpp"

namespace qkdfl::tasks {
namespace {

double sample_loss(const ModelSpec& spec, const ParamVec& p, const ChannelSample& s, ParamVec* g) {
  return channel_loss(spec, p, s, g);
}

double sample_loss(const ModelSpec& spec, const ParamVec& p, const RadarSample& s, ParamVec* g) {
  return radar_loss(spec, p, s, g);
}

class Adam {
 public:
  Adam(const ParamVec& like, const TrainOptions& o)
      : m_(like.zeros_like()), v_(like.zeros_like()), opts_(o) {}

  void step(ParamVec& params, const ParamVec& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.num_tensors(); ++k) {
      auto p = params[k].values();
      auto g = grad[k].values();
      auto m = m_[k].values();
      auto v = v_[k].values();
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
        p[i] -= opts_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts_.epsilon);
      }
    }
  }

 private:
  ParamVec m_;
  ParamVec v_;
  TrainOptions opts_;
  std::uint64_t t_ = 0;
};

template <class Sample>
TrainOutcome train_impl(const ModelSpec& spec, ParamVec params, std::span<const Sample> data,
                        const TrainOptions& opts) {
  TrainOutcome out;
  if (opts.epochs == 0) {
    out.params = std::move(params);
    return out;
  }
  if (data.empty()) throw std::invalid_argument("train_local: empty shard");
  if (opts.batch_size == 0) throw std::invalid_argument("train_local: batch size must be >= 1");
  if (!params.same_structure(init_params(spec))) {
    throw std::invalid_argument("train_local: parameters do not match the model spec");
  }

  Adam adam(params, opts);
  const Rng root(opts.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t e = 0; e < opts.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = root.substream("train.shuffle", e);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += opts.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      ParamVec grad = params.zeros_like();
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) loss += sample_loss(spec, params, data[order[i]], &grad);
      const double inv = 1.0 / static_cast<double>(end - start);
      loss *= inv;
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(e) + ", batch " +
                              std::to_string(b) + " (shard positions " + std::to_string(start) + ".." +
                              std::to_string(end - 1) + ")");
      }
      grad.scale(inv);
      adam.step(params, grad);
      epoch_loss += loss;
      ++batches;
    }
    out.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
  }
  out.params = std::move(params);
  return out;
}

template <class Sample>
double loss_impl(const ModelSpec& spec, const ParamVec& params, std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("dataset_loss: empty dataset");
  double total = 0.0;
  for (const auto& s : data) total += sample_loss(spec, params, s, nullptr);
  return total / static_cast<double>(data.size());
}

}  // namespace

TrainOutcome train_local_detailed(const ModelSpec& spec, ParamVec params,
                                  std::span<const ChannelSample> data, const TrainOptions& options) {
  return train_impl(spec, std::move(params), data, options);
}

TrainOutcome train_local_detailed(const ModelSpec& spec, ParamVec params,
                                  std::span<const RadarSample> data, const TrainOptions& options) {
  return train_impl(spec, std::move(params), data, options);
}

ParamVec train_local(const ModelSpec& spec, ParamVec params, std::span<const ChannelSample> data,
                     const TrainOptions& options) {
  return train_impl(spec, std::move(params), data, options).params;
}

ParamVec train_local(const ModelSpec& spec, ParamVec params, std::span<const RadarSample> data,
                     const TrainOptions& options) {
  return train_impl(spec, std::move(params), data, options).params;
}

double dataset_loss(const ModelSpec& spec, const ParamVec& params, std::span<const ChannelSample> data) {
  return loss_impl(spec, params, data);
}

double dataset_loss(const ModelSpec& spec, const ParamVec& params, std::span<const RadarSample> data) {
  return loss_impl(spec, params, data);
}

}  // namespace qkdfl::tasks
