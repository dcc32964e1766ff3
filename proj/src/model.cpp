#include "qkdfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qkdfl/rng.hpp"

namespace qkdfl::tasks {

using nn::Activation;

TaskKind task_from_name(const std::string& name) {
  if (name == "channel") return TaskKind::channel;
  if (name == "radar") return TaskKind::radar;
  throw std::invalid_argument("unknown task: " + name);
}

const char* task_name(TaskKind t) noexcept { return t == TaskKind::channel ? "channel" : "radar"; }

ModelSpec ModelSpec::channel_desk(std::uint64_t seed) {
  return {TaskKind::channel, 1, 1, {12, 8}, {9, 5, 5},
          {Activation::selu, Activation::softplus, Activation::selu}, seed};
}

ModelSpec ModelSpec::channel_paper(std::uint64_t seed) {
  auto spec = channel_desk(seed);
  spec.widths = {48, 16};
  return spec;
}

ModelSpec ModelSpec::radar_desk(std::uint64_t seed) {
  return {TaskKind::radar, 3, kRadarClasses, {8, 16, 32, 64}, {3}, {}, seed};
}

ModelSpec ModelSpec::radar_scaled(std::size_t divisor, std::uint64_t seed) {
  if (divisor == 0) throw std::invalid_argument("radar_scaled: divisor must be >= 1");
  ModelSpec spec = radar_desk(seed);
  spec.widths.clear();
  for (std::size_t w : {64, 128, 256, 512, 1024}) spec.widths.push_back(std::max<std::size_t>(1, w / divisor));
  return spec;
}

void ModelSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw std::invalid_argument("model channels must be >= 1");
  for (auto w : widths) {
    if (w == 0) throw std::invalid_argument("model widths must be >= 1");
  }
  for (auto k : kernel_sizes) {
    if (k % 2 == 0) throw std::invalid_argument("kernel sizes must be odd");
  }
  if (task == TaskKind::channel) {
    if (kernel_sizes.size() != widths.size() + 1 || activations.size() != kernel_sizes.size()) {
      throw std::invalid_argument("channel model needs one kernel and activation per layer");
    }
  } else {
    if (widths.size() < 2) throw std::invalid_argument("U-Net needs at least one level and a bottleneck");
    if (kernel_sizes.size() != 1) throw std::invalid_argument("U-Net takes a single block kernel size");
    if (out_channels < 2) throw std::invalid_argument("segmenter needs >= 2 classes");
  }
}

std::size_t ModelSpec::levels() const noexcept {
  return task == TaskKind::radar ? widths.size() - 1 : 0;
}

namespace {

struct ConvDecl {
  std::string name;
  std::size_t in, out, k;
};

std::vector<ConvDecl> conv_layout(const ModelSpec& spec) {
  std::vector<ConvDecl> convs;
  if (spec.task == TaskKind::channel) {
    std::vector<std::size_t> chans{spec.in_channels};
    chans.insert(chans.end(), spec.widths.begin(), spec.widths.end());
    chans.push_back(spec.out_channels);
    for (std::size_t l = 0; l + 1 < chans.size(); ++l) {
      convs.push_back({"conv" + std::to_string(l + 1), chans[l], chans[l + 1], spec.kernel_sizes[l]});
    }
    return convs;
  }
  const std::size_t L = spec.levels();
  const std::size_t k = spec.kernel_sizes[0];
  std::size_t in = spec.in_channels;
  for (std::size_t l = 0; l < L; ++l) {
    const std::string p = "enc" + std::to_string(l);
    convs.push_back({p + ".conv_a", in, spec.widths[l], k});
    convs.push_back({p + ".conv_b", spec.widths[l], spec.widths[l], k});
    in = spec.widths[l];
  }
  convs.push_back({"bottleneck.conv_a", in, spec.widths[L], k});
  convs.push_back({"bottleneck.conv_b", spec.widths[L], spec.widths[L], k});
  std::size_t below = spec.widths[L];
  for (std::size_t l = L; l-- > 0;) {
    const std::string p = "dec" + std::to_string(l);
    convs.push_back({p + ".conv_a", below + spec.widths[l], spec.widths[l], k});
    convs.push_back({p + ".conv_b", spec.widths[l], spec.widths[l], k});
    below = spec.widths[l];
  }
  convs.push_back({"head", below, spec.out_channels, 1});
  return convs;
}

// Parameter tensors are stored weight-then-bias per conv, in layout order.
struct ConvRef {
  const Tensor& w;
  const Tensor& b;
};

ConvRef conv_at(const ParamVec& p, std::size_t conv) { return {p[2 * conv], p[2 * conv + 1]}; }

// Cached intermediates of a conv followed by an activation.
struct ConvStep {
  Tensor input;
  Tensor pre;
  Tensor out;
};

ConvStep conv_act(const ParamVec& p, std::size_t conv, const Tensor& x, Activation act) {
  ConvStep s;
  s.input = x;
  const auto [w, b] = conv_at(p, conv);
  s.pre = nn::conv2d(x, w, b);
  s.out = nn::activate(act, s.pre);
  return s;
}

Tensor conv_act_backward(const ParamVec& p, std::size_t conv, const ConvStep& s, Activation act,
                         const Tensor& dout, ParamVec* grad, bool need_dx = true) {
  const Tensor dpre = nn::activate_backward(act, s.pre, dout);
  const auto [w, b] = conv_at(p, conv);
  return nn::conv2d_backward(s.input, w, dpre, (*grad)[2 * conv], (*grad)[2 * conv + 1], need_dx);
}

struct ChannelTrace {
  std::vector<ConvStep> steps;
};

Tensor channel_forward(const ModelSpec& spec, const ParamVec& p, const Tensor& x, ChannelTrace* trace) {
  Tensor h = x;
  for (std::size_t l = 0; l < spec.kernel_sizes.size(); ++l) {
    ConvStep s = conv_act(p, l, h, spec.activations[l]);
    h = s.out;
    if (trace) trace->steps.push_back(std::move(s));
  }
  return h;
}

struct UNetTrace {
  std::vector<ConvStep> steps;  // one per conv in layout order (head excluded)
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<Shape> pool_shapes;
  Tensor head_input;
};

// Returns logits (C, S, S).
Tensor unet_forward(const ModelSpec& spec, const ParamVec& p, const Tensor& x, UNetTrace* trace) {
  const std::size_t L = spec.levels();
  std::size_t conv = 0;
  auto block = [&](const Tensor& in) {
    ConvStep a = conv_act(p, conv++, in, Activation::relu);
    ConvStep b = conv_act(p, conv++, a.out, Activation::relu);
    Tensor out = b.out;
    if (trace) {
      trace->steps.push_back(std::move(a));
      trace->steps.push_back(std::move(b));
    }
    return out;
  };

  std::vector<Tensor> skips;
  Tensor h = x;
  for (std::size_t l = 0; l < L; ++l) {
    Tensor e = block(h);
    std::vector<std::uint32_t> argmax;
    h = nn::maxpool2(e, argmax);
    if (trace) {
      trace->pool_argmax.push_back(std::move(argmax));
      trace->pool_shapes.push_back(e.shape());
    }
    skips.push_back(std::move(e));
  }
  h = block(h);
  for (std::size_t l = L; l-- > 0;) {
    h = block(nn::concat_channels(nn::upsample2(h), skips[l]));
  }
  const auto [w, b] = conv_at(p, conv);
  if (trace) trace->head_input = h;
  return nn::conv2d(h, w, b);
}

void check_input(const ModelSpec& spec, const Tensor& x) {
  if (x.rank() != 3 || x.dim(0) != spec.in_channels) {
    throw std::invalid_argument("model input must be (" + std::to_string(spec.in_channels) +
                                ", H, W), got " + shape_to_string(x.shape()));
  }
  if (spec.task == TaskKind::radar) {
    const std::size_t m = std::size_t{1} << spec.levels();
    if (x.dim(1) % m || x.dim(2) % m) {
      throw std::invalid_argument("U-Net input dims must be divisible by " + std::to_string(m));
    }
  }
}

}  // namespace

ParamVec init_params(const ModelSpec& spec) {
  spec.validate();
  const Rng root(spec.init_seed);
  ParamVec params;
  const auto convs = conv_layout(spec);
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto& c = convs[i];
    const double fan_in = static_cast<double>(c.in * c.k * c.k);
    // LeCun scaling suits SELU; He scaling suits ReLU.
    const double stddev = std::sqrt((spec.task == TaskKind::radar ? 2.0 : 1.0) / fan_in);
    Rng rng = root.substream("init", i);
    Tensor w({c.out, c.in, c.k, c.k});
    for (double& v : w.values()) {
      double z;
      do {
        z = rng.normal();
      } while (std::abs(z) > 2.0);
      v = stddev * z;
    }
    params.add(c.name + ".weight", std::move(w));
    params.add(c.name + ".bias", Tensor({c.out}));
  }
  return params;
}

Tensor forward(const ModelSpec& spec, const ParamVec& params, const Tensor& input) {
  check_input(spec, input);
  if (spec.task == TaskKind::channel) return channel_forward(spec, params, input, nullptr);
  return nn::softmax_channels(unet_forward(spec, params, input, nullptr));
}

double channel_loss(const ModelSpec& spec, const ParamVec& params, const ChannelSample& sample,
                    ParamVec* grad) {
  check_input(spec, sample.pilots);
  ChannelTrace trace;
  const Tensor pred = channel_forward(spec, params, sample.pilots, grad ? &trace : nullptr);
  if (pred.shape() != sample.truth.shape()) throw std::invalid_argument("prediction/target shape mismatch");
  const auto n = static_cast<double>(pred.size());
  double loss = 0.0;
  Tensor dpred(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - sample.truth[i];
    loss += d * d;
    dpred[i] = 2.0 * d / n;
  }
  loss /= n;
  if (grad) {
    Tensor g = dpred;
    for (std::size_t l = trace.steps.size(); l-- > 0;) {
      g = conv_act_backward(params, l, trace.steps[l], spec.activations[l], g, grad, l > 0);
    }
  }
  return loss;
}

double radar_loss(const ModelSpec& spec, const ParamVec& params, const RadarSample& sample,
                  ParamVec* grad) {
  check_input(spec, sample.spectrogram);
  UNetTrace trace;
  const Tensor logits = unet_forward(spec, params, sample.spectrogram, grad ? &trace : nullptr);
  const std::size_t C = logits.dim(0);
  const std::size_t plane = logits.dim(1) * logits.dim(2);
  if (sample.labels.size() != plane) throw std::invalid_argument("label map size mismatch");

  const Tensor prob = nn::softmax_channels(logits);
  double loss = 0.0;
  Tensor dlogits(logits.shape());
  const double inv = 1.0 / static_cast<double>(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const std::size_t y = sample.labels[i];
    if (y >= C) throw std::invalid_argument("label out of range");
    double m = logits[i];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, logits[c * plane + i]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(logits[c * plane + i] - m);
    loss += (m + std::log(s)) - logits[y * plane + i];
    for (std::size_t c = 0; c < C; ++c) {
      dlogits[c * plane + i] = (prob[c * plane + i] - (c == y ? 1.0 : 0.0)) * inv;
    }
  }
  loss *= inv;
  if (!grad) return loss;

  const std::size_t L = spec.levels();
  const std::size_t head = trace.steps.size();
  const auto [hw, hb] = conv_at(params, head);
  Tensor g = nn::conv2d_backward(trace.head_input, hw, dlogits, (*grad)[2 * head], (*grad)[2 * head + 1]);

  std::size_t conv = head;
  auto block_backward = [&](const Tensor& dout, bool need_dx) {
    conv -= 2;
    Tensor d = conv_act_backward(params, conv + 1, trace.steps[conv + 1], Activation::relu, dout, grad);
    return conv_act_backward(params, conv, trace.steps[conv], Activation::relu, d, grad, need_dx);
  };

  std::vector<Tensor> skip_grads(L);
  for (std::size_t l = 0; l < L; ++l) {
    Tensor d = block_backward(g, true);
    auto [dup, dskip] = nn::split_channels(d, d.dim(0) - spec.widths[l]);
    skip_grads[l] = std::move(dskip);
    g = nn::upsample2_backward(dup);
  }
  g = block_backward(g, true);
  for (std::size_t l = L; l-- > 0;) {
    Tensor de = nn::maxpool2_backward(g, trace.pool_argmax[l], trace.pool_shapes[l]);
    auto dv = de.values();
    auto sv = skip_grads[l].values();
    for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += sv[i];
    g = block_backward(de, l > 0);
  }
  return loss;
}

std::vector<std::uint8_t> predict_labels(const Tensor& probabilities) {
  const std::size_t C = probabilities.dim(0);
  const std::size_t plane = probabilities.dim(1) * probabilities.dim(2);
  std::vector<std::uint8_t> out(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (probabilities[c * plane + i] > probabilities[best * plane + i]) best = c;
    }
    out[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace qkdfl::tasks
