#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qkdfl/tensor.hpp"

/// Channel-major (C, H, W) building blocks with hand-written backward passes.
namespace qkdfl::nn {

/// "Same"-padded stride-1 convolution. w: (O, C, k, k) with odd k; b: (O).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

/// Accumulates dL/dw and dL/db into `dw`/`db`; returns dL/dx unless
/// `need_dx` is false (then an empty tensor).
Tensor conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db,
                       bool need_dx = true);

enum class Activation { identity, selu, softplus, relu };

Activation activation_from_name(const std::string& name);
const char* activation_name(Activation a) noexcept;

Tensor activate(Activation a, const Tensor& pre);
/// dL/dpre given the pre-activation and dL/dout.
Tensor activate_backward(Activation a, const Tensor& pre, const Tensor& dout);

/// 2x2 max pooling, stride 2. H and W must be even. `argmax` receives the
/// flat input index chosen for every output element.
Tensor maxpool2(const Tensor& x, std::vector<std::uint32_t>& argmax);
Tensor maxpool2_backward(const Tensor& dy, const std::vector<std::uint32_t>& argmax,
                         const Shape& x_shape);

/// Nearest-neighbour 2x upsampling.
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& dy);

/// Stacks `a` then `b` along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Inverse of concat_channels for a gradient; `a_channels` leading channels go first.
std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::size_t a_channels);

/// Softmax across the channel axis at every pixel.
Tensor softmax_channels(const Tensor& logits);

}  // namespace qkdfl::nn
