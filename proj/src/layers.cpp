#include "qkdfl/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qkdfl::nn {
namespace {

constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

void check_conv_shapes(const Tensor& x, const Tensor& w) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != w.dim(3) ||
      w.dim(2) % 2 == 0) {
    throw std::invalid_argument("conv2d: incompatible shapes x" + shape_to_string(x.shape()) +
                                " w" + shape_to_string(w.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_conv_shapes(x, w);
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(0), k = w.dim(2);
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor y({O, H, W});
  for (std::size_t o = 0; o < O; ++o) {
    double* out = y.data() + o * H * W;
    std::fill(out, out + H * W, b[o]);
    for (std::size_t c = 0; c < C; ++c) {
      const double* in = x.data() + c * H * W;
      const double* wk = w.data() + (o * C + c) * k * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t dr = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::size_t r0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dr));
        const std::size_t r1 = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(H), static_cast<std::ptrdiff_t>(H) - dr));
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = wk[ky * k + kx];
          const std::ptrdiff_t dc = static_cast<std::ptrdiff_t>(kx) - pad;
          const std::size_t c0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dc));
          const std::size_t c1 = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(W), static_cast<std::ptrdiff_t>(W) - dc));
          for (std::size_t r = r0; r < r1; ++r) {
            double* orow = out + r * W;
            const double* irow = in + static_cast<std::ptrdiff_t>(r) * static_cast<std::ptrdiff_t>(W) +
                                 dr * static_cast<std::ptrdiff_t>(W) + dc;
            for (std::size_t col = c0; col < c1; ++col) orow[col] += wv * irow[col];
          }
        }
      }
    }
  }
  return y;
}

Tensor conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db,
                       bool need_dx) {
  check_conv_shapes(x, w);
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(0), k = w.dim(2);
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor dx = need_dx ? Tensor(x.shape()) : Tensor();
  for (std::size_t o = 0; o < O; ++o) {
    const double* g = dy.data() + o * H * W;
    double bsum = 0.0;
    for (std::size_t i = 0; i < H * W; ++i) bsum += g[i];
    db[o] += bsum;
    for (std::size_t c = 0; c < C; ++c) {
      const double* in = x.data() + c * H * W;
      double* din = need_dx ? dx.data() + c * H * W : nullptr;
      const double* wk = w.data() + (o * C + c) * k * k;
      double* dwk = dw.data() + (o * C + c) * k * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t dr = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::size_t r0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dr));
        const std::size_t r1 = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(H), static_cast<std::ptrdiff_t>(H) - dr));
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = wk[ky * k + kx];
          const std::ptrdiff_t dc = static_cast<std::ptrdiff_t>(kx) - pad;
          const std::size_t c0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dc));
          const std::size_t c1 = static_cast<std::size_t>(
              std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(W), static_cast<std::ptrdiff_t>(W) - dc));
          const std::ptrdiff_t shift = dr * static_cast<std::ptrdiff_t>(W) + dc;
          double acc = 0.0;
          for (std::size_t r = r0; r < r1; ++r) {
            const double* grow = g + r * W;
            const double* irow = in + static_cast<std::ptrdiff_t>(r * W) + shift;
            for (std::size_t col = c0; col < c1; ++col) acc += grow[col] * irow[col];
            if (din) {
              double* drow = din + static_cast<std::ptrdiff_t>(r * W) + shift;
              for (std::size_t col = c0; col < c1; ++col) drow[col] += wv * grow[col];
            }
          }
          dwk[ky * k + kx] += acc;
        }
      }
    }
  }
  return dx;
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "selu") return Activation::selu;
  if (name == "softplus") return Activation::softplus;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation: " + name);
}

const char* activation_name(Activation a) noexcept {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::selu: return "selu";
    case Activation::softplus: return "softplus";
    case Activation::relu: return "relu";
  }
  return "?";
}

Tensor activate(Activation a, const Tensor& pre) {
  Tensor out = pre;
  auto v = out.values();
  switch (a) {
    case Activation::identity:
      break;
    case Activation::selu:
      for (double& z : v) z = z > 0.0 ? kSeluLambda * z : kSeluLambda * kSeluAlpha * std::expm1(z);
      break;
    case Activation::softplus:
      for (double& z : v) z = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      break;
    case Activation::relu:
      for (double& z : v) z = z > 0.0 ? z : 0.0;
      break;
  }
  return out;
}

Tensor activate_backward(Activation a, const Tensor& pre, const Tensor& dout) {
  Tensor g = dout;
  auto gv = g.values();
  auto pv = pre.values();
  switch (a) {
    case Activation::identity:
      break;
    case Activation::selu:
      for (std::size_t i = 0; i < gv.size(); ++i) {
        gv[i] *= pv[i] > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(pv[i]);
      }
      break;
    case Activation::softplus:
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= 1.0 / (1.0 + std::exp(-pv[i]));
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < gv.size(); ++i) {
        if (pv[i] <= 0.0) gv[i] = 0.0;
      }
      break;
  }
  return g;
}

Tensor maxpool2(const Tensor& x, std::vector<std::uint32_t>& argmax) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % 2 || W % 2) throw std::invalid_argument("maxpool2: spatial dims must be even");
  const std::size_t h = H / 2, w = W / 2;
  Tensor y({C, h, w});
  argmax.assign(C * h * w, 0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t q = 0; q < w; ++q) {
        std::size_t best = (c * H + 2 * r) * W + 2 * q;
        for (std::size_t dr = 0; dr < 2; ++dr) {
          for (std::size_t dq = 0; dq < 2; ++dq) {
            const std::size_t idx = (c * H + 2 * r + dr) * W + 2 * q + dq;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (c * h + r) * w + q;
        y[o] = x[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return y;
}

Tensor maxpool2_backward(const Tensor& dy, const std::vector<std::uint32_t>& argmax,
                         const Shape& x_shape) {
  Tensor dx(x_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

Tensor upsample2(const Tensor& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor y({C, 2 * H, 2 * W});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < 2 * H; ++r) {
      for (std::size_t q = 0; q < 2 * W; ++q) y.at(c, r, q) = x.at(c, r / 2, q / 2);
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& dy) {
  const std::size_t C = dy.dim(0), H = dy.dim(1) / 2, W = dy.dim(2) / 2;
  Tensor dx({C, H, W});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < 2 * H; ++r) {
      for (std::size_t q = 0; q < 2 * W; ++q) dx.at(c, r / 2, q / 2) += dy.at(c, r, q);
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw std::invalid_argument("concat_channels: spatial dims differ");
  }
  std::vector<double> data(a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(data));
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::size_t a_channels) {
  const std::size_t plane = x.dim(1) * x.dim(2);
  const auto v = x.values();
  const auto split = static_cast<std::ptrdiff_t>(a_channels * plane);
  Tensor a({a_channels, x.dim(1), x.dim(2)}, std::vector<double>(v.begin(), v.begin() + split));
  Tensor b({x.dim(0) - a_channels, x.dim(1), x.dim(2)}, std::vector<double>(v.begin() + split, v.end()));
  return {std::move(a), std::move(b)};
}

Tensor softmax_channels(const Tensor& logits) {
  const std::size_t C = logits.dim(0), plane = logits.dim(1) * logits.dim(2);
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < plane; ++i) {
    double m = logits[i];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, logits[c * plane + i]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double e = std::exp(logits[c * plane + i] - m);
      p[c * plane + i] = e;
      s += e;
    }
    for (std::size_t c = 0; c < C; ++c) p[c * plane + i] /= s;
  }
  return p;
}

}  // namespace qkdfl::nn
