#include "qkdfl/datasets.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qkdfl::tasks {

std::vector<ChannelSample> gen_channel_dataset(std::size_t n, double snr_db, ChannelDims dims,
                                               std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("gen_channel_dataset: n must be >= 1");
  if (dims.height == 0 || dims.width == 0) throw std::invalid_argument("gen_channel_dataset: empty dims");
  const double noise_var = std::pow(10.0, -snr_db / 10.0);
  const double noise_std = std::sqrt(noise_var / 2.0);
  const double fade_std = std::sqrt(0.5);
  const Rng root(seed);

  std::vector<ChannelSample> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    Rng fading = root.substream("channel.fading", s);
    Rng pilots = root.substream("channel.pilots", s);
    Rng noise = root.substream("channel.noise", s);
    ChannelSample sample{Tensor({1, dims.height, dims.width}), Tensor({1, dims.height, dims.width}),
                         snr_db};
    for (std::size_t i = 0; i < dims.height * dims.width; ++i) {
      const double h_re = fade_std * fading.normal();
      const double h_im = fade_std * fading.normal();
      // X in {1, j, -1, -j}: multiplication is an exact rotation.
      double y_re = h_re, y_im = h_im;
      switch (pilots.below(4)) {
        case 1: y_re = -h_im; y_im = h_re; break;
        case 2: y_re = -h_re; y_im = -h_im; break;
        case 3: y_re = h_im; y_im = -h_re; break;
        default: break;
      }
      const double z_re = noise.normal();
      const double z_im = noise.normal();
      if (noise_std > 0.0) {
        y_re += noise_std * z_re;
        y_im += noise_std * z_im;
      }
      sample.pilots[i] = std::hypot(y_re, y_im);
      sample.truth[i] = std::hypot(h_re, h_im);
    }
    out.push_back(std::move(sample));
  }
  return out;
}

namespace {

// Index drawn from a small discrete distribution.
std::size_t draw_weighted(Rng& rng, std::initializer_list<double> weights) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t i = 0;
  for (double w : weights) {
    acc += w;
    if (u < acc) return i;
    ++i;
  }
  return i - 1;
}

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

}  // namespace

RadarScene sample_radar_scene(std::size_t size, Rng& rng) {
  if (size < 16) throw std::invalid_argument("radar spectrogram size must be >= 16");
  RadarScene scene;
  const std::size_t band_count = draw_weighted(rng, {0.05, 0.25, 0.70});
  const bool mixed_pair = rng.uniform() < 0.8;
  const std::size_t max_band = std::max<std::size_t>(2, size / 6);
  for (std::size_t b = 0; b < band_count; ++b) {
    RadarBand band;
    if (band_count == 2 && mixed_pair && b == 1) {
      band.cls = scene.bands[0].cls == RadarClass::lte ? RadarClass::nr : RadarClass::lte;
    } else {
      band.cls = rng.bit() ? RadarClass::lte : RadarClass::nr;
    }
    const std::size_t height = draw_between(rng, 2, max_band);
    band.row_begin = draw_between(rng, 0, size - height);
    band.row_end = band.row_begin + height;
    scene.bands.push_back(band);
  }
  const std::size_t pulse_count = draw_weighted(rng, {0.10, 0.40, 0.50});
  for (std::size_t p = 0; p < pulse_count; ++p) {
    RadarPulse pulse;
    const std::size_t height = draw_between(rng, std::max<std::size_t>(2, size / 8), size / 3);
    const std::size_t width = draw_between(rng, 1, std::max<std::size_t>(2, size / 16));
    pulse.row_begin = draw_between(rng, 0, size - height);
    pulse.row_end = pulse.row_begin + height;
    pulse.col_begin = draw_between(rng, 0, size - width);
    pulse.col_end = pulse.col_begin + width;
    scene.pulses.push_back(pulse);
  }
  return scene;
}

RadarSample render_radar_scene(const RadarScene& scene, std::size_t size, Rng& rng) {
  const std::size_t S = size;
  RadarSample sample{Tensor({3, S, S}), std::vector<std::uint8_t>(S * S, 0)};
  for (const auto& band : scene.bands) {
    if (band.row_end > S || band.row_begin >= band.row_end) throw std::invalid_argument("band outside spectrogram");
    for (std::size_t r = band.row_begin; r < band.row_end; ++r) {
      for (std::size_t c = 0; c < S; ++c) sample.labels[r * S + c] = static_cast<std::uint8_t>(band.cls);
    }
  }
  for (const auto& pulse : scene.pulses) {
    if (pulse.row_end > S || pulse.col_end > S || pulse.row_begin >= pulse.row_end ||
        pulse.col_begin >= pulse.col_end) {
      throw std::invalid_argument("pulse outside spectrogram");
    }
    for (std::size_t r = pulse.row_begin; r < pulse.row_end; ++r) {
      for (std::size_t c = pulse.col_begin; c < pulse.col_end; ++c) {
        sample.labels[r * S + c] = static_cast<std::uint8_t>(RadarClass::radar);
      }
    }
  }

  // Per-class textures over the three planes. LTE: steady wideband energy;
  // NR: slot-gated energy strongest in plane 2; radar: saturating bursts.
  const double lte_phase = 2.0 * std::numbers::pi * rng.uniform();
  const double gain = 0.8 + 0.4 * rng.uniform();
  for (std::size_t r = 0; r < S; ++r) {
    for (std::size_t c = 0; c < S; ++c) {
      const auto cls = static_cast<RadarClass>(sample.labels[r * S + c]);
      double e0 = 0.0, e1 = 0.0, e2 = 0.0;
      switch (cls) {
        case RadarClass::noise:
          break;
        case RadarClass::lte:
          e0 = gain * (1.0 + 0.2 * std::sin(0.7 * static_cast<double>(c) + lte_phase));
          e1 = 0.6 * gain;
          e2 = 0.1 * gain;
          break;
        case RadarClass::nr:
          e0 = 0.5 * gain;
          e1 = 0.1 * gain;
          e2 = gain * ((c / 2) % 2 == 0 ? 1.2 : 0.7);
          break;
        case RadarClass::radar:
          e0 = 2.0 * gain;
          e1 = 1.5 * gain;
          e2 = 1.0 * gain;
          break;
      }
      sample.spectrogram.at(0, r, c) = e0 + 0.15 * rng.normal();
      sample.spectrogram.at(1, r, c) = e1 + 0.15 * rng.normal();
      sample.spectrogram.at(2, r, c) = e2 + 0.15 * rng.normal();
    }
  }
  return sample;
}

std::vector<RadarSample> gen_radar_dataset(std::size_t n, std::size_t size, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("gen_radar_dataset: n must be >= 1");
  if (size < 16) throw std::invalid_argument("gen_radar_dataset: size must be >= 16");
  const Rng root(seed);
  std::vector<RadarSample> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    Rng scene_rng = root.substream("radar.scene", s);
    Rng texture_rng = root.substream("radar.texture", s);
    out.push_back(render_radar_scene(sample_radar_scene(size, scene_rng), size, texture_rng));
  }
  return out;
}

}  // namespace qkdfl::tasks
