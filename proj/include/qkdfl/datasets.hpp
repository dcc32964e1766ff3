#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "qkdfl/rng.hpp"
#include "qkdfl/tensor.hpp"

namespace qkdfl::tasks {

/// One OFDM resource grid. Both tensors are (1, H, W).
struct ChannelSample {
  Tensor pilots;  // |Y| = |X H + Z|
  Tensor truth;   // |H|
  double snr_db = 0.0;
};

struct ChannelDims {
  std::size_t height = 48;  // subcarriers
  std::size_t width = 14;   // OFDM symbols
};

/// Rayleigh-fading pilots: H ~ CN(0, 1), unit-magnitude pilots drawn from
/// {1, j, -1, -j}, Z ~ CN(0, 10^(-snr_db/10)). `snr_db` may be +infinity.
std::vector<ChannelSample> gen_channel_dataset(std::size_t n, double snr_db, ChannelDims dims,
                                               std::uint64_t seed);

enum class RadarClass : std::uint8_t { noise = 0, lte = 1, nr = 2, radar = 3 };
inline constexpr std::size_t kRadarClasses = 4;

/// Spectrogram (3, S, S) with rows as frequency and columns as time, plus
/// S*S row-major labels.
struct RadarSample {
  Tensor spectrogram;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return spectrogram.rank() == 3 ? spectrogram.dim(1) : 0; }
};

/// A horizontal frequency band occupying rows [row_begin, row_end) for all time.
struct RadarBand {
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
  RadarClass cls = RadarClass::lte;
};

/// A short high-intensity pulse rectangle.
struct RadarPulse {
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
  std::size_t col_begin = 0;
  std::size_t col_end = 0;
};

/// Regions painted in order: bands first, then pulses; later regions win.
struct RadarScene {
  std::vector<RadarBand> bands;
  std::vector<RadarPulse> pulses;
};

/// Draws 0-2 LTE/NR bands and 0-2 radar pulses for an S x S spectrogram.
RadarScene sample_radar_scene(std::size_t size, Rng& rng);

/// Paints a scene: every pixel gets background noise plus the texture of the
/// class that owns it, and the label map records that class.
RadarSample render_radar_scene(const RadarScene& scene, std::size_t size, Rng& rng);

/// n procedurally generated samples at resolution S >= 16.
std::vector<RadarSample> gen_radar_dataset(std::size_t n, std::size_t size, std::uint64_t seed);

}  // namespace qkdfl::tasks
