#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "qkdfl/datasets.hpp"

namespace qkdfl::tasks {

/// Flat binary dataset container.
///
/// Header (little-endian): 8-byte magic "QKDFLDS\0", u32 version (1),
/// u32 task (0 channel, 1 radar), u32 channels, u32 height, u32 width,
/// u64 count. Channel samples follow as f32 snr_db, H*W f32 pilots,
/// H*W f32 truth; radar samples as C*H*W f32 (channel-planar) then H*W u8
/// labels. Values are rounded to 32-bit floats on save.
///
/// A JSON sidecar `<path>.json` records `generation` (free-form generation
/// parameters) together with the header fields.
void save_channel_dataset(const std::filesystem::path& path, std::span<const ChannelSample> samples,
                          const nlohmann::json& generation);
void save_radar_dataset(const std::filesystem::path& path, std::span<const RadarSample> samples,
                        const nlohmann::json& generation);

std::vector<ChannelSample> load_channel_dataset(const std::filesystem::path& path);
std::vector<RadarSample> load_radar_dataset(const std::filesystem::path& path);

/// Reads the sidecar written next to a dataset.
nlohmann::json load_dataset_sidecar(const std::filesystem::path& path);

}  // namespace qkdfl::tasks
