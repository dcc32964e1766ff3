#include "qkdfl/dataset_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "qkdfl/errors.hpp"

namespace qkdfl::tasks {
namespace {

constexpr std::array<char, 8> kMagic{'Q', 'K', 'D', 'F', 'L', 'D', 'S', '\0'};
constexpr std::uint32_t kVersion = 1;

struct Header {
  std::uint32_t task = 0;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint64_t count = 0;
};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
  }
  template <class T>
  void le(T v) {
    std::array<char, sizeof(T)> b{};
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>(u >> (8 * i));
    out_.write(b.data(), b.size());
  }
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw Error("write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error("cannot open " + path.string());
  }
  template <class T>
  T le() {
    std::array<unsigned char, sizeof(T)> b{};
    read(b.data(), b.size());
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(b[i]) << (8 * i);
    return std::bit_cast<T>(u);
  }
  void read(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw Error(path_.string() + ": truncated dataset file");
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

void write_header(Writer& w, const Header& h) {
  w.raw(kMagic.data(), kMagic.size());
  w.le(kVersion);
  w.le(h.task);
  w.le(h.channels);
  w.le(h.height);
  w.le(h.width);
  w.le(h.count);
}

Header read_header(Reader& r, std::uint32_t expected_task, const std::filesystem::path& path) {
  std::array<char, 8> magic{};
  r.read(magic.data(), magic.size());
  if (magic != kMagic) throw Error(path.string() + ": not a qkdfl dataset");
  if (r.le<std::uint32_t>() != kVersion) throw Error(path.string() + ": unsupported dataset version");
  Header h;
  h.task = r.le<std::uint32_t>();
  h.channels = r.le<std::uint32_t>();
  h.height = r.le<std::uint32_t>();
  h.width = r.le<std::uint32_t>();
  h.count = r.le<std::uint64_t>();
  if (h.task != expected_task) throw Error(path.string() + ": dataset holds a different task");
  return h;
}

void write_sidecar(const std::filesystem::path& path, const Header& h, const nlohmann::json& generation) {
  nlohmann::json j;
  j["format"] = "qkdfl-dataset";
  j["version"] = kVersion;
  j["task"] = h.task == 0 ? "channel" : "radar";
  j["channels"] = h.channels;
  j["height"] = h.height;
  j["width"] = h.width;
  j["count"] = h.count;
  j["generation"] = generation;
  std::ofstream out(path.string() + ".json");
  if (!out) throw Error("cannot write sidecar for " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void save_channel_dataset(const std::filesystem::path& path, std::span<const ChannelSample> samples,
                          const nlohmann::json& generation) {
  if (samples.empty()) throw std::invalid_argument("refusing to save an empty dataset");
  const Shape& shape = samples.front().pilots.shape();
  const Header h{0, 1, static_cast<std::uint32_t>(shape[1]), static_cast<std::uint32_t>(shape[2]),
                 samples.size()};
  Writer w(path);
  write_header(w, h);
  for (const auto& s : samples) {
    if (s.pilots.shape() != shape || s.truth.shape() != shape) {
      throw std::invalid_argument("channel samples must share one shape");
    }
    w.le(static_cast<float>(s.snr_db));
    for (double v : s.pilots.values()) w.le(static_cast<float>(v));
    for (double v : s.truth.values()) w.le(static_cast<float>(v));
  }
  w.finish();
  write_sidecar(path, h, generation);
}

void save_radar_dataset(const std::filesystem::path& path, std::span<const RadarSample> samples,
                        const nlohmann::json& generation) {
  if (samples.empty()) throw std::invalid_argument("refusing to save an empty dataset");
  const Shape& shape = samples.front().spectrogram.shape();
  const Header h{1, static_cast<std::uint32_t>(shape[0]), static_cast<std::uint32_t>(shape[1]),
                 static_cast<std::uint32_t>(shape[2]), samples.size()};
  Writer w(path);
  write_header(w, h);
  for (const auto& s : samples) {
    if (s.spectrogram.shape() != shape || s.labels.size() != shape[1] * shape[2]) {
      throw std::invalid_argument("radar samples must share one shape");
    }
    for (double v : s.spectrogram.values()) w.le(static_cast<float>(v));
    w.raw(s.labels.data(), s.labels.size());
  }
  w.finish();
  write_sidecar(path, h, generation);
}

std::vector<ChannelSample> load_channel_dataset(const std::filesystem::path& path) {
  Reader r(path);
  const Header h = read_header(r, 0, path);
  std::vector<ChannelSample> out;
  out.reserve(h.count);
  for (std::uint64_t n = 0; n < h.count; ++n) {
    ChannelSample s{Tensor({1, h.height, h.width}), Tensor({1, h.height, h.width}), 0.0};
    s.snr_db = r.le<float>();
    for (double& v : s.pilots.values()) v = r.le<float>();
    for (double& v : s.truth.values()) v = r.le<float>();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<RadarSample> load_radar_dataset(const std::filesystem::path& path) {
  Reader r(path);
  const Header h = read_header(r, 1, path);
  std::vector<RadarSample> out;
  out.reserve(h.count);
  for (std::uint64_t n = 0; n < h.count; ++n) {
    RadarSample s{Tensor({h.channels, h.height, h.width}),
                  std::vector<std::uint8_t>(std::size_t{h.height} * h.width)};
    for (double& v : s.spectrogram.values()) v = r.le<float>();
    r.read(s.labels.data(), s.labels.size());
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json load_dataset_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path.string() + ".json");
  if (!in) throw Error("missing sidecar for " + path.string());
  return nlohmann::json::parse(in);
}

}  // namespace qkdfl::tasks
