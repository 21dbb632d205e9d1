#include "spasvc/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "spasvc/error.hpp"

namespace spasvc {
namespace {

std::uint32_t read_u32(const char* p) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24);
}

std::uint16_t read_u16(const char* p) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(p[0]) |
                                    (static_cast<unsigned char>(p[1]) << 8));
}

void put_u32(std::ofstream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put_u16(std::ofstream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

void validate(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw DataError("invalid sample rate " + std::to_string(clip.sample_rate));
  for (double s : clip.samples) {
    if (!std::isfinite(s)) throw DataError("non-finite audio sample");
  }
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open wav file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0)
    throw DataError("not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    std::size_t len = read_u32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) len = bytes.size() - body;
    if (id == "fmt ") {
      if (len < 16) throw DataError("truncated fmt chunk: " + path.string());
      format = read_u16(&bytes[body]);
      channels = read_u16(&bytes[body + 2]);
      rate = read_u32(&bytes[body + 4]);
      bits = read_u16(&bytes[body + 14]);
      if (format == 0xFFFE && len >= 26) format = read_u16(&bytes[body + 24]);
    } else if (id == "data") {
      data = &bytes[body];
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (channels == 0 || rate == 0 || data == nullptr)
    throw DataError("missing fmt or data chunk: " + path.string());

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw DataError("unsupported wav encoding (need 16-bit PCM or 32-bit float): " + path.string());

  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const char* p = data + (i * channels + c) * width;
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        float f;
        std::memcpy(&f, p, 4);
        acc += f;
      }
    }
    clip.samples[i] = acc / channels;
  }
  validate(clip);
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  validate(clip);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write wav file: " + path.string());
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  os.write("RIFF", 4);
  put_u32(os, 36 + n * 2);
  os.write("WAVEfmt ", 8);
  put_u32(os, 16);
  put_u16(os, 1);
  put_u16(os, 1);
  put_u32(os, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(os, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, n * 2);
  for (double s : clip.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::clamp(std::lround(c * 32768.0), -32768L, 32767L));
    put_u16(os, static_cast<std::uint16_t>(v));
  }
  if (!os) throw DataError("short write: " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw UsageError("target rate must be positive");
  if (clip.samples.empty()) throw DataError("empty clip");
  validate(clip);
  if (target_rate == clip.sample_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  // Cutoff sits just under the lower Nyquist so the transition band stays out of the passband edge.
  const double cutoff = 0.97 * std::min(1.0, ratio);
  constexpr double kZeroCrossings = 24.0;
  constexpr double kBeta = 8.6;
  const double half_width = kZeroCrossings / cutoff;
  const double norm = std::cyl_bessel_i(0.0, kBeta);

  // Kernel sampled on a fine grid over |d| in [0, half_width]; linear interpolation between taps.
  constexpr int kTableDensity = 512;
  const auto table_size = static_cast<std::size_t>(std::ceil(half_width * kTableDensity)) + 2;
  std::vector<double> table(table_size);
  for (std::size_t j = 0; j < table_size; ++j) {
    const double d = static_cast<double>(j) / kTableDensity;
    const double r = std::min(1.0, d / half_width);
    const double w = std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - r * r)) / norm;
    table[j] = cutoff * sinc(cutoff * d) * w;
  }
  auto kernel = [&](double d) {
    const double pos = std::abs(d) * kTableDensity;
    const auto j = static_cast<std::size_t>(pos);
    if (j + 1 >= table_size) return 0.0;
    const double frac = pos - static_cast<double>(j);
    return table[j] + frac * (table[j + 1] - table[j]);
  };

  const auto n_in = static_cast<long>(clip.samples.size());
  const auto n_out = static_cast<long>(std::llround(n_in * ratio));
  AudioClip out;
  out.sample_rate = target_rate;
  out.speaker_id = clip.speaker_id;
  out.samples.assign(static_cast<std::size_t>(n_out), 0.0);
  for (long n = 0; n < n_out; ++n) {
    const double t = n / ratio;
    const long lo = std::max(0L, static_cast<long>(std::ceil(t - half_width)));
    const long hi = std::min(n_in - 1, static_cast<long>(std::floor(t + half_width)));
    double acc = 0.0;
    for (long i = lo; i <= hi; ++i) acc += clip.samples[static_cast<std::size_t>(i)] * kernel(t - i);
    out.samples[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

}  // namespace spasvc
