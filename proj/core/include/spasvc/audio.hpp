#pragma once

#include <filesystem>
#include <optional>
#include <vector>

namespace spasvc {

/// Mono waveform with its sample rate. Samples are nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;
  std::optional<int> speaker_id;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Throws DataError unless sample_rate > 0 and every sample is finite.
void validate(const AudioClip& clip);

/// Reads RIFF/WAVE with 16-bit PCM or 32-bit float samples; multichannel
/// input is downmixed by averaging channels.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Band-limited resampling with a Kaiser-windowed sinc kernel. Equal rates
/// return the input unchanged.
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace spasvc
