#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "spasvc/audio.hpp"
#include "spasvc/content_encoder.hpp"
#include "spasvc/eval.hpp"
#include "spasvc/model.hpp"
#include "spasvc/pitch.hpp"
#include "spasvc/vocoder.hpp"

namespace spasvc {

struct ConversionRequest {
  AudioClip source;
  int target_speaker = 1;
  int key = 0;
  int diffusion_k = 100;
  std::uint64_t seed = 0;
};

struct ConversionResult {
  AudioClip audio;       // vocoded output, same length as the source at the model rate
  AudioClip ddsp_audio;  // DDSP waveform before diffusion and vocoding
  MelSpec mel;           // normalised mel after shallow diffusion
  F0Contour f0;          // shifted F0 driving synthesis
  std::vector<std::string> warnings;
};

/// Inference path over a frozen model: features, pitch shift, DDSP, shallow
/// diffusion from the DDSP mel, vocoder. Safe to call concurrently.
class Converter {
 public:
  explicit Converter(const SvcModel& model);
  ConversionResult convert(const ConversionRequest& req) const;
  const SvcModel& model() const { return model_; }

 private:
  const SvcModel& model_;
  std::unique_ptr<ContentEncoder> encoder_;
  Vocoder vocoder_;
};

AudioClip convert(const ConversionRequest& req, const SvcModel& model);

/// `<stem>_spk<id>_key<key>.wav`
std::string output_name(const std::filesystem::path& source, int speaker_id, int key);

struct BatchReport {
  std::vector<std::filesystem::path> outputs;
  std::vector<MetricRow> metrics;
  std::vector<std::string> errors;  // one entry per failed row
};

/// Converts every row of a `source,target_speaker,key` CSV (paths relative to
/// the manifest). Failed rows are reported and skipped. Writes metrics.csv
/// comparing each output with its source.
BatchReport batch_convert(const std::filesystem::path& manifest, const SvcModel& model,
                          const std::filesystem::path& out_dir, int diffusion_k, std::uint64_t seed);

}  // namespace spasvc
