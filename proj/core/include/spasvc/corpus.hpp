#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spasvc/audio.hpp"
#include "spasvc/config.hpp"
#include "spasvc/content_encoder.hpp"
#include "spasvc/mel.hpp"
#include "spasvc/pitch.hpp"

namespace spasvc {

/// Aligned per-frame features of one clip. `mel` is raw log-mel; `audio` is
/// the clip at the mel sample rate.
struct FeatureBundle {
  std::string speaker;
  std::string name;
  int speaker_id = 0;
  MelSpec mel;
  F0Contour f0;
  VolumeContour volume;
  ContentFeatures content;
  AudioClip audio;

  Eigen::Index frames() const { return mel.frames(); }
  void validate() const;
};

/// `clip` must already be at cfg.mel.sample_rate.
FeatureBundle extract_features(const AudioClip& clip, const SvcConfig& cfg, const ContentEncoder& encoder);

void save_bundle(const FeatureBundle& bundle, const std::filesystem::path& path);
FeatureBundle load_bundle(const std::filesystem::path& path);

/// A preprocessed corpus directory:
///   corpus.json                       config echo, speakers, norm, record list
///   records/<speaker>/<clip>.rec      one FeatureBundle archive per clip
struct Corpus {
  struct Entry {
    std::string speaker;
    std::string name;
    std::filesystem::path path;
    int frames = 0;
  };
  SvcConfig config;
  std::vector<std::string> speakers;  // alphabetical; id = index + 1
  MelNorm norm;
  std::vector<Entry> entries;

  static Corpus open(const std::filesystem::path& dir);
  std::vector<FeatureBundle> load_all() const;
};

struct PreprocessReport {
  int records = 0;
  std::vector<std::string> skipped;   // clips shorter than the minimum duration
  std::vector<std::string> warnings;  // unreadable or otherwise rejected files
};

/// Reads `<input>/<speaker>/<clip>.wav`, resamples, drops short clips, and
/// writes records plus corpus.json under `output`. Throws DataError when no
/// clip survives. Re-running on the same input reproduces the same files.
PreprocessReport preprocess(const std::filesystem::path& input, const std::filesystem::path& output,
                            const SvcConfig& cfg);

/// Min/max over the raw log-mel values of every bundle.
MelNorm corpus_norm(const std::vector<FeatureBundle>& bundles);

/// Options for the synthetic gliding-pitch formant corpus.
struct SyntheticCorpusSpec {
  std::vector<std::string> speakers = {"alto", "bass"};
  int clips_per_speaker = 5;
  int sample_rate = 16000;
  double min_seconds = 2.0;
  double max_seconds = 2.6;
  std::uint64_t seed = 7;
};

/// One synthetic "sung" clip: vowel-like formant filtering of a harmonic
/// source whose pitch glides between notes with vibrato.
AudioClip synthesize_singing(const std::string& speaker, int index, const SyntheticCorpusSpec& spec);

/// Writes `<dir>/<speaker>/<speaker>_<i>.wav` for every speaker and clip.
std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& dir,
                                                          const SyntheticCorpusSpec& spec);

}  // namespace spasvc
