#include "catch_amalgamated.hpp"

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "spasvc/corpus.hpp"
#include "spasvc/error.hpp"
#include "spasvc/losses.hpp"
#include "spasvc/vocoder.hpp"

using namespace spasvc;

namespace {

VocoderConfig desk_vocoder() {
  VocoderConfig v;
  v.mel = MelConfig{16000, 512, 128, 40, 40.0, 8000.0, 1e-5};
  return v;
}

F0Config desk_f0() {
  F0Config f;
  f.sample_rate = 16000;
  f.hop = 128;
  return f;
}

double median_voiced(const F0Contour& f0) {
  std::vector<double> v;
  for (std::size_t i = 0; i < f0.size(); ++i)
    if (f0.voiced[i]) v.push_back(f0.hz[i]);
  if (v.empty()) return 0.0;
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

MelSpec analyse(const std::vector<double>& x, const MelConfig& cfg) {
  return mel_spectrogram(AudioClip{x, cfg.sample_rate, std::nullopt}, cfg);
}

}  // namespace

TEST_CASE("single-sinusoid mel response matches analysis of a real tone", "[vocoder]") {
  const VocoderConfig cfg = desk_vocoder();
  const Mat fb = mel_filterbank(cfg.mel);
  const auto resp = sinusoid_mel_response(fb, cfg.mel, 600.0);
  const MelSpec mel = analyse(oracle::sine(600.0, 16000, 16000), cfg.mel);
  for (int m = 0; m < cfg.mel.n_mels; ++m) {
    const double measured = std::exp(mel.values(60, m));
    if (resp[m] > 1e-2 * *std::max_element(resp.begin(), resp.end()))
      REQUIRE(measured == Catch::Approx(resp[m]).epsilon(0.02));
  }
}

TEST_CASE("silence mel with no pitch vocodes to near silence", "[vocoder]") {
  const VocoderConfig cfg = desk_vocoder();
  MelSpec mel;
  mel.values = Mat::Constant(50, 40, std::log(1e-5));
  mel.n_mels = 40;
  mel.hop = 128;
  const AudioClip out = vocode(mel, F0Contour::unvoiced(50), cfg, 1);
  REQUIRE(out.samples.size() == 50u * 128u);
  REQUIRE(oracle::rms(out.samples) < 1e-3);
}

TEST_CASE("vocoded pitch follows the F0 track", "[vocoder]") {
  const VocoderConfig cfg = desk_vocoder();
  // A bright source: 440 Hz pulse-like tone with many harmonics.
  std::vector<double> x(32000, 0.0);
  for (int k = 1; k <= 15; ++k) {
    const auto h = oracle::sine(440.0 * k, 16000, x.size(), 0.3 / k);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += h[i];
  }
  const MelSpec mel = analyse(x, cfg.mel);
  const auto f0 = F0Contour::constant(static_cast<std::size_t>(mel.frames()), 440.0);
  const AudioClip out = vocode(mel, f0, cfg, 2);
  const double base = median_voiced(estimate_f0(out, desk_f0()));
  REQUIRE(std::abs(base - 440.0) / 440.0 < 0.01);

  // The 440 Hz band energy no harmonic can explain would come back as
  // narrow-band noise, so the mismatched case is checked without the noise branch.
  VocoderConfig harmonic_only = cfg;
  harmonic_only.noise_gain = 0.0;
  const AudioClip up = vocode(mel, shift_pitch_contour(f0, 12), harmonic_only, 2);
  const double octave = median_voiced(estimate_f0(up, desk_f0()));
  REQUIRE(std::abs(octave - 2.0 * base) / (2.0 * base) < 0.02);
}

TEST_CASE("vocoder round trip preserves the mel", "[vocoder]") {
  const VocoderConfig cfg = desk_vocoder();
  SyntheticCorpusSpec spec;
  spec.clips_per_speaker = 2;
  spec.seed = 99;  // clips never used for calibration elsewhere
  F0Config fc = desk_f0();
  for (const auto& speaker : spec.speakers) {
    for (int i = 0; i < spec.clips_per_speaker; ++i) {
      const AudioClip clip = synthesize_singing(speaker, i, spec);
      const MelSpec mel = analyse(clip.samples, cfg.mel);
      const F0Contour f0 = estimate_f0(clip, fc);
      const AudioClip out = vocode(mel, f0, cfg, 3);
      std::vector<double> trimmed(out.samples.begin(), out.samples.begin() + static_cast<long>(clip.samples.size()));
      const MelSpec back = analyse(trimmed, cfg.mel);
      const MelNorm norm{std::log(1e-5), std::max(mel.values.maxCoeff(), back.values.maxCoeff())};
      REQUIRE(ssim(normalize(mel, norm), normalize(back, norm), SsimConfig{}) >= 0.7);
    }
  }
}

TEST_CASE("vocoder is deterministic per seed and checks alignment", "[vocoder]") {
  const VocoderConfig cfg = desk_vocoder();
  const MelSpec mel = analyse(oracle::white_noise(8000, 5, 0.2), cfg.mel);
  const auto f0 = F0Contour::unvoiced(static_cast<std::size_t>(mel.frames()));
  REQUIRE(vocode(mel, f0, cfg, 4).samples == vocode(mel, f0, cfg, 4).samples);
  REQUIRE(vocode(mel, f0, cfg, 4).samples != vocode(mel, f0, cfg, 5).samples);
  REQUIRE_THROWS_AS(vocode(mel, F0Contour::unvoiced(3), cfg, 4), DataError);
}
