#include "catch_amalgamated.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "spasvc/audio.hpp"
#include "spasvc/error.hpp"

using namespace spasvc;
using Catch::Approx;

TEST_CASE("resample keeps equal rates untouched", "[audio][resample]") {
  AudioClip clip{oracle::white_noise(1000, 3), 44100, 2};
  const AudioClip out = resample(clip, 44100);
  REQUIRE(out.sample_rate == 44100);
  REQUIRE(out.samples == clip.samples);
  REQUIRE(out.speaker_id == 2);
}

TEST_CASE("resample maps silence to silence with the new length", "[audio][resample]") {
  AudioClip clip{std::vector<double>(22050, 0.0), 22050, std::nullopt};
  const AudioClip out = resample(clip, 44100);
  REQUIRE(out.sample_rate == 44100);
  REQUIRE(out.samples.size() == 44100);
  for (double v : out.samples) REQUIRE(v == 0.0);
}

TEST_CASE("resample preserves a 440 Hz tone when downsampling", "[audio][resample]") {
  AudioClip clip{oracle::sine(440.0, 44100, 44100, 0.5), 44100, std::nullopt};
  const AudioClip out = resample(clip, 16000);
  REQUIRE(out.sample_rate == 16000);
  REQUIRE(std::abs(static_cast<long>(out.samples.size()) - 16000) <= 1);
  // One FFT bin of a 1 s clip is 1 Hz.
  const double peak = oracle::peak_frequency(out.samples, 16000, 300.0, 600.0, 0.25);
  REQUIRE(std::abs(peak - 440.0) <= 1.0);
}

TEST_CASE("resample suppresses content above the new Nyquist", "[audio][resample]") {
  // 7 kHz is above 16 kHz's usable band after a 44.1k -> 12k conversion.
  AudioClip clip{oracle::sine(7000.0, 44100, 44100, 0.5), 44100, std::nullopt};
  const AudioClip out = resample(clip, 12000);
  REQUIRE(oracle::rms(out.samples, 200, out.samples.size() - 200) < 0.01);
}

TEST_CASE("resample rejects empty clips and bad rates", "[audio][resample]") {
  AudioClip empty{{}, 16000, std::nullopt};
  REQUIRE_THROWS_WITH(resample(empty, 8000), "empty clip");
  AudioClip one{{0.1}, 16000, std::nullopt};
  REQUIRE_THROWS_AS(resample(one, 0), UsageError);
}

TEST_CASE("wav round trip is exact to 16-bit quantisation", "[audio][wav]") {
  oracle::TempDir dir("wav");
  AudioClip clip{oracle::sine(220.0, 16000, 4000, 0.7), 16000, std::nullopt};
  clip.samples[10] = 1.5;  // clipped on write
  write_wav(dir / "a.wav", clip);
  const AudioClip back = read_wav(dir / "a.wav");
  REQUIRE(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const double expect = std::clamp(clip.samples[i], -1.0, 1.0);
    REQUIRE(std::abs(back.samples[i] - expect) <= 1.0 / 32767.0);
  }
}

TEST_CASE("read_wav reports missing and malformed files", "[audio][wav]") {
  oracle::TempDir dir("wavbad");
  REQUIRE_THROWS_AS(read_wav(dir / "missing.wav"), DataError);
  {
    std::ofstream(dir / "junk.wav") << "definitely not audio";
  }
  REQUIRE_THROWS_AS(read_wav(dir / "junk.wav"), DataError);
}

TEST_CASE("validate rejects non-finite samples", "[audio]") {
  AudioClip clip{{0.0, std::nan("")}, 16000, std::nullopt};
  REQUIRE_THROWS_AS(validate(clip), DataError);
  clip.samples[1] = 0.0;
  clip.sample_rate = 0;
  REQUIRE_THROWS_AS(validate(clip), DataError);
}
