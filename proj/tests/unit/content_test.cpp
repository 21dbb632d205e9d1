#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "spasvc/content_encoder.hpp"
#include "spasvc/error.hpp"

using namespace spasvc;
using spasvc::ag::Mat;

namespace {

// Glottal pulse train through three resonators at the given formants.
std::vector<double> vowel(const std::vector<double>& formants, double f0, int sr, std::size_t n) {
  std::vector<double> x(n, 0.0);
  const int period = static_cast<int>(std::lround(sr / f0));
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(period)) x[i] = 1.0;
  for (double fc : formants) {
    const double r = std::exp(-std::numbers::pi * 80.0 / sr);
    const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * fc / sr), a2 = -r * r;
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      y[i] = x[i] + (i > 0 ? a1 * y[i - 1] : 0.0) + (i > 1 ? a2 * y[i - 2] : 0.0);
    x = y;
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  for (double& v : x) v *= 0.5 / peak;
  return x;
}

double mean_cosine(const Mat& a, const Mat& b) {
  double acc = 0.0;
  for (Eigen::Index t = 0; t < a.rows(); ++t)
    acc += a.row(t).dot(b.row(t)) / (a.row(t).norm() * b.row(t).norm() + 1e-300);
  return acc / static_cast<double>(a.rows());
}

}  // namespace

TEST_CASE("silence encodes to constant features", "[content]") {
  const ContentConfig cfg;
  AudioClip clip{std::vector<double>(16000, 0.0), 16000, std::nullopt};
  const auto f = encode(clip, cfg);
  REQUIRE(f.frames() == 50);
  REQUIRE(f.dim() == 32);
  for (Eigen::Index t = 1; t < f.frames(); ++t) REQUIRE(f.values.row(t) == f.values.row(0));
}

TEST_CASE("content features ignore a 6 dB gain change", "[content]") {
  const ContentConfig cfg;
  const auto x = vowel({700, 1200, 2600}, 180.0, 16000, 16000);
  std::vector<double> half(x);
  for (double& v : half) v *= 0.5;
  const auto a = encode(AudioClip{x, 16000, std::nullopt}, cfg);
  const auto b = encode(AudioClip{half, 16000, std::nullopt}, cfg);
  for (Eigen::Index t = 0; t < a.frames(); ++t) {
    const double c = a.values.row(t).dot(b.values.row(t)) / (a.values.row(t).norm() * b.values.row(t).norm());
    REQUIRE(c >= 0.99);
  }
}

TEST_CASE("different vowels are less similar than the same vowel", "[content]") {
  const ContentConfig cfg;
  const auto a1 = encode(AudioClip{vowel({700, 1200, 2600}, 180.0, 16000, 16000), 16000, std::nullopt}, cfg);
  const auto a2 = encode(AudioClip{vowel({700, 1200, 2600}, 240.0, 16000, 16000), 16000, std::nullopt}, cfg);
  const auto i1 = encode(AudioClip{vowel({300, 2300, 3000}, 180.0, 16000, 16000), 16000, std::nullopt}, cfg);
  REQUIRE(mean_cosine(a1.values, a2.values) > mean_cosine(a1.values, i1.values));
}

TEST_CASE("align_to_frames interpolates linearly with fixed endpoints", "[content][align]") {
  ContentFeatures f{Mat::Random(7, 4)};
  REQUIRE(align_to_frames(f, 7).values == f.values);

  ContentFeatures flat{Mat::Constant(5, 3, 0.25)};
  for (int n : {1, 2, 9, 40}) {
    const auto out = align_to_frames(flat, n);
    REQUIRE(out.frames() == n);
    REQUIRE((out.values.array() - 0.25).abs().maxCoeff() < 1e-15);
  }

  ContentFeatures ramp{Mat(2, 2)};
  ramp.values << 0.0, 0.0, 1.0, 1.0;
  const auto mid = align_to_frames(ramp, 3);
  REQUIRE(mid.values(1, 0) == Catch::Approx(0.5));
  REQUIRE(mid.values.row(0) == ramp.values.row(0));
  REQUIRE(mid.values.row(2) == ramp.values.row(1));

  REQUIRE_THROWS_AS(align_to_frames(f, 0), UsageError);
}

TEST_CASE("encode_aligned resamples to the encoder rate", "[content]") {
  const auto enc = make_content_encoder(ContentConfig{});
  AudioClip clip{vowel({500, 1500, 2500}, 200.0, 44100, 44100), 44100, std::nullopt};
  const auto f = encode_aligned(*enc, clip, 87);
  REQUIRE(f.frames() == 87);
  REQUIRE(f.values.allFinite());
  AudioClip wrong{std::vector<double>(8000, 0.1), 44100, std::nullopt};
  REQUIRE_THROWS_AS(enc->encode(wrong), UsageError);
  AudioClip tiny{std::vector<double>(10, 0.1), 16000, std::nullopt};
  REQUIRE_THROWS_AS(enc->encode(tiny), DataError);
}
