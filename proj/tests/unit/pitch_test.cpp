#include "catch_amalgamated.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "oracles.hpp"
#include "spasvc/error.hpp"
#include "spasvc/pitch.hpp"

using namespace spasvc;

namespace {

F0Config paper_f0() { return F0Config{}; }

double median_voiced(const F0Contour& f0) {
  std::vector<double> v;
  for (std::size_t i = 0; i < f0.size(); ++i)
    if (f0.voiced[i]) v.push_back(f0.hz[i]);
  if (v.empty()) return 0.0;
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("shift_pitch_contour applies the semitone ratio", "[pitch][shift]") {
  F0Contour f0{{220.0, 330.0}, {true, true}};
  const auto up = shift_pitch_contour(f0, 12);
  REQUIRE(up.hz[0] == Catch::Approx(440.0).epsilon(1e-12));
  REQUIRE(up.hz[1] == Catch::Approx(660.0).epsilon(1e-12));
  const auto fifth = shift_pitch_contour(F0Contour{{200.0}, {true}}, 7);
  REQUIRE(fifth.hz[0] == Catch::Approx(200.0 * std::exp2(7.0 / 12.0)).epsilon(1e-12));
  REQUIRE(fifth.hz[0] == Catch::Approx(299.66).margin(0.005));
}

TEST_CASE("shift_pitch_contour keeps unvoiced frames and round-trips", "[pitch][shift]") {
  F0Contour f0{{0.0, 150.0, 0.0, 612.5}, {false, true, false, true}};
  REQUIRE(shift_pitch_contour(f0, 0).hz == f0.hz);
  for (int k : {-12, -5, 3, 12, 18}) {
    const auto s = shift_pitch_contour(f0, k);
    REQUIRE(s.voiced == f0.voiced);
    REQUIRE(s.voiced_count() == f0.voiced_count());
    REQUIRE(s.hz[0] == 0.0);
    REQUIRE(s.hz[2] == 0.0);
    const auto back = shift_pitch_contour(s, -k);
    for (std::size_t i = 0; i < f0.size(); ++i)
      if (f0.voiced[i]) REQUIRE(std::abs(back.hz[i] - f0.hz[i]) / f0.hz[i] < 1e-9);
  }
}

TEST_CASE("cycle keys are uniform integers in [6, 18]", "[pitch][keys]") {
  std::mt19937_64 rng(1);
  std::map<int, int> count;
  for (int i = 0; i < 10000; ++i) ++count[sample_cycle_key(rng)];
  REQUIRE(count.size() == 13);
  REQUIRE(count.begin()->first == 6);
  REQUIRE(count.rbegin()->first == 18);
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 50; ++i) REQUIRE(sample_cycle_key(a) == sample_cycle_key(b));
}

TEST_CASE("perturbation keys are integers in [-5, 5] with mean near zero", "[pitch][keys]") {
  std::mt19937_64 rng(2);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const int k = sample_perturb_key(rng);
    REQUIRE(k >= -5);
    REQUIRE(k <= 5);
    sum += k;
  }
  REQUIRE(std::abs(sum / 10000.0) < 0.2);
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 50; ++i) REQUIRE(sample_perturb_key(a) == sample_perturb_key(b));
}

TEST_CASE("downward cycle direction negates the key", "[pitch][keys]") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const int k = sample_cycle_key(rng, 6, 18, CycleDirection::Down);
    REQUIRE(k <= -6);
    REQUIRE(k >= -18);
  }
}

TEST_CASE("YIN tracks a pure tone", "[pitch][yin]") {
  AudioClip clip{oracle::sine(440.0, 44100, 88200, 0.5), 44100, std::nullopt};
  const auto f0 = estimate_f0(clip, paper_f0());
  REQUIRE(f0.size() == 173);
  REQUIRE(static_cast<double>(f0.voiced_count()) >= 0.95 * f0.size());
  REQUIRE(std::abs(median_voiced(f0) - 440.0) / 440.0 < 0.01);
  // cross-check against an independent autocorrelation estimate
  const std::vector<double> window(clip.samples.begin() + 20000, clip.samples.begin() + 22048);
  const double ref = oracle::autocorr_f0(window, 44100, 40.0, 1200.0);
  REQUIRE(std::abs(median_voiced(f0) - ref) / ref < 0.01);
}

TEST_CASE("YIN marks noise and silence unvoiced", "[pitch][yin]") {
  AudioClip noise{oracle::white_noise(88200, 17, 0.3), 44100, std::nullopt};
  const auto f0n = estimate_f0(noise, paper_f0());
  REQUIRE(static_cast<double>(f0n.size() - f0n.voiced_count()) >= 0.8 * f0n.size());
  AudioClip silence{std::vector<double>(44100, 0.0), 44100, std::nullopt};
  const auto f0s = estimate_f0(silence, paper_f0());
  REQUIRE(f0s.voiced_count() == 0);
  for (double h : f0s.hz) REQUIRE(h == 0.0);
  for (std::size_t i = 0; i < f0n.size(); ++i)
    if (!f0n.voiced[i]) REQUIRE(f0n.hz[i] == 0.0);
}

TEST_CASE("signal-domain shifts agree with contour shifts", "[pitch][yin]") {
  const double f = 220.0;
  AudioClip base{oracle::sine(f, 44100, 44100, 0.5), 44100, std::nullopt};
  const auto f0 = estimate_f0(base, paper_f0());
  for (int k : {-7, 5, 12}) {
    AudioClip moved{oracle::sine(f * std::exp2(k / 12.0), 44100, 44100, 0.5), 44100, std::nullopt};
    const double measured = median_voiced(estimate_f0(moved, paper_f0()));
    const double predicted = median_voiced(shift_pitch_contour(f0, k));
    REQUIRE(std::abs(measured - predicted) / predicted < 0.02);
  }
}

TEST_CASE("estimate_f0 is deterministic and rejects bad input", "[pitch][yin]") {
  AudioClip clip{oracle::white_noise(10000, 8, 0.2), 44100, std::nullopt};
  REQUIRE(estimate_f0(clip, paper_f0()).hz == estimate_f0(clip, paper_f0()).hz);
  AudioClip tiny{std::vector<double>(64, 0.1), 44100, std::nullopt};
  REQUIRE_THROWS_AS(estimate_f0(tiny, paper_f0()), DataError);
  AudioClip wrong{std::vector<double>(10000, 0.1), 16000, std::nullopt};
  REQUIRE_THROWS_AS(estimate_f0(wrong, paper_f0()), UsageError);
}
