#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spasvc/audio.hpp"
#include "spasvc/config.hpp"
#include "spasvc/losses.hpp"
#include "spasvc/mel.hpp"
#include "spasvc/pitch.hpp"

namespace spasvc {

/// Analysis settings shared by the objective metrics. Clips at other rates
/// are resampled to mel.sample_rate first.
struct EvalConfig {
  MelConfig mel;
  F0Config f0;
  SsimConfig ssim;
  double hnr_voicing_threshold = 0.8;  // looser than F0 tracking so noisy voiced frames still count
  int spectrogram_n_fft = 1024;
  int spectrogram_hop = 256;
  double spectrogram_range_db = 80.0;
};

EvalConfig eval_config(const SvcConfig& cfg);

/// SSIM between the two log-mels, normalised jointly from the log floor to
/// their common maximum. Lengths may differ by at most one hop.
double mel_ssim_score(const AudioClip& a, const AudioClip& b, const EvalConfig& cfg);

/// RMSE in Hz over frames voiced in both clips. DataError if there are none.
double f0_rmse(const AudioClip& a, const AudioClip& b, const EvalConfig& cfg);

/// Mean harmonic-to-noise ratio (dB) over voiced frames, from a comb filter at
/// the estimated period: HNR = (E[x+x_T]^2 - E[x-x_T]^2) / (2 E[x-x_T]^2).
/// DataError if no frame is voiced.
double hoarseness_proxy(const AudioClip& clip, const EvalConfig& cfg);

/// 8-bit log-magnitude STFT image, rows = frequency (row 0 highest), cols = frames.
Mat spectrogram_image(const AudioClip& clip, const EvalConfig& cfg);
/// Writes spectrogram_image as a binary PGM.
void emit_spectrogram(const AudioClip& clip, const std::filesystem::path& path, const EvalConfig& cfg);

struct MetricRow {
  std::string file;
  double mel_ssim = 0.0;
  double f0_rmse_hz = 0.0;
  double hnr_db = 0.0;
};

inline constexpr const char* kMetricsHeader = "file,mel_ssim,f0_rmse_hz,hnr_db";

/// Metrics of `converted` against `reference`; a metric that cannot be
/// computed is NaN.
MetricRow compute_metrics(const std::string& file, const AudioClip& reference, const AudioClip& converted,
                          const EvalConfig& cfg);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

struct EvaluateReport {
  std::vector<MetricRow> rows;
  std::vector<std::string> problems;  // unpaired or unreadable files
};

/// Pairs `<ref_dir>/<name>.wav` with `<out_dir>/<name>.wav` and writes the metrics CSV.
EvaluateReport evaluate_dirs(const std::filesystem::path& ref_dir, const std::filesystem::path& out_dir,
                             const std::filesystem::path& csv_path, const EvalConfig& cfg);

}  // namespace spasvc
