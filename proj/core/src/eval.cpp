#include "spasvc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "spasvc/error.hpp"
#include "spasvc/fft.hpp"

namespace spasvc {
namespace fs = std::filesystem;

namespace {

AudioClip at_rate(const AudioClip& clip, int rate) { return clip.sample_rate == rate ? clip : resample(clip, rate); }

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

// Linear interpolation of x at fractional index p (zero outside).
double sample_at(const std::vector<double>& x, double p) {
  const auto i = static_cast<long>(std::floor(p));
  const double f = p - static_cast<double>(i);
  const auto n = static_cast<long>(x.size());
  const double a = (i >= 0 && i < n) ? x[static_cast<std::size_t>(i)] : 0.0;
  const double b = (i + 1 >= 0 && i + 1 < n) ? x[static_cast<std::size_t>(i + 1)] : 0.0;
  return (1.0 - f) * a + f * b;
}

}  // namespace

EvalConfig eval_config(const SvcConfig& cfg) {
  EvalConfig e;
  e.mel = cfg.mel;
  e.f0 = cfg.f0;
  e.ssim = cfg.ssim;
  return e;
}

double mel_ssim_score(const AudioClip& a_in, const AudioClip& b_in, const EvalConfig& cfg) {
  const AudioClip a = at_rate(a_in, cfg.mel.sample_rate);
  const AudioClip b = at_rate(b_in, cfg.mel.sample_rate);
  const auto la = static_cast<long>(a.samples.size()), lb = static_cast<long>(b.samples.size());
  if (std::abs(la - lb) > cfg.mel.hop)
    throw DataError("clip lengths differ by more than one hop (" + std::to_string(la) + " vs " + std::to_string(lb) + ")");
  const MelSpec ma = mel_spectrogram(a, cfg.mel);
  const MelSpec mb = mel_spectrogram(b, cfg.mel);
  const Eigen::Index n = std::min(ma.frames(), mb.frames());
  const Mat xa = ma.values.topRows(n), xb = mb.values.topRows(n);
  const MelNorm norm{std::log(cfg.mel.log_floor), std::max(xa.maxCoeff(), xb.maxCoeff())};
  if (!(norm.max > norm.min)) return 1.0;  // both silent
  auto scale = [&](const Mat& m) { return ((m.array() - norm.min) / norm.range()).cwiseMax(0.0).cwiseMin(1.0).matrix(); };
  return ssim(Mat(scale(xa)), Mat(scale(xb)), cfg.ssim);
}

double f0_rmse(const AudioClip& a_in, const AudioClip& b_in, const EvalConfig& cfg) {
  F0Config fc = cfg.f0;
  fc.sample_rate = cfg.mel.sample_rate;
  fc.hop = cfg.mel.hop;
  const F0Contour fa = estimate_f0(at_rate(a_in, fc.sample_rate), fc);
  const F0Contour fb = estimate_f0(at_rate(b_in, fc.sample_rate), fc);
  const std::size_t n = std::min(fa.size(), fb.size());
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (!fa.voiced[t] || !fb.voiced[t]) continue;
    const double d = fa.hz[t] - fb.hz[t];
    acc += d * d;
    ++count;
  }
  if (count == 0) throw DataError("no frames are voiced in both clips");
  return std::sqrt(acc / static_cast<double>(count));
}

double hoarseness_proxy(const AudioClip& clip_in, const EvalConfig& cfg) {
  F0Config fc = cfg.f0;
  fc.sample_rate = cfg.mel.sample_rate;
  fc.hop = cfg.mel.hop;
  fc.voicing_threshold = cfg.hnr_voicing_threshold;
  const AudioClip clip = at_rate(clip_in, fc.sample_rate);
  const F0Contour f0 = estimate_f0(clip, fc);
  const int len = yin_frame_length(fc);
  const auto n = static_cast<long>(clip.samples.size());
  double acc = 0.0;
  int count = 0;
  for (std::size_t t = 0; t < f0.size(); ++t) {
    if (!f0.voiced[t]) continue;
    const double period = fc.sample_rate / f0.hz[t];
    const long start = static_cast<long>(t) * fc.hop - len / 2;
    if (start < 0 || start + len > n) continue;
    const auto span = static_cast<long>(len - std::ceil(period) - 1);
    if (span < 1) continue;
    double e_sum = 0.0, e_diff = 0.0;
    for (long i = 0; i < span; ++i) {
      const double x = clip.samples[static_cast<std::size_t>(start + i)];
      const double y = sample_at(clip.samples, static_cast<double>(start + i) + period);
      e_sum += (x + y) * (x + y);
      e_diff += (x - y) * (x - y);
    }
    const double harmonic = std::max(e_sum - e_diff, 0.0);
    const double noise = std::max(2.0 * e_diff, 1e-12 * (e_sum + e_diff) + 1e-30);
    acc += 10.0 * std::log10(std::max(harmonic, 1e-30) / noise);
    ++count;
  }
  if (count == 0) throw DataError("no voiced frames for the harmonic-to-noise ratio");
  return acc / count;
}

Mat spectrogram_image(const AudioClip& clip, const EvalConfig& cfg) {
  validate(clip);
  const int n_fft = cfg.spectrogram_n_fft;
  const int hop = cfg.spectrogram_hop;
  const int bins = n_fft / 2 + 1;
  const auto n = static_cast<long>(clip.samples.size());
  const int frames = std::max(1, frame_count(clip.samples.size(), hop));
  Mat db(bins, frames);
  std::vector<double> buf(static_cast<std::size_t>(n_fft));
  std::vector<fft::cplx> spec(static_cast<std::size_t>(bins));
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * hop - n_fft / 2;
    for (int i = 0; i < n_fft; ++i) {
      const long j = start + i;
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n_fft);
      buf[i] = (j >= 0 && j < n) ? w * clip.samples[static_cast<std::size_t>(j)] : 0.0;
    }
    fft::rfft(buf, spec);
    for (int b = 0; b < bins; ++b) db(bins - 1 - b, t) = 20.0 * std::log10(std::abs(spec[b]) + 1e-10);
  }
  const double top = db.maxCoeff();
  const double bottom = top - cfg.spectrogram_range_db;
  return ((db.array() - bottom) / cfg.spectrogram_range_db).cwiseMax(0.0).cwiseMin(1.0).matrix() * 255.0;
}

void emit_spectrogram(const AudioClip& clip, const fs::path& path, const EvalConfig& cfg) {
  const Mat img = spectrogram_image(clip, cfg);
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write spectrogram to " + path.string());
  out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) out.put(static_cast<char>(static_cast<unsigned char>(std::lround(img(r, c)))));
  if (!out) throw DataError("failed writing " + path.string());
}

MetricRow compute_metrics(const std::string& file, const AudioClip& reference, const AudioClip& converted,
                          const EvalConfig& cfg) {
  MetricRow row{file, nan(), nan(), nan()};
  try {
    row.mel_ssim = mel_ssim_score(reference, converted, cfg);
  } catch (const Error&) {
  }
  try {
    row.f0_rmse_hz = f0_rmse(reference, converted, cfg);
  } catch (const Error&) {
  }
  try {
    row.hnr_db = hoarseness_proxy(converted, cfg);
  } catch (const Error&) {
  }
  return row;
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << kMetricsHeader << "\n";
  out.precision(8);
  for (const auto& r : rows) out << r.file << ',' << r.mel_ssim << ',' << r.f0_rmse_hz << ',' << r.hnr_db << "\n";
}

EvaluateReport evaluate_dirs(const fs::path& ref_dir, const fs::path& out_dir, const fs::path& csv_path,
                             const EvalConfig& cfg) {
  auto list = [](const fs::path& dir) {
    std::set<std::string> names;
    if (!fs::is_directory(dir)) throw DataError("directory " + dir.string() + " does not exist");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".wav") names.insert(e.path().filename().string());
    return names;
  };
  const auto refs = list(ref_dir);
  const auto outs = list(out_dir);
  EvaluateReport report;
  for (const auto& name : refs) {
    if (!outs.count(name)) {
      report.problems.push_back(name + ": missing from " + out_dir.string());
      continue;
    }
    try {
      report.rows.push_back(compute_metrics(name, read_wav(ref_dir / name), read_wav(out_dir / name), cfg));
    } catch (const Error& e) {
      report.problems.push_back(name + ": " + e.what());
    }
  }
  for (const auto& name : outs)
    if (!refs.count(name)) report.problems.push_back(name + ": missing from " + ref_dir.string());
  write_metrics_csv(csv_path, report.rows);
  return report;
}

}  // namespace spasvc
