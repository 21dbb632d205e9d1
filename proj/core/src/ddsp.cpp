#include "spasvc/ddsp.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "spasvc/error.hpp"
#include "spasvc/fft.hpp"

namespace spasvc {
namespace {

using CMat = Eigen::Matrix<fft::cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// (hz / sr) * sum_{k=-K..K, k != 0} cos(k theta): every harmonic below
// Nyquist at equal amplitude, peak close to 1.
double pulse(double theta, double hz, int sample_rate) {
  const int K = std::max(1, static_cast<int>(std::ceil(0.5 * sample_rate / hz)) - 1);
  const double half = std::sin(0.5 * theta);
  const double dirichlet = std::abs(half) < 1e-9 ? 2.0 * K : std::sin((K + 0.5) * theta) / half - 1.0;
  return hz / sample_rate * dirichlet;
}

std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

// Per-frame spectra of the Hann-windowed source, frames 0..F (frame f spans
// samples [(f-1)*hop, (f+1)*hop)).
CMat frame_spectra(const std::vector<double>& source, int frames, int hop) {
  const int width = 2 * hop;
  const int bins = hop + 1;
  const long n = static_cast<long>(source.size());
  CMat spec(frames + 1, bins);
  std::vector<double> buf(static_cast<std::size_t>(width));
  std::vector<fft::cplx> out(static_cast<std::size_t>(bins));
  for (int f = 0; f <= frames; ++f) {
    const long start = static_cast<long>(f - 1) * hop;
    for (int i = 0; i < width; ++i) {
      const long j = start + i;
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / width);
      buf[i] = (j >= 0 && j < n) ? w * source[static_cast<std::size_t>(j)] : 0.0;
    }
    fft::rfft(buf, out);
    for (int b = 0; b < bins; ++b) spec(f, b) = out[b];
  }
  return spec;
}

// Filters the frame spectra by per-frame real gains (frames x bins, the last
// synthesis frame reuses the final row) and overlap-adds.
void filter_overlap_add(const CMat& spec, const ag::Mat& gains, int hop, std::vector<double>& out) {
  const int width = 2 * hop;
  const int bins = hop + 1;
  const auto frames = static_cast<int>(gains.rows());
  const long n = static_cast<long>(out.size());
  std::vector<fft::cplx> buf(static_cast<std::size_t>(bins));
  std::vector<double> y(static_cast<std::size_t>(width));
  for (int f = 0; f <= frames; ++f) {
    const int p = std::min(f, frames - 1);
    for (int b = 0; b < bins; ++b) buf[b] = spec(f, b) * gains(p, b);
    fft::irfft(buf, y);
    const long start = static_cast<long>(f - 1) * hop;
    for (int i = 0; i < width; ++i) {
      const long j = start + i;
      if (j >= 0 && j < n) out[static_cast<std::size_t>(j)] += y[i] / width;
    }
  }
}

// d(loss)/d(gain) for filter_overlap_add given the waveform gradient.
ag::Mat filter_gain_grad(const CMat& spec, const ag::Mat& grad_wave, int frames, int hop) {
  const int width = 2 * hop;
  const int bins = hop + 1;
  const long n = static_cast<long>(grad_wave.cols());
  ag::Mat g = ag::Mat::Zero(frames, bins);
  std::vector<double> seg(static_cast<std::size_t>(width));
  std::vector<fft::cplx> G(static_cast<std::size_t>(bins));
  for (int f = 0; f <= frames; ++f) {
    const long start = static_cast<long>(f - 1) * hop;
    for (int i = 0; i < width; ++i) {
      const long j = start + i;
      seg[i] = (j >= 0 && j < n) ? grad_wave(0, j) : 0.0;
    }
    fft::rfft(seg, G);
    const int p = std::min(f, frames - 1);
    for (int b = 0; b < bins; ++b) {
      const double c = (b == 0 || b == bins - 1) ? 1.0 : 2.0;
      g(p, b) += c / width * (spec(f, b) * std::conj(G[b])).real();
    }
  }
  return g;
}

void check_params(Eigen::Index frames, Eigen::Index amp_rows, Eigen::Index hf_rows, Eigen::Index nf_rows,
                  Eigen::Index hf_cols, Eigen::Index nf_cols, const F0Contour& f0, int hop) {
  if (static_cast<Eigen::Index>(f0.size()) != frames || amp_rows != frames || hf_rows != frames || nf_rows != frames)
    throw DataError("synth params and F0 frame counts differ");
  if (hf_cols != hop + 1 || nf_cols != hop + 1) throw DataError("filter bins must equal hop + 1");
}

}  // namespace

void AcousticCondition::validate(const DdspConfig& cfg) const {
  const auto n = frames();
  if (content.cols() != cfg.content_dim) throw DataError("content dimension mismatch");
  if (static_cast<Eigen::Index>(volume.size()) != n || static_cast<Eigen::Index>(f0.size()) != n)
    throw DataError("condition sequences have different frame counts");
  if (speaker_id < 1 || speaker_id > cfg.n_speakers)
    throw DataError("unknown speaker id " + std::to_string(speaker_id));
}

std::vector<double> combtooth_excitation(const F0Contour& f0, int hop, int sample_rate) {
  const auto frames = static_cast<long>(f0.size());
  const long n = frames * hop;
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  if (frames == 0) return out;

  // Unvoiced frames borrow the nearest voiced F0 so the phase stays smooth; the gate silences them.
  std::vector<double> filled(f0.hz.begin(), f0.hz.end());
  std::vector<double> gate(static_cast<std::size_t>(frames));
  double last = 0.0;
  for (long t = 0; t < frames; ++t) {
    gate[t] = f0.voiced[t] ? 1.0 : 0.0;
    if (f0.voiced[t]) last = f0.hz[t];
    else filled[t] = last;
  }
  last = 0.0;
  for (long t = frames - 1; t >= 0; --t) {
    if (f0.voiced[t]) last = f0.hz[t];
    else if (filled[t] == 0.0) filled[t] = last;
  }

  double phase = 0.0;
  for (long i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) / hop;
    const auto t0 = static_cast<long>(pos);
    const long t1 = std::min(t0 + 1, frames - 1);
    const double frac = pos - t0;
    const double hz = (1.0 - frac) * filled[t0] + frac * filled[t1];
    const double g = (1.0 - frac) * gate[t0] + frac * gate[t1];
    phase += hz / sample_rate;
    phase -= std::floor(phase);
    if (g <= 0.0 || hz <= 0.0) continue;
    out[static_cast<std::size_t>(i)] = g * pulse(2.0 * std::numbers::pi * phase, hz, sample_rate);
  }
  return out;
}

AudioClip combsub_synthesize(const SynthParams& params, const F0Contour& f0, int hop, int sample_rate,
                             std::uint64_t noise_seed) {
  const auto frames = static_cast<Eigen::Index>(f0.size());
  check_params(frames, params.harmonic_amplitude.rows(), params.harmonic_filter.rows(), params.noise_filter.rows(),
               params.harmonic_filter.cols(), params.noise_filter.cols(), f0, hop);
  const auto n = static_cast<std::size_t>(frames * hop);
  AudioClip out;
  out.sample_rate = sample_rate;
  out.samples.assign(n, 0.0);
  if (frames == 0) return out;

  const auto exc = combtooth_excitation(f0, hop, sample_rate);
  const auto noise = white_noise(n, noise_seed);
  ag::Mat hgain = params.harmonic_filter.array().colwise() * params.harmonic_amplitude.col(0).array();
  filter_overlap_add(frame_spectra(exc, static_cast<int>(frames), hop), hgain, hop, out.samples);
  filter_overlap_add(frame_spectra(noise, static_cast<int>(frames), hop), params.noise_filter, hop, out.samples);
  return out;
}

ag::Var combsub_synthesize_var(const ag::Var& harmonic_amplitude, const ag::Var& harmonic_filter,
                               const ag::Var& noise_filter, const F0Contour& f0, int hop, int sample_rate,
                               std::uint64_t noise_seed) {
  const auto frames = static_cast<Eigen::Index>(f0.size());
  check_params(frames, harmonic_amplitude.rows(), harmonic_filter.rows(), noise_filter.rows(),
               harmonic_filter.cols(), noise_filter.cols(), f0, hop);
  const auto n = static_cast<std::size_t>(frames * hop);
  const auto exc = combtooth_excitation(f0, hop, sample_rate);
  const auto noise = white_noise(n, noise_seed);
  CMat hspec = frame_spectra(exc, static_cast<int>(frames), hop);
  CMat nspec = frame_spectra(noise, static_cast<int>(frames), hop);

  std::vector<double> wave(n, 0.0);
  ag::Mat hgain = harmonic_filter.value().array().colwise() * harmonic_amplitude.value().col(0).array();
  filter_overlap_add(hspec, hgain, hop, wave);
  filter_overlap_add(nspec, noise_filter.value(), hop, wave);
  ag::Mat value = Eigen::Map<ag::Mat>(wave.data(), 1, static_cast<Eigen::Index>(n));

  return ag::make_op(
      std::move(value), {harmonic_amplitude, harmonic_filter, noise_filter},
      [hspec = std::move(hspec), nspec = std::move(nspec), frames, hop](ag::Node& self) {
        const int f = static_cast<int>(frames);
        if (self.wants(0) || self.wants(1)) {
          const ag::Mat g_gain = filter_gain_grad(hspec, self.grad, f, hop);
          const ag::Mat& amp = self.inputs[0]->value;
          const ag::Mat& filt = self.inputs[1]->value;
          if (self.wants(0)) self.inputs[0]->accumulate(g_gain.cwiseProduct(filt).rowwise().sum());
          if (self.wants(1)) {
            ag::Mat g = g_gain.array().colwise() * amp.col(0).array();
            self.inputs[1]->accumulate(g);
          }
        }
        if (self.wants(2)) self.inputs[2]->accumulate(filter_gain_grad(nspec, self.grad, f, hop));
      });
}

DdspModel::DdspModel(const DdspConfig& cfg, nn::ParameterStore& store, std::mt19937_64& rng) : cfg_(cfg) {
  const int h = cfg.hidden;
  content_proj_ = nn::Linear(store, "ddsp/embed/content", cfg.content_dim, h, rng);
  volume_w_ = store.add("ddsp/embed/volume/w", nn::uniform_init(1, h, 1.0, rng));
  f0_w_ = store.add("ddsp/embed/f0/w", nn::uniform_init(3, h, 1.0, rng));
  speaker_table_ = store.add("ddsp/embed/speaker", nn::uniform_init(cfg.n_speakers, h, 1.0, rng));
  for (int l = 0; l < cfg.layers; ++l)
    convs_.emplace_back(store, "ddsp/frame/" + std::to_string(l), h, 2 * h, cfg.kernel, 1, rng);
  head_ = nn::Linear(store, "ddsp/head", h, 1 + 2 * cfg.filter_bins(), rng);
}

ag::Var DdspModel::embed_condition(const AcousticCondition& cond) const {
  cond.validate(cfg_);
  const Eigen::Index n = cond.frames();
  ag::Mat vol(n, 1);
  ag::Mat f0feat = ag::Mat::Zero(n, 3);
  for (Eigen::Index t = 0; t < n; ++t) {
    vol(t, 0) = cond.volume[static_cast<std::size_t>(t)];
    if (cond.f0.voiced[static_cast<std::size_t>(t)]) {
      f0feat(t, 0) = std::log2(cond.f0.hz[static_cast<std::size_t>(t)] / 440.0);
      f0feat(t, 1) = 1.0;
    } else {
      f0feat(t, 2) = 1.0;
    }
  }
  ag::Var e = content_proj_(ag::constant(cond.content));
  e = e + ag::matmul(ag::constant(std::move(vol)), volume_w_);
  e = e + ag::matmul(ag::constant(std::move(f0feat)), f0_w_);
  return e + ag::broadcast_rows(ag::select_row(speaker_table_, cond.speaker_id - 1), n);
}

ag::Var DdspModel::frame_network(const ag::Var& embedded) const {
  ag::Var h = embedded;
  const int width = cfg_.hidden;
  for (const auto& conv : convs_) {
    ag::Var z = conv(h);
    h = h + ag::mul(ag::tanh(ag::slice_cols(z, 0, width)), ag::sigmoid(ag::slice_cols(z, width, width)));
  }
  return h;
}

DdspOutput DdspModel::forward(const AcousticCondition& cond, const F0Contour& f0_for_synthesis,
                              std::uint64_t noise_seed) const {
  if (static_cast<Eigen::Index>(f0_for_synthesis.size()) != cond.frames())
    throw DataError("synthesis F0 frame count differs from the condition");
  DdspOutput out;
  out.hidden = frame_network(embed_condition(cond));
  const ag::Var z = head_(out.hidden);
  const int bins = cfg_.filter_bins();
  out.harmonic_amplitude = ag::scale(ag::exp_sigmoid(ag::slice_cols(z, 0, 1)), cfg_.amp_scale);
  out.harmonic_filter = ag::exp_sigmoid(ag::slice_cols(z, 1, bins));
  out.noise_filter = ag::scale(ag::exp_sigmoid(ag::slice_cols(z, 1 + bins, bins)), cfg_.noise_scale);
  out.wave = combsub_synthesize_var(out.harmonic_amplitude, out.harmonic_filter, out.noise_filter,
                                    f0_for_synthesis, cfg_.hop, cfg_.sample_rate, noise_seed);
  return out;
}

}  // namespace spasvc
