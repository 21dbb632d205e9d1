#include "spasvc/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "spasvc/error.hpp"

namespace spasvc {
namespace {

ag::Mat gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  ag::Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

DiffusionSchedule DiffusionSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw UsageError("diffusion steps must be positive");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
    throw UsageError("betas must satisfy 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.betas[t] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
    s.alphas[t] = 1.0 - s.betas[t];
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

void DiffusionSchedule::validate() const {
  if (T < 1 || static_cast<int>(betas.size()) != T || static_cast<int>(alpha_bars.size()) != T)
    throw DataError("malformed diffusion schedule");
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    if (!(betas[t] > 0.0 && betas[t] < 1.0)) throw DataError("beta out of (0, 1)");
    prod *= 1.0 - betas[t];
    if (std::abs(prod - alpha_bars[t]) > 1e-12) throw DataError("alpha_bars inconsistent with betas");
  }
}

void DiffusionSchedule::check_step(int t) const {
  if (t < 0 || t >= T) throw UsageError("diffusion step " + std::to_string(t) + " outside [0, " + std::to_string(T) + ")");
}

ag::Mat q_sample(const ag::Mat& x0, int t, const ag::Mat& eps, const DiffusionSchedule& sched) {
  sched.check_step(t);
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw DataError("q_sample: noise shape differs from x0");
  const double ab = sched.alpha_bars[t];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

ag::Var q_sample_var(const ag::Mat& x0, int t, const ag::Mat& eps, const DiffusionSchedule& sched) {
  return ag::constant(q_sample(x0, t, eps, sched));
}

ag::Mat to_diffusion_space(const ag::Mat& mel01) { return (2.0 * mel01.array() - 1.0).matrix(); }

ag::Mat from_diffusion_space(const ag::Mat& x) {
  return ((x.array() + 1.0) * 0.5).cwiseMax(0.0).cwiseMin(1.0).matrix();
}

ag::Mat timestep_embedding(int t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw UsageError("timestep embedding dim must be even");
  const int half = dim / 2;
  ag::Mat e(1, dim);
  const double scale = half > 1 ? std::log(10000.0) / (half - 1) : 0.0;
  for (int i = 0; i < half; ++i) {
    const double arg = t * std::exp(-scale * i);
    e(0, i) = std::sin(arg);
    e(0, half + i) = std::cos(arg);
  }
  return e;
}

Denoiser::Denoiser(const DenoiserConfig& cfg, nn::ParameterStore& store, std::mt19937_64& rng) : cfg_(cfg) {
  if (cfg.in_dim < 1 || cfg.layers < 1 || cfg.channels < 1 || cfg.cond_dim < 1 || cfg.dilation_cycle < 1)
    throw UsageError("denoiser sizes must be positive");
  const int c = cfg.channels;
  input_proj_ = nn::Linear(store, "diff/input", cfg.in_dim, c, rng);
  t_mlp1_ = nn::Linear(store, "diff/temb/0", cfg.t_embed_dim, 4 * c, rng);
  t_mlp2_ = nn::Linear(store, "diff/temb/1", 4 * c, c, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "diff/block/" + std::to_string(l);
    Block b;
    b.diffusion_proj = nn::Linear(store, p + "/tproj", c, c, rng);
    b.cond_proj = nn::Linear(store, p + "/cond", cfg.cond_dim, 2 * c, rng);
    b.dilated = nn::Conv1d(store, p + "/conv", c, 2 * c, cfg.kernel, 1 << (l % cfg.dilation_cycle), rng);
    b.out_proj = nn::Linear(store, p + "/out", c, 2 * c, rng);
    blocks_.push_back(std::move(b));
  }
  skip_proj_ = nn::Linear(store, "diff/skip", c, c, rng);
  output_proj_ = nn::Linear(store, "diff/output", c, cfg.in_dim, rng);
}

ag::Var Denoiser::predict(const ag::Var& x_t, int t, const ag::Var& cond) const {
  if (x_t.cols() != cfg_.in_dim) throw DataError("denoiser input has wrong mel dimension");
  if (cond.cols() != cfg_.cond_dim) throw DataError("denoiser condition has wrong dimension");
  if (cond.rows() != x_t.rows()) throw DataError("denoiser condition and input frame counts differ");
  const int c = cfg_.channels;
  const Eigen::Index n = x_t.rows();

  // No activation on the input projection: at large t the target is nearly
  // x_t itself and a rectified input would discard half of it.
  ag::Var x = input_proj_(x_t);
  ag::Var temb = t_mlp2_(ag::mish(t_mlp1_(ag::constant(timestep_embedding(t, cfg_.t_embed_dim)))));
  ag::Var skip;
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    ag::Var y = x + ag::broadcast_rows(b.diffusion_proj(temb), n);
    y = b.dilated(y) + b.cond_proj(cond);
    y = ag::mul(ag::sigmoid(ag::slice_cols(y, 0, c)), ag::tanh(ag::slice_cols(y, c, c)));
    y = b.out_proj(y);
    x = ag::scale(x + ag::slice_cols(y, 0, c), inv_sqrt2);
    ag::Var s = ag::slice_cols(y, c, c);
    skip = l == 0 ? s : skip + s;
  }
  skip = ag::scale(skip, 1.0 / std::sqrt(static_cast<double>(blocks_.size())));
  return output_proj_(ag::relu(skip_proj_(skip)));
}

ag::Mat Denoiser::predict(const ag::Mat& x_t, int t, const ag::Mat& cond) const {
  ag::NoGradGuard guard;
  return predict(ag::constant(x_t), t, ag::constant(cond)).value();
}

ag::Mat p_sample(const Denoiser& net, const ag::Mat& x_t, int t, const ag::Mat& cond,
                 const DiffusionSchedule& sched, std::mt19937_64& rng) {
  sched.check_step(t);
  const ag::Mat eps = net.predict(x_t, t, cond);
  const double ab = sched.alpha_bars[t];
  const double ab_prev = t > 0 ? sched.alpha_bars[t - 1] : 1.0;
  const double beta = sched.betas[t];
  ag::Mat x0 = (std::sqrt(1.0 / ab) * x_t - std::sqrt(1.0 / ab - 1.0) * eps).cwiseMax(-1.0).cwiseMin(1.0);
  const double c0 = beta * std::sqrt(ab_prev) / (1.0 - ab);
  const double ct = (1.0 - ab_prev) * std::sqrt(sched.alphas[t]) / (1.0 - ab);
  ag::Mat mean = c0 * x0 + ct * x_t;
  if (t == 0) return mean;
  const double var = std::max(beta * (1.0 - ab_prev) / (1.0 - ab), 1e-20);
  return mean + std::sqrt(var) * gaussian(x_t.rows(), x_t.cols(), rng);
}

ag::Mat sample_full(const Denoiser& net, const ag::Mat& cond, const DiffusionSchedule& sched, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ag::Mat x = gaussian(cond.rows(), net.config().in_dim, rng);
  for (int t = sched.T - 1; t >= 0; --t) x = p_sample(net, x, t, cond, sched, rng);
  return from_diffusion_space(x);
}

ag::Mat sample_shallow(const Denoiser& net, const ag::Mat& mel_init, const ag::Mat& cond, int k,
                       const DiffusionSchedule& sched, std::uint64_t seed) {
  if (k < 0 || k > sched.T) throw UsageError("shallow diffusion depth " + std::to_string(k) + " outside [0, T]");
  if (k == 0) return mel_init;
  if (mel_init.cols() != net.config().in_dim || mel_init.rows() != cond.rows())
    throw DataError("shallow diffusion initializer shape mismatch");
  std::mt19937_64 rng(seed);
  ag::Mat x = q_sample(to_diffusion_space(mel_init), k - 1, gaussian(mel_init.rows(), mel_init.cols(), rng), sched);
  for (int t = k - 1; t >= 0; --t) x = p_sample(net, x, t, cond, sched, rng);
  return from_diffusion_space(x);
}

}  // namespace spasvc
