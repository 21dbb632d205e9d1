#include "spasvc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "spasvc/error.hpp"

namespace spasvc {
namespace {

// Local-statistics operator: either a separable Gaussian in "valid" mode or a
// single global mean. `adjoint` is the transpose of `apply`.
class WindowFilter {
 public:
  WindowFilter(Eigen::Index rows, Eigen::Index cols, const SsimConfig& cfg) : rows_(rows), cols_(cols) {
    global_ = cfg.window == SsimWindow::Global;
    if (global_) return;
    int k = cfg.window_size;
    const auto limit = static_cast<int>(std::min(rows, cols));
    if (k > limit) k = limit % 2 == 1 ? limit : limit - 1;
    k_ = std::max(k, 1);
    taps_.resize(static_cast<std::size_t>(k_));
    const double c = (k_ - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < k_; ++i) {
      taps_[i] = std::exp(-(i - c) * (i - c) / (2.0 * cfg.window_sigma * cfg.window_sigma));
      total += taps_[i];
    }
    for (auto& t : taps_) t /= total;
  }

  Mat apply(const Mat& x) const {
    if (global_) return Mat::Constant(1, 1, x.mean());
    const Eigen::Index orow = rows_ - k_ + 1, ocol = cols_ - k_ + 1;
    Mat tmp = Mat::Zero(orow, cols_);
    for (int i = 0; i < k_; ++i) tmp += taps_[i] * x.middleRows(i, orow);
    Mat out = Mat::Zero(orow, ocol);
    for (int j = 0; j < k_; ++j) out += taps_[j] * tmp.middleCols(j, ocol);
    return out;
  }

  Mat adjoint(const Mat& g) const {
    if (global_) return Mat::Constant(rows_, cols_, g(0, 0) / static_cast<double>(rows_ * cols_));
    const Eigen::Index orow = rows_ - k_ + 1, ocol = cols_ - k_ + 1;
    Mat tmp = Mat::Zero(orow, cols_);
    for (int j = 0; j < k_; ++j) tmp.middleCols(j, ocol) += taps_[j] * g;
    Mat out = Mat::Zero(rows_, cols_);
    for (int i = 0; i < k_; ++i) out.middleRows(i, orow) += taps_[i] * tmp;
    return out;
  }

 private:
  Eigen::Index rows_, cols_;
  bool global_ = false;
  int k_ = 1;
  std::vector<double> taps_;
};

struct SsimEval {
  double value = 0.0;
  Mat grad_x, grad_y;
};

SsimEval evaluate(const Mat& x, const Mat& y, const SsimConfig& cfg, bool want_grad) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw DataError("ssim: shape mismatch");
  if (x.size() == 0) throw DataError("ssim: empty input");
  cfg.validate();
  const double c1 = cfg.c1(), c2 = cfg.c2();
  const bool paper = cfg.variant == SsimVariant::Paper;
  const WindowFilter win(x.rows(), x.cols(), cfg);

  const Mat mx = win.apply(x), my = win.apply(y);
  const Mat sxx = win.apply(x.cwiseProduct(x));
  const Mat syy = win.apply(y.cwiseProduct(y));
  const Mat sxy = win.apply(x.cwiseProduct(y));
  const Eigen::Index n = mx.size();

  Mat map(mx.rows(), mx.cols());
  Mat d_mx, d_my, d_sxx, d_syy, d_sxy;
  if (want_grad) {
    d_mx.resize(mx.rows(), mx.cols());
    d_my = d_sxx = d_syy = d_sxy = d_mx;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ux = mx.data()[i], uy = my.data()[i];
    const double vx = std::max(0.0, sxx.data()[i] - ux * ux);
    const double vy = std::max(0.0, syy.data()[i] - uy * uy);
    const double cxy = sxy.data()[i] - ux * uy;
    const double a1 = 2.0 * ux * uy + c1;
    const double a2 = 2.0 * cxy + c2;
    const double b1 = ux * ux + uy * uy + c1;
    const double sx = std::sqrt(vx), sy = std::sqrt(vy);
    const double b2 = paper ? sx * sy + c2 : vx + vy + c2;
    const double s = a1 * a2 / (b1 * b2);
    map.data()[i] = s;
    if (!want_grad) continue;

    // dS = (a2 dA1 + a1 dA2) / (b1 b2) - S (dB1 / b1 + dB2 / b2)
    const double inv = 1.0 / (b1 * b2);
    const double dA1 = a2 * inv, dA2 = a1 * inv;
    const double dB1 = -s / b1, dB2 = -s / b2;
    double db2_mx, db2_my, db2_sxx, db2_syy;
    if (paper) {
      const double sx_safe = std::max(sx, 1e-12), sy_safe = std::max(sy, 1e-12);
      db2_mx = -sy * ux / sx_safe;
      db2_my = -sx * uy / sy_safe;
      db2_sxx = sy / (2.0 * sx_safe);
      db2_syy = sx / (2.0 * sy_safe);
    } else {
      db2_mx = -2.0 * ux;
      db2_my = -2.0 * uy;
      db2_sxx = 1.0;
      db2_syy = 1.0;
    }
    d_mx.data()[i] = dA1 * 2.0 * uy + dA2 * (-2.0 * uy) + dB1 * 2.0 * ux + dB2 * db2_mx;
    d_my.data()[i] = dA1 * 2.0 * ux + dA2 * (-2.0 * ux) + dB1 * 2.0 * uy + dB2 * db2_my;
    d_sxx.data()[i] = dB2 * db2_sxx;
    d_syy.data()[i] = dB2 * db2_syy;
    d_sxy.data()[i] = dA2 * 2.0;
  }

  SsimEval out;
  out.value = map.mean();
  if (want_grad) {
    const double inv_n = 1.0 / static_cast<double>(n);
    const Mat a_sxy = win.adjoint(d_sxy * inv_n);
    out.grad_x = win.adjoint(d_mx * inv_n) + 2.0 * x.cwiseProduct(win.adjoint(d_sxx * inv_n)) +
                 y.cwiseProduct(a_sxy);
    out.grad_y = win.adjoint(d_my * inv_n) + 2.0 * y.cwiseProduct(win.adjoint(d_syy * inv_n)) +
                 x.cwiseProduct(a_sxy);
  }
  return out;
}

void require_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError(std::string(what) + ": shape mismatch");
}

}  // namespace

void SsimConfig::validate() const {
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw UsageError("ssim: k1 and k2 must be positive");
  if (window == SsimWindow::Sliding && (window_size < 3 || window_size % 2 == 0))
    throw UsageError("ssim: window_size must be odd and >= 3");
  if (!(dynamic_range > 0.0)) throw UsageError("ssim: dynamic range must be positive");
}

double ssim(const Mat& x, const Mat& y, const SsimConfig& cfg) { return evaluate(x, y, cfg, false).value; }

double ssim(const MelSpec& x, const MelSpec& y, const SsimConfig& cfg) { return ssim(x.values, y.values, cfg); }

double cyc_loss(const MelSpec& x, const MelSpec& xhat, const SsimConfig& cfg) { return 1.0 - ssim(x, xhat, cfg); }

double mse_loss(const MelSpec& x, const MelSpec& xhat) {
  require_same_shape(x.values, xhat.values, "mse_loss");
  return (x.values - xhat.values).squaredNorm() / static_cast<double>(x.values.size());
}

double diffusion_loss(const Mat& eps, const Mat& eps_pred) {
  require_same_shape(eps, eps_pred, "diffusion_loss");
  return (eps - eps_pred).squaredNorm() / static_cast<double>(eps.size());
}

double total_loss(double l_cyc, double l_diff, double lambda_cyc) {
  if (!std::isfinite(l_cyc) || !std::isfinite(l_diff)) throw NumericError("non-finite loss term");
  return lambda_cyc * l_cyc + l_diff;
}

ag::Var ssim_var(const ag::Var& x, const ag::Var& y, const SsimConfig& cfg) {
  const bool want = ag::grad_enabled() && (x.requires_grad() || y.requires_grad());
  SsimEval e = evaluate(x.value(), y.value(), cfg, want);
  return ag::make_op(Mat::Constant(1, 1, e.value), {x, y},
                     [gx = std::move(e.grad_x), gy = std::move(e.grad_y)](ag::Node& self) {
                       const double g = self.grad(0, 0);
                       if (self.wants(0)) self.inputs[0]->accumulate(gx * g);
                       if (self.wants(1)) self.inputs[1]->accumulate(gy * g);
                     });
}

ag::Var cyc_loss_var(const ag::Var& x, const ag::Var& xhat, const SsimConfig& cfg) {
  return ag::add_scalar(ag::scale(ssim_var(x, xhat, cfg), -1.0), 1.0);
}

ag::Var mse_loss_var(const ag::Var& x, const ag::Var& xhat) { return ag::mse(x, xhat); }

ag::Var diffusion_loss_var(const ag::Var& eps, const ag::Var& eps_pred) { return ag::mse(eps, eps_pred); }

ag::Var total_loss_var(const ag::Var& l_cyc, const ag::Var& l_diff, double lambda_cyc) {
  if (!std::isfinite(l_cyc.item()) || !std::isfinite(l_diff.item())) throw NumericError("non-finite loss term");
  return ag::add(lambda_cyc == 1.0 ? l_cyc : ag::scale(l_cyc, lambda_cyc), l_diff);
}

}  // namespace spasvc
