#pragma once

#include "spasvc/autograd.hpp"
#include "spasvc/mel.hpp"

namespace spasvc {

enum class SsimWindow { Global, Sliding };
enum class SsimVariant {
  Standard,  // contrast denominator sigma_x^2 + sigma_y^2 + c2
  Paper,     // contrast denominator sigma_x * sigma_y + c2
};

struct SsimConfig {
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  SsimWindow window = SsimWindow::Sliding;
  int window_size = 11;
  double window_sigma = 1.5;
  SsimVariant variant = SsimVariant::Standard;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  void validate() const;
};

/// Mean SSIM index over Gaussian windows ("valid" placement) or over the
/// whole matrix. Windows larger than the input shrink to the largest odd
/// size that fits.
double ssim(const Mat& x, const Mat& y, const SsimConfig& cfg);
double ssim(const MelSpec& x, const MelSpec& y, const SsimConfig& cfg);
/// 1 - ssim.
double cyc_loss(const MelSpec& x, const MelSpec& xhat, const SsimConfig& cfg);
double mse_loss(const MelSpec& x, const MelSpec& xhat);
/// Mean over all elements of (eps - eps_pred)^2.
double diffusion_loss(const Mat& eps, const Mat& eps_pred);
/// l_cyc * lambda_cyc + l_diff; throws NumericError on non-finite input.
double total_loss(double l_cyc, double l_diff, double lambda_cyc = 1.0);

ag::Var ssim_var(const ag::Var& x, const ag::Var& y, const SsimConfig& cfg);
ag::Var cyc_loss_var(const ag::Var& x, const ag::Var& xhat, const SsimConfig& cfg);
ag::Var mse_loss_var(const ag::Var& x, const ag::Var& xhat);
ag::Var diffusion_loss_var(const ag::Var& eps, const ag::Var& eps_pred);
ag::Var total_loss_var(const ag::Var& l_cyc, const ag::Var& l_diff, double lambda_cyc = 1.0);

}  // namespace spasvc
