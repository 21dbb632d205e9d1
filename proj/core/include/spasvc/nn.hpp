#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "spasvc/autograd.hpp"

namespace spasvc::nn {

using ag::Mat;
using ag::Var;

/// Named trainable tensors in registration order. Names are module paths
/// ("ddsp/frame/0/w") and double as checkpoint keys.
class ParameterStore {
 public:
  Var add(const std::string& name, Mat init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double fan_in, std::mt19937_64& rng);

struct Linear {
  Var w, b;
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng);
  Var operator()(const Var& x) const { return ag::linear(x, w, b); }
};

struct Conv1d {
  Var w, b;
  int kernel = 1;
  int dilation = 1;
  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, int in, int out, int kernel, int dilation,
         std::mt19937_64& rng);
  Var operator()(const Var& x) const { return ag::conv1d(x, w, b, kernel, dilation); }
};

struct AdamWConfig {
  double lr = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled weight-decay Adam over every entry of a ParameterStore.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}
  void step(ParameterStore& store);
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  std::int64_t steps_taken() const { return t_; }

  // State round-trips through the checkpoint archive.
  const std::map<std::string, Mat>& first_moments() const { return m_; }
  const std::map<std::string, Mat>& second_moments() const { return v_; }
  void restore(std::int64_t t, std::map<std::string, Mat> m, std::map<std::string, Mat> v);

 private:
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Mat> m_, v_;
};

/// lr = base * gamma^floor(step / step_size).
double step_lr(double base, double gamma, std::int64_t step_size, std::int64_t step);

/// Global L2 norm of all parameter gradients.
double grad_norm(const ParameterStore& store);

}  // namespace spasvc::nn
