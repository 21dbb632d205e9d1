#include "spasvc/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace spasvc::nn {

Var ParameterStore::add(const std::string& name, Mat init) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
  Var v = ag::parameter(std::move(init));
  index_[name] = entries_.size();
  entries_.emplace_back(name, v);
  return v;
}

Var ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return entries_[it->second].second;
}

void ParameterStore::zero_grad() {
  for (auto& [_, v] : entries_) v.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : entries_) n += static_cast<std::size_t>(v.value().size());
  return n;
}

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
  w = store.add(name + "/w", uniform_init(in, out, in, rng));
  b = store.add(name + "/b", uniform_init(1, out, in, rng));
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, int in, int out, int kernel_size,
               int dil, std::mt19937_64& rng)
    : kernel(kernel_size), dilation(dil) {
  const double fan_in = static_cast<double>(in) * kernel_size;
  w = store.add(name + "/w", uniform_init(kernel_size * in, out, fan_in, rng));
  b = store.add(name + "/b", uniform_init(1, out, fan_in, rng));
}

void AdamW::step(ParameterStore& store) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, var] : store.entries()) {
    if (!var.has_grad()) continue;
    Var p = var;
    Mat& value = p.mutable_value();
    const Mat g = var.grad();
    auto [mit, m_new] = m_.try_emplace(name, Mat::Zero(value.rows(), value.cols()));
    auto [vit, v_new] = v_.try_emplace(name, Mat::Zero(value.rows(), value.cols()));
    Mat& m = mit->second;
    Mat& v = vit->second;
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    if (cfg_.weight_decay > 0.0) value *= 1.0 - cfg_.lr * cfg_.weight_decay;
    value.array() -= cfg_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
  }
}

void AdamW::restore(std::int64_t t, std::map<std::string, Mat> m, std::map<std::string, Mat> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

double step_lr(double base, double gamma, std::int64_t step_size, std::int64_t step) {
  if (step_size <= 0) return base;
  return base * std::pow(gamma, static_cast<double>(step / step_size));
}

double grad_norm(const ParameterStore& store) {
  double acc = 0.0;
  for (const auto& [_, v] : store.entries()) {
    if (v.has_grad()) acc += v.grad().squaredNorm();
  }
  return std::sqrt(acc);
}

}  // namespace spasvc::nn
