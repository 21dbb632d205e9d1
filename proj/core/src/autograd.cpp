#include "spasvc/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace spasvc::ag {
namespace {

thread_local bool t_grad_enabled = true;

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

template <typename F, typename D>
Var unary(const Var& a, F forward, D derivative) {
  Mat out = a.value().unaryExpr(forward);
  return make_op(std::move(out), {a}, [derivative](Node& self) {
    const Mat& x = self.inputs[0]->value;
    Mat g = self.grad.cwiseProduct(x.unaryExpr(derivative));
    self.inputs[0]->accumulate(g);
  });
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus_scalar(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

void Node::accumulate(const Mat& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Mat Var::grad() const {
  if (node_->grad.size() == 0) return Mat::Zero(rows(), cols());
  return node_->grad;
}

double Var::item() const {
  if (node_->value.size() != 1) throw std::logic_error("item() on non-scalar");
  return node_->value(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

Var constant(Mat value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var parameter(Mat value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var make_op(Mat value, std::vector<Var> inputs, BackwardFn fn) {
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (any && t_grad_enabled) {
    n->requires_grad = true;
    n->backward = std::move(fn);
    n->inputs.reserve(inputs.size());
    for (auto& v : inputs) n->inputs.push_back(v.node());
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (root.value().size() != 1) throw std::logic_error("backward: root must be scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node* child = node->inputs[idx++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Mat::Constant(1, 1, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() > 0) n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Mat out;
  out.noalias() = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const Mat& av = self.inputs[0]->value;
    const Mat& bv = self.inputs[1]->value;
    if (self.wants(0)) {
      Mat g;
      g.noalias() = self.grad * bv.transpose();
      self.inputs[0]->accumulate(g);
    }
    if (self.wants(1)) {
      Mat g;
      g.noalias() = av.transpose() * self.grad;
      self.inputs[1]->accumulate(g);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    if (self.wants(0)) self.inputs[0]->accumulate(self.grad);
    if (self.wants(1)) self.inputs[1]->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    if (self.wants(0)) self.inputs[0]->accumulate(self.grad);
    if (self.wants(1)) self.inputs[1]->accumulate(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    if (self.wants(0)) self.inputs[0]->accumulate(self.grad.cwiseProduct(self.inputs[1]->value));
    if (self.wants(1)) self.inputs[1]->accumulate(self.grad.cwiseProduct(self.inputs[0]->value));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& self) { self.inputs[0]->accumulate(self.grad * s); });
}

Var add_scalar(const Var& a, double s) {
  Mat out = a.value().array() + s;
  return make_op(std::move(out), {a}, [](Node& self) { self.inputs[0]->accumulate(self.grad); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& self) {
    if (self.wants(0)) self.inputs[0]->accumulate(self.grad);
    if (self.wants(1)) self.inputs[1]->accumulate(self.grad.colwise().sum());
  });
}

Var broadcast_rows(const Var& row, Eigen::Index n) {
  if (row.rows() != 1) throw std::invalid_argument("broadcast_rows: expected a row");
  Mat out = row.value().replicate(n, 1);
  return make_op(std::move(out), {row}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad.colwise().sum());
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  Mat out = a.value().middleCols(start, count);
  return make_op(std::move(out), {a}, [start, count](Node& self) {
    Mat g = Mat::Zero(self.inputs[0]->value.rows(), self.inputs[0]->value.cols());
    g.middleCols(start, count) = self.grad;
    self.inputs[0]->accumulate(g);
  });
}

Var select_row(const Var& a, Eigen::Index r) {
  if (r < 0 || r >= a.rows()) throw std::invalid_argument("select_row: out of range");
  Mat out = a.value().row(r);
  return make_op(std::move(out), {a}, [r](Node& self) {
    Mat g = Mat::Zero(self.inputs[0]->value.rows(), self.inputs[0]->value.cols());
    g.row(r) = self.grad.row(0);
    self.inputs[0]->accumulate(g);
  });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

Var sigmoid(const Var& a) {
  return unary(a, sigmoid_scalar, [](double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s);
  });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var mish(const Var& a) {
  return unary(
      a, [](double x) { return x * std::tanh(softplus_scalar(x)); },
      [](double x) {
        const double t = std::tanh(softplus_scalar(x));
        return t + x * (1.0 - t * t) * sigmoid_scalar(x);
      });
}

Var exp_sigmoid(const Var& a) {
  static const double kExp = std::log(10.0);
  return unary(
      a, [](double x) { return 2.0 * std::pow(sigmoid_scalar(x), kExp) + 1e-7; },
      [](double x) {
        const double s = sigmoid_scalar(x);
        return 2.0 * kExp * std::pow(s, kExp) * (1.0 - s);
      });
}

Var sum(const Var& a) {
  return make_op(Mat::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    const Mat& x = self.inputs[0]->value;
    self.inputs[0]->accumulate(Mat::Constant(x.rows(), x.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return make_op(Mat::Constant(1, 1, a.value().mean()), {a}, [n](Node& self) {
    const Mat& x = self.inputs[0]->value;
    self.inputs[0]->accumulate(Mat::Constant(x.rows(), x.cols(), self.grad(0, 0) / n));
  });
}

Var mse(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mse");
  Mat diff = a.value() - b.value();
  const double n = static_cast<double>(diff.size());
  const double v = diff.squaredNorm() / n;
  return make_op(Mat::Constant(1, 1, v), {a, b}, [diff, n](Node& self) {
    const double g = self.grad(0, 0) * 2.0 / n;
    if (self.wants(0)) self.inputs[0]->accumulate(diff * g);
    if (self.wants(1)) self.inputs[1]->accumulate(diff * -g);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_row(matmul(x, w), b); }

Var conv1d(const Var& x, const Var& w, const Var& b, int kernel, int dilation) {
  if (kernel % 2 == 0) throw std::invalid_argument("conv1d: kernel must be odd");
  const Eigen::Index T = x.rows();
  const Eigen::Index cin = x.cols();
  if (w.rows() != kernel * cin) throw std::invalid_argument("conv1d: weight rows != kernel*in");
  const int pad = dilation * (kernel - 1) / 2;

  Mat cols = Mat::Zero(T, kernel * cin);
  const Mat& xv = x.value();
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = t + k * dilation - pad;
      if (src >= 0 && src < T) cols.block(t, k * cin, 1, cin) = xv.row(src);
    }
  }
  Mat out;
  out.noalias() = cols * w.value();
  out.rowwise() += b.value().row(0);

  return make_op(std::move(out), {x, w, b},
                 [cols = std::move(cols), kernel, dilation, pad, T, cin](Node& self) {
                   const Mat& g = self.grad;
                   if (self.wants(1)) {
                     Mat gw;
                     gw.noalias() = cols.transpose() * g;
                     self.inputs[1]->accumulate(gw);
                   }
                   if (self.wants(2)) self.inputs[2]->accumulate(g.colwise().sum());
                   if (self.wants(0)) {
                     Mat gcols;
                     gcols.noalias() = g * self.inputs[1]->value.transpose();
                     Mat gx = Mat::Zero(T, cin);
                     for (Eigen::Index t = 0; t < T; ++t) {
                       for (int k = 0; k < kernel; ++k) {
                         const Eigen::Index src = t + k * dilation - pad;
                         if (src >= 0 && src < T) gx.row(src) += gcols.block(t, k * cin, 1, cin);
                       }
                     }
                     self.inputs[0]->accumulate(gx);
                   }
                 });
}

}  // namespace spasvc::ag
