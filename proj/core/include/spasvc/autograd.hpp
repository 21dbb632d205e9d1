#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <vector>

// Reverse-mode automatic differentiation over dense 2-D matrices.
//
// Sequences are stored frames-by-channels (rows are time steps). Every op
// records its inputs and a closure that pushes the output gradient back into
// the inputs; `backward` walks the graph in reverse topological order. Graph
// recording is skipped when no input requires a gradient or inside a
// NoGradGuard scope, so inference paths carry no tape overhead.
namespace spasvc::ag {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;

  void accumulate(const Mat& g);
  // Input i wants a gradient.
  bool wants(std::size_t i) const { return inputs[i]->requires_grad; }
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  /// Accumulated gradient, or zeros of the value's shape if none has arrived.
  Mat grad() const;
  bool has_grad() const { return node_ && node_->grad.size() > 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

Var constant(Mat value);
Var parameter(Mat value);

/// Builds an op node. `fn` runs during backward with the node's output
/// gradient in `self.grad`; it must call `self.inputs[i]->accumulate` only
/// for inputs with `self.wants(i)`.
Var make_op(Mat value, std::vector<Var> inputs, BackwardFn fn);

/// Seeds d(root)/d(root) = 1 (root must be 1x1) and propagates.
void backward(const Var& root);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a (n x c) plus a 1 x c row broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// Repeats a 1 x c row n times.
Var broadcast_rows(const Var& row, Eigen::Index n);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var select_row(const Var& a, Eigen::Index r);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var mish(const Var& a);
/// 2 * sigmoid(x)^ln(10) + 1e-7: a bounded positive magnitude head.
Var exp_sigmoid(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
Var mse(const Var& a, const Var& b);

/// x (T x in) * w (in x out) + b (1 x out).
Var linear(const Var& x, const Var& w, const Var& b);
/// Zero-padded "same" 1-D convolution along rows. w is (kernel*in) x out with
/// row index k*in + c; kernel must be odd.
Var conv1d(const Var& x, const Var& w, const Var& b, int kernel, int dilation);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

}  // namespace spasvc::ag
