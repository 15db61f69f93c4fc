#pragma once

// Tape-based reverse-mode differentiation over Tensor. Every op returns a Var
// whose node remembers its inputs and a closure that pushes the node's
// gradient back into them. The graph lives exactly as long as the Vars that
// reference it.

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "deepstreet/kernels.hpp"
#include "deepstreet/tensor.hpp"

namespace deepstreet::ad {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad();
};

class Var {
 public:
  Var() = default;

  // A leaf that never receives gradients.
  static Var constant(Tensor value);
  // A learnable leaf; backward() accumulates into its grad.
  static Var parameter(Tensor value);

  bool valid() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled tensor of the value's shape when no gradient arrived yet.
  Tensor grad() const;
  Tensor& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  // Constant copy of the current value, cut from the tape.
  Var detach() const { return constant(node_->value); }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Disables tape recording on the current thread while alive.
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

// Runs reverse accumulation from a scalar (single-element) loss.
void backward(const Var& loss);

// ---- layer ops -------------------------------------------------------------

Var conv2d(const Var& input, const Var& kernel, const Var& bias, const kernels::ConvGeometry& geometry);
// stride must be 1 or 2; dilation is fixed at 1.
Var conv2d_transpose(const Var& input, const Var& kernel, const Var& bias, int stride, int padding);
Var fully_connected(const Var& input, const Var& weights, const Var& bias);
Var relu(const Var& input);
Var sigmoid(const Var& input);

struct BatchNormBuffers {
  Tensor running_mean;
  Tensor running_var;
  float momentum = 0.1f;
  float epsilon = 1e-5f;
};

// Per-channel normalization over (N,H,W) of a [N,C,H,W] input. In training
// mode batch statistics are used and, when `buffers` is non-null, folded into
// the running estimates; otherwise the running estimates are used.
Var batch_norm(const Var& input, const Var& gamma, const Var& beta, BatchNormBuffers* buffers, bool training);

// ---- structural ops --------------------------------------------------------

Var concat_channels(const std::vector<Var>& parts);  // along axis 1
Var flatten(const Var& input);                         // [N, ...] -> [N, rest]
// Per-item spatial crop; offsets[n] = (row, col) of the window in item n.
Var crop(const Var& input, const std::vector<std::pair<int, int>>& offsets, int height, int width);
// keep where mask == 1, fill where mask == 0; mask is [N,1,H,W] broadcast over channels.
Var blend(const Tensor& mask, const Var& keep, const Var& fill);

// ---- arithmetic ------------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& input, float scale, float shift);  // scale*x + shift
Var sum(const Var& input);
Var mean(const Var& input);
// log(clamp(x, lo, hi)); zero gradient where the clamp is active.
Var log_clamped(const Var& input, float lo, float hi);
// sum over all elements of weight * (pred - target)^2 with weight [N,1,H,W]
// broadcast over the channel axis of [N,C,H,W] pred/target.
Var masked_squared_error(const Var& pred, const Var& target, const Tensor& weight);

}  // namespace deepstreet::ad
