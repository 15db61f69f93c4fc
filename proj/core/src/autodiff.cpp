#include "deepstreet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "deepstreet/error.hpp"

namespace deepstreet::ad {
namespace {

thread_local bool g_grad_enabled = true;

// Builds the result node; records inputs and the closure only when some input
// wants gradients and recording is on.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.valid() && in.requires_grad()) needs = true;
    }
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.valid() ? in.node() : nullptr);
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

// Gradient buffer of input `i` when that input participates in differentiation.
Tensor* grad_of(Node& self, std::size_t i) {
  auto& in = self.inputs[i];
  if (!in || !in->requires_grad) return nullptr;
  return &in->ensure_grad();
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(0.0f);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& loss) {
  if (!loss.valid() || loss.value().size() != 1) {
    throw DimensionError("backward needs a scalar loss, got " +
                         (loss.valid() ? shape_to_string(loss.shape()) : std::string("an empty Var")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && child->backward && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  loss.node()->ensure_grad().fill(1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

// ---- layer ops -------------------------------------------------------------

Var conv2d(const Var& input, const Var& kernel, const Var& bias, const kernels::ConvGeometry& geometry) {
  const Tensor* b = bias.valid() ? &bias.value() : nullptr;
  Tensor out = kernels::conv2d(input.value(), kernel.value(), b, geometry);
  return make_result(std::move(out), {input, kernel, bias}, [geometry](Node& self) {
    kernels::conv2d_backward(self.inputs[0]->value, self.inputs[1]->value, self.grad, geometry,
                             grad_of(self, 0), grad_of(self, 1), self.inputs[2] ? grad_of(self, 2) : nullptr);
  });
}

Var conv2d_transpose(const Var& input, const Var& kernel, const Var& bias, int stride, int padding) {
  if (stride != 1 && stride != 2) {
    throw DimensionError("conv2d_transpose supports stride 1 or 2, got " + std::to_string(stride));
  }
  const kernels::ConvGeometry geometry{stride, 1, padding};
  const Tensor* b = bias.valid() ? &bias.value() : nullptr;
  Tensor out = kernels::conv2d_transpose(input.value(), kernel.value(), b, geometry);
  return make_result(std::move(out), {input, kernel, bias}, [geometry](Node& self) {
    kernels::conv2d_transpose_backward(self.inputs[0]->value, self.inputs[1]->value, self.grad, geometry,
                                       grad_of(self, 0), grad_of(self, 1),
                                       self.inputs[2] ? grad_of(self, 2) : nullptr);
  });
}

Var fully_connected(const Var& input, const Var& weights, const Var& bias) {
  const Tensor* b = bias.valid() ? &bias.value() : nullptr;
  Tensor out = kernels::fully_connected(input.value(), weights.value(), b);
  return make_result(std::move(out), {input, weights, bias}, [](Node& self) {
    kernels::fully_connected_backward(self.inputs[0]->value, self.inputs[1]->value, self.grad, grad_of(self, 0),
                                      grad_of(self, 1), self.inputs[2] ? grad_of(self, 2) : nullptr);
  });
}

Var relu(const Var& input) {
  Tensor out = input.value();
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return make_result(std::move(out), {input}, [](Node& self) {
    Tensor* gx = grad_of(self, 0);
    if (!gx) return;
    const auto x = self.inputs[0]->value.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > 0.0f) (*gx)[i] += self.grad[i];
    }
  });
}

Var sigmoid(const Var& input) {
  Tensor out = input.value();
  for (float& v : out.data()) v = 1.0f / (1.0f + std::exp(-v));
  return make_result(std::move(out), {input}, [](Node& self) {
    Tensor* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const float y = self.value[i];
      (*gx)[i] += self.grad[i] * y * (1.0f - y);
    }
  });
}

Var batch_norm(const Var& input, const Var& gamma, const Var& beta, BatchNormBuffers* buffers, bool training) {
  const Tensor& x = input.value();
  if (x.rank() != 4) throw DimensionError("batch_norm expects [N,C,H,W], got " + shape_to_string(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t area = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  if (gamma.value().size() != static_cast<std::size_t>(c) || beta.value().size() != static_cast<std::size_t>(c)) {
    throw DimensionError("batch_norm: affine parameters must have one entry per channel");
  }
  const float epsilon = buffers ? buffers->epsilon : 1e-5f;
  const std::size_t count = static_cast<std::size_t>(n) * area;

  std::vector<float> mean(c), inv_std(c);
  for (int ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0.0, sq = 0.0;
      for (int i = 0; i < n; ++i) {
        const float* p = x.raw() + (static_cast<std::size_t>(i) * c + ch) * area;
        for (std::size_t k = 0; k < area; ++k) s += p[k];
      }
      const double mu = s / static_cast<double>(count);
      for (int i = 0; i < n; ++i) {
        const float* p = x.raw() + (static_cast<std::size_t>(i) * c + ch) * area;
        for (std::size_t k = 0; k < area; ++k) sq += (p[k] - mu) * (p[k] - mu);
      }
      const double var = sq / static_cast<double>(count);
      mean[ch] = static_cast<float>(mu);
      inv_std[ch] = static_cast<float>(1.0 / std::sqrt(var + epsilon));
      if (buffers) {
        const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
        const float m = buffers->momentum;
        buffers->running_mean[ch] = (1.0f - m) * buffers->running_mean[ch] + m * static_cast<float>(mu);
        buffers->running_var[ch] = (1.0f - m) * buffers->running_var[ch] + m * static_cast<float>(unbiased);
      }
    } else {
      if (!buffers) throw Error("batch_norm inference needs running statistics");
      mean[ch] = buffers->running_mean[ch];
      inv_std[ch] = 1.0f / std::sqrt(buffers->running_var[ch] + epsilon);
    }
  }

  Tensor normalized(x.shape());
  Tensor out(x.shape());
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * area;
      const float g = gamma.value()[ch], b = beta.value()[ch];
      for (std::size_t k = 0; k < area; ++k) {
        const float xh = (x[base + k] - mean[ch]) * inv_std[ch];
        normalized[base + k] = xh;
        out[base + k] = g * xh + b;
      }
    }
  }

  return make_result(std::move(out), {input, gamma, beta},
                     [normalized = std::move(normalized), inv_std, training, n, c, area](Node& self) {
                       const float* dy = self.grad.raw();
                       const Tensor& g = self.inputs[1]->value;
                       Tensor* gx = grad_of(self, 0);
                       Tensor* gg = grad_of(self, 1);
                       Tensor* gb = grad_of(self, 2);
                       const double m = static_cast<double>(n) * static_cast<double>(area);
                       for (int ch = 0; ch < c; ++ch) {
                         double sum_dy = 0.0, sum_dy_xh = 0.0;
                         for (int i = 0; i < n; ++i) {
                           const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * area;
                           for (std::size_t k = 0; k < area; ++k) {
                             sum_dy += dy[base + k];
                             sum_dy_xh += static_cast<double>(dy[base + k]) * normalized[base + k];
                           }
                         }
                         if (gg) (*gg)[ch] += static_cast<float>(sum_dy_xh);
                         if (gb) (*gb)[ch] += static_cast<float>(sum_dy);
                         if (!gx) continue;
                         const float scale = g[ch] * inv_std[ch];
                         for (int i = 0; i < n; ++i) {
                           const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * area;
                           for (std::size_t k = 0; k < area; ++k) {
                             if (training) {
                               const double centered =
                                   dy[base + k] - sum_dy / m - normalized[base + k] * sum_dy_xh / m;
                               (*gx)[base + k] += static_cast<float>(scale * centered);
                             } else {
                               (*gx)[base + k] += scale * dy[base + k];
                             }
                           }
                         }
                       }
                     });
}

// ---- structural ops --------------------------------------------------------

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels needs at least one input");
  const Shape& first = parts.front().shape();
  if (first.size() < 2) throw DimensionError("concat_channels needs rank >= 2");
  Shape out_shape = first;
  out_shape[1] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool compatible = s.size() == first.size() && s[0] == first[0];
    for (std::size_t a = 2; compatible && a < s.size(); ++a) compatible = s[a] == first[a];
    if (!compatible) {
      throw DimensionError("concat_channels: " + shape_to_string(s) + " incompatible with " +
                           shape_to_string(first));
    }
    out_shape[1] += s[1];
  }
  std::size_t inner = 1;
  for (std::size_t a = 2; a < first.size(); ++a) inner *= static_cast<std::size_t>(first[a]);
  const int n = first[0];

  Tensor out(out_shape);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  const std::size_t row = static_cast<std::size_t>(out_shape[1]) * inner;
  for (const auto& p : parts) {
    const std::size_t w = static_cast<std::size_t>(p.shape()[1]) * inner;
    for (int i = 0; i < n; ++i) {
      std::copy_n(p.value().raw() + i * w, w, out.raw() + i * row + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  return make_result(std::move(out), parts, [widths, row, n](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (Tensor* g = grad_of(self, k)) {
        for (int i = 0; i < n; ++i) {
          const float* src = self.grad.raw() + i * row + off;
          float* dst = g->raw() + i * widths[k];
          for (std::size_t j = 0; j < widths[k]; ++j) dst[j] += src[j];
        }
      }
      off += widths[k];
    }
  });
}

Var flatten(const Var& input) {
  const Shape& s = input.shape();
  const int n = s.at(0);
  const int rest = static_cast<int>(input.value().size() / static_cast<std::size_t>(n));
  return make_result(input.value().reshaped({n, rest}), {input}, [](Node& self) {
    if (Tensor* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Var crop(const Var& input, const std::vector<std::pair<int, int>>& offsets, int height, int width) {
  const Tensor& x = input.value();
  if (x.rank() != 4) throw DimensionError("crop expects [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (static_cast<int>(offsets.size()) != n) throw DimensionError("crop needs one offset per batch item");
  for (const auto& [r, col] : offsets) {
    if (r < 0 || col < 0 || r + height > h || col + width > w) {
      throw DimensionError("crop window (" + std::to_string(r) + "," + std::to_string(col) + ") size " +
                           std::to_string(height) + "x" + std::to_string(width) + " leaves the input");
    }
  }
  Tensor out({n, c, height, width});
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      for (int r = 0; r < height; ++r) {
        const float* src = &x.at(i, ch, offsets[i].first + r, offsets[i].second);
        std::copy_n(src, width, &out.at(i, ch, r, 0));
      }
    }
  }
  return make_result(std::move(out), {input}, [offsets, height, width](Node& self) {
    Tensor* g = grad_of(self, 0);
    if (!g) return;
    const int n = self.value.dim(0), c = self.value.dim(1);
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        for (int r = 0; r < height; ++r) {
          const float* src = &self.grad.at(i, ch, r, 0);
          float* dst = &g->at(i, ch, offsets[i].first + r, offsets[i].second);
          for (int col = 0; col < width; ++col) dst[col] += src[col];
        }
      }
    }
  });
}

Var blend(const Tensor& mask, const Var& keep, const Var& fill) {
  require_same_shape(keep.value(), fill.value(), "blend");
  const Shape& s = keep.shape();
  if (s.size() != 4 || mask.rank() != 4 || mask.dim(0) != s[0] || mask.dim(1) != 1 || mask.dim(2) != s[2] ||
      mask.dim(3) != s[3]) {
    throw DimensionError("blend: mask " + shape_to_string(mask.shape()) + " does not match " + shape_to_string(s));
  }
  const int n = s[0], c = s[1];
  const std::size_t area = static_cast<std::size_t>(s[2]) * s[3];
  Tensor out(s);
  for (int i = 0; i < n; ++i) {
    const float* m = mask.raw() + i * area;
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * area;
      for (std::size_t k = 0; k < area; ++k) {
        out[base + k] = m[k] != 0.0f ? keep.value()[base + k] : fill.value()[base + k];
      }
    }
  }
  return make_result(std::move(out), {keep, fill}, [mask, n, c, area](Node& self) {
    Tensor* gk = grad_of(self, 0);
    Tensor* gf = grad_of(self, 1);
    for (int i = 0; i < n; ++i) {
      const float* m = mask.raw() + i * area;
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * area;
        for (std::size_t k = 0; k < area; ++k) {
          if (m[k] != 0.0f) {
            if (gk) (*gk)[base + k] += self.grad[base + k];
          } else if (gf) {
            (*gf)[base + k] += self.grad[base + k];
          }
        }
      }
    }
  });
}

// ---- arithmetic ------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (Tensor* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    if (Tensor* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (Tensor* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Var affine(const Var& input, float scale, float shift) {
  Tensor out = input.value();
  for (float& v : out.data()) v = scale * v + shift;
  return make_result(std::move(out), {input}, [scale](Node& self) {
    if (Tensor* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += scale * self.grad[i];
    }
  });
}

Var sum(const Var& input) {
  double total = 0.0;
  for (float v : input.value().data()) total += v;
  return make_result(Tensor::scalar(static_cast<float>(total)), {input}, [](Node& self) {
    if (Tensor* g = grad_of(self, 0)) {
      const float dy = self.grad[0];
      for (float& v : g->data()) v += dy;
    }
  });
}

Var mean(const Var& input) {
  return affine(sum(input), 1.0f / static_cast<float>(input.value().size()), 0.0f);
}

Var log_clamped(const Var& input, float lo, float hi) {
  Tensor out = input.value();
  for (float& v : out.data()) v = std::log(std::clamp(v, lo, hi));
  return make_result(std::move(out), {input}, [lo, hi](Node& self) {
    Tensor* g = grad_of(self, 0);
    if (!g) return;
    const Tensor& x = self.inputs[0]->value;
    for (std::size_t i = 0; i < g->size(); ++i) {
      if (x[i] >= lo && x[i] <= hi) (*g)[i] += self.grad[i] / x[i];
    }
  });
}

Var masked_squared_error(const Var& pred, const Var& target, const Tensor& weight) {
  require_same_shape(pred.value(), target.value(), "masked_squared_error");
  const Shape& s = pred.shape();
  if (s.size() != 4 || weight.rank() != 4 || weight.dim(0) != s[0] || weight.dim(1) != 1 ||
      weight.dim(2) != s[2] || weight.dim(3) != s[3]) {
    throw DimensionError("masked_squared_error: weight " + shape_to_string(weight.shape()) + " does not match " +
                         shape_to_string(s));
  }
  const int n = s[0], c = s[1];
  const std::size_t area = static_cast<std::size_t>(s[2]) * s[3];
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* w = weight.raw() + i * area;
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * area;
      for (std::size_t k = 0; k < area; ++k) {
        const double d = static_cast<double>(pred.value()[base + k]) - target.value()[base + k];
        total += w[k] * d * d;
      }
    }
  }
  return make_result(Tensor::scalar(static_cast<float>(total)), {pred, target}, [weight, n, c, area](Node& self) {
    const Tensor& p = self.inputs[0]->value;
    const Tensor& t = self.inputs[1]->value;
    Tensor* gp = grad_of(self, 0);
    Tensor* gt = grad_of(self, 1);
    const float dy = self.grad[0];
    for (int i = 0; i < n; ++i) {
      const float* w = weight.raw() + i * area;
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * area;
        for (std::size_t k = 0; k < area; ++k) {
          const float g = 2.0f * w[k] * (p[base + k] - t[base + k]) * dy;
          if (gp) (*gp)[base + k] += g;
          if (gt) (*gt)[base + k] -= g;
        }
      }
    }
  });
}

}  // namespace deepstreet::ad
