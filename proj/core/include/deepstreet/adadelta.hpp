#pragma once

#include <vector>

#include "deepstreet/autodiff.hpp"
#include "deepstreet/tensor.hpp"

namespace deepstreet {

// Running averages for one parameter tensor. Each parameter owns its state;
// nothing is shared between parameters.
struct AdadeltaState {
  Tensor accum_grad_sq;
  Tensor accum_update_sq;
  float rho = 0.95f;
  float epsilon = 1e-6f;

  AdadeltaState() = default;
  AdadeltaState(const Shape& shape, float rho, float epsilon);
};

// One in-place update:
//   E[g^2]  <- rho E[g^2] + (1-rho) g^2
//   dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
//   E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
//   param   += dx
// Returns false and leaves param and state untouched when the gradient holds
// a non-finite value.
bool adadelta_step(Tensor& param, const Tensor& grad, AdadeltaState& state);

// Applies adadelta_step to a fixed list of parameters.
class Adadelta {
 public:
  Adadelta(std::vector<ad::Var> params, float rho, float epsilon);

  // Steps every parameter that received a gradient; returns the number of
  // parameters whose update was rejected.
  int step();
  void zero_grad();

  const std::vector<ad::Var>& params() const { return params_; }
  std::vector<AdadeltaState>& states() { return states_; }
  const std::vector<AdadeltaState>& states() const { return states_; }

 private:
  std::vector<ad::Var> params_;
  std::vector<AdadeltaState> states_;
};

}  // namespace deepstreet
