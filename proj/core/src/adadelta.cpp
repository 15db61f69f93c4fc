#include "deepstreet/adadelta.hpp"

#include <cmath>

#include "deepstreet/error.hpp"

namespace deepstreet {

AdadeltaState::AdadeltaState(const Shape& shape, float rho_, float epsilon_)
    : accum_grad_sq(shape), accum_update_sq(shape), rho(rho_), epsilon(epsilon_) {}

bool adadelta_step(Tensor& param, const Tensor& grad, AdadeltaState& state) {
  require_same_shape(param, grad, "adadelta_step gradient");
  require_same_shape(param, state.accum_grad_sq, "adadelta_step state");
  require_same_shape(param, state.accum_update_sq, "adadelta_step state");
  if (!(state.rho > 0.0f && state.rho < 1.0f) || !(state.epsilon > 0.0f)) {
    throw Error("adadelta needs rho in (0,1) and epsilon > 0");
  }
  if (!grad.all_finite()) return false;

  const float rho = state.rho;
  const float eps = state.epsilon;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    float& eg = state.accum_grad_sq[i];
    float& ex = state.accum_update_sq[i];
    eg = rho * eg + (1.0f - rho) * g * g;
    const float dx = -(std::sqrt(ex + eps) / std::sqrt(eg + eps)) * g;
    ex = rho * ex + (1.0f - rho) * dx * dx;
    param[i] += dx;
  }
  return true;
}

Adadelta::Adadelta(std::vector<ad::Var> params, float rho, float epsilon) : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (const auto& p : params_) states_.emplace_back(p.shape(), rho, epsilon);
}

int Adadelta::step() {
  int rejected = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    if (!adadelta_step(params_[i].mutable_value(), params_[i].mutable_grad(), states_[i])) ++rejected;
  }
  return rejected;
}

void Adadelta::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace deepstreet
