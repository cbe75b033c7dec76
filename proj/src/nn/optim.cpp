#include "cdt/nn/optim.hpp"

#include <cmath>

#include "cdt/error.hpp"

namespace cdt::nn {

void adam_step(AdamState& state, std::span<const Var> params) {
  if (!(state.beta1 >= 0.0 && state.beta1 < 1.0 && state.beta2 >= 0.0 && state.beta2 < 1.0)) {
    throw ShapeError("adam: betas must lie in [0, 1)");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Matrix::Zero(p->data.rows(), p->data.cols()));
      state.second_moment.push_back(Matrix::Zero(p->data.rows(), p->data.cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam: parameter list changed between steps");
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Array& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (m.rows() != p.data.rows() || m.cols() != p.data.cols()) {
      throw ShapeError("adam: moment shape does not match parameter " + std::to_string(i));
    }
    if (p.has_grad()) {
      m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
      v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseAbs2();
    } else {
      m *= state.beta1;
      v *= state.beta2;
    }
    p.data.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

double global_grad_norm(std::span<const Var> params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p->has_grad()) sq += p->grad.squaredNorm();
  }
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<const Var> params, double max_norm) {
  const double g = global_grad_norm(params);
  if (!(g > max_norm) || g == 0.0) return 1.0;
  const double s = max_norm / g;
  for (const auto& p : params) {
    if (p->has_grad()) p->grad *= s;
  }
  return s;
}

void zero_grad(std::span<const Var> params) {
  for (const auto& p : params) p->zero_grad();
}

}  // namespace cdt::nn
