#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdt/nn/array.hpp"

namespace cdt::nn {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step_count = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

// Bias-corrected Adam update of `params` from their accumulated gradients.
// Parameters that received no gradient are treated as having a zero gradient.
// Moment buffers are created on the first call.
void adam_step(AdamState& state, std::span<const Var> params);

// Scales all gradients by max_norm / g when the global L2 norm g exceeds
// max_norm. Returns the applied scale (1 when untouched).
double clip_grad_norm(std::span<const Var> params, double max_norm);

double global_grad_norm(std::span<const Var> params);

void zero_grad(std::span<const Var> params);

}  // namespace cdt::nn
