#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dive/layers.hpp"

namespace dive {

struct AdamWOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Moment estimates for one ParamTensor.
struct AdamWState {
  Matrix m;
  Matrix v;
  std::size_t step = 0;

  static AdamWState for_param(const ParamTensor& p) {
    return {Matrix(p.value.rows(), p.value.cols()), Matrix(p.value.rows(), p.value.cols()), 0};
  }
};

// One AdamW update over aligned (param, state) pairs. Decay is decoupled:
// value *= (1 - lr * wd) for tensors with `decay` set, before the moment
// step. Gradients are left untouched.
void adamw_step(std::span<ParamTensor* const> params, std::span<AdamWState> states,
                const AdamWOptions& opts);

class AdamW {
 public:
  AdamW(std::vector<ParamTensor*> params, AdamWOptions opts);

  void step() { adamw_step(params_, states_, opts_); }
  void zero_grad();

  const AdamWOptions& options() const { return opts_; }
  const std::vector<AdamWState>& states() const { return states_; }

 private:
  std::vector<ParamTensor*> params_;
  std::vector<AdamWState> states_;
  AdamWOptions opts_;
};

}  // namespace dive
