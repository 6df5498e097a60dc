#include "dive/adamw.hpp"

#include <cmath>

#include "dive/errors.hpp"

namespace dive {

void adamw_step(std::span<ParamTensor* const> params, std::span<AdamWState> states,
                const AdamWOptions& opts) {
  if (params.size() != states.size()) {
    throw ContractError("adamw_step: " + std::to_string(params.size()) + " params but " +
                        std::to_string(states.size()) + " optimizer states");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    ParamTensor& p = *params[t];
    AdamWState& s = states[t];
    if (s.m.rows() != p.value.rows() || s.m.cols() != p.value.cols() ||
        s.v.rows() != p.value.rows() || s.v.cols() != p.value.cols()) {
      throw ContractError("adamw_step: state for '" + p.name + "' has shape " +
                          s.m.shape_string() + ", param is " + p.value.shape_string());
    }
    require_same_shape(p.value, p.grad, "adamw_step");

    ++s.step;
    const double bc1 = 1.0 - std::pow(opts.beta1, double(s.step));
    const double bc2 = 1.0 - std::pow(opts.beta2, double(s.step));
    const bool decay = p.decay && opts.weight_decay != 0.0;
    const double shrink = 1.0 - opts.lr * opts.weight_decay;

    auto& value = p.value.data();
    const auto& grad = p.grad.data();
    auto& m = s.m.data();
    auto& v = s.v.data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      double w = value[i];
      if (decay) w *= shrink;
      const double g = grad[i];
      const double mi = opts.beta1 * m[i] + (1.0 - opts.beta1) * g;
      const double vi = opts.beta2 * v[i] + (1.0 - opts.beta2) * g * g;
      m[i] = float(mi);
      v[i] = float(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      w -= opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps);
      value[i] = float(w);
    }
  }
}

AdamW::AdamW(std::vector<ParamTensor*> params, AdamWOptions opts)
    : params_(std::move(params)), opts_(opts) {
  states_.reserve(params_.size());
  for (const ParamTensor* p : params_) states_.push_back(AdamWState::for_param(*p));
}

void AdamW::zero_grad() {
  for (ParamTensor* p : params_) p->zero_grad();
}

}  // namespace dive
