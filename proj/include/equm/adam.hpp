#pragma once

#include "equm/core.hpp"

namespace equm {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.1;
  // true: theta *= (1 - lr * wd) before the moment step. false: wd * theta is folded into the gradient (L2).
  bool decoupled = true;
};

struct AdamState {
  AdamState() = default;
  AdamState(Index n, AdamConfig config) : cfg(config), m(VecX::Zero(n)), v(VecX::Zero(n)) {}

  AdamConfig cfg;
  VecX m;
  VecX v;
  long step = 0;
};

/// One bias-corrected Adam step on theta. With ascent=true the gradient is
/// climbed instead of descended. Throws NumericError (leaving state and theta
/// untouched) when grad contains a non-finite entry.
void adam_apply(AdamState& state, VecX& theta, const VecX& grad, bool ascent);

}  // namespace equm
