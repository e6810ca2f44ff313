#include "equm/adam.hpp"

#include <cmath>
#include <string>

namespace equm {

void adam_apply(AdamState& state, VecX& theta, const VecX& grad, bool ascent) {
  if (theta.size() != grad.size() || state.m.size() != theta.size()) {
    throw IncompatibleError("adam: dimension mismatch (theta " + std::to_string(theta.size()) + ", grad " +
                            std::to_string(grad.size()) + ", moments " + std::to_string(state.m.size()) + ")");
  }
  if (!grad.allFinite()) throw NumericError("adam: rejected step with non-finite gradient");

  const AdamConfig& c = state.cfg;
  // Minimize loss = -objective when ascending.
  VecX g = ascent ? VecX(-grad) : grad;
  if (c.decoupled) {
    theta *= (1.0 - c.learning_rate * c.weight_decay);
  } else if (c.weight_decay != 0.0) {
    g += c.weight_decay * theta;
  }

  ++state.step;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * g;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * g.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  theta.array() -= c.learning_rate * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + c.epsilon);
}

}  // namespace equm
