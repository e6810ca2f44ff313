#include "equm/policy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace equm {

void Policy::set_params(const VecX& theta) {
  if (theta.size() != params_.size()) {
    throw IncompatibleError("parameter vector has " + std::to_string(theta.size()) + " entries, policy expects " +
                            std::to_string(params_.size()));
  }
  params_ = theta;
}

VecX softmax(const Eigen::Ref<const VecX>& logits) {
  if (!logits.allFinite()) throw NumericError("non-finite logits in softmax");
  VecX p = (logits.array() - logits.maxCoeff()).exp().matrix();
  p /= p.sum();
  return p;
}

// ---------------------------------------------------------------------------

TabularSoftmaxPolicy::TabularSoftmaxPolicy(int n_states, int n_actions) : n_states_(n_states), n_actions_(n_actions) {
  if (n_states < 1 || n_actions < 1) throw ConfigError("tabular policy needs at least one state and one action");
  params_ = VecX::Zero(static_cast<Index>(n_states) * n_actions);
}

int TabularSoftmaxPolicy::state_index(const VecX& state) const {
  if (state.size() != n_states_) throw IncompatibleError("tabular policy: state is not a one-hot of the right length");
  Index idx = 0;
  state.maxCoeff(&idx);
  return static_cast<int>(idx);
}

VecX TabularSoftmaxPolicy::action_probs(const VecX& state) const {
  return softmax(params_.segment(static_cast<Index>(state_index(state)) * n_actions_, n_actions_));
}

void TabularSoftmaxPolicy::add_log_prob_grad(const VecX& state, int action, double scale, Eigen::Ref<VecX> out) const {
  const Index off = static_cast<Index>(state_index(state)) * n_actions_;
  const VecX p = softmax(params_.segment(off, n_actions_));
  // d log softmax_a / d logit_j = [j == a] - p_j
  out.segment(off, n_actions_) -= scale * p;
  out[off + action] += scale;
}

// ---------------------------------------------------------------------------

Mlp::Mlp(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
  if (dims_.size() < 2) throw ConfigError("network needs at least an input and an output layer");
  for (int d : dims_) {
    if (d < 1) throw ConfigError("network layer widths must be positive");
  }
  for (std::size_t l = 1; l < dims_.size(); ++l) {
    weight_offset_.push_back(num_params_);
    num_params_ += static_cast<Index>(dims_[l]) * dims_[l - 1];
    bias_offset_.push_back(num_params_);
    num_params_ += dims_[l];
  }
}

void Mlp::forward(const VecX& params, const VecX& input, Tape& tape) const {
  if (input.size() != dims_.front()) {
    throw IncompatibleError("network input has dimension " + std::to_string(input.size()) + ", expected " +
                            std::to_string(dims_.front()));
  }
  const std::size_t n_layers = dims_.size() - 1;
  tape.activations.resize(n_layers);
  tape.activations[0] = input;
  VecX z;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int out = dims_[l + 1];
    const int in = dims_[l];
    Eigen::Map<const MatX> w(params.data() + weight_offset_[l], out, in);
    Eigen::Map<const VecX> b(params.data() + bias_offset_[l], out);
    z.noalias() = w * tape.activations[l];
    z += b;
    if (l + 1 < n_layers) {
      tape.activations[l + 1] = z.cwiseMax(0.0);
    }
  }
  tape.output = std::move(z);
}

VecX Mlp::forward(const VecX& params, const VecX& input) const {
  Tape tape;
  forward(params, input, tape);
  return std::move(tape.output);
}

void Mlp::backward(const VecX& params, const Tape& tape, const VecX& upstream, double scale,
                   Eigen::Ref<VecX> grad) const {
  VecX delta = scale * upstream;
  for (std::size_t l = dims_.size() - 1; l-- > 0;) {
    const int out = dims_[l + 1];
    const int in = dims_[l];
    Eigen::Map<MatX> gw(grad.data() + weight_offset_[l], out, in);
    gw.noalias() += delta * tape.activations[l].transpose();
    grad.segment(bias_offset_[l], out) += delta;
    if (l == 0) break;
    Eigen::Map<const MatX> w(params.data() + weight_offset_[l], out, in);
    VecX prev = w.transpose() * delta;
    // rectifier derivative, taken as 0 at the kink
    const VecX& act = tape.activations[l];
    for (Index i = 0; i < prev.size(); ++i) {
      if (act[i] <= 0.0) prev[i] = 0.0;
    }
    delta = std::move(prev);
  }
}

VecX Mlp::init_params(RngStream& rng) const {
  VecX theta = VecX::Zero(num_params_);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const double limit = std::sqrt(6.0 / (dims_[l] + dims_[l + 1]));
    const Index n = static_cast<Index>(dims_[l]) * dims_[l + 1];
    for (Index i = 0; i < n; ++i) theta[weight_offset_[l] + i] = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return theta;
}

// ---------------------------------------------------------------------------

MlpPolicy::MlpPolicy(std::vector<int> layer_dims, std::uint64_t init_seed) : net_(std::move(layer_dims)) {
  if (net_.output_dim() < 1) throw ConfigError("policy needs at least one action");
  RngStream rng(init_seed, kInitStream);
  params_ = net_.init_params(rng);
}

MlpPolicy::MlpPolicy(std::vector<int> layer_dims, VecX params) : net_(std::move(layer_dims)) {
  if (params.size() != net_.num_params()) {
    throw IncompatibleError("checkpoint has " + std::to_string(params.size()) + " parameters, layer dims imply " +
                            std::to_string(net_.num_params()));
  }
  params_ = std::move(params);
}

VecX MlpPolicy::action_probs(const VecX& state) const { return softmax(net_.forward(params_, state)); }

void MlpPolicy::add_log_prob_grad(const VecX& state, int action, double scale, Eigen::Ref<VecX> out) const {
  thread_local Mlp::Tape tape;
  net_.forward(params_, state, tape);
  VecX upstream = -softmax(tape.output);
  upstream[action] += 1.0;
  net_.backward(params_, tape, upstream, scale, out);
}

// ---------------------------------------------------------------------------

void write_checkpoint(std::ostream& os, const MlpPolicy& policy) {
  os << "equm-policy v1\n";
  const auto& dims = policy.layer_dims();
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? " " : "") << dims[i];
  os << '\n';
  char buf[64];
  for (Index i = 0; i < policy.num_params(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", policy.params()[i]);
    os << buf;
  }
}

MlpPolicy read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "equm-policy v1") throw DataError("checkpoint: missing 'equm-policy v1' header");
  if (!std::getline(is, line)) throw DataError("checkpoint: missing layer dims line");
  std::vector<int> dims;
  {
    std::istringstream ls(line);
    int d = 0;
    while (ls >> d) {
      if (d <= 0) throw DataError("checkpoint: layer widths must be positive");
      dims.push_back(d);
    }
    if (!ls.eof() || dims.size() < 2) throw DataError("checkpoint: layer dims line must list at least two widths");
  }
  std::vector<double> values;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str() || *end != '\0') throw DataError("checkpoint: malformed parameter line '" + line + "'");
    values.push_back(v);
  }
  const Mlp net(dims);
  if (static_cast<Index>(values.size()) != net.num_params()) {
    throw DataError("checkpoint: " + std::to_string(values.size()) + " parameters, layer dims imply " +
                    std::to_string(net.num_params()));
  }
  return MlpPolicy(dims, Eigen::Map<VecX>(values.data(), static_cast<Index>(values.size())));
}

void save_checkpoint(const std::string& path, const MlpPolicy& policy) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path);
  write_checkpoint(os, policy);
}

MlpPolicy load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  return read_checkpoint(is);
}

std::vector<int> synthetic_layer_dims(int state_dim, int action_count) {
  return {state_dim, state_dim, state_dim, action_count};
}

}  // namespace equm
