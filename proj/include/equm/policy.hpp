#pragma once

#include "equm/core.hpp"
#include "equm/rng.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace equm {

/// Stochastic policy over a finite action set with a flat parameter vector.
///
/// Evaluation is const and thread-safe; only set_params/params_mut mutate.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual int action_count() const = 0;
  virtual int state_dim() const = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;

  /// Strictly positive probabilities summing to one.
  virtual VecX action_probs(const VecX& state) const = 0;

  /// out += scale * grad_theta log pi(action | state)
  virtual void add_log_prob_grad(const VecX& state, int action, double scale, Eigen::Ref<VecX> out) const = 0;

  VecX log_prob_grad(const VecX& state, int action) const {
    VecX g = VecX::Zero(num_params());
    add_log_prob_grad(state, action, 1.0, g);
    return g;
  }

  Index num_params() const { return params_.size(); }
  const VecX& params() const { return params_; }
  VecX& params_mut() { return params_; }
  void set_params(const VecX& theta);

 protected:
  VecX params_;
};

/// Softmax with max-subtraction; throws NumericError on non-finite logits.
VecX softmax(const Eigen::Ref<const VecX>& logits);

/// One logit per (state, action); states are one-hot vectors of length n_states.
class TabularSoftmaxPolicy final : public Policy {
 public:
  TabularSoftmaxPolicy(int n_states, int n_actions);

  int action_count() const override { return n_actions_; }
  int state_dim() const override { return n_states_; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<TabularSoftmaxPolicy>(*this); }

  VecX action_probs(const VecX& state) const override;
  void add_log_prob_grad(const VecX& state, int action, double scale, Eigen::Ref<VecX> out) const override;

  int state_index(const VecX& state) const;

 private:
  int n_states_;
  int n_actions_;
};

/// Fully connected network, rectifier on hidden layers, identity output.
///
/// Parameters are laid out layer by layer: W_l (out x in, row-major) then b_l.
class Mlp {
 public:
  explicit Mlp(std::vector<int> layer_dims);

  const std::vector<int>& layer_dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  Index num_params() const { return num_params_; }

  /// Pre-activations of every layer, kept for the backward pass.
  struct Tape {
    std::vector<VecX> activations;  // activations[0] = input, activations[l] = post-ReLU output of layer l
    VecX output;
  };

  void forward(const VecX& params, const VecX& input, Tape& tape) const;
  VecX forward(const VecX& params, const VecX& input) const;

  /// grad += scale * d(output . upstream)/d(params) for the input recorded in tape.
  void backward(const VecX& params, const Tape& tape, const VecX& upstream, double scale, Eigen::Ref<VecX> grad) const;

  /// Glorot-uniform weights, zero biases.
  VecX init_params(RngStream& rng) const;

 private:
  std::vector<int> dims_;
  std::vector<Index> weight_offset_;
  std::vector<Index> bias_offset_;
  Index num_params_ = 0;
};

/// Softmax policy on top of an Mlp.
class MlpPolicy final : public Policy {
 public:
  MlpPolicy(std::vector<int> layer_dims, std::uint64_t init_seed);
  MlpPolicy(std::vector<int> layer_dims, VecX params);

  int action_count() const override { return net_.output_dim(); }
  int state_dim() const override { return net_.input_dim(); }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<MlpPolicy>(*this); }

  VecX logits(const VecX& state) const { return net_.forward(params_, state); }
  VecX action_probs(const VecX& state) const override;
  void add_log_prob_grad(const VecX& state, int action, double scale, Eigen::Ref<VecX> out) const override;

  const Mlp& network() const { return net_; }
  const std::vector<int>& layer_dims() const { return net_.layer_dims(); }

 private:
  Mlp net_;
};

// Checkpoint format: "equm-policy v1", layer dims, then one parameter per line (%.17g).
void write_checkpoint(std::ostream& os, const MlpPolicy& policy);
MlpPolicy read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const MlpPolicy& policy);
MlpPolicy load_checkpoint(const std::string& path);

/// Hidden widths equal to the input width; used by the synthetic environments.
std::vector<int> synthetic_layer_dims(int state_dim, int action_count);

}  // namespace equm
