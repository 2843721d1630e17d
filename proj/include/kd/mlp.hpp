#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace kd {

enum class Activation { kRelu, kTanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Architecture of a fully connected regressor. `activations` holds one entry
// per hidden layer; empty means relu everywhere. The output layer is always
// linear. `seed` drives weight initialization.
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  std::vector<Activation> activations;
  std::uint64_t seed = 0;

  void validate() const;
  // (fan_out, fan_in) of each affine layer, input to output
  std::vector<std::pair<int, int>> layer_dims() const;
  int parameter_count() const;
  Activation activation_at(int hidden_layer) const;
};

struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;  // fan_out x fan_in
  std::vector<Eigen::VectorXd> biases;
};

// Glorot uniform weights (+- sqrt(6 / (fan_in + fan_out))), zero biases.
// Entries are drawn in a fixed order (layer by layer, row-major), so the
// same seed always yields bit-identical parameters.
MlpParams init_params(const MlpSpec& spec);

// Per-layer activations recorded during forward, consumed by backward.
// inputs[l] is what affine layer l saw; pre[l] its output before the
// nonlinearity.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> pre;
};

// Rows of `x` are samples. Throws NumericError naming the first layer that
// produced a non-finite value.
Eigen::MatrixXd forward(const MlpSpec& spec, const MlpParams& params,
                        const Eigen::MatrixXd& x,
                        ForwardTrace* trace = nullptr);

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

// Exact gradients for the given upstream d_output (same layout as the
// forward output).
MlpGradients backward(const MlpSpec& spec, const MlpParams& params,
                      const ForwardTrace& trace,
                      const Eigen::MatrixXd& d_output);

// Adam with bias correction and multiplicative learning-rate decay
// lr_t = learning_rate / (1 + decay * t), t counting optimizer steps from 1.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double decay = 1e-6;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;

  static AdamState init_like(const MlpParams& params);
};

void adam_step(MlpParams& params, const MlpGradients& grads, AdamState& state);

}  // namespace kd
