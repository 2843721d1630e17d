#include "kd/mlp.hpp"

#include <cmath>

#include "kd/errors.hpp"
#include "kd/rng.hpp"

namespace kd {

std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw DataError("unknown activation \"" + name + "\"");
}

void MlpSpec::validate() const {
  if (input_dim < 1) throw DataError("mlp spec: input_dim must be >= 1");
  if (output_dim < 1) throw DataError("mlp spec: output_dim must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw DataError("mlp spec: hidden widths must be >= 1");
  }
  if (!activations.empty() && activations.size() != hidden.size()) {
    throw DataError("mlp spec: need one activation per hidden layer");
  }
}

std::vector<std::pair<int, int>> MlpSpec::layer_dims() const {
  std::vector<std::pair<int, int>> dims;
  int in = input_dim;
  for (int h : hidden) {
    dims.emplace_back(h, in);
    in = h;
  }
  dims.emplace_back(output_dim, in);
  return dims;
}

int MlpSpec::parameter_count() const {
  int n = 0;
  for (auto [out, in] : layer_dims()) n += out * in + out;
  return n;
}

Activation MlpSpec::activation_at(int hidden_layer) const {
  if (activations.empty()) return Activation::kRelu;
  return activations[static_cast<std::size_t>(hidden_layer)];
}

MlpParams init_params(const MlpSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  MlpParams p;
  for (auto [out, in] : spec.layer_dims()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = rng.uniform(-bound, bound);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  return p;
}

Eigen::MatrixXd forward(const MlpSpec& spec, const MlpParams& params,
                        const Eigen::MatrixXd& x, ForwardTrace* trace) {
  spec.validate();
  if (x.cols() != spec.input_dim) {
    throw DataError("forward: input has " + std::to_string(x.cols()) +
                    " columns, spec expects " + std::to_string(spec.input_dim));
  }
  const int layers = static_cast<int>(params.weights.size());
  if (layers != static_cast<int>(spec.hidden.size()) + 1) {
    throw DataError("forward: parameter count does not match spec");
  }
  if (trace) {
    trace->inputs.assign(static_cast<std::size_t>(layers), {});
    trace->pre.assign(static_cast<std::size_t>(layers), {});
  }
  Eigen::MatrixXd a = x;
  for (int l = 0; l < layers; ++l) {
    if (trace) trace->inputs[l] = a;
    Eigen::MatrixXd z = a * params.weights[l].transpose();
    z.rowwise() += params.biases[l].transpose();
    if (!z.allFinite()) {
      throw NumericError("forward: non-finite activations in layer " +
                         std::to_string(l));
    }
    if (trace) trace->pre[l] = z;
    if (l < layers - 1) {
      if (spec.activation_at(l) == Activation::kRelu) {
        a = z.cwiseMax(0.0);
      } else {
        a = z.array().tanh().matrix();
      }
    } else {
      a = std::move(z);
    }
  }
  return a;
}

MlpGradients backward(const MlpSpec& spec, const MlpParams& params,
                      const ForwardTrace& trace,
                      const Eigen::MatrixXd& d_output) {
  const int layers = static_cast<int>(params.weights.size());
  if (static_cast<int>(trace.inputs.size()) != layers) {
    throw DataError("backward: trace does not match parameters");
  }
  MlpGradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  Eigen::MatrixXd dz = d_output;
  for (int l = layers - 1; l >= 0; --l) {
    g.weights[l] = dz.transpose() * trace.inputs[l];
    g.biases[l] = dz.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd da = dz * params.weights[l];
    const Eigen::MatrixXd& z = trace.pre[l - 1];
    if (spec.activation_at(l - 1) == Activation::kRelu) {
      dz = (z.array() > 0.0).select(da, 0.0);
    } else {
      dz = (da.array() * (1.0 - z.array().tanh().square())).matrix();
    }
  }
  return g;
}

AdamState AdamState::init_like(const MlpParams& params) {
  AdamState s;
  for (const auto& w : params.weights) {
    s.m_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    s.v_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  }
  for (const auto& b : params.biases) {
    s.m_b.push_back(Eigen::VectorXd::Zero(b.size()));
    s.v_b.push_back(Eigen::VectorXd::Zero(b.size()));
  }
  return s;
}

void adam_step(MlpParams& params, const MlpGradients& grads, AdamState& state) {
  if (grads.weights.size() != params.weights.size() ||
      state.m_w.size() != params.weights.size()) {
    throw DataError("adam_step: mismatched parameter/gradient/state shapes");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double lr_t = state.learning_rate / (1.0 + state.decay * t);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = (state.beta2 * v.array() + (1.0 - state.beta2) * g.array().square())
            .matrix();
    p -= (lr_t * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon))
             .matrix();
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(params.weights[l], grads.weights[l], state.m_w[l], state.v_w[l]);
    update(params.biases[l], grads.biases[l], state.m_b[l], state.v_b[l]);
  }
}

}  // namespace kd
