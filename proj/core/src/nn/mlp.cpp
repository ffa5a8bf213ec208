#include "habi/nn/mlp.hpp"

#include <cmath>

#include "habi/errors.hpp"
#include "habi/nn/product.hpp"

namespace habi::nn {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
  }
  return "unknown";
}

template <class Real>
Index MlpParams<Real>::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

template <class Real>
Index MlpParams<Real>::output_dim() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

template <class Real>
std::size_t MlpParams<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

template <class Real>
bool MlpParams<Real>::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

template <class Real>
void MlpParams<Real>::validate() const {
  if (layers.empty()) throw ConfigError("mlp: network has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.bias.size() != l.weight.rows()) {
      throw ConfigError("mlp: layer " + std::to_string(k) + " bias length " +
                        std::to_string(l.bias.size()) + " != out dimension " +
                        std::to_string(l.weight.rows()));
    }
    if (k > 0 && layers[k - 1].weight.rows() != l.weight.cols()) {
      throw ConfigError("mlp: layer " + std::to_string(k) + " expects " +
                        std::to_string(l.weight.cols()) + " inputs but layer " +
                        std::to_string(k - 1) + " produces " +
                        std::to_string(layers[k - 1].weight.rows()));
    }
  }
  if (!all_finite()) throw ConfigError("mlp: non-finite parameter entry");
}

template <class Real>
MlpParams<Real> MlpParams<Real>::zeros_like() const {
  MlpParams out;
  out.hidden_activation = hidden_activation;
  out.output_activation = output_activation;
  out.layers.reserve(layers.size());
  for (const auto& l : layers) {
    out.layers.push_back({Matrix<Real>::Zero(l.weight.rows(), l.weight.cols()),
                          Vector<Real>::Zero(l.bias.size())});
  }
  return out;
}

template <class Real>
MlpParams<Real> make_zero_mlp(std::span<const int> sizes, Activation output_activation,
                              Activation hidden_activation) {
  if (sizes.size() < 2) throw ConfigError("mlp: need at least input and output sizes");
  MlpParams<Real> net;
  net.hidden_activation = hidden_activation;
  net.output_activation = output_activation;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    if (sizes[k] <= 0 || sizes[k + 1] <= 0) throw ConfigError("mlp: layer sizes must be positive");
    net.layers.push_back(
        {Matrix<Real>::Zero(sizes[k + 1], sizes[k]), Vector<Real>::Zero(sizes[k + 1])});
  }
  return net;
}

template <class Real>
MlpParams<Real> make_mlp(std::span<const int> sizes, std::mt19937_64& rng,
                         Activation output_activation, Activation hidden_activation) {
  auto net = make_zero_mlp<Real>(sizes, output_activation, hidden_activation);
  for (auto& l : net.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    // Row-major fill order so the draw sequence matches the on-disk layout.
    for (Index r = 0; r < l.weight.rows(); ++r) {
      for (Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = static_cast<Real>(dist(rng));
    }
  }
  return net;
}

namespace {

template <class Real>
void activate_inplace(Matrix<Real>& x, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return;
    case Activation::kRelu:
      x = x.cwiseMax(Real(0));
      return;
    case Activation::kTanh:
      x = x.array().tanh().matrix();
      return;
  }
}

}  // namespace

template <class Real>
Matrix<Real> mlp_forward(const MlpParams<Real>& net, const Matrix<Real>& inputs) {
  if (net.layers.empty()) throw ConfigError("mlp_forward: network has no layers");
  if (inputs.rows() != net.input_dim()) {
    throw ConfigError("mlp_forward: input has " + std::to_string(inputs.rows()) +
                      " rows, network expects " + std::to_string(net.input_dim()));
  }
  Matrix<Real> h;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    Matrix<Real> pre;
    product_into(l.weight, k == 0 ? inputs : h, pre);
    pre.colwise() += l.bias;
    const bool last = k + 1 == net.layers.size();
    activate_inplace(pre, last ? net.output_activation : net.hidden_activation);
    h = std::move(pre);
  }
  return h;
}

template <class Real>
Vector<Real> mlp_forward(const MlpParams<Real>& net, const Vector<Real>& input) {
  if (net.layers.empty()) throw ConfigError("mlp_forward: network has no layers");
  if (input.size() != net.input_dim()) {
    throw ConfigError("mlp_forward: input has length " + std::to_string(input.size()) +
                      ", network expects " + std::to_string(net.input_dim()));
  }
  Vector<Real> h = input;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    Vector<Real> pre = l.weight * h + l.bias;
    const bool last = k + 1 == net.layers.size();
    switch (last ? net.output_activation : net.hidden_activation) {
      case Activation::kIdentity:
        break;
      case Activation::kRelu:
        pre = pre.cwiseMax(Real(0));
        break;
      case Activation::kTanh:
        pre = pre.array().tanh().matrix();
        break;
    }
    h = std::move(pre);
  }
  return h;
}

template <class Real>
typename Tape<Real>::Var apply_activation(Tape<Real>& tape, typename Tape<Real>::Var x,
                                          Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return x;
    case Activation::kRelu:
      return tape.relu(x);
    case Activation::kTanh:
      return tape.tanh(x);
  }
  return x;
}

template <class Real>
typename Tape<Real>::Var mlp_forward(const MlpParams<Real>& net, Tape<Real>& tape,
                                     typename Tape<Real>::Var inputs,
                                     std::type_identity_t<MlpParams<Real>>* grads) {
  if (net.layers.empty()) throw ConfigError("mlp_forward: network has no layers");
  if (tape.value(inputs).rows() != net.input_dim()) {
    throw ConfigError("mlp_forward: input has " + std::to_string(tape.value(inputs).rows()) +
                      " rows, network expects " + std::to_string(net.input_dim()));
  }
  if (grads != nullptr && grads->layers.size() != net.layers.size()) {
    *grads = net.zeros_like();
  }
  auto h = inputs;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    auto w = tape.parameter(l.weight, grads != nullptr ? &grads->layers[k].weight : nullptr);
    auto b = tape.parameter(l.bias, grads != nullptr ? &grads->layers[k].bias : nullptr);
    auto pre = tape.add_bias(tape.matmul(w, h), b);
    const bool last = k + 1 == net.layers.size();
    h = apply_activation(tape, pre, last ? net.output_activation : net.hidden_activation);
  }
  return h;
}

template struct MlpParams<float>;
template struct MlpParams<double>;

template MlpParams<float> make_mlp<float>(std::span<const int>, std::mt19937_64&, Activation,
                                          Activation);
template MlpParams<double> make_mlp<double>(std::span<const int>, std::mt19937_64&, Activation,
                                            Activation);
template MlpParams<float> make_zero_mlp<float>(std::span<const int>, Activation, Activation);
template MlpParams<double> make_zero_mlp<double>(std::span<const int>, Activation, Activation);
template Matrix<float> mlp_forward(const MlpParams<float>&, const Matrix<float>&);
template Matrix<double> mlp_forward(const MlpParams<double>&, const Matrix<double>&);
template Vector<float> mlp_forward(const MlpParams<float>&, const Vector<float>&);
template Vector<double> mlp_forward(const MlpParams<double>&, const Vector<double>&);
template Tape<float>::Var mlp_forward(const MlpParams<float>&, Tape<float>&, Tape<float>::Var,
                                      MlpParams<float>*);
template Tape<double>::Var mlp_forward(const MlpParams<double>&, Tape<double>&,
                                       Tape<double>::Var, MlpParams<double>*);
template Tape<float>::Var apply_activation(Tape<float>&, Tape<float>::Var, Activation);
template Tape<double>::Var apply_activation(Tape<double>&, Tape<double>::Var, Activation);

}  // namespace habi::nn
