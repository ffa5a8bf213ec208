#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "habi/nn/tape.hpp"
#include "habi/nn/types.hpp"

namespace habi::nn {

enum class Activation : std::uint32_t {
  kIdentity = 0,
  kRelu = 1,
  kTanh = 2,
};

std::string to_string(Activation act);

template <class Real>
struct Layer {
  Matrix<Real> weight;  // out x in
  Vector<Real> bias;    // out
};

/// Dense feed-forward network. Hidden layers use `hidden_activation`, the last
/// layer uses `output_activation`. Also used as the gradient/moment container
/// for the same network, since those share its shape.
template <class Real>
struct MlpParams {
  std::vector<Layer<Real>> layers;
  Activation hidden_activation = Activation::kRelu;
  Activation output_activation = Activation::kIdentity;

  Index input_dim() const;
  Index output_dim() const;
  std::size_t parameter_count() const;

  /// Throws ConfigError if consecutive layers do not chain or an entry is not finite.
  void validate() const;
  bool all_finite() const;

  /// Same shape and activations, all entries zero.
  MlpParams zeros_like() const;

  template <class To>
  MlpParams<To> cast() const {
    MlpParams<To> out;
    out.hidden_activation = hidden_activation;
    out.output_activation = output_activation;
    out.layers.reserve(layers.size());
    for (const auto& l : layers) {
      out.layers.push_back({l.weight.template cast<To>(), l.bias.template cast<To>()});
    }
    return out;
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.hidden_activation != b.hidden_activation ||
        a.output_activation != b.output_activation || a.layers.size() != b.layers.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      const auto& la = a.layers[i];
      const auto& lb = b.layers[i];
      if (la.weight.rows() != lb.weight.rows() || la.weight.cols() != lb.weight.cols() ||
          la.bias.size() != lb.bias.size() || la.weight != lb.weight || la.bias != lb.bias) {
        return false;
      }
    }
    return true;
  }
};

/// Layer sizes [in, h1, ..., out]. Weights uniform in +-1/sqrt(fan_in), biases zero.
template <class Real>
MlpParams<Real> make_mlp(std::span<const int> sizes, std::mt19937_64& rng,
                         Activation output_activation = Activation::kIdentity,
                         Activation hidden_activation = Activation::kRelu);

/// Same shape as make_mlp, every entry zero.
template <class Real>
MlpParams<Real> make_zero_mlp(std::span<const int> sizes,
                              Activation output_activation = Activation::kIdentity,
                              Activation hidden_activation = Activation::kRelu);

/// Tape-free evaluation. One column per sample.
template <class Real>
Matrix<Real> mlp_forward(const MlpParams<Real>& net, const Matrix<Real>& inputs);

template <class Real>
Vector<Real> mlp_forward(const MlpParams<Real>& net, const Vector<Real>& input);

/// Taped evaluation. Every layer's weight and bias is registered as a
/// parameter whose gradient is accumulated into the matching entry of
/// `grads` (pass nullptr to treat the network as constant).
template <class Real>
typename Tape<Real>::Var mlp_forward(const MlpParams<Real>& net, Tape<Real>& tape,
                                     typename Tape<Real>::Var inputs,
                                     std::type_identity_t<MlpParams<Real>>* grads = nullptr);

/// Apply `act` on the tape.
template <class Real>
typename Tape<Real>::Var apply_activation(Tape<Real>& tape, typename Tape<Real>::Var x,
                                          Activation act);

}  // namespace habi::nn
