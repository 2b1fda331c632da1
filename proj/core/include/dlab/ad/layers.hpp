#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dlab/ad/ops.hpp"
#include "dlab/ad/params.hpp"

namespace dlab::ad {

using Rng = std::mt19937_64;

enum class Activation { none, relu, tanh, softmax };

// Layer specs are plain descriptions; weights live in a ParameterStore under
// `<name>.w` / `<name>.b`.
struct Conv2d {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  Activation act = Activation::none;
};

struct ConvTranspose2d {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  Activation act = Activation::none;
};

struct Dense {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::none;
};

// Reshapes [N, ...] to [N, per_sample...].
struct Reshape {
  Shape per_sample;
};

using Layer = std::variant<Conv2d, ConvTranspose2d, Dense, Reshape>;
using Sequential = std::vector<Layer>;

// Uniform He-style init, bound sqrt(6 / fan_in); biases start at zero.
template <typename T>
void init_layer(ParameterStore<T>& store, const Layer& layer, Rng& rng);

template <typename T>
Tensor<T> forward_layer(const ParameterStore<T>& store, const Layer& layer, const Tensor<T>& x);

template <typename T>
void init_sequential(ParameterStore<T>& store, const Sequential& layers, Rng& rng) {
  for (const auto& l : layers) init_layer(store, l, rng);
}

template <typename T>
Tensor<T> forward_sequential(const ParameterStore<T>& store, const Sequential& layers,
                             Tensor<T> x) {
  for (const auto& l : layers) x = forward_layer(store, l, x);
  return x;
}

template <typename T>
Tensor<T> apply_activation(const Tensor<T>& x, Activation act);

// Single LSTM step with gates ordered (input, forget, cell, output).
// Parameters: `<name>.wx` [4H, in], `<name>.wh` [4H, H], `<name>.b` [4H].
struct LstmCell {
  std::string name;
  std::size_t in = 0;
  std::size_t hidden = 0;
};

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

template <typename T>
LstmState<T> lstm_zero_state(const LstmCell& cell, std::size_t batch);

template <typename T>
void init_lstm(ParameterStore<T>& store, const LstmCell& cell, Rng& rng);

template <typename T>
LstmState<T> lstm_step(const ParameterStore<T>& store, const LstmCell& cell, const Tensor<T>& x,
                       const LstmState<T>& state);

}  // namespace dlab::ad
