#include "dlab/ad/layers.hpp"

#include <cmath>

namespace dlab::ad {

namespace {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

double he_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

template <typename T>
struct Initializer {
  ParameterStore<T>& store;
  Rng& rng;

  void operator()(const Conv2d& l) const {
    const std::size_t fan_in = l.in_channels * l.kernel * l.kernel;
    store.add(l.name + ".w", uniform_tensor<T>({l.out_channels, l.in_channels, l.kernel, l.kernel},
                                               he_bound(fan_in), rng));
    store.add(l.name + ".b", Tensor<T>(Shape{l.out_channels}));
  }
  void operator()(const ConvTranspose2d& l) const {
    const std::size_t fan_in = l.in_channels * l.kernel * l.kernel;
    store.add(l.name + ".w", uniform_tensor<T>({l.in_channels, l.out_channels, l.kernel, l.kernel},
                                               he_bound(fan_in), rng));
    store.add(l.name + ".b", Tensor<T>(Shape{l.out_channels}));
  }
  void operator()(const Dense& l) const {
    store.add(l.name + ".w", uniform_tensor<T>({l.out, l.in}, he_bound(l.in), rng));
    store.add(l.name + ".b", Tensor<T>(Shape{l.out}));
  }
  void operator()(const Reshape&) const {}
};

template <typename T>
struct Forward {
  const ParameterStore<T>& store;
  const Tensor<T>& x;

  Tensor<T> operator()(const Conv2d& l) const {
    return apply_activation(conv2d(x, store.get(l.name + ".w"), store.get(l.name + ".b"), l.stride),
                            l.act);
  }
  Tensor<T> operator()(const ConvTranspose2d& l) const {
    return apply_activation(
        conv_transpose2d(x, store.get(l.name + ".w"), store.get(l.name + ".b"), l.stride), l.act);
  }
  Tensor<T> operator()(const Dense& l) const {
    return apply_activation(linear(x, store.get(l.name + ".w"), store.get(l.name + ".b")), l.act);
  }
  Tensor<T> operator()(const Reshape& l) const {
    Shape shape{x.dim(0)};
    shape.insert(shape.end(), l.per_sample.begin(), l.per_sample.end());
    return reshape(x, std::move(shape));
  }
};

}  // namespace

template <typename T>
Tensor<T> apply_activation(const Tensor<T>& x, Activation act) {
  switch (act) {
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
    case Activation::softmax: return softmax_rows(x);
    case Activation::none: break;
  }
  return x;
}

template <typename T>
void init_layer(ParameterStore<T>& store, const Layer& layer, Rng& rng) {
  std::visit(Initializer<T>{store, rng}, layer);
}

template <typename T>
Tensor<T> forward_layer(const ParameterStore<T>& store, const Layer& layer, const Tensor<T>& x) {
  return std::visit(Forward<T>{store, x}, layer);
}

template <typename T>
LstmState<T> lstm_zero_state(const LstmCell& cell, std::size_t batch) {
  return {Tensor<T>(Shape{batch, cell.hidden}), Tensor<T>(Shape{batch, cell.hidden})};
}

template <typename T>
void init_lstm(ParameterStore<T>& store, const LstmCell& cell, Rng& rng) {
  const std::size_t g = 4 * cell.hidden;
  store.add(cell.name + ".wx", uniform_tensor<T>({g, cell.in}, he_bound(cell.in), rng));
  store.add(cell.name + ".wh", uniform_tensor<T>({g, cell.hidden}, he_bound(cell.hidden), rng));
  store.add(cell.name + ".b", Tensor<T>(Shape{g}));
}

template <typename T>
LstmState<T> lstm_step(const ParameterStore<T>& store, const LstmCell& cell, const Tensor<T>& x,
                       const LstmState<T>& state) {
  const std::size_t h = cell.hidden;
  auto gates = add(linear(x, store.get(cell.name + ".wx"), store.get(cell.name + ".b")),
                   linear(state.h, store.get(cell.name + ".wh"), Tensor<T>{}));
  auto i = sigmoid(slice_cols(gates, 0, h));
  auto f = sigmoid(slice_cols(gates, h, 2 * h));
  auto g = tanh(slice_cols(gates, 2 * h, 3 * h));
  auto o = sigmoid(slice_cols(gates, 3 * h, 4 * h));
  auto c = add(mul(f, state.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

#define DLAB_INSTANTIATE_LAYERS(T)                                                            \
  template Tensor<T> apply_activation(const Tensor<T>&, Activation);                          \
  template void init_layer(ParameterStore<T>&, const Layer&, Rng&);                           \
  template Tensor<T> forward_layer(const ParameterStore<T>&, const Layer&, const Tensor<T>&); \
  template LstmState<T> lstm_zero_state(const LstmCell&, std::size_t);                        \
  template void init_lstm(ParameterStore<T>&, const LstmCell&, Rng&);                         \
  template LstmState<T> lstm_step(const ParameterStore<T>&, const LstmCell&, const Tensor<T>&, \
                                  const LstmState<T>&);

DLAB_INSTANTIATE_LAYERS(float)
DLAB_INSTANTIATE_LAYERS(double)

#undef DLAB_INSTANTIATE_LAYERS

}  // namespace dlab::ad
