#include "dlab/models/models.hpp"

#include "dlab/ad/checkpoint.hpp"
#include "dlab/errors.hpp"

namespace dlab::models {

using ad::Activation;

std::string_view kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::ae: return "ae";
    case ModelKind::thomas: return "thomas";
    case ModelKind::dual_pretrained: return "dual_pretrained";
    case ModelKind::dual_scratch: return "dual_scratch";
  }
  return "?";
}

ModelKind parse_kind(std::string_view name) {
  for (auto k : {ModelKind::ae, ModelKind::thomas, ModelKind::dual_pretrained,
                 ModelKind::dual_scratch})
    if (kind_name(k) == name) return k;
  if (name == "proposed") return ModelKind::dual_pretrained;
  throw ConfigError("unknown model kind: " + std::string(name));
}

bool is_dual(ModelKind k) { return k == ModelKind::dual_pretrained || k == ModelKind::dual_scratch; }

std::size_t uncontrollable_width(env::Scenario s) {
  return s == env::Scenario::situation2 ? 20 : kActions;
}

Branch Branch::make(std::string prefix, std::size_t latent) {
  // 24 -(4x4 s2)-> 11 -(3x3 s2)-> 5
  constexpr std::size_t flat = kChannels * 5 * 5;
  Branch b;
  b.prefix = prefix;
  b.latent = latent;
  b.encoder = {
      ad::Reshape{{1, env::kGridSize, env::kGridSize}},
      ad::Conv2d{prefix + "enc.conv1", 1, kChannels, 4, 2, Activation::relu},
      ad::Conv2d{prefix + "enc.conv2", kChannels, kChannels, 3, 2, Activation::relu},
      ad::Reshape{{flat}},
      ad::Dense{prefix + "enc.fc1", flat, kHidden, Activation::relu},
      ad::Dense{prefix + "enc.fc2", kHidden, latent, Activation::tanh},
  };
  b.decoder = {
      ad::Dense{prefix + "dec.fc1", latent, kHidden, Activation::relu},
      ad::Dense{prefix + "dec.fc2", kHidden, flat, Activation::relu},
      ad::Reshape{{kChannels, 5, 5}},
      ad::ConvTranspose2d{prefix + "dec.deconv1", kChannels, kChannels, 3, 2, Activation::relu},
      ad::ConvTranspose2d{prefix + "dec.deconv2", kChannels, 1, 4, 2, Activation::none},
      ad::Reshape{{env::kImagePixels}},
  };
  return b;
}

template <typename T>
void Branch::init(ParameterStore<T>& store, ad::Rng& rng) const {
  ad::init_sequential(store, encoder, rng);
  ad::init_sequential(store, decoder, rng);
}

template <typename T>
Tensor<T> Branch::encode(const ParameterStore<T>& store, const Tensor<T>& images) const {
  return ad::forward_sequential(store, encoder, images);
}

template <typename T>
Tensor<T> Branch::decode(const ParameterStore<T>& store, const Tensor<T>& latents) const {
  return ad::forward_sequential(store, decoder, latents);
}

PolicyHeads PolicyHeads::make(const std::string& prefix, std::size_t latent,
                              std::size_t actions) {
  PolicyHeads p;
  for (std::size_t k = 0; k < latent; ++k)
    p.heads.push_back(
        ad::Dense{prefix + "policy.k" + std::to_string(k), latent, actions, Activation::none});
  return p;
}

template <typename T>
void PolicyHeads::init(ParameterStore<T>& store, ad::Rng& rng) const {
  for (const auto& h : heads) ad::init_layer(store, ad::Layer{h}, rng);
}

template <typename T>
Tensor<T> PolicyHeads::logits(const ParameterStore<T>& store, const Tensor<T>& latents,
                              std::size_t k) const {
  return ad::forward_layer(store, ad::Layer{heads.at(k)}, latents);
}

template <typename T>
Tensor<T> PolicyHeads::probs(const ParameterStore<T>& store, const Tensor<T>& latents,
                             std::size_t k) const {
  return ad::softmax_rows(logits(store, latents, k));
}

template <typename T>
Tensor<T> DualModel<T>::reconstruct(const Tensor<T>& images) const {
  return ad::add(ctrl.decode(params, ctrl.encode(params, images)),
                 unc.decode(params, unc.encode(params, images)));
}

template <typename T>
Autoencoder<T> build_autoencoder(std::size_t latent, std::uint64_t seed) {
  Autoencoder<T> m;
  m.net = Branch::make("", latent);
  ad::Rng rng(seed);
  m.net.init(m.params, rng);
  return m;
}

template <typename T>
ThomasModel<T> build_thomas(std::size_t k, std::uint64_t seed) {
  ThomasModel<T> m;
  m.net = Branch::make("", k);
  m.policy = PolicyHeads::make("", k, kActions);
  ad::Rng rng(seed);
  m.net.init(m.params, rng);
  m.policy.init(m.params, rng);
  return m;
}

template <typename T>
DualModel<T> build_dual(std::size_t k, std::size_t unc_latent, std::uint64_t seed) {
  DualModel<T> m;
  m.ctrl = Branch::make("ctrl.", k);
  m.policy = PolicyHeads::make("ctrl.", k, kActions);
  m.unc = Branch::make("unc.", unc_latent);
  ad::Rng rng(seed);
  m.ctrl.init(m.params, rng);
  m.policy.init(m.params, rng);
  m.unc.init(m.params, rng);
  return m;
}

void init_dual_from_pretrained(DualModel<float>& dual, const ParameterStore<float>& pretrained) {
  ad::copy_parameters(pretrained, dual.params, "", "ctrl.");
}

template <typename T>
Tensor<T> Drqn<T>::step(const Tensor<T>& zc, const Tensor<T>& zu, ad::LstmState<T>& state) const {
  state = ad::lstm_step(params, lstm, zc, state);
  Tensor<T> features = state.h;
  if (spec.dual_route) features = ad::concat_cols(features, ad::forward_layer(params, ad::Layer{unc_fc}, zu));
  return ad::forward_layer(params, ad::Layer{q}, features);
}

template <typename T>
Tensor<T> Drqn<T>::forward_sequence(const Tensor<T>& zc, const Tensor<T>& zu) const {
  auto state = zero_state();
  std::vector<Tensor<T>> rows;
  rows.reserve(zc.dim(0));
  for (std::size_t t = 0; t < zc.dim(0); ++t) {
    const Tensor<T> u = spec.dual_route ? ad::slice_rows(zu, t, t + 1) : Tensor<T>{};
    rows.push_back(step(ad::slice_rows(zc, t, t + 1), u, state));
  }
  return ad::concat_rows(rows);
}

template <typename T>
Drqn<T> build_drqn(const DrqnSpec& spec, std::uint64_t seed) {
  Drqn<T> m;
  m.spec = spec;
  m.lstm = ad::LstmCell{"rl.lstm", spec.ctrl_in, spec.lstm_units};
  m.unc_fc = ad::Dense{"rl.unc_fc", spec.unc_in, spec.unc_units, Activation::tanh};
  const std::size_t features = spec.lstm_units + (spec.dual_route ? spec.unc_units : 0);
  m.q = ad::Dense{"rl.q", features, spec.actions, Activation::none};
  ad::Rng rng(seed);
  ad::init_lstm(m.params, m.lstm, rng);
  if (spec.dual_route) ad::init_layer(m.params, ad::Layer{m.unc_fc}, rng);
  ad::init_layer(m.params, ad::Layer{m.q}, rng);
  return m;
}

#define DLAB_INSTANTIATE_MODELS(T)                                                          \
  template void Branch::init<T>(ParameterStore<T>&, ad::Rng&) const;                        \
  template Tensor<T> Branch::encode<T>(const ParameterStore<T>&, const Tensor<T>&) const;   \
  template Tensor<T> Branch::decode<T>(const ParameterStore<T>&, const Tensor<T>&) const;   \
  template void PolicyHeads::init<T>(ParameterStore<T>&, ad::Rng&) const;                   \
  template Tensor<T> PolicyHeads::logits<T>(const ParameterStore<T>&, const Tensor<T>&,     \
                                            std::size_t) const;                             \
  template Tensor<T> PolicyHeads::probs<T>(const ParameterStore<T>&, const Tensor<T>&,      \
                                           std::size_t) const;                              \
  template struct DualModel<T>;                                                             \
  template struct Drqn<T>;                                                                  \
  template Autoencoder<T> build_autoencoder<T>(std::size_t, std::uint64_t);                 \
  template ThomasModel<T> build_thomas<T>(std::size_t, std::uint64_t);                      \
  template DualModel<T> build_dual<T>(std::size_t, std::size_t, std::uint64_t);             \
  template Drqn<T> build_drqn<T>(const DrqnSpec&, std::uint64_t);

DLAB_INSTANTIATE_MODELS(float)
DLAB_INSTANTIATE_MODELS(double)

}  // namespace dlab::models
