#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dlab/ad/layers.hpp"
#include "dlab/ad/params.hpp"
#include "dlab/env/gridworld.hpp"

// Parameter naming. A branch with prefix P owns
//   P enc.conv1 | P enc.conv2 | P enc.fc1 | P enc.fc2
//   P dec.fc1   | P dec.fc2   | P dec.deconv1 | P dec.deconv2
// and policy heads P policy.k0 .. P policy.k{K-1}, each with `.w` and `.b`.
// Single-branch models use the empty prefix; the dual model uses `ctrl.` and
// `unc.`, so a single-branch checkpoint maps onto the controllable branch by
// prefixing `ctrl.`.
namespace dlab::models {

using ad::ParameterStore;
using ad::Tensor;

inline constexpr std::size_t kActions = env::kNumActions;
inline constexpr std::size_t kHidden = 32;
inline constexpr std::size_t kChannels = 16;

enum class ModelKind { ae, thomas, dual_pretrained, dual_scratch };

std::string_view kind_name(ModelKind k);
// Throws dlab::ConfigError on an unknown name.
ModelKind parse_kind(std::string_view name);
bool is_dual(ModelKind k);

// Uncontrollable latent width per scenario: 20 when there are several
// obstacles, 4 otherwise.
std::size_t uncontrollable_width(env::Scenario s);

// Image encoder [N,576] -> [N,latent] (tanh) and decoder [N,latent] -> [N,576]
// (linear output).
struct Branch {
  std::string prefix;
  std::size_t latent = kActions;
  ad::Sequential encoder;
  ad::Sequential decoder;

  static Branch make(std::string prefix, std::size_t latent);

  template <typename T>
  void init(ParameterStore<T>& store, ad::Rng& rng) const;
  template <typename T>
  Tensor<T> encode(const ParameterStore<T>& store, const Tensor<T>& images) const;
  template <typename T>
  Tensor<T> decode(const ParameterStore<T>& store, const Tensor<T>& latents) const;
};

// One dense layer per head, latent -> K action logits.
struct PolicyHeads {
  std::vector<ad::Dense> heads;

  static PolicyHeads make(const std::string& prefix, std::size_t latent, std::size_t actions);

  std::size_t size() const { return heads.size(); }
  template <typename T>
  void init(ParameterStore<T>& store, ad::Rng& rng) const;
  template <typename T>
  Tensor<T> logits(const ParameterStore<T>& store, const Tensor<T>& latents, std::size_t k) const;
  // Softmax over actions, [N,K].
  template <typename T>
  Tensor<T> probs(const ParameterStore<T>& store, const Tensor<T>& latents, std::size_t k) const;
};

template <typename T>
struct Autoencoder {
  ParameterStore<T> params;
  Branch net;
};

template <typename T>
struct ThomasModel {
  ParameterStore<T> params;
  Branch net;
  PolicyHeads policy;
};

template <typename T>
struct DualModel {
  ParameterStore<T> params;
  Branch ctrl;
  PolicyHeads policy;
  Branch unc;

  // g_c(f_c(x)) + g_u(f_u(x))
  Tensor<T> reconstruct(const Tensor<T>& images) const;
};

// Init order is encoder, decoder, then policy heads, all from one stream, so
// an autoencoder and a Thomas model built from the same seed share their
// encoder and decoder weights exactly.
template <typename T>
Autoencoder<T> build_autoencoder(std::size_t latent, std::uint64_t seed);
template <typename T>
ThomasModel<T> build_thomas(std::size_t k, std::uint64_t seed);
template <typename T>
DualModel<T> build_dual(std::size_t k, std::size_t unc_latent, std::uint64_t seed);

// Copies a single-branch checkpoint (autoencoder or Thomas names) into the
// controllable branch. Throws dlab::FormatError on a missing name or shape
// mismatch; the uncontrollable branch is left untouched.
void init_dual_from_pretrained(DualModel<float>& dual, const ParameterStore<float>& pretrained);

// Recurrent Q-network over frozen latent features. Dual route: LSTM over the
// controllable latent and a dense layer over the uncontrollable latent,
// concatenated into the Q head. Single route: LSTM over one latent.
struct DrqnSpec {
  bool dual_route = true;
  std::size_t ctrl_in = kActions;
  std::size_t unc_in = kActions;
  std::size_t lstm_units = 2;
  std::size_t unc_units = 2;
  std::size_t actions = kActions;
};

template <typename T>
struct Drqn {
  DrqnSpec spec;
  ParameterStore<T> params;
  ad::LstmCell lstm;
  ad::Dense unc_fc;
  ad::Dense q;

  ad::LstmState<T> zero_state() const { return ad::lstm_zero_state<T>(lstm, 1); }
  // One time step; `zu` is ignored for the single route. Returns [1,K].
  Tensor<T> step(const Tensor<T>& zc, const Tensor<T>& zu, ad::LstmState<T>& state) const;
  // Rows of `zc` / `zu` are consecutive time steps from a zero state; returns [T,K].
  Tensor<T> forward_sequence(const Tensor<T>& zc, const Tensor<T>& zu) const;
};

template <typename T>
Drqn<T> build_drqn(const DrqnSpec& spec, std::uint64_t seed);

}  // namespace dlab::models
