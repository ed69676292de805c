// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// GeneGAN networks and training diagrams.
//
// An Encoder maps an image to a (background, object) code pair; a Decoder
// inverts it. Two discriminators separate the with-object and the
// without-object image domains. Training recombines the codes of two parent
// images into four children (two reconstructions, two crossbreeds); the
// stacked variant swaps the crossbreeds a second time and reconstructs the
// grandchildren instead.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "genegan/rng.hpp"
#include "genegan/tape.hpp"
#include "genegan/tensor.hpp"

namespace genegan {

struct ModelConfig {
  std::int64_t image_size = 32;  // divisible by 8
  std::int64_t in_channels = 3;
  std::int64_t enc_w1 = 32, enc_w2 = 64;
  std::int64_t c_b = 24, c_o = 8;  // background/object channels at the bottleneck
  std::int64_t dec_w1 = 64, dec_w2 = 32;
  std::int64_t disc_w1 = 32, disc_w2 = 64, disc_w3 = 128;

  static constexpr std::int64_t kKernel = 4, kStride = 2, kPad = 1;
  static constexpr double kLeakyAlpha = 0.2;
  static constexpr double kBnMomentum = 0.9;
  static constexpr double kBnEps = 1e-5;

  std::int64_t bottleneck_hw() const { return image_size / 8; }
  std::int64_t code_channels() const { return c_b + c_o; }

  void validate() const {
    if (image_size < 8 || image_size % 8 != 0)
      throw std::invalid_argument("image_size must be a positive multiple of 8, got " + std::to_string(image_size));
    if (c_b < 1 || c_o < 1) throw std::invalid_argument("c_b and c_o must be positive");
  }

  // small 8x8 model (<5k parameters) for gradient-check harnesses
  static ModelConfig tiny8() {
    ModelConfig c;
    c.image_size = 8;
    c.enc_w1 = 4;
    c.enc_w2 = 6;
    c.c_b = 3;
    c.c_o = 2;
    c.dec_w1 = 6;
    c.dec_w2 = 4;
    c.disc_w1 = 4;
    c.disc_w2 = 6;
    c.disc_w3 = 8;
    return c;
  }
};

// Named trainable tensors plus non-trainable state (batch-norm running
// statistics). Names are unique and stable across save/load; map order is
// the canonical serialization order.
template <typename T>
struct ParamStore {
  std::map<std::string, Tensor<T>> params;
  std::map<std::string, Tensor<T>> state;

  Tensor<T>& param(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }
  Tensor<T>& state_tensor(const std::string& name) {
    auto it = state.find(name);
    if (it == state.end()) throw std::runtime_error("unknown state tensor: " + name);
    return it->second;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [k, v] : params) out.params.emplace(k, v.template cast<U>());
    for (const auto& [k, v] : state) out.state.emplace(k, v.template cast<U>());
    return out;
  }
};

enum class InitKind { kConvFanIn, kZero, kOne };

// Single source of truth for the parameter table. `fn(name, shape, kind)` is
// invoked in the canonical creation order used for seeded initialization.
inline void for_each_param(const ModelConfig& c, const std::function<void(const std::string&, const Shape&, InitKind)>& fn) {
  const std::int64_t k = ModelConfig::kKernel;
  // encoder: three stride-2 convs, batch norm + leaky relu on all layers
  fn("encoder.conv1.w", {c.enc_w1, c.in_channels, k, k}, InitKind::kConvFanIn);
  fn("encoder.bn1.gamma", {c.enc_w1}, InitKind::kOne);
  fn("encoder.bn1.beta", {c.enc_w1}, InitKind::kZero);
  fn("encoder.conv2.w", {c.enc_w2, c.enc_w1, k, k}, InitKind::kConvFanIn);
  fn("encoder.bn2.gamma", {c.enc_w2}, InitKind::kOne);
  fn("encoder.bn2.beta", {c.enc_w2}, InitKind::kZero);
  fn("encoder.conv3.w", {c.code_channels(), c.enc_w2, k, k}, InitKind::kConvFanIn);
  fn("encoder.bn3.gamma", {c.code_channels()}, InitKind::kOne);
  fn("encoder.bn3.beta", {c.code_channels()}, InitKind::kZero);
  // decoder: three fractional-stride convs, batch norm + leaky relu on the
  // hidden layers, sigmoid output. Transposed-conv weights are laid out
  // {in, out, kh, kw}.
  fn("decoder.conv1.w", {c.code_channels(), c.dec_w1, k, k}, InitKind::kConvFanIn);
  fn("decoder.bn1.gamma", {c.dec_w1}, InitKind::kOne);
  fn("decoder.bn1.beta", {c.dec_w1}, InitKind::kZero);
  fn("decoder.conv2.w", {c.dec_w1, c.dec_w2, k, k}, InitKind::kConvFanIn);
  fn("decoder.bn2.gamma", {c.dec_w2}, InitKind::kOne);
  fn("decoder.bn2.beta", {c.dec_w2}, InitKind::kZero);
  fn("decoder.conv3.w", {c.dec_w2, c.in_channels, k, k}, InitKind::kConvFanIn);
  fn("decoder.conv3.b", {c.in_channels}, InitKind::kZero);
  // discriminators: leaky relu everywhere, batch norm on layers 2-3,
  // global average pool + affine head
  for (const char* d : {"disc_with", "disc_without"}) {
    const std::string p(d);
    fn(p + ".conv1.w", {c.disc_w1, c.in_channels, k, k}, InitKind::kConvFanIn);
    fn(p + ".conv1.b", {c.disc_w1}, InitKind::kZero);
    fn(p + ".conv2.w", {c.disc_w2, c.disc_w1, k, k}, InitKind::kConvFanIn);
    fn(p + ".bn2.gamma", {c.disc_w2}, InitKind::kOne);
    fn(p + ".bn2.beta", {c.disc_w2}, InitKind::kZero);
    fn(p + ".conv3.w", {c.disc_w3, c.disc_w2, k, k}, InitKind::kConvFanIn);
    fn(p + ".bn3.gamma", {c.disc_w3}, InitKind::kOne);
    fn(p + ".bn3.beta", {c.disc_w3}, InitKind::kZero);
    fn(p + ".fc.w", {c.disc_w3, 1}, InitKind::kConvFanIn);
    fn(p + ".fc.b", {1}, InitKind::kZero);
  }
}

inline void for_each_state(const ModelConfig& c, const std::function<void(const std::string&, const Shape&, double)>& fn) {
  auto bn = [&](const std::string& prefix, std::int64_t ch) {
    fn(prefix + ".running_mean", {ch}, 0.0);
    fn(prefix + ".running_var", {ch}, 1.0);
  };
  bn("encoder.bn1", c.enc_w1);
  bn("encoder.bn2", c.enc_w2);
  bn("encoder.bn3", c.code_channels());
  bn("decoder.bn1", c.dec_w1);
  bn("decoder.bn2", c.dec_w2);
  for (const char* d : {"disc_with", "disc_without"}) {
    bn(std::string(d) + ".bn2", c.disc_w2);
    bn(std::string(d) + ".bn3", c.disc_w3);
  }
}

// Conv weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = in_ch * k*k,
// biases and bn.beta zero, bn.gamma one. Draw order is the canonical
// parameter order, so initialization is a pure function of (config, seed).
template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore<T> store;
  SplitMix64 rng(mix_seed(seed, 0x1217));
  for_each_param(cfg, [&](const std::string& name, const Shape& shape, InitKind kind) {
    Tensor<T> t(shape);
    if (kind == InitKind::kConvFanIn) {
      std::int64_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      if (shape.size() == 2) fan_in = shape[0];  // affine: {F, G}
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    } else if (kind == InitKind::kOne) {
      std::fill(t.data.begin(), t.data.end(), T(1));
    }
    store.params.emplace(name, std::move(t));
  });
  for_each_state(cfg, [&](const std::string& name, const Shape& shape, double v) {
    store.state.emplace(name, Tensor<T>::full(shape, static_cast<T>(v)));
  });
  return store;
}

// Which parameter group receives gradients when a diagram is built.
enum class GradScope { kNone, kGenerator, kDiscriminators, kAll };

inline bool is_generator_param(const std::string& name) {
  return name.rfind("encoder.", 0) == 0 || name.rfind("decoder.", 0) == 0;
}
inline bool is_discriminator_param(const std::string& name) {
  return name.rfind("disc_with.", 0) == 0 || name.rfind("disc_without.", 0) == 0;
}

// Tape leaves for every trainable parameter. Each parameter appears exactly
// once regardless of how many encoder/decoder instances the diagram wires up,
// which is what makes the instances share weights.
template <typename T>
struct BoundParams {
  const ModelConfig* cfg = nullptr;
  ParamStore<T>* store = nullptr;
  std::map<std::string, typename Tape<T>::Var> vars;

  typename Tape<T>::Var operator[](const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw std::runtime_error("parameter not bound: " + name);
    return it->second;
  }
};

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, ParamStore<T>& store, const ModelConfig& cfg, GradScope scope) {
  BoundParams<T> bp;
  bp.cfg = &cfg;
  bp.store = &store;
  for (const auto& [name, tensor] : store.params) {
    bool rg = false;
    switch (scope) {
      case GradScope::kNone: rg = false; break;
      case GradScope::kAll: rg = true; break;
      case GradScope::kGenerator: rg = is_generator_param(name); break;
      case GradScope::kDiscriminators: rg = is_discriminator_param(name); break;
    }
    bp.vars.emplace(name, tape.leaf(tensor, rg));
  }
  return bp;
}

template <typename T>
struct LatentVars {
  typename Tape<T>::Var background;  // "A"/"B" part
  typename Tape<T>::Var object;      // "u"/"eps" part
};

template <typename T>
struct DiscOut {
  typename Tape<T>::Var score;  // sigmoid(logit), in (0,1)
  typename Tape<T>::Var logit;  // used by the fused stable losses
};

namespace detail_model {

template <typename T>
typename Tape<T>::Var bn_layer(Tape<T>& tape, const BoundParams<T>& bp, typename Tape<T>::Var x,
                               const std::string& prefix, bool training, bool update_running) {
  return tape.batch_norm(x, bp[prefix + ".gamma"], bp[prefix + ".beta"],
                         &bp.store->state_tensor(prefix + ".running_mean"),
                         &bp.store->state_tensor(prefix + ".running_var"), training, update_running,
                         static_cast<T>(ModelConfig::kBnMomentum), static_cast<T>(ModelConfig::kBnEps));
}

}  // namespace detail_model

// Image -> (background, object) codes at 1/8 spatial resolution.
template <typename T>
LatentVars<T> encode(Tape<T>& tape, const BoundParams<T>& bp, typename Tape<T>::Var x, bool training,
                     bool update_running) {
  const ModelConfig& c = *bp.cfg;
  const Tensor<T>& vx = tape.value(x);
  if (vx.rank() != 4 || vx.shape[1] != c.in_channels)
    throw std::invalid_argument("encode: expected N x " + std::to_string(c.in_channels) + " x H x W, got " +
                                shape_str(vx.shape));
  if (vx.shape[2] % 8 != 0 || vx.shape[3] % 8 != 0 || vx.shape[2] < 8 || vx.shape[3] < 8)
    throw std::invalid_argument("encode: H and W must be positive multiples of 8, got " + shape_str(vx.shape));
  const T alpha = static_cast<T>(ModelConfig::kLeakyAlpha);
  using Var = typename Tape<T>::Var;
  Var h = x;
  const char* convs[3] = {"encoder.conv1.w", "encoder.conv2.w", "encoder.conv3.w"};
  const char* bns[3] = {"encoder.bn1", "encoder.bn2", "encoder.bn3"};
  for (int i = 0; i < 3; ++i) {
    h = tape.conv2d(h, bp[convs[i]], Var{}, ModelConfig::kStride, ModelConfig::kPad);
    h = detail_model::bn_layer(tape, bp, h, bns[i], training, update_running);
    h = tape.leaky_relu(h, alpha);
  }
  auto [background, object] = tape.split_channels(h, c.c_b);
  return {background, object};
}

// (background, object) codes -> image in (0,1).
template <typename T>
typename Tape<T>::Var decode(Tape<T>& tape, const BoundParams<T>& bp, typename Tape<T>::Var background,
                             typename Tape<T>::Var object, bool training, bool update_running) {
  const ModelConfig& c = *bp.cfg;
  const Tensor<T>& vb = tape.value(background);
  const Tensor<T>& vo = tape.value(object);
  if (vb.rank() != 4 || vo.rank() != 4 || vb.shape[1] != c.c_b || vo.shape[1] != c.c_o ||
      vb.shape[0] != vo.shape[0] || vb.shape[2] != vo.shape[2] || vb.shape[3] != vo.shape[3])
    throw std::invalid_argument("decode: code shapes " + shape_str(vb.shape) + " / " + shape_str(vo.shape) +
                                " do not match c_b=" + std::to_string(c.c_b) + " c_o=" + std::to_string(c.c_o));
  const T alpha = static_cast<T>(ModelConfig::kLeakyAlpha);
  using Var = typename Tape<T>::Var;
  Var h = tape.concat_channels(background, object);
  h = tape.conv2d_transpose(h, bp["decoder.conv1.w"], Var{}, ModelConfig::kStride, ModelConfig::kPad);
  h = detail_model::bn_layer(tape, bp, h, "decoder.bn1", training, update_running);
  h = tape.leaky_relu(h, alpha);
  h = tape.conv2d_transpose(h, bp["decoder.conv2.w"], Var{}, ModelConfig::kStride, ModelConfig::kPad);
  h = detail_model::bn_layer(tape, bp, h, "decoder.bn2", training, update_running);
  h = tape.leaky_relu(h, alpha);
  h = tape.conv2d_transpose(h, bp["decoder.conv3.w"], bp["decoder.conv3.b"], ModelConfig::kStride,
                            ModelConfig::kPad);
  return tape.sigmoid(h);
}

enum class DiscKind { kWith, kWithout };

inline const char* disc_prefix(DiscKind k) { return k == DiscKind::kWith ? "disc_with" : "disc_without"; }

// Per-sample score in (0,1): three stride-2 convs, global average pool,
// affine, sigmoid. The pre-sigmoid logit is also returned so losses can use
// the numerically stable fused form.
template <typename T>
DiscOut<T> discriminate(Tape<T>& tape, const BoundParams<T>& bp, DiscKind which, typename Tape<T>::Var x,
                        bool training, bool update_running) {
  const std::string p = disc_prefix(which);
  const T alpha = static_cast<T>(ModelConfig::kLeakyAlpha);
  using Var = typename Tape<T>::Var;
  Var h = tape.conv2d(x, bp[p + ".conv1.w"], bp[p + ".conv1.b"], ModelConfig::kStride, ModelConfig::kPad);
  h = tape.leaky_relu(h, alpha);
  h = tape.conv2d(h, bp[p + ".conv2.w"], Var{}, ModelConfig::kStride, ModelConfig::kPad);
  h = detail_model::bn_layer(tape, bp, h, p + ".bn2", training, update_running);
  h = tape.leaky_relu(h, alpha);
  h = tape.conv2d(h, bp[p + ".conv3.w"], Var{}, ModelConfig::kStride, ModelConfig::kPad);
  h = detail_model::bn_layer(tape, bp, h, p + ".bn3", training, update_running);
  h = tape.leaky_relu(h, alpha);
  Var pooled = tape.global_avg_pool(h);
  Var logit = tape.linear(pooled, bp[p + ".fc.w"], bp[p + ".fc.b"]);
  return {tape.sigmoid(logit), logit};
}

template <typename T>
struct FourChildren {
  typename Tape<T>::Var x_Au_rec;  // decode(A, u)
  typename Tape<T>::Var x_B0_rec;  // decode(B, 0)
  typename Tape<T>::Var x_A0;      // crossbreed decode(A, 0)
  typename Tape<T>::Var x_Bu;      // crossbreed decode(B, u)
  LatentVars<T> code_Au;           // (A, u)
  LatentVars<T> code_B0;           // (B, eps)
};

// The four-child diagram. The two parent batches are encoded as one
// concatenated batch and all four children are decoded as one concatenated
// batch so batch-norm statistics are shared across domains; this keeps the
// train/eval behavior of the nulling constraint consistent. Both zero-object
// children receive a literal all-zeros code; the encoded eps is only
// penalized, never decoded.
template <typename T>
FourChildren<T> four_child_forward(Tape<T>& tape, const BoundParams<T>& bp, typename Tape<T>::Var x_Au,
                                   typename Tape<T>::Var x_B0, bool training, bool update_running = true) {
  const Tensor<T>& va = tape.value(x_Au);
  const Tensor<T>& vb = tape.value(x_B0);
  check_same_shape(va, vb, "four_child_forward");
  const std::int64_t n = va.shape[0];

  auto both = tape.concat_batch(x_Au, x_B0);
  LatentVars<T> codes = encode(tape, bp, both, training, update_running);
  auto [bg_A, bg_B] = tape.split_batch(codes.background, n);
  auto [obj_u, obj_eps] = tape.split_batch(codes.object, n);

  auto zero = tape.constant(Tensor<T>(tape.value(obj_u).shape));
  // decode order: [Au_rec; B0_rec; A0; Bu]
  auto bg_cat = tape.concat_batch(tape.concat_batch(bg_A, bg_B), tape.concat_batch(bg_A, bg_B));
  auto obj_cat = tape.concat_batch(tape.concat_batch(obj_u, zero), tape.concat_batch(zero, obj_u));
  auto imgs = decode(tape, bp, bg_cat, obj_cat, training, update_running);
  auto [rec_pair, cross_pair] = tape.split_batch(imgs, 2 * n);
  auto [x_Au_rec, x_B0_rec] = tape.split_batch(rec_pair, n);
  auto [x_A0, x_Bu] = tape.split_batch(cross_pair, n);

  return {x_Au_rec, x_B0_rec, x_A0, x_Bu, {bg_A, obj_u}, {bg_B, obj_eps}};
}

struct LossWeights {
  double rec = 10.0;
  double gan = 1.0;
  double null = 1.0;
  double par = 1.0;
};

template <typename T>
struct GeneratorLoss {
  typename Tape<T>::Var total;
  // unweighted terms, in metric-log order
  typename Tape<T>::Var rec_Au, rec_B0, gan_0, gan_ne0, null_term, par;
};

// Eq-style generator objective: weighted sum of reconstruction, GAN,
// nulling and parallelogram terms. GAN terms use the non-saturating
// -log D(fake) form through the fused stable path. `extra_null`, when valid,
// is an additional object code included in the nulling term (used by the
// stacked diagram for the re-encoded crossbreed).
template <typename T>
GeneratorLoss<T> generator_loss(Tape<T>& tape, const BoundParams<T>& bp, const FourChildren<T>& ch,
                                typename Tape<T>::Var x_Au, typename Tape<T>::Var x_B0, const LossWeights& w,
                                bool training, typename Tape<T>::Var extra_null = {}) {
  using Var = typename Tape<T>::Var;
  Var rec_Au = tape.l1(tape.sub(x_Au, ch.x_Au_rec));
  Var rec_B0 = tape.l1(tape.sub(x_B0, ch.x_B0_rec));

  DiscOut<T> d0 = discriminate(tape, bp, DiscKind::kWithout, ch.x_A0, training, training);
  DiscOut<T> d1 = discriminate(tape, bp, DiscKind::kWith, ch.x_Bu, training, training);
  Var gan_0 = tape.mean(tape.neg_log_sigmoid(d0.logit));
  Var gan_ne0 = tape.mean(tape.neg_log_sigmoid(d1.logit));

  Var null_term = tape.l1(ch.code_B0.object);
  if (extra_null.valid()) null_term = tape.add(null_term, tape.l1(extra_null));

  Var par = tape.l1(tape.sub(tape.add(x_Au, x_B0), tape.add(ch.x_A0, ch.x_Bu)));

  Var total = tape.add(tape.scale(tape.add(rec_Au, rec_B0), static_cast<T>(w.rec)),
                       tape.scale(tape.add(gan_0, gan_ne0), static_cast<T>(w.gan)));
  total = tape.add(total, tape.scale(null_term, static_cast<T>(w.null)));
  total = tape.add(total, tape.scale(par, static_cast<T>(w.par)));
  return {total, rec_Au, rec_B0, gan_0, gan_ne0, null_term, par};
}

template <typename T>
struct DiscriminatorLoss {
  typename Tape<T>::Var total;
  typename Tape<T>::Var with_term;     // real x_Au vs fake x_Bu
  typename Tape<T>::Var without_term;  // real x_B0 vs fake x_A0
};

// Standard per-domain GAN discriminator losses; each discriminator scores its
// real and fake batch in one concatenated pass.
template <typename T>
DiscriminatorLoss<T> discriminator_loss(Tape<T>& tape, const BoundParams<T>& bp, const FourChildren<T>& ch,
                                        typename Tape<T>::Var x_Au, typename Tape<T>::Var x_B0, bool training) {
  const std::int64_t n = tape.value(x_Au).shape[0];
  auto term = [&](DiscKind kind, typename Tape<T>::Var real, typename Tape<T>::Var fake) {
    auto batch = tape.concat_batch(real, fake);
    DiscOut<T> d = discriminate(tape, bp, kind, batch, training, training);
    auto [l_real, l_fake] = tape.split_batch(d.logit, n);
    return tape.add(tape.mean(tape.neg_log_sigmoid(l_real)), tape.mean(tape.neg_log_sigmoid(tape.neg(l_fake))));
  };
  auto with_term = term(DiscKind::kWith, x_Au, ch.x_Bu);
  auto without_term = term(DiscKind::kWithout, x_B0, ch.x_A0);
  return {tape.add(with_term, without_term), with_term, without_term};
}

template <typename T>
struct StackedForward {
  FourChildren<T> children;             // x_*_rec hold the grandchildren
  typename Tape<T>::Var eps_prime;      // object code of the re-encoded A0 crossbreed
  typename Tape<T>::Var u_prime;        // object code of the re-encoded Bu crossbreed
};

// Double-swap diagram: only the crossbreeds are created as children; they are
// re-encoded and swapped again, and the resulting grandchildren must
// reconstruct the grandparents.
template <typename T>
StackedForward<T> stacked_forward(Tape<T>& tape, const BoundParams<T>& bp, typename Tape<T>::Var x_Au,
                                  typename Tape<T>::Var x_B0, bool training, bool update_running = true) {
  const Tensor<T>& va = tape.value(x_Au);
  const Tensor<T>& vb = tape.value(x_B0);
  check_same_shape(va, vb, "stacked_forward");
  const std::int64_t n = va.shape[0];

  auto both = tape.concat_batch(x_Au, x_B0);
  LatentVars<T> codes = encode(tape, bp, both, training, update_running);
  auto [bg_A, bg_B] = tape.split_batch(codes.background, n);
  auto [obj_u, obj_eps] = tape.split_batch(codes.object, n);
  auto zero = tape.constant(Tensor<T>(tape.value(obj_u).shape));

  // first swap: [A0; Bu]
  auto cross = decode(tape, bp, tape.concat_batch(bg_A, bg_B), tape.concat_batch(zero, obj_u), training,
                      update_running);
  auto [x_A0, x_Bu] = tape.split_batch(cross, n);

  // re-encode the crossbreeds and swap again: [Au''; B0'']
  LatentVars<T> codes2 = encode(tape, bp, cross, training, update_running);
  auto [bg_A2, bg_B2] = tape.split_batch(codes2.background, n);
  auto [eps_prime, u_prime] = tape.split_batch(codes2.object, n);
  auto grand = decode(tape, bp, tape.concat_batch(bg_A2, bg_B2), tape.concat_batch(u_prime, zero), training,
                      update_running);
  auto [x_Au_gc, x_B0_gc] = tape.split_batch(grand, n);

  FourChildren<T> ch{x_Au_gc, x_B0_gc, x_A0, x_Bu, {bg_A, obj_u}, {bg_B, obj_eps}};
  return {ch, eps_prime, u_prime};
}

// ---- object vector arithmetic ----

// Flattened copy of a latent object part; supports the linear operations of
// the attribute subspace (scale, invert, interpolate).
template <typename T>
struct ObjectVector {
  std::vector<T> values;
  std::string source_id;

  static ObjectVector from_code(const Tensor<T>& object_code, std::string source) {
    return {object_code.data, std::move(source)};
  }

  Tensor<T> to_code(const ModelConfig& c) const {
    const std::int64_t hw = c.bottleneck_hw();
    if (static_cast<std::int64_t>(values.size()) != c.c_o * hw * hw)
      throw std::invalid_argument("object vector length " + std::to_string(values.size()) +
                                  " does not match config code size");
    return Tensor<T>({1, c.c_o, hw, hw}, values);
  }
};

template <typename T>
ObjectVector<T> scale_vector(const ObjectVector<T>& v, T t) {
  ObjectVector<T> out{v.values, v.source_id + "*" + std::to_string(static_cast<double>(t))};
  for (auto& x : out.values) x *= t;
  return out;
}

template <typename T>
ObjectVector<T> invert_vector(const ObjectVector<T>& v) {
  return scale_vector(v, T(-1));
}

template <typename T>
ObjectVector<T> interpolate_vectors(const ObjectVector<T>& a, const ObjectVector<T>& b, T t) {
  if (a.values.size() != b.values.size())
    throw std::invalid_argument("interpolate: length mismatch " + std::to_string(a.values.size()) + " vs " +
                                std::to_string(b.values.size()));
  ObjectVector<T> out{a.values, a.source_id + "~" + b.source_id};
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = (T(1) - t) * a.values[i] + t * b.values[i];
  return out;
}

// ---- tape-free inference helpers (eval mode, running statistics) ----

template <typename T>
struct Codes {
  Tensor<T> background;
  Tensor<T> object;
};

template <typename T>
Codes<T> encode_eval(ParamStore<T>& store, const ModelConfig& cfg, const Tensor<T>& images) {
  Tape<T> tape;
  auto bp = bind_params(tape, store, cfg, GradScope::kNone);
  auto code = encode(tape, bp, tape.constant(images), false, false);
  return {tape.value(code.background), tape.value(code.object)};
}

template <typename T>
Tensor<T> decode_eval(ParamStore<T>& store, const ModelConfig& cfg, const Tensor<T>& background,
                      const Tensor<T>& object) {
  Tape<T> tape;
  auto bp = bind_params(tape, store, cfg, GradScope::kNone);
  auto img = decode(tape, bp, tape.constant(background), tape.constant(object), false, false);
  return tape.value(img);
}

}  // namespace genegan
