// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop: alternating discriminator/generator RMSProp updates over the
// four-child (or stacked double-swap) diagram.
//
// Batch selection is a pure function of (seed, step): each epoch of the
// larger set is an independently seeded Fisher-Yates shuffle consumed in
// order, and the smaller set is resampled with replacement per step. That
// makes checkpoint resume reproduce the uninterrupted run bit-exactly from
// the step counter alone.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "genegan/checkpoint.hpp"
#include "genegan/data.hpp"
#include "genegan/errors.hpp"
#include "genegan/model.hpp"
#include "genegan/optimizer.hpp"
#include "genegan/tape.hpp"

namespace genegan {

enum class TrainMode { kGeneGan, kStacked };

struct TrainConfig {
  TrainMode mode = TrainMode::kGeneGan;
  double lr = 5e-5;
  double momentum = 0.0;  // the paper trains with momentum 0; nonzero is rejected
  double rmsprop_decay = 0.9;
  std::int64_t batch_size = 16;
  std::int64_t steps = 0;
  std::uint64_t seed = 0;
  std::int64_t image_size = 32;
  double w_rec = 10.0, w_gan = 1.0, w_null = 1.0, w_par = 1.0;
  std::int64_t d_steps_per_g_step = 1;
  std::int64_t checkpoint_every = 1000;
  bool parallelogram_enabled = true;

  void validate() const {
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (momentum != 0.0) throw ConfigError("momentum must be 0 (momentum-free RMSProp rule)");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch norm requirement)");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (d_steps_per_g_step < 1) throw ConfigError("d_steps_per_g_step must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (image_size < 8 || image_size % 8 != 0) throw ConfigError("image_size must be a positive multiple of 8");
  }

  LossWeights weights() const {
    return {w_rec, w_gan, w_null, parallelogram_enabled ? w_par : 0.0};
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.image_size = image_size;
    return m;
  }
};

namespace detail_cfg {

inline std::string fmt_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s, const std::string& key) {
  double v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw ConfigError("bad numeric value '" + s + "' for config key " + key);
  return v;
}

inline std::int64_t parse_int(const std::string& s, const std::string& key) {
  std::int64_t v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw ConfigError("bad integer value '" + s + "' for config key " + key);
  return v;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("bad boolean value '" + s + "' for config key " + key);
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace detail_cfg

// Canonical serialization: one `key = value` line per field, fixed order.
inline std::string config_to_text(const TrainConfig& c) {
  using detail_cfg::fmt_double;
  std::ostringstream os;
  os << "mode = " << (c.mode == TrainMode::kGeneGan ? "genegan" : "stacked") << "\n";
  os << "lr = " << fmt_double(c.lr) << "\n";
  os << "momentum = " << fmt_double(c.momentum) << "\n";
  os << "rmsprop_decay = " << fmt_double(c.rmsprop_decay) << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "steps = " << c.steps << "\n";
  os << "seed = " << c.seed << "\n";
  os << "image_size = " << c.image_size << "\n";
  os << "w_rec = " << fmt_double(c.w_rec) << "\n";
  os << "w_gan = " << fmt_double(c.w_gan) << "\n";
  os << "w_null = " << fmt_double(c.w_null) << "\n";
  os << "w_par = " << fmt_double(c.w_par) << "\n";
  os << "d_steps_per_g_step = " << c.d_steps_per_g_step << "\n";
  os << "checkpoint_every = " << c.checkpoint_every << "\n";
  os << "parallelogram_enabled = " << (c.parallelogram_enabled ? "true" : "false") << "\n";
  return os.str();
}

inline void apply_config_line(TrainConfig& c, const std::string& key, const std::string& value) {
  using namespace detail_cfg;
  if (key == "mode") {
    if (value == "genegan") c.mode = TrainMode::kGeneGan;
    else if (value == "stacked") c.mode = TrainMode::kStacked;
    else throw ConfigError("bad mode '" + value + "' (want genegan or stacked)");
  } else if (key == "lr") c.lr = parse_double(value, key);
  else if (key == "momentum") c.momentum = parse_double(value, key);
  else if (key == "rmsprop_decay") c.rmsprop_decay = parse_double(value, key);
  else if (key == "batch_size") c.batch_size = parse_int(value, key);
  else if (key == "steps") c.steps = parse_int(value, key);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(value, key));
  else if (key == "image_size") c.image_size = parse_int(value, key);
  else if (key == "w_rec") c.w_rec = parse_double(value, key);
  else if (key == "w_gan") c.w_gan = parse_double(value, key);
  else if (key == "w_null") c.w_null = parse_double(value, key);
  else if (key == "w_par") c.w_par = parse_double(value, key);
  else if (key == "d_steps_per_g_step") c.d_steps_per_g_step = parse_int(value, key);
  else if (key == "checkpoint_every") c.checkpoint_every = parse_int(value, key);
  else if (key == "parallelogram_enabled") c.parallelogram_enabled = parse_bool(value, key);
  else throw ConfigError("unknown config key: " + key);
}

// `key = value` lines, '#' comments, unknown keys rejected.
inline TrainConfig config_from_text(const std::string& text, TrainConfig base = {}) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail_cfg::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad config line (want key = value): " + line);
    apply_config_line(base, detail_cfg::trim(line.substr(0, eq)), detail_cfg::trim(line.substr(eq + 1)));
  }
  return base;
}

inline TrainConfig config_from_file(const std::string& path, TrainConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return config_from_text(os.str(), base);
}

// ---- batch schedule ----

struct BatchSchedule {
  std::uint64_t seed;
  std::size_t n_with, n_without;
  std::int64_t batch;

  // the larger set is consumed in epoch-shuffled order; ties go to the with-set
  bool with_is_larger() const { return n_with >= n_without; }

  std::vector<std::size_t> shuffled_epoch(std::size_t n, std::int64_t epoch) const {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    SplitMix64 g(mix_seed(mix_seed(seed, 101), static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[g.below(i)]);
    return order;
  }

  void indices_for_step(std::int64_t step, std::vector<std::size_t>& with_idx,
                        std::vector<std::size_t>& without_idx) const {
    const std::size_t n_large = with_is_larger() ? n_with : n_without;
    const std::size_t n_small = with_is_larger() ? n_without : n_with;
    const std::int64_t steps_per_epoch =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(n_large) / batch);
    const std::int64_t epoch = step / steps_per_epoch;
    const std::size_t offset = static_cast<std::size_t>((step % steps_per_epoch) * batch);
    const auto order = shuffled_epoch(n_large, epoch);
    std::vector<std::size_t> large(static_cast<std::size_t>(batch));
    for (std::int64_t j = 0; j < batch; ++j)
      large[static_cast<std::size_t>(j)] = order[(offset + static_cast<std::size_t>(j)) % n_large];
    SplitMix64 g(mix_seed(mix_seed(seed, 202), static_cast<std::uint64_t>(step)));
    std::vector<std::size_t> small(static_cast<std::size_t>(batch));
    for (auto& v : small) v = static_cast<std::size_t>(g.below(n_small));
    with_idx = with_is_larger() ? large : small;
    without_idx = with_is_larger() ? small : large;
  }
};

// ---- train step ----

struct StepMetrics {
  double rec_Au = 0, rec_B0 = 0, gan_0 = 0, gan_ne0 = 0, null_term = 0, par = 0;
  double d_with = 0, d_without = 0;
};

inline const char* kMetricsHeader = "step,L_rec_Au,L_rec_B0,L_gan_0,L_gan_ne0,L_null,L_par,L_D_with,L_D_without";

template <typename T>
struct TrainerState {
  ParamStore<T> store;
  RmsPropState<T> opt;
  std::int64_t step = 0;
};

namespace detail_train {

// Applies RMSProp to every parameter in `scope`, checking that the gradient
// map's key set is exactly the scope's parameter set.
template <typename T>
void apply_updates(Tape<T>& tape, const BoundParams<T>& bp, TrainerState<T>& st, const TrainConfig& cfg,
                   GradScope scope) {
  const auto in_scope = [&](const std::string& name) {
    return scope == GradScope::kGenerator ? is_generator_param(name) : is_discriminator_param(name);
  };
  for (auto& [name, tensor] : st.store.params) {
    const bool has_grad = tape.needs_grad(bp[name]);
    if (has_grad != in_scope(name))
      throw std::runtime_error("gradient map key set violation: " + name +
                               (has_grad ? " received a gradient outside its phase" : " missing its gradient"));
    if (!has_grad) continue;
    const Tensor<T>& g = tape.grad(bp[name]);
    rmsprop_step(tensor, g, st.opt.accumulator(name, tensor.shape), static_cast<T>(cfg.lr),
                 static_cast<T>(cfg.rmsprop_decay), static_cast<T>(1e-8));
  }
}

}  // namespace detail_train

// One optimization step: d_steps_per_g_step discriminator updates on the
// discriminator loss (generator parameters bound as constants, so the
// children are detached), then one generator update with the discriminator
// parameters frozen.
template <typename T>
StepMetrics train_step(const Tensor<T>& batch_Au, const Tensor<T>& batch_B0, TrainerState<T>& st,
                       const TrainConfig& cfg) {
  const ModelConfig mc = cfg.model_config();
  StepMetrics m;

  for (std::int64_t d = 0; d < cfg.d_steps_per_g_step; ++d) {
    Tape<T> tape;
    auto bp = bind_params(tape, st.store, mc, GradScope::kDiscriminators);
    auto xa = tape.constant(batch_Au), xb = tape.constant(batch_B0);
    auto ch = four_child_forward(tape, bp, xa, xb, true);
    auto dl = discriminator_loss(tape, bp, ch, xa, xb, true);
    m.d_with = static_cast<double>(tape.value(dl.with_term)[0]);
    m.d_without = static_cast<double>(tape.value(dl.without_term)[0]);
    tape.backward(dl.total);
    detail_train::apply_updates(tape, bp, st, cfg, GradScope::kDiscriminators);
  }

  Tape<T> tape;
  auto bp = bind_params(tape, st.store, mc, GradScope::kGenerator);
  auto xa = tape.constant(batch_Au), xb = tape.constant(batch_B0);
  GeneratorLoss<T> gl;
  if (cfg.mode == TrainMode::kGeneGan) {
    auto ch = four_child_forward(tape, bp, xa, xb, true);
    gl = generator_loss(tape, bp, ch, xa, xb, cfg.weights(), true);
  } else {
    auto sf = stacked_forward(tape, bp, xa, xb, true);
    gl = generator_loss(tape, bp, sf.children, xa, xb, cfg.weights(), true, sf.eps_prime);
  }
  m.rec_Au = static_cast<double>(tape.value(gl.rec_Au)[0]);
  m.rec_B0 = static_cast<double>(tape.value(gl.rec_B0)[0]);
  m.gan_0 = static_cast<double>(tape.value(gl.gan_0)[0]);
  m.gan_ne0 = static_cast<double>(tape.value(gl.gan_ne0)[0]);
  m.null_term = static_cast<double>(tape.value(gl.null_term)[0]);
  m.par = static_cast<double>(tape.value(gl.par)[0]);
  tape.backward(gl.total);
  detail_train::apply_updates(tape, bp, st, cfg, GradScope::kGenerator);
  return m;
}

// ---- checkpoints ----

template <typename T>
CheckpointData<T> to_checkpoint(const TrainerState<T>& st, const TrainConfig& cfg) {
  CheckpointData<T> c;
  c.config_text = config_to_text(cfg);
  c.step = static_cast<std::uint64_t>(st.step);
  c.prng_state = cfg.seed;  // the schedule is stateless in (seed, step)
  c.params = st.store.params;
  c.opt = st.opt.acc;
  c.state = st.store.state;
  return c;
}

template <typename T>
TrainerState<T> from_checkpoint(const CheckpointData<T>& c) {
  TrainerState<T> st;
  st.store.params = c.params;
  st.store.state = c.state;
  st.opt.acc = c.opt;
  st.step = static_cast<std::int64_t>(c.step);
  return st;
}

// Validates the loaded tensors against the expected parameter table.
template <typename T>
void check_checkpoint_shapes(const TrainerState<T>& st, const ModelConfig& mc) {
  std::size_t expected = 0;
  bool ok = true;
  std::string missing;
  for_each_param(mc, [&](const std::string& name, const Shape& shape, InitKind) {
    ++expected;
    auto it = st.store.params.find(name);
    if (it == st.store.params.end() || it->second.shape != shape) {
      ok = false;
      if (missing.empty()) missing = name;
    }
  });
  if (!ok || st.store.params.size() != expected)
    throw CheckpointError(CheckpointError::Code::kBadFormat,
                          "checkpoint parameter table does not match the model config" +
                              (missing.empty() ? "" : " (first mismatch: " + missing + ")"));
}

struct TrainResult {
  std::string final_checkpoint;
  std::string metrics_csv;
  StepMetrics last;
};

// Full training run. `resume_from` restarts from a checkpoint and reproduces
// the uninterrupted run bit-exactly. Checkpoints and a CSV metric log are
// written into `out_dir`.
template <typename T>
TrainResult train(const TrainConfig& cfg, const Dataset& data, const std::string& out_dir,
                  const std::string& resume_from = {},
                  const std::function<void(std::int64_t, const StepMetrics&)>& on_step = {}) {
  cfg.validate();
  if (data.with_object.empty() || data.without_object.empty())
    throw DataError("train: both dataset sets must be non-empty");
  const ModelConfig mc = cfg.model_config();

  TrainerState<T> st;
  if (resume_from.empty()) {
    st.store = init_params<T>(mc, cfg.seed);
  } else {
    auto ckpt = load_checkpoint<T>(resume_from);
    if (ckpt.config_text != config_to_text(cfg))
      throw ConfigError("resume config mismatch: checkpoint was written with a different configuration");
    st = from_checkpoint(ckpt);
    check_checkpoint_shapes(st, mc);
  }

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
  std::ofstream csv;
  if (resume_from.empty()) {
    csv.open(csv_path);
    csv << kMetricsHeader << "\n";
  } else {
    csv.open(csv_path, std::ios::app);
  }
  if (!csv) throw DataError("cannot open metric log: " + csv_path);

  BatchSchedule sched{cfg.seed, data.with_object.size(), data.without_object.size(), cfg.batch_size};
  StepMetrics last;
  std::vector<std::size_t> wi, oi;
  for (std::int64_t step = st.step; step < cfg.steps; ++step) {
    sched.indices_for_step(step, wi, oi);
    auto batch_Au = stack_images<T>(data.with_object, wi);
    auto batch_B0 = stack_images<T>(data.without_object, oi);
    last = train_step(batch_Au, batch_B0, st, cfg);
    st.step = step + 1;

    char row[320];
    std::snprintf(row, sizeof(row), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                  static_cast<long long>(st.step), last.rec_Au, last.rec_B0, last.gan_0, last.gan_ne0,
                  last.null_term, last.par, last.d_with, last.d_without);
    csv << row << "\n";
    if (on_step) on_step(st.step, last);

    if (st.step % cfg.checkpoint_every == 0 && st.step < cfg.steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%08lld.ggck", static_cast<long long>(st.step));
      save_checkpoint((fs::path(out_dir) / name).string(), to_checkpoint(st, cfg));
    }
  }
  csv.flush();

  const std::string final_path = (fs::path(out_dir) / "checkpoint_final.ggck").string();
  save_checkpoint(final_path, to_checkpoint(st, cfg));
  return {final_path, csv_path, last};
}

}  // namespace genegan
