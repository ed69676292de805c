// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Float64 gradient validation: central finite differences against the tape's
// analytic gradients for every differentiable op and for the full generator
// and discriminator loss graphs on an 8x8 model.

#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "genegan/eval.hpp"
#include "genegan/model.hpp"
#include "genegan/rng.hpp"
#include "genegan/tape.hpp"

namespace genegan {

struct GradCheckCase {
  std::string name;
  FdReport report;
  bool pass = false;
};

namespace detail_gradcheck {

inline Tensor<double> random_tensor(Shape shape, SplitMix64& rng, double lo = -2.0, double hi = 2.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Scalarizes an op output by projecting against a fixed random direction, so
// every output element contributes to the checked gradient.
template <typename BuildFn>
GradCheckCase check_op(const std::string& name, std::map<std::string, Tensor<double>> inputs,
                       const Tensor<double>& projection, BuildFn build, double tol = 1e-4,
                       double min_pass_fraction = 1.0) {
  auto loss_fn = [&](const std::map<std::string, Tensor<double>>& params, std::vector<double>* kinks) {
    Tape<double> tape;
    tape.set_record_kinks(kinks != nullptr);
    std::map<std::string, typename Tape<double>::Var> vars;
    for (const auto& [k, v] : params) vars.emplace(k, tape.leaf(v, false));
    auto out = build(tape, vars);
    auto scalar = tape.mean(tape.mul(out, tape.constant(projection)));
    if (kinks) *kinks = tape.kink_values();
    return tape.value(scalar)[0];
  };

  Tape<double> tape;
  std::map<std::string, typename Tape<double>::Var> vars;
  for (const auto& [k, v] : inputs) vars.emplace(k, tape.leaf(v, true));
  auto out = build(tape, vars);
  auto scalar = tape.mean(tape.mul(out, tape.constant(projection)));
  tape.backward(scalar);
  std::map<std::string, Tensor<double>> analytic;
  for (const auto& [k, v] : vars) analytic.emplace(k, tape.grad(v));

  GradCheckCase c{name, finite_diff_check(loss_fn, std::move(inputs), analytic, 1e-5, tol)};
  c.pass = c.report.checked > 0 && c.report.pass_fraction() >= min_pass_fraction;
  return c;
}

}  // namespace detail_gradcheck

inline std::vector<GradCheckCase> run_op_gradchecks(std::uint64_t seed) {
  using detail_gradcheck::check_op;
  using detail_gradcheck::random_tensor;
  using Vars = std::map<std::string, typename Tape<double>::Var>;
  SplitMix64 rng(seed);
  std::vector<GradCheckCase> cases;

  const Shape e{2, 3, 4, 4};
  auto proj_e = random_tensor(e, rng);
  cases.push_back(check_op("add", {{"a", random_tensor(e, rng)}, {"b", random_tensor(e, rng)}}, proj_e,
                           [](Tape<double>& t, Vars& v) { return t.add(v["a"], v["b"]); }));
  cases.push_back(check_op("sub", {{"a", random_tensor(e, rng)}, {"b", random_tensor(e, rng)}}, proj_e,
                           [](Tape<double>& t, Vars& v) { return t.sub(v["a"], v["b"]); }));
  cases.push_back(check_op("mul", {{"a", random_tensor(e, rng)}, {"b", random_tensor(e, rng)}}, proj_e,
                           [](Tape<double>& t, Vars& v) { return t.mul(v["a"], v["b"]); }));
  cases.push_back(check_op("scale", {{"a", random_tensor(e, rng)}}, proj_e,
                           [](Tape<double>& t, Vars& v) { return t.scale(v["a"], 1.7); }));

  {
    SplitMix64 r2(rng.next());
    auto x = random_tensor({2, 3, 8, 8}, r2);
    auto w = random_tensor({4, 3, 3, 3}, r2, -0.5, 0.5);
    auto b = random_tensor({4}, r2, -0.5, 0.5);
    auto proj = random_tensor({2, 4, 8, 8}, r2);
    cases.push_back(check_op("conv2d_s1p1", {{"x", x}, {"w", w}, {"b", b}}, proj,
                             [](Tape<double>& t, Vars& v) { return t.conv2d(v["x"], v["w"], v["b"], 1, 1); }));
  }
  {
    SplitMix64 r2(rng.next());
    auto x = random_tensor({2, 3, 8, 8}, r2);
    auto w = random_tensor({5, 3, 4, 4}, r2, -0.5, 0.5);
    auto proj = random_tensor({2, 5, 4, 4}, r2);
    cases.push_back(check_op("conv2d_s2p1", {{"x", x}, {"w", w}}, proj, [](Tape<double>& t, Vars& v) {
      return t.conv2d(v["x"], v["w"], {}, 2, 1);
    }));
  }
  {
    SplitMix64 r2(rng.next());
    auto x = random_tensor({2, 5, 4, 4}, r2);
    auto w = random_tensor({5, 3, 4, 4}, r2, -0.5, 0.5);
    auto b = random_tensor({3}, r2, -0.5, 0.5);
    auto proj = random_tensor({2, 3, 8, 8}, r2);
    cases.push_back(check_op("conv2d_transpose_s2p1", {{"x", x}, {"w", w}, {"b", b}}, proj,
                             [](Tape<double>& t, Vars& v) {
                               return t.conv2d_transpose(v["x"], v["w"], v["b"], 2, 1);
                             }));
  }
  cases.push_back(check_op("leaky_relu", {{"x", random_tensor(e, rng)}}, proj_e,
                           [](Tape<double>& t, Vars& v) { return t.leaky_relu(v["x"], 0.2); }));
  {
    SplitMix64 r2(rng.next());
    auto x = random_tensor({4, 3, 5, 5}, r2);
    auto gamma = random_tensor({3}, r2, 0.5, 1.5);
    auto beta = random_tensor({3}, r2, -0.5, 0.5);
    auto proj = random_tensor({4, 3, 5, 5}, r2);
    auto build_bn = [](bool training) {
      auto stats = std::make_shared<std::pair<Tensor<double>, Tensor<double>>>(
          Tensor<double>::full({3}, 0.1), Tensor<double>::full({3}, 0.9));
      return [training, stats](Tape<double>& t, Vars& v) {
        return t.batch_norm(v["x"], v["gamma"], v["beta"], &stats->first, &stats->second, training, false, 0.9,
                            1e-5);
      };
    };
    cases.push_back(check_op("batch_norm_train", {{"x", x}, {"gamma", gamma}, {"beta", beta}}, proj,
                             build_bn(true)));
    cases.push_back(check_op("batch_norm_eval", {{"x", x}, {"gamma", gamma}, {"beta", beta}}, proj,
                             build_bn(false)));
  }
  cases.push_back(check_op("sigmoid", {{"x", random_tensor(e, rng, -6, 6)}}, proj_e,
                           [](Tape<double>& t, Vars& v) { return t.sigmoid(v["x"]); }));
  cases.push_back(check_op("log", {{"x", random_tensor(e, rng, 0.1, 2.0)}}, proj_e,
                           [](Tape<double>& t, Vars& v) { return t.log(v["x"]); }));
  cases.push_back(check_op("neg_log_sigmoid", {{"x", random_tensor(e, rng, -30, 30)}}, proj_e,
                           [](Tape<double>& t, Vars& v) { return t.neg_log_sigmoid(v["x"]); }));
  cases.push_back(check_op("mean", {{"x", random_tensor(e, rng)}}, Tensor<double>::full({1}, 1.3),
                           [](Tape<double>& t, Vars& v) { return t.mean(v["x"]); }));
  cases.push_back(check_op("l1", {{"x", random_tensor(e, rng)}}, Tensor<double>::full({1}, 0.7),
                           [](Tape<double>& t, Vars& v) { return t.l1(v["x"]); }));
  {
    SplitMix64 r2(rng.next());
    auto a = random_tensor({2, 2, 4, 4}, r2);
    auto b = random_tensor({2, 3, 4, 4}, r2);
    auto proj = random_tensor({2, 5, 4, 4}, r2);
    cases.push_back(check_op("concat_channels", {{"a", a}, {"b", b}}, proj, [](Tape<double>& t, Vars& v) {
      return t.concat_channels(v["a"], v["b"]);
    }));
    auto x = random_tensor({2, 5, 4, 4}, r2);
    cases.push_back(check_op("split_channels", {{"x", x}}, proj, [](Tape<double>& t, Vars& v) {
      auto [lhs, rhs] = t.split_channels(v["x"], 2);
      return t.concat_channels(t.scale(lhs, 1.3), t.scale(rhs, 0.6));
    }));
    cases.push_back(check_op("concat_batch", {{"a", a}, {"b", a}}, random_tensor({4, 2, 4, 4}, r2),
                             [](Tape<double>& t, Vars& v) { return t.concat_batch(v["a"], v["b"]); }));
  }
  {
    SplitMix64 r2(rng.next());
    auto x = random_tensor({3, 4, 5, 5}, r2);
    cases.push_back(check_op("global_avg_pool", {{"x", x}}, random_tensor({3, 4}, r2),
                             [](Tape<double>& t, Vars& v) { return t.global_avg_pool(v["x"]); }));
    auto in = random_tensor({3, 6}, r2);
    auto w = random_tensor({6, 2}, r2);
    auto b = random_tensor({2}, r2);
    cases.push_back(check_op("linear", {{"x", in}, {"w", w}, {"b", b}}, random_tensor({3, 2}, r2),
                             [](Tape<double>& t, Vars& v) { return t.linear(v["x"], v["w"], v["b"]); }));
  }
  return cases;
}

// <y, conv2d(x,w)> == <conv2d_transpose(y,w), x> on random tensors
inline double adjoint_identity_rel_err(std::uint64_t seed) {
  SplitMix64 rng(seed);
  auto x = detail_gradcheck::random_tensor({2, 3, 8, 8}, rng, -1, 1);
  auto w = detail_gradcheck::random_tensor({5, 3, 4, 4}, rng, -1, 1);
  Tape<double> t;
  auto y = t.conv2d(t.constant(x), t.constant(w), {}, 2, 1);
  auto yr = detail_gradcheck::random_tensor(t.value(y).shape, rng, -1, 1);
  double ip1 = 0;
  for (std::int64_t i = 0; i < yr.numel(); ++i) ip1 += yr[i] * t.value(y)[i];
  auto xt = t.conv2d_transpose(t.constant(yr), t.constant(w), {}, 2, 1);
  double ip2 = 0;
  for (std::int64_t i = 0; i < x.numel(); ++i) ip2 += t.value(xt)[i] * x[i];
  return std::abs(ip1 - ip2) / std::max(std::abs(ip1), 1e-12);
}

// Full-model check on the tiny 8x8 config: every generator parameter against
// the generator loss, every discriminator parameter against the discriminator
// loss. Passes when >= 99.9% of the non-kink-adjacent parameters agree.
inline std::vector<GradCheckCase> run_model_gradchecks(std::uint64_t seed) {
  const ModelConfig cfg = ModelConfig::tiny8();
  auto full_store = init_params<double>(cfg, seed);
  SplitMix64 rng(mix_seed(seed, 7));
  Tensor<double> xa({2, 3, 8, 8}), xb({2, 3, 8, 8});
  for (auto& v : xa.data) v = rng.uniform();
  for (auto& v : xb.data) v = rng.uniform();
  const LossWeights w{10, 1, 1, 1};

  // evaluates one of the two phase losses with the trial parameter values
  auto make_loss_fn = [&](bool generator_phase) {
    return [&, generator_phase](const std::map<std::string, Tensor<double>>& trial,
                                std::vector<double>* kinks) {
      ParamStore<double> store = full_store;
      for (const auto& [k, v] : trial) store.param(k) = v;
      Tape<double> tape;
      tape.set_record_kinks(kinks != nullptr);
      auto bp = bind_params(tape, store, cfg, GradScope::kNone);
      auto va = tape.constant(xa), vb = tape.constant(xb);
      auto ch = four_child_forward(tape, bp, va, vb, true, false);
      double out;
      if (generator_phase) {
        out = tape.value(generator_loss(tape, bp, ch, va, vb, w, true).total)[0];
      } else {
        out = tape.value(discriminator_loss(tape, bp, ch, va, vb, true).total)[0];
      }
      if (kinks) *kinks = tape.kink_values();
      return out;
    };
  };

  auto run_phase = [&](const std::string& name, GradScope scope, bool generator_phase) {
    Tape<double> tape;
    auto bp = bind_params(tape, full_store, cfg, scope);
    auto va = tape.constant(xa), vb = tape.constant(xb);
    auto ch = four_child_forward(tape, bp, va, vb, true, false);
    if (generator_phase) {
      tape.backward(generator_loss(tape, bp, ch, va, vb, w, true).total);
    } else {
      tape.backward(discriminator_loss(tape, bp, ch, va, vb, true).total);
    }
    std::map<std::string, Tensor<double>> subset, analytic;
    for (const auto& [k, v] : full_store.params) {
      const bool in_scope =
          scope == GradScope::kGenerator ? is_generator_param(k) : is_discriminator_param(k);
      if (!in_scope) continue;
      subset.emplace(k, v);
      analytic.emplace(k, tape.grad(bp[k]));
    }
    GradCheckCase c{name, finite_diff_check(make_loss_fn(generator_phase), subset, analytic, 1e-5, 1e-4)};
    c.pass = c.report.checked > 0 && c.report.pass_fraction() >= 0.999;
    return c;
  };

  std::vector<GradCheckCase> cases;
  cases.push_back(run_phase("generator_loss_full_model", GradScope::kGenerator, true));
  cases.push_back(run_phase("discriminator_loss_full_model", GradScope::kDiscriminators, false));
  return cases;
}

// Runs everything and prints one line per case. Returns true when all pass.
inline bool run_all_gradchecks(std::ostream& os, std::uint64_t seed = 20260809) {
  bool ok = true;
  auto emit = [&](const GradCheckCase& c) {
    ok = ok && c.pass;
    os << (c.pass ? "[ok]   " : "[FAIL] ") << c.name << ": checked " << c.report.checked << ", excluded "
       << c.report.excluded << ", failed " << c.report.failed << ", worst rel " << c.report.worst_rel;
    if (!c.report.worst_name.empty()) os << " (" << c.report.worst_name << ")";
    os << "\n";
    for (const auto& f : c.report.failures) os << "         " << f << "\n";
  };
  for (const auto& c : run_op_gradchecks(seed)) emit(c);
  const double adj = adjoint_identity_rel_err(seed);
  const bool adj_ok = adj < 1e-6;
  ok = ok && adj_ok;
  os << (adj_ok ? "[ok]   " : "[FAIL] ") << "conv_transpose_adjoint_identity: rel err " << adj << "\n";
  for (const auto& c : run_model_gradchecks(seed)) emit(c);
  return ok;
}

}  // namespace genegan
