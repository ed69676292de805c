// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent oracles and metrics.
//
// Everything here deliberately avoids the tape: losses are recomputed with
// straight per-element arithmetic, gradients with central finite differences,
// and disentanglement is scored with closed-form linear probes and a
// brute-force grid search against the synthetic renderer.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "genegan/data.hpp"
#include "genegan/model.hpp"
#include "genegan/tensor.hpp"

namespace genegan {

// ---- finite-difference gradient oracle ----

// Evaluates the loss at a parameter setting. `kinks`, when non-null, must be
// filled with the input values of every kinked op (|.| and leaky_relu) in
// evaluation order, so the harness can detect curvature-breaking crossings.
using FdLossFn = std::function<double(const std::map<std::string, Tensor<double>>&, std::vector<double>*)>;

struct FdReport {
  std::size_t checked = 0;   // parameters compared
  std::size_t excluded = 0;  // kink-adjacent parameters skipped
  std::size_t failed = 0;
  double worst_rel = 0;
  std::string worst_name;
  std::vector<std::string> failures;

  double pass_fraction() const {
    return checked == 0 ? 1.0 : 1.0 - static_cast<double>(failed) / static_cast<double>(checked);
  }
};

inline double fd_rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// A parameter is kink-adjacent when its +h/-h evaluations move some kinked-op
// input across zero, or leave it within `kink_tol` of zero while moving it.
inline bool fd_kink_adjacent(const std::vector<double>& plus, const std::vector<double>& minus, double kink_tol) {
  if (plus.size() != minus.size()) return true;  // graph changed shape; treat as unreliable
  for (std::size_t i = 0; i < plus.size(); ++i) {
    if (plus[i] == minus[i]) continue;  // not influenced by this parameter
    if ((plus[i] > 0) != (minus[i] > 0)) return true;
    if (std::min(std::abs(plus[i]), std::abs(minus[i])) <= kink_tol) return true;
  }
  return false;
}

// Central differences per scalar parameter against the analytic gradients.
inline FdReport finite_diff_check(const FdLossFn& loss_fn, std::map<std::string, Tensor<double>> params,
                                  const std::map<std::string, Tensor<double>>& analytic, double h = 1e-5,
                                  double tol = 1e-4, double kink_tol = 1e-4, std::size_t max_failures = 16) {
  FdReport rep;
  std::vector<double> kp, km;
  for (auto& [name, tensor] : params) {
    auto it = analytic.find(name);
    if (it == analytic.end()) throw std::invalid_argument("finite_diff_check: no analytic gradient for " + name);
    for (std::int64_t i = 0; i < tensor.numel(); ++i) {
      const double orig = tensor[i];
      tensor[i] = orig + h;
      kp.clear();
      const double lp = loss_fn(params, &kp);
      tensor[i] = orig - h;
      km.clear();
      const double lm = loss_fn(params, &km);
      tensor[i] = orig;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw std::runtime_error("finite_diff_check: non-finite loss while perturbing " + name);
      if (fd_kink_adjacent(kp, km, kink_tol)) {
        ++rep.excluded;
        continue;
      }
      const double fd = (lp - lm) / (2 * h);
      const double an = it->second[i];
      const double rel = fd_rel_err(fd, an);
      ++rep.checked;
      if (rel > rep.worst_rel) {
        rep.worst_rel = rel;
        rep.worst_name = name + "[" + std::to_string(i) + "]";
      }
      if (rel > tol) {
        ++rep.failed;
        if (rep.failures.size() < max_failures)
          rep.failures.push_back(name + "[" + std::to_string(i) + "] fd=" + std::to_string(fd) +
                                 " analytic=" + std::to_string(an));
      }
    }
  }
  return rep;
}

// ---- direct-arithmetic loss oracle ----

struct LossOracleInputs {
  std::vector<double> x_Au, x_B0, x_Au_rec, x_B0_rec, x_A0, x_Bu;
  std::vector<double> eps;
  std::vector<double> eps_extra;  // stacked mode only; may be empty
  std::vector<double> logit_A0_without, logit_Bu_with;                 // generator GAN terms
  std::vector<double> logit_with_real, logit_with_fake;                // discriminator, with-object domain
  std::vector<double> logit_without_real, logit_without_fake;          // discriminator, without-object domain
};

struct OracleLosses {
  double rec_Au = 0, rec_B0 = 0, gan_0 = 0, gan_ne0 = 0, null_term = 0, par = 0;
  double g_total = 0;
  double d_with = 0, d_without = 0, d_total = 0;
};

namespace detail_oracle {

inline double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

inline double mean_abs(const std::vector<double>& v) {
  double acc = 0;
  for (double x : v) acc += std::abs(x);
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

inline double mean_neg_log_sigmoid(const std::vector<double>& logits) {
  double acc = 0;
  for (double l : logits) acc += softplus(-l);
  return logits.empty() ? 0.0 : acc / static_cast<double>(logits.size());
}

inline double mean_neg_log_one_minus_sigmoid(const std::vector<double>& logits) {
  double acc = 0;
  for (double l : logits) acc += softplus(l);
  return logits.empty() ? 0.0 : acc / static_cast<double>(logits.size());
}

}  // namespace detail_oracle

inline OracleLosses loss_oracle(const LossOracleInputs& in, const LossWeights& w) {
  using namespace detail_oracle;
  OracleLosses out;
  const std::size_t n = in.x_Au.size();
  std::vector<double> diff(n);
  auto mean_abs_diff2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
    return mean_abs(diff);
  };
  out.rec_Au = mean_abs_diff2(in.x_Au, in.x_Au_rec);
  out.rec_B0 = mean_abs_diff2(in.x_B0, in.x_B0_rec);
  out.gan_0 = mean_neg_log_sigmoid(in.logit_A0_without);
  out.gan_ne0 = mean_neg_log_sigmoid(in.logit_Bu_with);
  out.null_term = mean_abs(in.eps);
  if (!in.eps_extra.empty()) out.null_term += mean_abs(in.eps_extra);
  for (std::size_t i = 0; i < n; ++i) diff[i] = in.x_Au[i] + in.x_B0[i] - in.x_A0[i] - in.x_Bu[i];
  out.par = mean_abs(diff);
  out.g_total = w.rec * (out.rec_Au + out.rec_B0) + w.gan * (out.gan_0 + out.gan_ne0) +
                w.null * out.null_term + w.par * out.par;
  out.d_with = mean_neg_log_sigmoid(in.logit_with_real) + mean_neg_log_one_minus_sigmoid(in.logit_with_fake);
  out.d_without =
      mean_neg_log_sigmoid(in.logit_without_real) + mean_neg_log_one_minus_sigmoid(in.logit_without_fake);
  out.d_total = out.d_with + out.d_without;
  return out;
}

// ---- linear disentanglement probes ----

struct ProbeResult {
  double r2_object_from_u = 0;  // mean R^2 over darkness, width, tint
  double r2_object_from_A = 0;
  double r2_u_darkness = 0, r2_u_width = 0, r2_u_tint = 0, style_acc_u = 0;
  double r2_A_darkness = 0, r2_A_width = 0, r2_A_tint = 0, style_acc_A = 0;
  bool degenerate_u = false, degenerate_A = false;
};

namespace detail_probe {

// Solves (X^T X + ridge*I) beta = X^T y via Cholesky; X gets an implicit bias column.
inline std::vector<double> ols_fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                                   double ridge) {
  const std::size_t n = x.size(), f = x[0].size() + 1;
  std::vector<double> xtx(f * f, 0.0), xty(f, 0.0), row(f);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j + 1 < f; ++j) row[j] = x[s][j];
    row[f - 1] = 1.0;
    for (std::size_t i = 0; i < f; ++i) {
      xty[i] += row[i] * y[s];
      for (std::size_t j = i; j < f; ++j) xtx[i * f + j] += row[i] * row[j];
    }
  }
  double trace = 0;
  for (std::size_t i = 0; i < f; ++i) trace += xtx[i * f + i];
  const double lam = ridge * (trace / static_cast<double>(f) + 1e-12);
  for (std::size_t i = 0; i < f; ++i) {
    xtx[i * f + i] += lam;
    for (std::size_t j = 0; j < i; ++j) xtx[i * f + j] = xtx[j * f + i];
  }
  // Cholesky: xtx = L L^T
  std::vector<double> l(f * f, 0.0);
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = xtx[i * f + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * f + k] * l[j * f + k];
      if (i == j) {
        l[i * f + i] = std::sqrt(std::max(s, 1e-300));
      } else {
        l[i * f + j] = s / l[j * f + j];
      }
    }
  }
  std::vector<double> z(f), beta(f);
  for (std::size_t i = 0; i < f; ++i) {
    double s = xty[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i * f + k] * z[k];
    z[i] = s / l[i * f + i];
  }
  for (std::size_t ii = f; ii-- > 0;) {
    double s = z[ii];
    for (std::size_t k = ii + 1; k < f; ++k) s -= l[k * f + ii] * beta[k];
    beta[ii] = s / l[ii * f + ii];
  }
  return beta;
}

inline double predict(const std::vector<double>& beta, const std::vector<double>& x) {
  double v = beta.back();
  for (std::size_t j = 0; j < x.size(); ++j) v += beta[j] * x[j];
  return v;
}

// Held-out R^2 of an OLS fit on the train split.
inline double probe_r2(const std::vector<std::vector<double>>& xtr, const std::vector<double>& ytr,
                       const std::vector<std::vector<double>>& xte, const std::vector<double>& yte) {
  const auto beta = ols_fit(xtr, ytr, 1e-4);
  double mean = 0;
  for (double v : yte) mean += v;
  mean /= static_cast<double>(yte.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < xte.size(); ++i) {
    const double e = yte[i] - predict(beta, xte[i]);
    ss_res += e * e;
    ss_tot += (yte[i] - mean) * (yte[i] - mean);
  }
  return 1.0 - ss_res / std::max(ss_tot, 1e-12);
}

inline double centroid_style_accuracy(const std::vector<std::vector<double>>& xtr, const std::vector<int>& str,
                                      const std::vector<std::vector<double>>& xte, const std::vector<int>& ste) {
  const std::size_t f = xtr[0].size();
  std::vector<std::vector<double>> centroid(3, std::vector<double>(f, 0.0));
  std::vector<std::size_t> count(3, 0);
  for (std::size_t i = 0; i < xtr.size(); ++i) {
    ++count[static_cast<std::size_t>(str[i])];
    for (std::size_t j = 0; j < f; ++j) centroid[static_cast<std::size_t>(str[i])][j] += xtr[i][j];
  }
  for (int s = 0; s < 3; ++s)
    if (count[static_cast<std::size_t>(s)] > 0)
      for (std::size_t j = 0; j < f; ++j)
        centroid[static_cast<std::size_t>(s)][j] /= static_cast<double>(count[static_cast<std::size_t>(s)]);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < xte.size(); ++i) {
    int best = 0;
    double best_d = 0;
    for (int s = 0; s < 3; ++s) {
      double d = 0;
      for (std::size_t j = 0; j < f; ++j) {
        const double e = xte[i][j] - centroid[static_cast<std::size_t>(s)][j];
        d += e * e;
      }
      if (s == 0 || d < best_d) {
        best_d = d;
        best = s;
      }
    }
    if (best == ste[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(xte.size());
}

inline bool degenerate_features(const std::vector<std::vector<double>>& x) {
  const std::size_t f = x[0].size();
  for (std::size_t j = 0; j < f; ++j) {
    double mn = x[0][j], mx = x[0][j];
    for (const auto& row : x) {
      mn = std::min(mn, row[j]);
      mx = std::max(mx, row[j]);
    }
    if (mx - mn > 1e-9) return false;
  }
  return true;
}

}  // namespace detail_probe

// Fits linear probes from the flattened object code u (and separately from
// the background code A) of label-1 samples to the ground-truth object
// parameters, reporting held-out R^2 and nearest-centroid style accuracy.
// The first 60% of the samples are the probe-train split.
inline ProbeResult disentanglement_probe(ParamStore<float>& store, const ModelConfig& cfg,
                                         const std::vector<Sample>& with_samples) {
  if (with_samples.size() < 50) throw std::invalid_argument("disentanglement_probe: need at least 50 samples");
  for (const auto& s : with_samples)
    if (!s.object || !s.object->present) throw std::invalid_argument("disentanglement_probe: samples must carry object specs");

  const std::size_t n = with_samples.size();
  std::vector<std::vector<double>> feat_u(n), feat_a(n);
  std::vector<double> darkness(n), width(n), tint(n);
  std::vector<int> style(n);

  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = start + i;
    auto batch = stack_images<float>(with_samples, idx);
    auto codes = encode_eval(store, cfg, batch);
    const std::int64_t ulen = codes.object.numel() / static_cast<std::int64_t>(m);
    const std::int64_t alen = codes.background.numel() / static_cast<std::int64_t>(m);
    for (std::size_t i = 0; i < m; ++i) {
      feat_u[start + i].assign(codes.object.data.begin() + static_cast<std::ptrdiff_t>(i * ulen),
                               codes.object.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * ulen));
      feat_a[start + i].assign(codes.background.data.begin() + static_cast<std::ptrdiff_t>(i * alen),
                               codes.background.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * alen));
      const auto& o = *with_samples[start + i].object;
      darkness[start + i] = o.darkness;
      width[start + i] = o.width;
      tint[start + i] = o.tint;
      style[start + i] = static_cast<int>(o.style);
    }
  }

  const std::size_t n_train = (n * 3) / 5;
  auto split = [&](const auto& v) {
    using V = std::decay_t<decltype(v)>;
    return std::pair<V, V>(V(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n_train)),
                           V(v.begin() + static_cast<std::ptrdiff_t>(n_train), v.end()));
  };
  auto [utr, ute] = split(feat_u);
  auto [atr, ate] = split(feat_a);
  auto [dtr, dte] = split(darkness);
  auto [wtr, wte] = split(width);
  auto [ttr, tte] = split(tint);
  auto [str_, ste] = split(style);

  ProbeResult r;
  r.degenerate_u = detail_probe::degenerate_features(feat_u);
  r.degenerate_A = detail_probe::degenerate_features(feat_a);
  if (!r.degenerate_u) {
    r.r2_u_darkness = detail_probe::probe_r2(utr, dtr, ute, dte);
    r.r2_u_width = detail_probe::probe_r2(utr, wtr, ute, wte);
    r.r2_u_tint = detail_probe::probe_r2(utr, ttr, ute, tte);
    r.style_acc_u = detail_probe::centroid_style_accuracy(utr, str_, ute, ste);
    r.r2_object_from_u = (r.r2_u_darkness + r.r2_u_width + r.r2_u_tint) / 3.0;
  }
  if (!r.degenerate_A) {
    r.r2_A_darkness = detail_probe::probe_r2(atr, dtr, ate, dte);
    r.r2_A_width = detail_probe::probe_r2(atr, wtr, ate, wte);
    r.r2_A_tint = detail_probe::probe_r2(atr, ttr, ate, tte);
    r.style_acc_A = detail_probe::centroid_style_accuracy(atr, str_, ate, ste);
    r.r2_object_from_A = (r.r2_A_darkness + r.r2_A_width + r.r2_A_tint) / 3.0;
  }
  return r;
}

// ---- attribute-drift oracle ----

// Brute-force recovery of an object spec from an image with a known scene:
// grid-search candidates rendered onto the known background, nearest in L1
// over the sprite bounding box.
class DriftOracle {
 public:
  explicit DriftOracle(std::int64_t size) : size_(size) {
    sprite::bbox(size, bb_);
    for (int s = 0; s < 3; ++s)
      for (int d = 0; d < kGrid; ++d)
        for (int w = 0; w < kGrid; ++w)
          for (int t = 0; t < kGrid; ++t) {
            ObjectSpec o;
            o.present = true;
            o.style = static_cast<ObjectStyle>(s);
            o.darkness = grid_value(d, 0.2, 1.0);
            o.width = grid_value(w, 0.05, 0.12);
            o.tint = grid_value(t, 0.0, 1.0);
            candidates_.push_back(o);
          }
    // cache per-candidate alpha over the bounding box
    const std::int64_t bh = bb_[1] - bb_[0], bw = bb_[3] - bb_[2];
    alpha_.resize(candidates_.size());
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
      alpha_[i].resize(static_cast<std::size_t>(bh * bw));
      for (std::int64_t y = 0; y < bh; ++y)
        for (std::int64_t x = 0; x < bw; ++x)
          alpha_[i][static_cast<std::size_t>(y * bw + x)] =
              sprite::alpha_at(candidates_[i], size_, bb_[2] + x, bb_[0] + y);
    }
  }

  static constexpr int kGrid = 8;

  static double grid_value(int i, double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kGrid - 1);
  }

  // nearest grid candidate to `target` (for test fixtures that need exact recovery)
  ObjectSpec snap_to_grid(const ObjectSpec& target) const {
    ObjectSpec best = candidates_[0];
    double best_d = 1e300;
    for (const auto& c : candidates_) {
      if (c.style != target.style) continue;
      const double d = std::abs(c.darkness - target.darkness) / 0.8 + std::abs(c.width - target.width) / 0.07 +
                       std::abs(c.tint - target.tint);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return best;
  }

  ObjectSpec recover(const Tensor<float>& image, const SceneSpec& scene) const {
    if (image.shape[1] != size_ || image.shape[2] != size_)
      throw std::invalid_argument("DriftOracle: image size mismatch");
    const Tensor<float> base = render_scene(scene, size_);
    const std::int64_t bh = bb_[1] - bb_[0], bw = bb_[3] - bb_[2];
    std::size_t best = 0;
    double best_l1 = 1e300;
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
      double rgb[3];
      sprite::lens_color(candidates_[i], rgb);
      double l1 = 0;
      for (std::int64_t y = 0; y < bh; ++y)
        for (std::int64_t x = 0; x < bw; ++x) {
          const double a = alpha_[i][static_cast<std::size_t>(y * bw + x)];
          for (int c = 0; c < 3; ++c) {
            const std::size_t off =
                static_cast<std::size_t>((c * size_ + bb_[0] + y) * size_ + bb_[2] + x);
            const double cand = (1.0 - a) * static_cast<double>(base.data[off]) + a * rgb[c];
            l1 += std::abs(cand - static_cast<double>(image.data[off]));
          }
        }
      if (l1 < best_l1) {
        best_l1 = l1;
        best = i;
      }
    }
    return candidates_[best];
  }

 private:
  std::int64_t size_;
  std::int64_t bb_[4];
  std::vector<ObjectSpec> candidates_;
  std::vector<std::vector<double>> alpha_;
};

struct DriftReport {
  double match_rate = 0;        // style exact, |d darkness| <= 0.15, |d width| <= 0.02
  double style_match_rate = 0;  // style component alone
  double mean_err_darkness = 0, mean_err_width = 0, mean_err_tint = 0;
  int n_pairs = 0;
};

// Transplants donors' objects onto recipients through the model and checks
// whether the drift oracle recovers the donor's style parameters.
inline DriftReport drift_metric(ParamStore<float>& store, const ModelConfig& cfg, int n_pairs,
                                std::uint64_t seed) {
  const std::int64_t size = cfg.image_size;
  Dataset pairs = make_dataset(n_pairs, n_pairs, size, seed);
  DriftOracle oracle(size);
  DriftReport rep;
  rep.n_pairs = n_pairs;

  const std::size_t chunk = 32;
  for (std::size_t start = 0; start < static_cast<std::size_t>(n_pairs); start += chunk) {
    const std::size_t m = std::min(chunk, static_cast<std::size_t>(n_pairs) - start);
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = start + i;
    auto donors = stack_images<float>(pairs.with_object, idx);
    auto recipients = stack_images<float>(pairs.without_object, idx);
    auto donor_codes = encode_eval(store, cfg, donors);
    auto recipient_codes = encode_eval(store, cfg, recipients);
    auto x_Bu = decode_eval(store, cfg, recipient_codes.background, donor_codes.object);

    const std::int64_t img_len = 3 * size * size;
    for (std::size_t i = 0; i < m; ++i) {
      Tensor<float> img({3, size, size});
      std::copy_n(x_Bu.data.begin() + static_cast<std::ptrdiff_t>(i * img_len), img_len, img.data.begin());
      const ObjectSpec got = oracle.recover(img, *pairs.without_object[start + i].scene);
      const ObjectSpec& want = *pairs.with_object[start + i].object;
      const double ed = std::abs(got.darkness - want.darkness);
      const double ew = std::abs(got.width - want.width);
      const double et = std::abs(got.tint - want.tint);
      rep.mean_err_darkness += ed;
      rep.mean_err_width += ew;
      rep.mean_err_tint += et;
      const bool style_ok = got.style == want.style;
      if (style_ok) rep.style_match_rate += 1;
      if (style_ok && ed <= 0.15 && ew <= 0.02) rep.match_rate += 1;
    }
  }
  rep.match_rate /= n_pairs;
  rep.style_match_rate /= n_pairs;
  rep.mean_err_darkness /= n_pairs;
  rep.mean_err_width /= n_pairs;
  rep.mean_err_tint /= n_pairs;
  return rep;
}

// ---- misc model statistics ----

inline double mean_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  check_same_shape(a, b, "mean_abs_diff");
  double acc = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return acc / static_cast<double>(a.numel());
}

struct ModelEvalStats {
  double rec_l1_with = 0;     // |x - decode(A,u)| on label-1 samples
  double rec_l1_without = 0;  // |x - decode(B,0)| on label-0 samples
  double mean_abs_eps = 0;    // mean |object code| of label-0 samples
};

inline ModelEvalStats model_eval_stats(ParamStore<float>& store, const ModelConfig& cfg,
                                       const std::vector<Sample>& with_samples,
                                       const std::vector<Sample>& without_samples, std::size_t max_n = 256) {
  ModelEvalStats stats;
  auto run = [&](const std::vector<Sample>& samples, bool zero_object, double* rec_out, double* eps_out) {
    const std::size_t n = std::min(max_n, samples.size());
    const std::size_t chunk = 32;
    double rec_acc = 0, eps_acc = 0;
    std::size_t done = 0;
    for (std::size_t start = 0; start < n; start += chunk) {
      const std::size_t m = std::min(chunk, n - start);
      std::vector<std::size_t> idx(m);
      for (std::size_t i = 0; i < m; ++i) idx[i] = start + i;
      auto batch = stack_images<float>(samples, idx);
      auto codes = encode_eval(store, cfg, batch);
      Tensor<float> obj = zero_object ? Tensor<float>(codes.object.shape) : codes.object;
      auto rec = decode_eval(store, cfg, codes.background, obj);
      rec_acc += mean_abs_diff(rec, batch) * static_cast<double>(m);
      if (eps_out) {
        double e = 0;
        for (auto v : codes.object.data) e += std::abs(static_cast<double>(v));
        eps_acc += e / static_cast<double>(codes.object.numel()) * static_cast<double>(m);
      }
      done += m;
    }
    if (rec_out) *rec_out = rec_acc / static_cast<double>(done);
    if (eps_out) *eps_out = eps_acc / static_cast<double>(done);
  };
  run(with_samples, false, &stats.rec_l1_with, nullptr);
  run(without_samples, true, &stats.rec_l1_without, &stats.mean_abs_eps);
  return stats;
}

}  // namespace genegan
