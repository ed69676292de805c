// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// transfig: train a GeneGAN model and apply it -- object removal,
// transplanting, swapping, attribute interpolation and scaling -- plus the
// evaluation oracles (linear probes, drift metric, gradient checks).
//
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 checkpoint error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "genegan/checkpoint.hpp"
#include "genegan/data.hpp"
#include "genegan/eval.hpp"
#include "genegan/gradcheck.hpp"
#include "genegan/image_io.hpp"
#include "genegan/model.hpp"
#include "genegan/trainer.hpp"

namespace fs = std::filesystem;
using namespace genegan;

namespace {

struct LoadedModel {
  TrainConfig cfg;
  ModelConfig mc;
  ParamStore<float> store;
};

LoadedModel load_model(const std::string& ckpt_path) {
  auto ck = load_checkpoint<float>(ckpt_path);
  TrainConfig cfg = config_from_text(ck.config_text);
  ModelConfig mc = cfg.model_config();
  TrainerState<float> st = from_checkpoint(ck);
  check_checkpoint_shapes(st, mc);
  return {cfg, mc, std::move(st.store)};
}

Tensor<float> load_sized_image(const std::string& path, std::int64_t size) {
  Tensor<float> img = load_image(path);
  if (img.shape[1] != size || img.shape[2] != size)
    throw DataError(path + ": image is " + std::to_string(img.shape[2]) + "x" + std::to_string(img.shape[1]) +
                    " but the checkpoint was trained on " + std::to_string(size) + "x" + std::to_string(size));
  return img;
}

Tensor<float> as_batch(const std::vector<Tensor<float>>& imgs) {
  const std::int64_t h = imgs[0].shape[1], w = imgs[0].shape[2];
  Tensor<float> batch({static_cast<std::int64_t>(imgs.size()), 3, h, w});
  std::int64_t off = 0;
  for (const auto& img : imgs) {
    std::copy(img.data.begin(), img.data.end(), batch.data.begin() + off);
    off += img.numel();
  }
  return batch;
}

Tensor<float> nth_image(const Tensor<float>& batch, std::int64_t n) {
  const std::int64_t h = batch.shape[2], w = batch.shape[3];
  Tensor<float> img({3, h, w});
  std::copy_n(batch.data.begin() + n * img.numel(), img.numel(), img.data.begin());
  return img;
}

Tensor<float> zeros_like(const Tensor<float>& t) { return Tensor<float>(t.shape); }

void append_csv_row(const std::string& dir, const std::string& file, const std::string& header,
                    const std::string& row) {
  fs::create_directories(dir);
  const std::string path = (fs::path(dir) / file).string();
  const bool fresh = !fs::exists(path);
  std::ofstream f(path, std::ios::app);
  if (!f) throw DataError("cannot open " + path);
  if (fresh) f << header << "\n";
  f << row << "\n";
}

// ---- commands ----

int cmd_train(const std::string& config_path, const std::string& data_dir, std::int64_t synthetic,
              const std::string& out_dir, std::int64_t steps_override, std::int64_t seed_override) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = config_from_file(config_path);
  if (steps_override >= 0) cfg.steps = steps_override;
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  cfg.validate();

  Dataset data;
  if (synthetic > 0) {
    data = make_dataset(synthetic, synthetic, cfg.image_size, cfg.seed);
  } else {
    data = ingest_folder((fs::path(data_dir) / "with").string(), (fs::path(data_dir) / "without").string(),
                         cfg.image_size);
  }
  std::cout << "training: " << data.with_object.size() << " with-object + " << data.without_object.size()
            << " without-object samples, " << cfg.steps << " steps\n";
  auto result = train<float>(cfg, data, out_dir, {}, [](std::int64_t step, const StepMetrics& m) {
    if (step % 200 == 0)
      std::cout << "step " << step << "  rec " << m.rec_Au + m.rec_B0 << "  null " << m.null_term << "  d "
                << m.d_with + m.d_without << "\n";
  });
  std::cout << "final checkpoint: " << result.final_checkpoint << "\n";
  std::cout << "metric log: " << result.metrics_csv << "\n";
  return 0;
}

int cmd_remove(const std::string& ckpt, const std::string& in, const std::string& out) {
  auto m = load_model(ckpt);
  auto img = load_sized_image(in, m.mc.image_size);
  auto codes = encode_eval(m.store, m.mc, as_batch({img}));
  auto rec = decode_eval(m.store, m.mc, codes.background, zeros_like(codes.object));
  save_ppm(out, nth_image(rec, 0));
  return 0;
}

int cmd_transplant(const std::string& ckpt, const std::string& donor, const std::string& recipient,
                   const std::string& out) {
  auto m = load_model(ckpt);
  auto d = load_sized_image(donor, m.mc.image_size);
  auto r = load_sized_image(recipient, m.mc.image_size);
  auto dc = encode_eval(m.store, m.mc, as_batch({d}));
  auto rc = encode_eval(m.store, m.mc, as_batch({r}));
  auto img = decode_eval(m.store, m.mc, rc.background, dc.object);
  save_ppm(out, nth_image(img, 0));
  return 0;
}

int cmd_swap(const std::string& ckpt, const std::string& a_path, const std::string& b_path,
             const std::string& outdir) {
  auto m = load_model(ckpt);
  auto a = load_sized_image(a_path, m.mc.image_size);
  auto b = load_sized_image(b_path, m.mc.image_size);
  auto ca = encode_eval(m.store, m.mc, as_batch({a}));
  auto cb = encode_eval(m.store, m.mc, as_batch({b}));
  auto a_swapped = decode_eval(m.store, m.mc, ca.background, cb.object);  // A with b's object
  auto b_swapped = decode_eval(m.store, m.mc, cb.background, ca.object);  // B with a's object
  auto a_rec = decode_eval(m.store, m.mc, ca.background, ca.object);
  auto b_rec = decode_eval(m.store, m.mc, cb.background, cb.object);
  auto grid = hconcat_images({a, b, nth_image(a_swapped, 0), nth_image(b_swapped, 0), nth_image(a_rec, 0),
                              nth_image(b_rec, 0)});
  fs::create_directories(outdir);
  save_ppm((fs::path(outdir) / "swap_grid.ppm").string(), grid);
  return 0;
}

int cmd_interpolate(const std::string& ckpt, const std::vector<std::string>& donor_paths,
                    const std::string& recipient, std::int64_t k, const std::string& out) {
  if (donor_paths.empty() || donor_paths.size() > 4)
    throw ConfigError("interpolate: need between 1 and 4 --donors");
  if (k < 1) throw ConfigError("interpolate: --steps must be >= 1");
  auto m = load_model(ckpt);
  std::vector<Tensor<float>> donor_imgs;
  for (const auto& p : donor_paths) donor_imgs.push_back(load_sized_image(p, m.mc.image_size));
  auto r = load_sized_image(recipient, m.mc.image_size);
  auto rc = encode_eval(m.store, m.mc, as_batch({r}));
  auto dc = encode_eval(m.store, m.mc, as_batch(donor_imgs));

  const std::int64_t ulen = dc.object.numel() / static_cast<std::int64_t>(donor_paths.size());
  auto donor_u = [&](std::size_t i) {
    std::vector<float> v(dc.object.data.begin() + static_cast<std::ptrdiff_t>(i) * ulen,
                         dc.object.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * ulen);
    return v;
  };

  // rows of object vectors; empty rows entries render as black panels
  std::vector<std::vector<std::vector<float>>> grid_u;
  const std::size_t nd = donor_paths.size();
  if (nd == 1) {
    auto u1 = donor_u(0);
    std::vector<std::vector<float>> row;
    for (std::int64_t i = 0; i < k; ++i) {
      const float t = static_cast<float>(i + 1) / static_cast<float>(k);
      std::vector<float> u(u1.size());
      for (std::size_t j = 0; j < u.size(); ++j) u[j] = t * u1[j];
      row.push_back(std::move(u));
    }
    grid_u.push_back(std::move(row));
  } else if (nd == 2) {
    auto u1 = donor_u(0), u2 = donor_u(1);
    std::vector<std::vector<float>> row;
    for (std::int64_t i = 0; i <= k; ++i) {
      const float t = static_cast<float>(i) / static_cast<float>(k);
      std::vector<float> u(u1.size());
      for (std::size_t j = 0; j < u.size(); ++j) u[j] = (1.0f - t) * u1[j] + t * u2[j];
      row.push_back(std::move(u));
    }
    grid_u.push_back(std::move(row));
  } else if (nd == 3) {
    auto u1 = donor_u(0), u2 = donor_u(1), u3 = donor_u(2);
    for (std::int64_t i = 0; i <= k; ++i) {
      std::vector<std::vector<float>> row;
      for (std::int64_t j = 0; j <= i; ++j) {
        const float l1 = 1.0f - static_cast<float>(i) / static_cast<float>(k);
        const float l3 = static_cast<float>(j) / static_cast<float>(k);
        const float l2 = 1.0f - l1 - l3;
        std::vector<float> u(u1.size());
        for (std::size_t s = 0; s < u.size(); ++s) u[s] = l1 * u1[s] + l2 * u2[s] + l3 * u3[s];
        row.push_back(std::move(u));
      }
      grid_u.push_back(std::move(row));
    }
  } else {
    auto u1 = donor_u(0), u2 = donor_u(1), u3 = donor_u(2), u4 = donor_u(3);
    for (std::int64_t i = 0; i <= k; ++i) {
      std::vector<std::vector<float>> row;
      const float a = static_cast<float>(i) / static_cast<float>(k);
      for (std::int64_t j = 0; j <= k; ++j) {
        const float b = static_cast<float>(j) / static_cast<float>(k);
        std::vector<float> u(u1.size());
        for (std::size_t s = 0; s < u.size(); ++s)
          u[s] = (1 - a) * (1 - b) * u1[s] + (1 - a) * b * u2[s] + a * (1 - b) * u3[s] + a * b * u4[s];
        row.push_back(std::move(u));
      }
      grid_u.push_back(std::move(row));
    }
  }

  // decode every frame; background is the recipient's
  const std::int64_t hw = m.mc.bottleneck_hw();
  std::size_t max_cols = 0;
  for (const auto& row : grid_u) max_cols = std::max(max_cols, row.size());
  std::vector<Tensor<float>> out_rows;
  for (const auto& row : grid_u) {
    std::vector<Tensor<float>> panels;
    for (const auto& u : row) {
      Tensor<float> obj({1, m.mc.c_o, hw, hw}, u);
      Tensor<float> bg = rc.background;
      auto img = decode_eval(m.store, m.mc, bg, obj);
      panels.push_back(nth_image(img, 0));
    }
    while (panels.size() < max_cols)
      panels.push_back(Tensor<float>({3, m.mc.image_size, m.mc.image_size}));  // black pad
    out_rows.push_back(hconcat_images(panels));
  }
  save_ppm(out, vconcat_images(out_rows));
  return 0;
}

int cmd_scale(const std::string& ckpt, const std::string& in, const std::vector<double>& factors,
              const std::string& out) {
  if (factors.empty()) throw ConfigError("scale: --factors must not be empty");
  auto m = load_model(ckpt);
  auto img = load_sized_image(in, m.mc.image_size);
  auto codes = encode_eval(m.store, m.mc, as_batch({img}));
  std::vector<Tensor<float>> panels;
  for (double t : factors) {
    Tensor<float> obj = zeros_like(codes.object);
    if (t != 0.0)
      for (std::int64_t i = 0; i < obj.numel(); ++i)
        obj[i] = static_cast<float>(t) * codes.object[i];
    auto dec = decode_eval(m.store, m.mc, codes.background, obj);
    panels.push_back(nth_image(dec, 0));
  }
  save_ppm(out, hconcat_images(panels));
  return 0;
}

int cmd_eval_probe(const std::string& ckpt, std::int64_t n, std::uint64_t seed, const std::string& out_dir) {
  auto m = load_model(ckpt);
  auto samples = make_dataset(n, 1, m.mc.image_size, seed).with_object;
  auto r = disentanglement_probe(m.store, m.mc, samples);
  char row[512];
  std::snprintf(row, sizeof(row), "%llu,%lld,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%d,%d",
                static_cast<unsigned long long>(seed), static_cast<long long>(n), r.r2_object_from_u,
                r.r2_object_from_A, r.r2_u_darkness, r.r2_u_width, r.r2_u_tint, r.style_acc_u, r.r2_A_darkness,
                r.r2_A_width, r.r2_A_tint, r.style_acc_A, r.degenerate_u ? 1 : 0, r.degenerate_A ? 1 : 0);
  append_csv_row(out_dir, "probe.csv",
                 "seed,n,r2_object_from_u,r2_object_from_A,r2_u_darkness,r2_u_width,r2_u_tint,style_acc_u,"
                 "r2_A_darkness,r2_A_width,r2_A_tint,style_acc_A,degenerate_u,degenerate_A",
                 row);
  std::cout << "r2_object_from_u = " << r.r2_object_from_u << "\nr2_object_from_A = " << r.r2_object_from_A
            << "\nstyle_acc_u = " << r.style_acc_u << "\n";
  return 0;
}

int cmd_eval_drift(const std::string& ckpt, int pairs, std::uint64_t seed, const std::string& out_dir) {
  auto m = load_model(ckpt);
  auto r = drift_metric(m.store, m.mc, pairs, seed);
  char row[320];
  std::snprintf(row, sizeof(row), "%llu,%d,%.6g,%.6g,%.6g,%.6g,%.6g", static_cast<unsigned long long>(seed),
                pairs, r.match_rate, r.style_match_rate, r.mean_err_darkness, r.mean_err_width,
                r.mean_err_tint);
  append_csv_row(out_dir, "drift.csv",
                 "seed,pairs,match_rate,style_match_rate,mean_err_darkness,mean_err_width,mean_err_tint", row);
  std::cout << "match_rate = " << r.match_rate << "\nstyle_match_rate = " << r.style_match_rate << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GeneGAN object transfiguration"};
  app.require_subcommand(1);

  // train
  std::string config_path, data_dir, out_dir;
  std::int64_t synthetic = 0, steps_override = -1, seed_override = -1;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", config_path, "config file (key = value lines)");
  train_cmd->add_option("--data", data_dir, "dataset root with with/ and without/ subdirectories");
  train_cmd->add_option("--synthetic", synthetic, "generate N synthetic samples per set instead of --data");
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--steps", steps_override, "override config steps");
  train_cmd->add_option("--seed", seed_override, "override config seed");

  // single-image commands
  std::string ckpt, in_path, out_path, donor, recipient, a_path, b_path, swap_outdir;
  auto* remove_cmd = app.add_subcommand("remove", "reconstruct without the object");
  remove_cmd->add_option("--ckpt", ckpt)->required();
  remove_cmd->add_option("--in", in_path)->required();
  remove_cmd->add_option("--out", out_path)->required();

  auto* transplant_cmd = app.add_subcommand("transplant", "move the donor's object onto the recipient");
  transplant_cmd->add_option("--ckpt", ckpt)->required();
  transplant_cmd->add_option("--donor", donor)->required();
  transplant_cmd->add_option("--recipient", recipient)->required();
  transplant_cmd->add_option("--out", out_path)->required();

  auto* swap_cmd = app.add_subcommand("swap", "swap the objects of two images, emit a six-panel grid");
  swap_cmd->add_option("--ckpt", ckpt)->required();
  swap_cmd->add_option("--a", a_path)->required();
  swap_cmd->add_option("--b", b_path)->required();
  swap_cmd->add_option("--outdir", swap_outdir)->required();

  std::vector<std::string> donor_paths;
  std::int64_t interp_steps = 4;
  auto* interp_cmd = app.add_subcommand("interpolate", "interpolate between donor object vectors");
  interp_cmd->add_option("--ckpt", ckpt)->required();
  interp_cmd->add_option("--donors", donor_paths, "1-4 donor images")->required()->expected(1, 4);
  interp_cmd->add_option("--recipient", recipient)->required();
  interp_cmd->add_option("--steps", interp_steps, "interpolation steps");
  interp_cmd->add_option("--out", out_path)->required();

  std::vector<double> factors;
  auto* scale_cmd = app.add_subcommand("scale", "decode with the object vector scaled by each factor");
  scale_cmd->add_option("--ckpt", ckpt)->required();
  scale_cmd->add_option("--in", in_path)->required();
  scale_cmd->add_option("--factors", factors, "comma-separated factors")->required()->delimiter(',');
  scale_cmd->add_option("--out", out_path)->required();

  std::int64_t probe_n = 1000;
  std::uint64_t eval_seed = 1;
  std::string eval_out = ".";
  auto* probe_cmd = app.add_subcommand("eval-probe", "linear disentanglement probes on synthetic data");
  probe_cmd->add_option("--ckpt", ckpt)->required();
  probe_cmd->add_option("--n", probe_n, "number of probe samples");
  probe_cmd->add_option("--seed", eval_seed);
  probe_cmd->add_option("--out", eval_out, "metric log directory");

  int drift_pairs = 200;
  auto* drift_cmd = app.add_subcommand("eval-drift", "attribute-drift metric over synthetic swap pairs");
  drift_cmd->add_option("--ckpt", ckpt)->required();
  drift_cmd->add_option("--pairs", drift_pairs);
  drift_cmd->add_option("--seed", eval_seed);
  drift_cmd->add_option("--out", eval_out, "metric log directory");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient validation (float64)");

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) {
      if ((synthetic > 0) == !data_dir.empty())
        throw ConfigError("train: give exactly one of --data or --synthetic");
      return cmd_train(config_path, data_dir, synthetic, out_dir, steps_override, seed_override);
    }
    if (remove_cmd->parsed()) return cmd_remove(ckpt, in_path, out_path);
    if (transplant_cmd->parsed()) return cmd_transplant(ckpt, donor, recipient, out_path);
    if (swap_cmd->parsed()) return cmd_swap(ckpt, a_path, b_path, swap_outdir);
    if (interp_cmd->parsed()) return cmd_interpolate(ckpt, donor_paths, recipient, interp_steps, out_path);
    if (scale_cmd->parsed()) return cmd_scale(ckpt, in_path, factors, out_path);
    if (probe_cmd->parsed()) return cmd_eval_probe(ckpt, probe_n, eval_seed, eval_out);
    if (drift_cmd->parsed()) return cmd_eval_drift(ckpt, drift_pairs, eval_seed, eval_out);
    if (gradcheck_cmd->parsed()) return run_all_gradchecks(std::cout) ? 0 : 1;
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
