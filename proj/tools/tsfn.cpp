// Command-line front end: dataset generation, training, evaluation,
// gradient checking, reports.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "tsfn/eval.hpp"
#include "tsfn/gradcheck.hpp"
#include "tsfn/loss.hpp"
#include "tsfn/model.hpp"
#include "tsfn/oracles.hpp"
#include "tsfn/synth.hpp"
#include "tsfn/train.hpp"

namespace {

using namespace tsfn;

nlohmann::json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  nlohmann::json j;
  is >> j;
  return j;
}

ModelConfig micro_config() {
  ModelConfig mc;
  mc.frames = 6;
  mc.height = 8;
  mc.width = 8;
  mc.encoder_channels = {2};
  mc.tcn_channels = {3};
  mc.tcn_dilations = {1};
  mc.r2_channels = {2};
  mc.r2_mid_channels = {2};
  mc.fc_widths = {6, 5, kClassCount};
  mc.seed = 3;
  return mc;
}

int run_gradcheck(std::uint64_t seed) {
  ModelConfig mc = micro_config();
  mc.seed = seed;
  SynthConfig scfg;
  scfg.t = mc.frames;
  scfg.h = mc.height;
  scfg.w = mc.width;
  scfg.seed = seed;

  LossWeights w;
  w.views = 2;

  Batch batch;
  for (int i = 0; i < 2; ++i) {
    Sample s;
    s.clip = render_gesture(gesture_from_code(i), seed + i, scfg);
    s.label = gesture_from_code(i);
    s.distance = i == 0 ? 5.0 : 23.0;
    s.seed = seed + 100 + i;
    batch.samples.push_back(std::move(s));
  }

  auto loss_fn = [&](const ModelParams& p) {
    return composite_loss(p, mc, batch, w, scfg).total;
  };
  auto grad_fn = [&](ModelParams& p) {
    p.for_each_tensor([](Tensor& t) { t.zero_grad(); });
    batch_loss_backward(p, mc, batch, w, scfg);
  };

  const double err = grad_check(loss_fn, grad_fn, init_params(mc), 1e-5, 6);
  std::cout << "gradcheck max relative error: " << err << "\n";
  if (err >= 1e-4) {
    std::cout << "FAIL (threshold 1e-4)\n";
    return 1;
  }
  std::cout << "PASS (threshold 1e-4)\n";
  return 0;
}

int run_oracles(std::uint64_t seed) {
  Rng rng(seed);
  bool ok = true;
  auto check = [&ok](const char* name, bool pass) {
    std::cout << (pass ? "PASS " : "FAIL ") << name << "\n";
    ok = ok && pass;
  };

  auto rand_tensor = [&rng](Shape s) {
    Tensor t(std::move(s));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
  };

  // convolution equivalence on randomized micro-instances
  double worst1 = 0, worst2 = 0, worst3 = 0;
  for (int it = 0; it < 100; ++it) {
    const std::size_t C = 1 + rng.below(4), K = 1 + rng.below(4);
    const std::size_t T = 2 + rng.below(7), dt = 1 + rng.below(std::min<std::size_t>(3, T));
    ConvSpec s1;
    s1.out_channels = K;
    s1.in_channels = C;
    s1.temporal_extent = dt;
    s1.dilation = 1 + rng.below(2);
    s1.padding = it % 3 == 0 ? Padding::same : (it % 3 == 1 ? Padding::valid : Padding::causal);
    if (s1.dilation * (dt - 1) + 1 > T) s1.dilation = 1;
    if (s1.dilation * (dt - 1) + 1 > T) continue;
    Tensor x = rand_tensor({C, T});
    Tensor k1 = rand_tensor({K, C, dt});
    Tensor b1 = rand_tensor({K});
    Tensor got = conv1d_temporal(x, k1, b1, s1);
    Tensor want = oracle::conv1d(x, k1, b1, s1);
    for (std::size_t i = 0; i < got.size(); ++i)
      worst1 = std::max(worst1, std::abs(got[i] - want[i]));

    const std::size_t H = 3 + rng.below(6), W = 3 + rng.below(6);
    const std::size_t ke = 1 + 2 * rng.below(2);
    ConvSpec s2;
    s2.out_channels = K;
    s2.in_channels = C;
    s2.spatial_extent = ke;
    s2.stride = 1 + rng.below(2);
    s2.padding = it % 2 ? Padding::same : Padding::valid;
    Tensor xi = rand_tensor({C, H, W});
    Tensor k2 = rand_tensor({K, C, ke, ke});
    Tensor b2 = rand_tensor({K});
    Tensor g2 = conv2d_spatial(xi, k2, b2, s2);
    Tensor w2 = oracle::conv2d(xi, k2, b2, s2);
    for (std::size_t i = 0; i < g2.size(); ++i)
      worst2 = std::max(worst2, std::abs(g2[i] - w2[i]));

    const std::size_t T3 = 2 + rng.below(4), H3 = 3 + rng.below(4);
    const std::size_t dt3 = 1 + rng.below(T3), ke3 = 1 + rng.below(std::min<std::size_t>(3, H3));
    ConvSpec s3;
    s3.out_channels = K;
    s3.in_channels = C;
    s3.temporal_extent = dt3;
    s3.spatial_extent = ke3;
    Tensor x3 = rand_tensor({C, T3, H3, H3});
    Tensor k3 = rand_tensor({K, C, dt3, ke3, ke3});
    Tensor g3 = conv3d_reference(x3, k3, s3);
    Tensor w3 = oracle::conv3d(x3, k3);
    for (std::size_t i = 0; i < g3.size(); ++i)
      worst3 = std::max(worst3, std::abs(g3[i] - w3[i]));
  }
  check("conv1d_temporal vs nested-loop oracle (<=1e-12)", worst1 <= 1e-12);
  check("conv2d_spatial vs nested-loop oracle (<=1e-12)", worst2 <= 1e-12);
  check("conv3d_reference vs quadruple-loop oracle (<=1e-12)", worst3 <= 1e-12);

  // mAP oracle
  double worst_ap = 0;
  for (int it = 0; it < 100; ++it) {
    const std::size_t n = 2 + rng.below(7);
    std::vector<std::pair<double, bool>> scored;
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pos = rng.below(2) == 0;
      any = any || pos;
      scored.emplace_back(rng.uniform(), pos);
    }
    if (!any) scored[0].second = true;
    worst_ap = std::max(worst_ap,
                        std::abs(average_precision(scored) - oracle::average_precision(scored)));
  }
  check("average_precision vs brute-force ranking oracle (<=1e-9)", worst_ap <= 1e-9);

  // loss degeneracies
  {
    Batch b;
    Sample s;
    s.clip = VideoClip(4, 4, 4);
    s.distance = 4.0;
    b.samples.push_back(s);
    s.distance = 28.0;
    b.samples.push_back(s);
    const double ld = distance_loss(b, {0.5, 1.0});
    bool pass = std::abs(ld - ((4.0 * 0.5 + 28.0 * 1.0) / 2.0)) < 1e-15;
    check("distance_loss hand case (4*0.5 + 28*1.0)/2 == 15", pass);
    std::vector<double> ces = {0.2, 0.6};
    check("robustness variance hand case 0.08",
          std::abs(population_variance_times_m(ces) - 0.08) < 1e-15);
  }

  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TSFN: ultra-range gesture recognition on synthetic video"};
  app.require_subcommand(1);

  std::string config_path, out_path, manifest_path, checkpoint_path, split = "test";
  std::string dump_path, metrics_path, log_path, ablation_str, optimizer_str;
  std::uint64_t seed = 0;
  bool seed_set = false, overwrite = false, components = false;
  double lr = -1;
  long epochs = -1, batch_size = -1, spm = -1, views = -1;
  double alpha = -1, beta = -1, gamma = -1;
  std::vector<std::string> results;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
      seed_set = true;
    });
    cmd->add_option("--out", out_path, "output path");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic gesture dataset");
  add_common(gen);
  gen->add_option("--samples-per-meter", spm, "samples per (class, meter) cell");
  gen->add_flag("--overwrite", overwrite, "replace an existing manifest");

  auto* tr = app.add_subcommand("train", "train a model on a generated dataset");
  add_common(tr);
  tr->add_option("--manifest", manifest_path, "dataset manifest path");
  tr->add_option("--checkpoint", checkpoint_path, "checkpoint output path");
  tr->add_option("--epochs", epochs, "training epochs");
  tr->add_option("--lr", lr, "learning rate");
  tr->add_option("--batch-size", batch_size, "batch size");
  tr->add_option("--optimizer", optimizer_str, "sgd | sgd_momentum | adam");
  tr->add_option("--ablation", ablation_str, "full | tcn_only | r2plus1d_only");
  tr->add_option("--alpha", alpha, "global context weight");
  tr->add_option("--beta", beta, "distance loss weight");
  tr->add_option("--gamma", gamma, "robustness weight");
  tr->add_option("--views", views, "robustness views M");
  tr->add_option("--log", log_path, "training log CSV path");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
  ev->add_option("--manifest", manifest_path, "dataset manifest path")->required();
  ev->add_option("--split", split, "train | test | all");
  ev->add_option("--dump", dump_path, "per-sample prediction dump CSV");
  ev->add_option("--ablation", ablation_str, "full | tcn_only | r2plus1d_only");
  ev->add_flag("--components", components, "also report loss component breakdown");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the composite loss");
  add_common(gc);

  auto* cv = app.add_subcommand("curve", "emit the accuracy-vs-distance CSV");
  add_common(cv);
  cv->add_option("--metrics", metrics_path, "metrics JSON from eval --out")->required();

  auto* cp = app.add_subcommand("compare", "emit the model comparison table");
  add_common(cp);
  cp->add_option("--result", results, "name=metrics.json (repeatable)");

  auto* orc = app.add_subcommand("oracle", "run the brute-force oracle suite");
  add_common(orc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      SynthConfig cfg;
      if (!config_path.empty()) cfg = synth_config_from_json(load_json(config_path));
      if (seed_set) cfg.seed = seed;
      if (spm > 0) cfg.samples_per_meter = static_cast<std::size_t>(spm);
      if (out_path.empty()) out_path = "data";
      const Manifest m = generate_dataset(cfg, out_path, overwrite);
      std::cout << "wrote " << m.samples.size() << " clips to " << out_path << "\n";
      return 0;
    }

    if (tr->parsed()) {
      TrainConfig cfg;
      if (!config_path.empty()) cfg = train_config_from_json(load_json(config_path));
      if (seed_set) cfg.seed = seed;
      if (!manifest_path.empty()) cfg.manifest = manifest_path;
      if (!checkpoint_path.empty()) cfg.checkpoint_path = checkpoint_path;
      if (!log_path.empty()) cfg.log_path = log_path;
      if (epochs > 0) cfg.epochs = static_cast<std::size_t>(epochs);
      if (lr >= 0) cfg.learning_rate = lr;
      if (batch_size > 0) cfg.batch_size = static_cast<std::size_t>(batch_size);
      if (!optimizer_str.empty()) cfg.optimizer = optimizer_from_string(optimizer_str);
      if (!ablation_str.empty()) cfg.ablation = ablation_from_string(ablation_str);
      if (alpha >= 0) cfg.loss_weights.alpha = alpha;
      if (beta >= 0) cfg.loss_weights.beta = beta;
      if (gamma >= 0) cfg.loss_weights.gamma = gamma;
      if (views > 0) cfg.loss_weights.views = static_cast<std::size_t>(views);
      cfg.validate();
      const TrainResult res = train(cfg);
      std::cout << "trained " << cfg.epochs << " epochs; final train loss "
                << res.log.back().total << ", train accuracy " << res.log.back().train_acc
                << "\ncheckpoint: " << cfg.checkpoint_path
                << "\nlog: " << cfg.effective_log_path() << "\n";
      return 0;
    }

    if (ev->parsed()) {
      auto [mc, params] = load_checkpoint_file(checkpoint_path);
      const Manifest m = load_manifest(manifest_path);
      const std::string want = split == "all" ? "" : split;
      const Ablation abl = ablation_str.empty() ? Ablation::full
                                                : ablation_from_string(ablation_str);
      std::vector<PredictionRecord> dump;
      const Metrics metrics =
          evaluate(params, mc, m, want, dump_path.empty() ? nullptr : &dump, abl);
      nlohmann::json j = metrics_to_json(metrics);
      if (components) {
        Batch batch;
        for (const auto* r : m.rows(want)) batch.samples.push_back(load_sample(m, *r));
        LossWeights w;
        const LossBreakdown b = composite_loss(params, mc, batch, w, m.config, abl);
        j["components"] = {{"total", b.total},
                           {"ce", b.ce},
                           {"global", b.global_ctx},
                           {"dist", b.dist},
                           {"robust", b.robust}};
      }
      std::cout << "accuracy " << format_fixed(metrics.accuracy, 4) << "  mean_loss "
                << format_fixed(metrics.mean_loss, 4) << "  mAP "
                << format_fixed(metrics.map, 4) << "  n " << metrics.n_samples << "\n";
      for (const auto& w : metrics.warnings) std::cout << "warning: " << w << "\n";
      if (!out_path.empty()) {
        std::ofstream os(out_path);
        if (!os) throw IoError("cannot write metrics: " + out_path);
        os << j.dump(2) << "\n";
      }
      if (!dump_path.empty()) {
        std::ofstream os(dump_path);
        if (!os) throw IoError("cannot write prediction dump: " + dump_path);
        os << "file,label,predicted,distance_m\n";
        for (const auto& r : dump)
          os << r.file << "," << r.label << "," << r.predicted << "," << r.distance_m << "\n";
      }
      return 0;
    }

    if (gc->parsed()) return run_gradcheck(seed_set ? seed : 11);

    if (cv->parsed()) {
      const Metrics m = metrics_from_json(load_json(metrics_path));
      if (out_path.empty()) out_path = "distance_curve.csv";
      emit_distance_curve(m, out_path);
      std::cout << "wrote " << out_path << "\n";
      return 0;
    }

    if (cp->parsed()) {
      std::vector<std::pair<std::string, Metrics>> rs;
      for (const auto& spec : results) {
        const auto pos = spec.find('=');
        if (pos == std::string::npos)
          throw InvalidInput("--result expects name=metrics.json, got " + spec);
        rs.emplace_back(spec.substr(0, pos), metrics_from_json(load_json(spec.substr(pos + 1))));
      }
      if (out_path.empty()) {
        report_comparison(rs, std::cout);
      } else {
        report_comparison_file(rs, out_path);
        std::cout << "wrote " << out_path << "\n";
      }
      return 0;
    }

    if (orc->parsed()) return run_oracles(seed_set ? seed : 17);
  } catch (const tsfn::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
