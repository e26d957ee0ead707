// Command-line surface for the smart copy-paste pipeline: training-data
// forging, toy-scale training, seamless paste inference, and numerics
// verification.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "smartpaste/forge.hpp"
#include "smartpaste/gradcheck.hpp"
#include "smartpaste/models.hpp"
#include "smartpaste/png_io.hpp"
#include "smartpaste/trainer.hpp"

namespace sp = smartpaste;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct ForgeArgs {
  std::string corpus, out;
  int count = 1;
  int crop = 64;
  double sigma = 15.0;
  std::string shading_mode = "local";
  bool identity_shading = false;
  uint64_t seed = 0;
};

int run_forge(const ForgeArgs& a) {
  sp::Corpus corpus = sp::Corpus::load(a.corpus);
  std::filesystem::create_directories(a.out);
  sp::ForgeConfig cfg;
  cfg.crop_size = a.crop;
  cfg.sigma = a.sigma;
  cfg.shading_mode = a.shading_mode == "global" ? sp::ShadingMode::kGlobal
                                                : sp::ShadingMode::kLocal;
  cfg.identity_shading = a.identity_shading;
  for (int i = 0; i < a.count; ++i) {
    sp::Rng rng(a.seed, sp::Rng::stream(1, uint64_t(i)));
    sp::Rng pick(a.seed, sp::Rng::stream(2, uint64_t(i)));
    size_t idx = size_t(pick.next_u64() % corpus.size());
    sp::TrainingSample s = sp::forge_sample(corpus, idx, cfg, rng);
    char id[32];
    std::snprintf(id, sizeof(id), "%06d", i);
    std::string base = a.out + "/" + id;
    sp::write_png(base + "_gt.png", s.ground_truth);
    sp::Tensor rgb({s.input.h(), s.input.w(), 3});
    for (int y = 0; y < rgb.h(); ++y)
      for (int x = 0; x < rgb.w(); ++x)
        for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = s.input.at(y, x, c);
    sp::write_png(base + "_input.png", rgb);
    sp::write_png(base + "_mask.png", s.mask);
    std::string tmp = base + "_record.json.tmp";
    {
      std::ofstream rec(tmp, std::ios::trunc);
      if (!rec) throw sp::DataError("cannot write " + tmp);
      rec << s.transform.to_json().dump(2) << "\n";
    }
    std::filesystem::rename(tmp, base + "_record.json");
  }
  std::cout << "wrote " << a.count << " sample(s) to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus, out, log;
  std::string resume;
  sp::TrainConfig cfg;
  std::string shading_mode = "local";
  std::string noise_mode = "layers";
};

int run_train(TrainArgs& a) {
  a.cfg.forge.shading_mode = a.shading_mode == "global"
                                 ? sp::ShadingMode::kGlobal
                                 : sp::ShadingMode::kLocal;
  a.cfg.generator.noise_mode = a.noise_mode == "layers"
                                   ? sp::NoiseMode::kLayers
                               : a.noise_mode == "input_channel"
                                   ? sp::NoiseMode::kInputChannel
                                   : sp::NoiseMode::kOff;
  a.cfg.critic.base_resolution = a.cfg.forge.crop_size;
  a.cfg.validate();
  sp::Corpus corpus = sp::Corpus::load(a.corpus);
  if (!a.resume.empty()) {
    sp::LoadedCheckpoint lc = sp::load_train_checkpoint(a.resume);
    sp::TrainConfig cfg = lc.config;
    cfg.iterations = a.cfg.iterations;
    sp::train(corpus, cfg, a.out, a.log, lc.iteration, &lc.generator,
              &lc.critic);
  } else {
    sp::train(corpus, a.cfg, a.out, a.log);
  }
  std::cout << "checkpoint written to " << a.out << "\n";
  return 0;
}

struct PasteArgs {
  std::string ckpt, source, target, mask, out;
  uint64_t noise_seed = 0;
};

int run_paste(const PasteArgs& a) {
  sp::LoadedCheckpoint lc = sp::load_train_checkpoint(a.ckpt);
  sp::Tensor target = sp::read_png(a.target);
  sp::Tensor source = sp::read_png(a.source);
  sp::Tensor mask = sp::read_mask_png(a.mask);
  auto as_rgb = [](const sp::Tensor& t) {
    sp::Tensor rgb({t.h(), t.w(), 3});
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x)
        for (int c = 0; c < 3; ++c)
          rgb.at(y, x, c) = t.at(y, x, std::min(c, t.c() - 1));
    return rgb;
  };
  sp::Tensor tgt = as_rgb(target);
  sp::Tensor src = as_rgb(source);
  if (!tgt.same_shape(src) || mask.h() != tgt.h() || mask.w() != tgt.w()) {
    std::cerr << "error: dimension mismatch: target " << tgt.h() << "x"
              << tgt.w() << ", source " << src.h() << "x" << src.w()
              << ", mask " << mask.h() << "x" << mask.w() << "\n";
    return kExitData;
  }
  if (tgt.h() % 8 != 0 || tgt.w() % 8 != 0) {
    std::cerr << "error: image dims " << tgt.h() << "x" << tgt.w()
              << " not divisible by 8; pad or crop the inputs first\n";
    return kExitData;
  }
  // X = (target (1-M) + source M, M)
  sp::Tensor x({tgt.h(), tgt.w(), 4});
  sp::Tensor composite_src = src;
  for (int y = 0; y < tgt.h(); ++y)
    for (int xx = 0; xx < tgt.w(); ++xx) {
      bool inside = mask.at(y, xx, 0) != 0.0;
      for (int c = 0; c < 3; ++c)
        x.at(y, xx, c) = inside ? src.at(y, xx, c) : tgt.at(y, xx, c);
      x.at(y, xx, 3) = inside ? 1.0 : 0.0;
    }
  sp::Rng noise(a.noise_seed, 0);
  sp::NodePtr residual = sp::generator_forward(
      sp::constant(x), lc.generator, lc.config.generator, noise, false);
  sp::NodePtr y = sp::composite_output(residual, src, tgt, mask);
  sp::write_png(a.out, sp::clamp01(y->value));
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

int run_gradcheck(const std::string& op, double tol) {
  auto results = sp::run_gradcheck(tol, std::max(tol, 1e-3));
  bool all_ok = true;
  bool matched = false;
  for (const auto& r : results) {
    if (op != "all" && r.op != op) continue;
    matched = true;
    std::printf("%-28s max_rel_error=%.3e tol=%.0e %s\n", r.op.c_str(),
                r.max_rel_error, r.tolerance, r.passed ? "ok" : "FAIL");
    all_ok = all_ok && r.passed;
  }
  if (!matched) {
    std::cerr << "error: unknown op '" << op << "'\n";
    return kExitUsage;
  }
  return all_ok ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smartpaste: self-supervised seamless copy-paste"};
  app.require_subcommand(1);

  ForgeArgs fa;
  auto* forge = app.add_subcommand("forge", "forge training samples");
  forge->add_option("--corpus", fa.corpus, "corpus directory")->required();
  forge->add_option("--out", fa.out, "output directory")->required();
  forge->add_option("--count", fa.count, "number of samples");
  forge->add_option("--crop", fa.crop, "crop size");
  forge->add_option("--sigma", fa.sigma, "corner jitter strength (px)");
  forge->add_option("--shading-mode", fa.shading_mode, "local|global")
      ->check(CLI::IsMember({"local", "global"}));
  forge->add_flag("--identity-shading", fa.identity_shading,
                  "disable the shading transform");
  forge->add_option("--seed", fa.seed, "rng seed");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train generator and critic");
  train->add_option("--corpus", ta.corpus, "corpus directory")->required();
  train->add_option("--out", ta.out, "checkpoint path")->required();
  train->add_option("--log", ta.log, "metrics log path");
  train->add_option("--resume", ta.resume, "checkpoint to resume from");
  train->add_option("--iters", ta.cfg.iterations, "training iterations");
  train->add_option("--res", ta.cfg.forge.crop_size, "training crop size");
  train->add_option("--batch", ta.cfg.batch_size, "batch size");
  train->add_option("--sigma", ta.cfg.forge.sigma, "corner jitter (px)");
  train->add_option("--lr", ta.cfg.lr, "learning rate");
  train->add_option("--beta1", ta.cfg.beta1, "Adam beta1");
  train->add_option("--beta2", ta.cfg.beta2, "Adam beta2");
  train->add_option("--lambda-gp", ta.cfg.lambda_gp, "gradient penalty weight");
  train->add_option("--alpha", ta.cfg.alpha, "adversarial weight");
  train->add_option("--gamma", ta.cfg.gamma, "logit-norm weight");
  train->add_option("--d-steps", ta.cfg.d_steps_per_g,
                    "critic steps per generator step");
  train->add_option("--checkpoint-every", ta.cfg.checkpoint_every,
                    "checkpoint interval");
  train->add_option("--seed", ta.cfg.seed, "rng seed");
  train->add_option("--shading-mode", ta.shading_mode, "local|global")
      ->check(CLI::IsMember({"local", "global"}));
  train->add_flag("--identity-shading", ta.cfg.forge.identity_shading,
                  "disable the shading transform");
  train->add_flag("--fixed-mask", ta.cfg.forge.fixed_mask,
                  "use a fixed centered mask");
  train->add_option("--noise-mode", ta.noise_mode, "layers|input_channel|off")
      ->check(CLI::IsMember({"layers", "input_channel", "off"}));

  PasteArgs pa;
  auto* paste = app.add_subcommand("paste", "composite a masked source region");
  paste->add_option("--ckpt", pa.ckpt, "trained checkpoint")->required();
  paste->add_option("--source", pa.source, "source PNG")->required();
  paste->add_option("--target", pa.target, "target PNG")->required();
  paste->add_option("--mask", pa.mask, "binary mask PNG")->required();
  paste->add_option("--out", pa.out, "output PNG")->required();
  paste->add_option("--noise-seed", pa.noise_seed, "noise seed");

  std::string gc_op = "all";
  double gc_tol = 1e-4;
  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--ops", gc_op, "all or a single op name");
  gradcheck->add_option("--tol", gc_tol, "relative error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*forge) return run_forge(fa);
    if (*train) return run_train(ta);
    if (*paste) return run_paste(pa);
    if (*gradcheck) return run_gradcheck(gc_op, gc_tol);
  } catch (const sp::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const sp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const sp::ImageIoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const sp::CheckpointError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
