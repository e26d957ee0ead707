#ifndef SMARTPASTE_TRAINER_HPP
#define SMARTPASTE_TRAINER_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "autodiff.hpp"
#include "checkpoint.hpp"
#include "forge.hpp"
#include "models.hpp"
#include "rng.hpp"

namespace smartpaste {

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lambda_gp = 10.0;
  double alpha = 1e-4;   // adversarial weight in the generator objective
  double gamma = 1e-3;   // logit-norm regularizer weight
  double beta1 = 0.0;
  double beta2 = 0.9;
  double lr = 2e-4;
  double adam_eps = 1e-8;
  int batch_size = 4;
  int iterations = 2000;
  int d_steps_per_g = 1;
  int checkpoint_every = 500;
  uint64_t seed = 0;
  ForgeConfig forge;
  GeneratorConfig generator;
  CriticConfig critic;

  void validate() const {
    if (!(lr > 0 && adam_eps > 0 && lambda_gp >= 0 && alpha >= 0 && gamma >= 0))
      throw ConfigError("rates and weights must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 > 0 && beta2 < 1))
      throw ConfigError("Adam betas must lie in [0,1)");
    if (batch_size < 1 || iterations < 0 || d_steps_per_g < 1)
      throw ConfigError("batch/iteration counts must be positive");
    if (forge.crop_size % 8 != 0)
      throw ConfigError("crop size must be divisible by 8");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["lambda_gp"] = lambda_gp;
    j["alpha"] = alpha;
    j["gamma"] = gamma;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["lr"] = lr;
    j["adam_eps"] = adam_eps;
    j["batch_size"] = batch_size;
    j["iterations"] = iterations;
    j["d_steps_per_g"] = d_steps_per_g;
    j["checkpoint_every"] = checkpoint_every;
    j["seed"] = seed;
    j["crop_size"] = forge.crop_size;
    j["sigma"] = forge.sigma;
    j["shading_mode"] =
        forge.shading_mode == ShadingMode::kLocal ? "local" : "global";
    j["identity_shading"] = forge.identity_shading;
    j["fixed_mask"] = forge.fixed_mask;
    j["mask_area"] = {forge.mask.area_min, forge.mask.area_max};
    j["mask_aspect"] = {forge.mask.aspect_min, forge.mask.aspect_max};
    j["mask_rotation"] = {forge.mask.rot_min, forge.mask.rot_max};
    j["noise_mode"] = generator.noise_mode == NoiseMode::kLayers ? "layers"
                      : generator.noise_mode == NoiseMode::kInputChannel
                          ? "input_channel"
                          : "off";
    j["enc_channels"] = generator.enc_channels;
    j["dilation"] = generator.dilation;
    j["critic_global_channels"] = critic.global_channels;
    j["critic_local_channels"] = critic.local_channels;
    return j;
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lambda_gp = j.at("lambda_gp");
    c.alpha = j.at("alpha");
    c.gamma = j.at("gamma");
    c.beta1 = j.at("beta1");
    c.beta2 = j.at("beta2");
    c.lr = j.at("lr");
    c.adam_eps = j.at("adam_eps");
    c.batch_size = j.at("batch_size");
    c.iterations = j.at("iterations");
    c.d_steps_per_g = j.at("d_steps_per_g");
    c.checkpoint_every = j.at("checkpoint_every");
    c.seed = j.at("seed");
    c.forge.crop_size = j.at("crop_size");
    c.forge.sigma = j.at("sigma");
    c.forge.shading_mode = j.at("shading_mode") == "local"
                               ? ShadingMode::kLocal
                               : ShadingMode::kGlobal;
    c.forge.identity_shading = j.at("identity_shading");
    c.forge.fixed_mask = j.at("fixed_mask");
    c.forge.mask.area_min = j.at("mask_area").at(0);
    c.forge.mask.area_max = j.at("mask_area").at(1);
    c.forge.mask.aspect_min = j.at("mask_aspect").at(0);
    c.forge.mask.aspect_max = j.at("mask_aspect").at(1);
    c.forge.mask.rot_min = j.at("mask_rotation").at(0);
    c.forge.mask.rot_max = j.at("mask_rotation").at(1);
    std::string nm = j.at("noise_mode");
    c.generator.noise_mode = nm == "layers" ? NoiseMode::kLayers
                             : nm == "input_channel" ? NoiseMode::kInputChannel
                                                     : NoiseMode::kOff;
    for (size_t i = 0; i < 3; ++i)
      c.generator.enc_channels[i] = j.at("enc_channels").at(i);
    for (size_t i = 0; i < 7; ++i)
      c.generator.dilation[i] = j.at("dilation").at(i);
    for (size_t i = 0; i < 4; ++i)
      c.critic.global_channels[i] = j.at("critic_global_channels").at(i);
    for (size_t i = 0; i < 3; ++i)
      c.critic.local_channels[i] = j.at("critic_local_channels").at(i);
    c.critic.base_resolution = c.forge.crop_size;
    return c;
  }
};

/// I_u = u*I + (1-u)*Y along the straight line between real and generated.
inline Tensor interpolate_pair(const Tensor& real, const Tensor& fake,
                               double u) {
  require(real.same_shape(fake), "interpolate shape mismatch");
  Tensor out = real;
  for (int64_t i = 0; i < out.size(); ++i)
    out.data[i] = u * real.data[i] + (1.0 - u) * fake.data[i];
  return out;
}

struct LossParts {
  double l_rec = 0.0;
  double wasserstein = 0.0;  // E[D(I)] - E[D(Y)]
  double gp = 0.0;
  double d_loss = 0.0;
  double g_loss = 0.0;
};

namespace train_detail {

// RNG stream purposes
constexpr uint64_t kStreamForge = 1;
constexpr uint64_t kStreamNoiseD = 2;
constexpr uint64_t kStreamNoiseG = 3;
constexpr uint64_t kStreamGpU = 4;
constexpr uint64_t kStreamInit = 5;
constexpr uint64_t kStreamCorpus = 6;

inline double scalar_of(const NodePtr& n) { return n->value.data[0]; }

/// Collect gradient values per parameter name; parameters absent from the
/// graph get zeros.
inline std::unordered_map<std::string, Tensor> param_gradients(
    const NodePtr& loss, ParamStore& store) {
  GradMap grads = backward(loss);
  std::unordered_map<std::string, Tensor> out;
  // walk the graph for named leaves
  std::vector<NodePtr> stack{loss};
  std::unordered_set<const Node*> seen{loss.get()};
  while (!stack.empty()) {
    NodePtr n = stack.back();
    stack.pop_back();
    if (!n->name.empty() && n->requires_grad) {
      auto it = grads.find(n.get());
      if (it != grads.end()) {
        auto acc = out.find(n->name);
        if (acc == out.end())
          out.emplace(n->name, it->second->value);
        else
          for (int64_t i = 0; i < acc->second.size(); ++i)
            acc->second.data[i] += it->second->value.data[i];
      }
    }
    for (const auto& in : n->inputs)
      if (in && !seen.count(in.get())) {
        seen.insert(in.get());
        stack.push_back(in);
      }
  }
  for (const auto& [name, p] : store.params)
    if (!out.count(name)) out.emplace(name, Tensor::zeros(p.value.shape));
  return out;
}

}  // namespace train_detail

/// Standard Adam with bias correction; one step over every parameter in the
/// store. Parameters and moments are quantized to float32 afterwards so the
/// live state always equals its checkpoint image.
inline void adam_step(ParamStore& store,
                      const std::unordered_map<std::string, Tensor>& grads,
                      const TrainConfig& cfg) {
  store.step += 1;
  double t = double(store.step);
  double bc1 = 1.0 - std::pow(cfg.beta1, t);
  double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : store.params) {
    auto it = grads.find(name);
    require(it != grads.end(), "missing gradient for parameter");
    const Tensor& g = it->second;
    require(g.same_shape(p.value), "gradient shape mismatch");
    for (int64_t i = 0; i < g.size(); ++i) {
      double gi = g.data[i];
      p.m.data[i] = cfg.beta1 * p.m.data[i] + (1.0 - cfg.beta1) * gi;
      p.v.data[i] = cfg.beta2 * p.v.data[i] + (1.0 - cfg.beta2) * gi * gi;
      double mhat = p.m.data[i] / bc1;
      double vhat = p.v.data[i] / bc2;
      p.value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
  quantize_store_f32(store);
}

/// Gradient-penalty term for one sample: (||grad_{Iu} D(Iu)||_2 - 1)^2, with
/// the condition channels held fixed.
inline NodePtr gradient_penalty_node(const Tensor& interp,
                                     const NodePtr& condition,
                                     const Tensor& mask, ParamStore& critic,
                                     const CriticConfig& ccfg) {
  NodePtr iu = leaf(interp);
  NodePtr d = critic_forward(iu, condition, mask, critic, ccfg);
  NodePtr grad = input_gradient_graph(d, iu);
  NodePtr norm = sqrt_node(add_scalar(sum_all(square(grad)), 1e-24));
  return square(add_scalar(norm, -1.0));
}

struct BatchGraphs {
  NodePtr d_loss;
  NodePtr g_loss;
  LossParts parts;
};

/// E[D(Y)] - E[D(I)] + lambda*E[(||grad D(Iu)||-1)^2] + gamma*E[D(I)^2],
/// averaged over the batch; the critic minimizes this.
inline NodePtr critic_loss(const std::vector<Tensor>& reals,
                           const std::vector<Tensor>& fakes,
                           const std::vector<NodePtr>& conditions,
                           const std::vector<Tensor>& masks,
                           const std::vector<double>& us, ParamStore& critic,
                           const TrainConfig& cfg, LossParts* parts = nullptr) {
  size_t n = reals.size();
  NodePtr acc_fake, acc_real, acc_gp, acc_reg;
  for (size_t b = 0; b < n; ++b) {
    NodePtr d_real = critic_forward(constant(reals[b]), conditions[b],
                                    masks[b], critic, cfg.critic);
    NodePtr d_fake = critic_forward(constant(fakes[b]), conditions[b],
                                    masks[b], critic, cfg.critic);
    Tensor interp = interpolate_pair(reals[b], fakes[b], us[b]);
    NodePtr gp = gradient_penalty_node(interp, conditions[b], masks[b], critic,
                                       cfg.critic);
    NodePtr reg = square(d_real);
    acc_fake = acc_fake ? add(acc_fake, d_fake) : d_fake;
    acc_real = acc_real ? add(acc_real, d_real) : d_real;
    acc_gp = acc_gp ? add(acc_gp, gp) : gp;
    acc_reg = acc_reg ? add(acc_reg, reg) : reg;
  }
  double inv = 1.0 / double(n);
  acc_fake = scalar_mul(acc_fake, inv);
  acc_real = scalar_mul(acc_real, inv);
  acc_gp = scalar_mul(acc_gp, inv);
  acc_reg = scalar_mul(acc_reg, inv);
  NodePtr loss = add(sub(acc_fake, acc_real),
                     add(scalar_mul(acc_gp, cfg.lambda_gp),
                         scalar_mul(acc_reg, cfg.gamma)));
  if (parts) {
    parts->wasserstein = train_detail::scalar_of(acc_real) -
                         train_detail::scalar_of(acc_fake);
    parts->gp = train_detail::scalar_of(acc_gp);
    parts->d_loss = train_detail::scalar_of(loss);
  }
  return loss;
}

/// L_rec(Y, I) + alpha * (-E[D(Y)]); the generator minimizes this.
inline NodePtr generator_loss(const std::vector<NodePtr>& composites,
                              const std::vector<Tensor>& reals,
                              const std::vector<NodePtr>& conditions,
                              const std::vector<Tensor>& masks,
                              ParamStore& critic, const TrainConfig& cfg,
                              LossParts* parts = nullptr) {
  size_t n = composites.size();
  NodePtr acc_rec, acc_adv;
  for (size_t b = 0; b < n; ++b) {
    NodePtr l1 = mean_all(abs_node(sub(composites[b], constant(reals[b]))));
    NodePtr d_fake = critic_forward(composites[b], conditions[b], masks[b],
                                    critic, cfg.critic, /*trainable=*/false);
    acc_rec = acc_rec ? add(acc_rec, l1) : l1;
    acc_adv = acc_adv ? add(acc_adv, d_fake) : d_fake;
  }
  double inv = 1.0 / double(n);
  acc_rec = scalar_mul(acc_rec, inv);
  acc_adv = scalar_mul(acc_adv, inv);
  NodePtr loss = sub(acc_rec, scalar_mul(acc_adv, cfg.alpha));
  if (parts) {
    parts->l_rec = train_detail::scalar_of(acc_rec);
    parts->g_loss = train_detail::scalar_of(loss);
  }
  return loss;
}

struct TrainResult {
  ParamStore generator;
  ParamStore critic;
  std::vector<LossParts> metrics;
};

inline void init_stores(ParamStore& gen, ParamStore& critic,
                        const TrainConfig& cfg) {
  Rng ginit(cfg.seed, Rng::stream(train_detail::kStreamInit, 0));
  Rng dinit(cfg.seed, Rng::stream(train_detail::kStreamInit, 1));
  init_generator_params(gen, cfg.generator, ginit);
  init_critic_params(critic, cfg.critic, dinit);
  quantize_store_f32(gen);
  quantize_store_f32(critic);
}

inline std::string format_metrics_line(int64_t iter, const LossParts& p) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld, %.9g, %.9g, %.9g, %.9g, %.9g",
                static_cast<long long>(iter), p.l_rec, p.wasserstein, p.gp,
                p.d_loss, p.g_loss);
  return buf;
}

/// One full training iteration (d_steps_per_g critic updates, one generator
/// update) on freshly forged batches. All randomness is a pure function of
/// (seed, iteration, sample), so runs are reproducible and resumable.
inline LossParts train_iteration(const Corpus& corpus, ParamStore& gen,
                                 ParamStore& critic, const TrainConfig& cfg,
                                 int64_t iter) {
  using namespace train_detail;
  LossParts parts;

  auto forge_batch = [&](uint64_t salt) {
    std::vector<TrainingSample> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      Rng pick(cfg.seed, Rng::stream(kStreamCorpus, uint64_t(iter),
                                     salt * 1000 + uint64_t(b)));
      size_t idx = size_t(pick.next_u64() % corpus.size());
      Rng rng(cfg.seed, Rng::stream(kStreamForge, uint64_t(iter),
                                    salt * 1000 + uint64_t(b)));
      batch.push_back(forge_sample(corpus, idx, cfg.forge, rng));
    }
    return batch;
  };

  // critic updates
  for (int step = 0; step < cfg.d_steps_per_g; ++step) {
    auto batch = forge_batch(uint64_t(step));
    std::vector<Tensor> reals, fakes, masks;
    std::vector<NodePtr> conditions;
    std::vector<double> us;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const TrainingSample& s = batch[size_t(b)];
      Rng noise(cfg.seed, Rng::stream(kStreamNoiseD, uint64_t(iter),
                                      uint64_t(step) * 1000 + uint64_t(b)));
      NodePtr x = constant(s.input);
      NodePtr residual =
          generator_forward(x, gen, cfg.generator, noise, /*trainable=*/false);
      Tensor source({s.input.h(), s.input.w(), 3});
      for (int y = 0; y < source.h(); ++y)
        for (int xx = 0; xx < source.w(); ++xx)
          for (int c = 0; c < 3; ++c)
            source.at(y, xx, c) = s.input.at(y, xx, c);
      NodePtr yout =
          composite_output(residual, source, s.ground_truth, s.mask);
      Rng urng(cfg.seed, Rng::stream(kStreamGpU, uint64_t(iter),
                                     uint64_t(step) * 1000 + uint64_t(b)));
      us.push_back(urng.next_double());
      reals.push_back(s.ground_truth);
      fakes.push_back(yout->value);
      masks.push_back(s.mask);
      conditions.push_back(constant(s.input));
    }
    NodePtr d_loss =
        critic_loss(reals, fakes, conditions, masks, us, critic, cfg, &parts);
    if (!std::isfinite(parts.d_loss))
      throw NumericalError("non-finite critic loss at iteration " +
                           std::to_string(iter));
    auto grads = param_gradients(d_loss, critic);
    adam_step(critic, grads, cfg);
  }

  // generator update
  {
    auto batch = forge_batch(999);
    std::vector<Tensor> reals, masks;
    std::vector<NodePtr> conditions, composites;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const TrainingSample& s = batch[size_t(b)];
      Rng noise(cfg.seed,
                Rng::stream(kStreamNoiseG, uint64_t(iter), uint64_t(b)));
      NodePtr x = constant(s.input);
      NodePtr residual =
          generator_forward(x, gen, cfg.generator, noise, /*trainable=*/true);
      Tensor source({s.input.h(), s.input.w(), 3});
      for (int y = 0; y < source.h(); ++y)
        for (int xx = 0; xx < source.w(); ++xx)
          for (int c = 0; c < 3; ++c)
            source.at(y, xx, c) = s.input.at(y, xx, c);
      composites.push_back(
          composite_output(residual, source, s.ground_truth, s.mask));
      reals.push_back(s.ground_truth);
      masks.push_back(s.mask);
      conditions.push_back(constant(s.input));
    }
    NodePtr g_loss = generator_loss(composites, reals, conditions, masks,
                                    critic, cfg, &parts);
    if (!std::isfinite(parts.g_loss))
      throw NumericalError("non-finite generator loss at iteration " +
                           std::to_string(iter));
    auto grads = param_gradients(g_loss, gen);
    adam_step(gen, grads, cfg);
  }
  return parts;
}

inline void save_train_checkpoint(const std::string& path,
                                  const TrainConfig& cfg, int64_t iter,
                                  const ParamStore& gen,
                                  const ParamStore& critic) {
  nlohmann::json meta;
  meta["config"] = cfg.to_json();
  meta["iteration"] = iter;
  save_checkpoint(path, meta.dump(), {&gen, &critic}, {"G:", "D:"});
}

struct LoadedCheckpoint {
  TrainConfig config;
  int64_t iteration = 0;
  ParamStore generator;
  ParamStore critic;
};

inline LoadedCheckpoint load_train_checkpoint(const std::string& path) {
  auto [meta_str, arrays] = load_checkpoint_raw(path);
  nlohmann::json meta = nlohmann::json::parse(meta_str);
  LoadedCheckpoint lc;
  lc.config = TrainConfig::from_json(meta.at("config"));
  lc.iteration = meta.at("iteration");
  init_stores(lc.generator, lc.critic, lc.config);
  restore_store(lc.generator, "G:", arrays);
  restore_store(lc.critic, "D:", arrays);
  return lc;
}

/// Full training loop with metrics logging and periodic checkpoints.
/// `start_iter` > 0 resumes from already-restored stores.
inline TrainResult train(const Corpus& corpus, const TrainConfig& cfg,
                         const std::string& checkpoint_path = "",
                         const std::string& log_path = "",
                         int64_t start_iter = 0, ParamStore* resume_gen = nullptr,
                         ParamStore* resume_critic = nullptr) {
  cfg.validate();
  TrainResult result;
  if (resume_gen && resume_critic) {
    result.generator = *resume_gen;
    result.critic = *resume_critic;
  } else {
    init_stores(result.generator, result.critic, cfg);
  }

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, start_iter > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot open metrics log " + log_path);
  }

  for (int64_t iter = start_iter; iter < cfg.iterations; ++iter) {
    LossParts parts =
        train_iteration(corpus, result.generator, result.critic, cfg, iter);
    if (parts.gp < 0)
      throw NumericalError("negative gradient penalty at iteration " +
                           std::to_string(iter));
    result.metrics.push_back(parts);
    if (log) log << format_metrics_line(iter, parts) << "\n" << std::flush;
    bool last = iter + 1 == cfg.iterations;
    if (!checkpoint_path.empty() &&
        ((iter + 1) % cfg.checkpoint_every == 0 || last))
      save_train_checkpoint(checkpoint_path, cfg, iter + 1, result.generator,
                            result.critic);
  }
  if (!checkpoint_path.empty() && cfg.iterations == start_iter)
    save_train_checkpoint(checkpoint_path, cfg, start_iter, result.generator,
                          result.critic);
  return result;
}

}  // namespace smartpaste

#endif  // SMARTPASTE_TRAINER_HPP
