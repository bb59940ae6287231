#include "mtf/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mtf/core/error.hpp"
#include "mtf/core/kv.hpp"
#include "mtf/core/optim.hpp"
#include "mtf/core/parallel.hpp"
#include "mtf/core/random.hpp"
#include "mtf/image.hpp"

namespace mtf {

std::vector<TrainImage> load_training_images(const Dataset& ds, int threads) {
  std::vector<TrainImage> out(ds.records.size());
  parallel_for(out.size(), threads, [&](std::size_t i) {
    out[i].image = ds.image(i);
    out[i].faces = ds.records[i].faces;
  });
  return out;
}

std::vector<TrainingSample> sample_regions(const TrainImage& img, std::size_t image_index, Rng& rng,
                                           const TrainConfig& cfg) {
  const int W = image_width(img.image), H = image_height(img.image);
  std::vector<Region> boxes;
  for (const FaceAnnotation& f : img.faces) {
    const double size = std::sqrt(f.box.w * f.box.h);
    for (int i = 0; i < cfg.regions_per_face; ++i) {
      const bool tight = i % 2 == 0;
      const double ds = tight ? 0.12 : 0.3, dc = tight ? 0.1 : 0.25;
      const double s = size * std::exp(uniform(rng, -ds, ds));
      boxes.push_back({f.box.x + uniform(rng, -dc, dc) * size, f.box.y + uniform(rng, -dc, dc) * size, s, s});
    }
    for (int i = 0; i < cfg.context_per_face; ++i) {
      const double s = size * std::exp(uniform(rng, std::log(0.35), std::log(2.5)));
      boxes.push_back({f.box.x + uniform(rng, -0.5, 0.5) * size, f.box.y + uniform(rng, -0.5, 0.5) * size, s, s});
    }
  }
  const double smin = 0.2 * std::min(W, H), smax = 0.6 * std::min(W, H);
  for (int i = 0; i < cfg.negatives_per_image; ++i) {
    const double s = uniform(rng, smin, smax);
    boxes.push_back({uniform(rng, s / 4, W - s / 4), uniform(rng, s / 4, H - s / 4), s, s});
  }
  std::vector<TrainingSample> out;
  for (const Region& r : boxes) {
    TaskTargets t = assign_targets(r, img.faces);
    if (!t.detection_active && !t.landmarks_active) continue;
    out.push_back({image_index, r, std::move(t)});
  }
  return out;
}

namespace {

double stage_lr(const TrainConfig& cfg, int epoch, int epochs) {
  if (epochs <= 1) return cfg.lr;
  const double c = 0.5 * (1 + std::cos(std::numbers::pi * epoch / (epochs - 1)));
  return cfg.lr * (cfg.lr_floor + (1 - cfg.lr_floor) * c);
}

template <class T>
void run_stage(Network<T>& net, const std::vector<TrainImage>& images, const TrainConfig& cfg, std::uint64_t seed,
               char stage, int epochs, std::vector<EpochLog>& log, const TrainHooks& hooks) {
  const std::string tag(1, stage);
  const auto bs = static_cast<std::size_t>(std::max(cfg.batch_size, 1));
  std::vector<Parameter<T>*> params;
  for (auto& p : net.parameters()) params.push_back(&p);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(derive_seed(seed, "sample:" + tag, static_cast<std::uint64_t>(epoch)));
    std::vector<TrainingSample> samples;
    for (std::size_t i = 0; i < images.size(); ++i) {
      auto s = sample_regions(images[i], i, rng, cfg);
      samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    Rng order_rng(derive_seed(seed, "shuffle:" + tag, static_cast<std::uint64_t>(epoch)));
    shuffle(samples.begin(), samples.end(), order_rng);

    SgdConfig sgd{stage_lr(cfg, epoch, epochs), cfg.momentum, cfg.weight_decay};
    std::array<double, 5> sums{};
    std::array<std::size_t, 5> counts{};
    for (std::size_t start = 0; start < samples.size(); start += bs) {
      const std::size_t end = std::min(samples.size(), start + bs);
      std::vector<Tensor<float>> crops;
      std::vector<TaskTargets> targets;
      for (std::size_t i = start; i < end; ++i) {
        crops.push_back(crop_and_resize(images[samples[i].image].image, samples[i].region, net.spec().input_edge));
        targets.push_back(samples[i].targets);
      }
      Tape<T> tape;
      Var x = tape.constant(make_input_batch<T>(crops));
      const Heads heads = net.forward(tape, x);
      const LossNodes<T> loss = multitask_loss(tape, heads, targets, cfg.weights, net.spec().landmarks);
      if (!std::isfinite(loss.values.total)) {
        throw NumericError("non-finite loss in stage " + tag + ", epoch " + std::to_string(epoch + 1) +
                           (hooks.checkpoint.empty() ? std::string()
                                                     : "; last good checkpoint: " + hooks.checkpoint.string()));
      }
      tape.backward(loss.total);
      double norm2 = 0;
      for (Parameter<T>* p : params) {
        const Tensor<T>* g = tape.gradient(*p);
        if (!g) continue;
        for (std::size_t i = 0; i < g->size(); ++i) {
          p->grad[i] += (*g)[i];
          norm2 += static_cast<double>((*g)[i]) * static_cast<double>((*g)[i]);
        }
      }
      if (cfg.clip_norm > 0 && norm2 > cfg.clip_norm * cfg.clip_norm) {
        const T s = static_cast<T>(cfg.clip_norm / std::sqrt(norm2));
        for (Parameter<T>* p : params) {
          for (auto& g : p->grad.data()) g *= s;
        }
      }
      sgd_step(net.parameters(), sgd);
      for (int t = 0; t < 5; ++t) {
        sums[t] += loss.values.components[t] * static_cast<double>(loss.values.active[t]);
        counts[t] += loss.values.active[t];
      }
    }
    EpochLog e;
    e.stage = stage;
    e.epoch = epoch + 1;
    for (int t = 0; t < 5; ++t) {
      e.loss.components[t] = counts[t] ? sums[t] / static_cast<double>(counts[t]) : 0.0;
      e.loss.active[t] = counts[t];
    }
    e.loss.total = combine_losses(e.loss.components, cfg.weights);
    log.push_back(e);
    if (stage == 'B' && !hooks.checkpoint.empty()) Model(net).save(hooks.checkpoint);
    if (hooks.on_epoch) hooks.on_epoch(e);
  }
}

template <class T>
TrainResult train_as(const std::vector<TrainImage>& images, const NetworkSpec& spec, const TrainConfig& cfg,
                     std::uint64_t seed, const TrainHooks& hooks, const Model* warm_start) {
  std::vector<EpochLog> log_a, log_b;
  std::optional<Model> warm_model;
  Network<T> net(spec, seed);
  if (warm_start) {
    const Network<T>* warm = warm_start->get<T>();
    if (!warm) throw ConfigError("warm-start model precision differs from train.precision");
    net.copy_trunk_from(*warm);
    warm_model = *warm_start;
  } else if (cfg.stage_a_epochs > 0) {
    NetworkSpec det = spec;
    set_arch(det, "single-detection");
    Network<T> warm(det, seed);
    run_stage(warm, images, cfg, seed, 'A', cfg.stage_a_epochs, log_a, hooks);
    net.copy_trunk_from(warm);
    warm_model.emplace(std::move(warm));
  }
  run_stage(net, images, cfg, seed, 'B', cfg.epochs, log_b, hooks);
  return {Model(std::move(net)), std::move(log_a), std::move(log_b), std::move(warm_model)};
}

}  // namespace

TrainResult train(const std::vector<TrainImage>& images, const NetworkSpec& spec, const TrainConfig& cfg,
                  std::uint64_t seed, const TrainHooks& hooks, const Model* warm_start) {
  validate(spec);
  if (cfg.lr <= 0) throw ConfigError("train.lr must be > 0");
  if (cfg.momentum < 0 || cfg.momentum >= 1) throw ConfigError("train.momentum must be in [0, 1)");
  if (cfg.epochs < 0 || cfg.stage_a_epochs < 0) throw ConfigError("train epochs must be >= 0");
  if (images.empty()) throw ConfigError("training set is empty");
  if (cfg.precision == 32) return train_as<float>(images, spec, cfg, seed, hooks, warm_start);
  if (cfg.precision == 64) return train_as<double>(images, spec, cfg, seed, hooks, warm_start);
  throw ConfigError("train.precision must be 32 or 64");
}

std::string loss_csv(const std::vector<EpochLog>& log) {
  std::string s = "epoch,loss_D,loss_L,loss_V,loss_P,loss_G,total\n";
  for (const auto& e : log) {
    s += std::to_string(e.epoch);
    for (double c : e.loss.components) s += "," + format_double(c);
    s += "," + format_double(e.loss.total) + "\n";
  }
  return s;
}

}  // namespace mtf
