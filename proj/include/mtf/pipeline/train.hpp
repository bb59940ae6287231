#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtf/core/random.hpp"
#include "mtf/dataset.hpp"
#include "mtf/model.hpp"

namespace mtf {

/// Optimizer and schedule settings (`train.*` config keys).
struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_floor = 0.05;  // cosine decay from lr to lr * lr_floor within each stage
  double clip_norm = 5;    // global gradient-norm cap; 0 disables
  int epochs = 10;         // stage B
  int stage_a_epochs = 3;  // detection-only warm start; 0 skips stage A
  int batch_size = 32;
  int regions_per_face = 6;      // jittered boxes around each face per epoch
  int context_per_face = 4;      // boxes of 0.35x to 2.5x the face size near each face
  int negatives_per_image = 6;   // random boxes per image per epoch
  int precision = 32;            // 32 or 64
  LossWeights weights;
};

struct TrainImage {
  Tensor<float> image;
  std::vector<FaceAnnotation> faces;
};

std::vector<TrainImage> load_training_images(const Dataset& ds, int threads = 1);

/// A proposal with its assigned targets.
struct TrainingSample {
  std::size_t image = 0;
  Region region;
  TaskTargets targets;
};

/// Draws one epoch's proposals for one image: regions_per_face boxes
/// around each face (half tight, half loose jitter of scale and center),
/// context_per_face boxes much smaller or larger than the face (mostly
/// negatives: face parts and wide context) plus negatives_per_image random
/// squares, each labeled by
/// assign_targets. Samples with no active task are dropped.
std::vector<TrainingSample> sample_regions(const TrainImage& img, std::size_t image_index, Rng& rng,
                                           const TrainConfig& cfg);

struct EpochLog {
  char stage = 'B';
  int epoch = 0;
  LossBreakdown loss;  // per-sample means over the epoch
};

struct TrainHooks {
  /// When set, the stage-B model is saved here after every epoch, so an
  /// aborted run leaves the last good checkpoint.
  std::filesystem::path checkpoint;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> stage_a;
  std::vector<EpochLog> stage_b;
  std::optional<Model> warm_start;  // the stage-A network, when stage A ran
};

/// Stage A trains the single-task detection network on the same proposal
/// stream; stage B builds `spec`, copies the stage-A trunk into it and
/// trains on the weighted multi-task loss. Deterministic in (data, spec,
/// cfg, seed). Throws NumericError on a non-finite loss or gradient.
///
/// Stage A depends only on (images, cfg, seed), so a `warm_start` from an
/// earlier run with the same inputs replaces it exactly.
TrainResult train(const std::vector<TrainImage>& images, const NetworkSpec& spec, const TrainConfig& cfg,
                  std::uint64_t seed, const TrainHooks& hooks = {}, const Model* warm_start = nullptr);

/// `epoch,loss_D,loss_L,loss_V,loss_P,loss_G,total` rows.
std::string loss_csv(const std::vector<EpochLog>& log);

}  // namespace mtf
