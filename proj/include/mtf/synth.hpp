#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtf/annotation.hpp"
#include "mtf/core/tensor.hpp"

namespace mtf {

/// Scene generator settings (`synth.*` config keys).
struct SynthConfig {
  int image_size = 128;
  int min_faces = 0;
  int max_faces = 3;
  double face_min = 40;  // head width in pixels
  double face_max = 72;
  double max_angle = 60;  // degrees, each of roll/pitch/yaw
  int distractors = 4;    // up to this many clutter shapes per scene
  double noise = 0.03;    // per-pixel Gaussian sigma
  int train_count = 2000;
  int test_count = 200;
};

/// Throws ConfigError when faces could not fit or ranges are inverted.
void validate(const SynthConfig& cfg);
std::string to_text(const SynthConfig& cfg);
bool apply_synth_key(SynthConfig& cfg, std::string_view key, std::string_view value);

/// Landmark layout of the face glyph (21 points):
///   0-2 left brow, 3-5 right brow, 6-8 left eye (outer, center, inner),
///   9-11 right eye (inner, center, outer), 12-15 nose (bridge, left
///   nostril, tip, right nostril), 16-20 mouth (left corner, upper lip,
///   right corner, lower lip) and chin.
/// "Left" is the image-left side of a frontal face.
inline constexpr int kGlyphLandmarks = 21;
inline constexpr int kLeftPupil = 7;
inline constexpr int kRightPupil = 10;
/// Index of each landmark's mirror image about the vertical face axis.
const std::array<int, kGlyphLandmarks>& mirror_partner();

struct SampleRecord {
  Tensor<float> image;  // 3 x S x S, quantized to 8 bits
  std::vector<FaceAnnotation> faces;
  std::uint64_t scene_seed = 0;
};

/// Draws one scene. Pure in (seed, index, cfg).
///
/// Each face is an ellipsoid head (width w, height 1.2 w) rotated by
/// roll * pitch * yaw and projected orthographically; features are painted
/// on its surface, so they shift and foreshorten with pose. A landmark is
/// invisible when its surface normal faces away from the viewer. Gender
/// sets the skin tint (male warmer, larger R - B) and hair coverage.
/// The box is the square landmark extent box (pad 1.25) of the visible
/// points.
SampleRecord render_sample(std::uint64_t seed, std::uint64_t index, const SynthConfig& cfg);

/// Face geometry without pixels, for tests.
FaceAnnotation make_face(double cx, double cy, double width, const std::array<double, 3>& pose_deg, int gender);

struct DatasetSummary {
  std::size_t train = 0, test = 0, faces = 0;
  std::string config_hash;
};

/// Writes out_dir/{train,test}/NNNNNN.ppm, train.jsonl, test.jsonl and
/// manifest.json. Train samples use indices [0, n_train), test samples
/// [n_train, n_train + n_test).
DatasetSummary generate_dataset(std::uint64_t seed, const SynthConfig& cfg, const std::filesystem::path& out_dir,
                                int threads = 1);

}  // namespace mtf
