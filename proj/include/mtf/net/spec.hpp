#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mtf {

enum class ArchKind { Fused, SharedTrunk, SingleTask };

/// Task groups a single-task network can be built for. Landmarks includes
/// the visibility head.
enum class Task { Detection, Landmarks, Pose, Gender };

struct TrunkLayer {
  int kernel = 3;
  int channels = 16;
  int stride = 1;
  int pad = 1;
  int pool = 2;  // max-pool window and stride; 1 disables pooling

  friend bool operator==(const TrunkLayer&, const TrunkLayer&) = default;
};

/// Declarative description of a multi-task network. The defaults are the
/// desk-scale fused layout: a 3-layer conv trunk on 64x64 crops, all three
/// trunk outputs tapped, stride-matched adapters to 4x4, concat, 1x1
/// reduction, a shared fully connected layer and five task branches.
struct NetworkSpec {
  ArchKind kind = ArchKind::Fused;
  Task task = Task::Detection;  // only for SingleTask
  int input_edge = 64;
  int landmarks = 21;
  std::vector<TrunkLayer> trunk = {{5, 16, 2, 2, 2}, {3, 32, 1, 1, 2}, {3, 64, 1, 1, 2}};
  std::vector<int> taps = {0, 1, 2};  // trunk layer indices feeding the fusion
  int adapter_channels = 64;
  int reduce_channels = 48;
  int shared_width = 512;
  int head_width = 128;

  bool has_detection() const { return kind != ArchKind::SingleTask || task == Task::Detection; }
  bool has_landmarks() const { return kind != ArchKind::SingleTask || task == Task::Landmarks; }
  bool has_pose() const { return kind != ArchKind::SingleTask || task == Task::Pose; }
  bool has_gender() const { return kind != ArchKind::SingleTask || task == Task::Gender; }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// "fused", "shared-trunk", "single-detection", "single-landmarks",
/// "single-pose", "single-gender".
std::string arch_name(const NetworkSpec& spec);

/// Sets kind/task from an architecture name; ConfigError when unknown.
void set_arch(NetworkSpec& spec, std::string_view name);

/// The six architectures of the ablation, in report order.
const std::vector<std::string>& ablation_arch_names();

struct FeatureShape {
  int channels, height, width;
};

/// Symbolic shape propagation; throws ShapeError naming the first layer
/// whose shapes do not compose. Returns the trunk output shapes.
std::vector<FeatureShape> validate(const NetworkSpec& spec);

/// `network.* = value` lines; parse_network_spec() reads them back.
std::string to_text(const NetworkSpec& spec);
NetworkSpec parse_network_spec(std::string_view text);

/// Applies one `network.*` key; returns false when the key is not a
/// network key.
bool apply_network_key(NetworkSpec& spec, std::string_view key, std::string_view value);

}  // namespace mtf
