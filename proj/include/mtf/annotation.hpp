#pragma once

#include <array>

#include "mtf/geometry.hpp"

namespace mtf {

/// Ground truth for one face: box, landmarks with 0/1 visibility, pose in
/// degrees (roll, pitch, yaw) and gender (0 male, 1 female).
struct FaceAnnotation {
  Region box;
  LandmarkSet landmarks;
  std::array<double, 3> pose_deg{};
  int gender = 0;
};

/// Pose is learned in units of degrees / 90.
inline constexpr double kPoseScale = 90.0;

}  // namespace mtf
