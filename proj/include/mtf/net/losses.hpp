#pragma once

#include <array>
#include <span>
#include <vector>

#include "mtf/annotation.hpp"
#include "mtf/geometry.hpp"

namespace mtf {

/// Per-region network output. Landmarks are in the region-normalized frame;
/// pose is in degrees / 90. Fields of heads the network lacks are unset and
/// flagged false.
struct PredictionRecord {
  bool has_detection = false;
  bool has_landmarks = false;
  bool has_pose = false;
  bool has_gender = false;
  double detection = 0;                // p, probability of face
  NormalizedLandmarkSet landmarks;     // coords and clamped visibility
  std::array<double, 3> pose{};        // roll, pitch, yaw in degrees / 90
  double gender = 0;                   // probability of g = 1 (female)

  std::array<double, 3> pose_degrees() const {
    return {pose[0] * kPoseScale, pose[1] * kPoseScale, pose[2] * kPoseScale};
  }
};

/// Training targets of one proposal with per-task participation flags.
struct TaskTargets {
  int detection_label = 0;
  bool detection_active = false;
  NormalizedLandmarkSet landmarks;  // targets and 0/1 visibility
  bool landmarks_active = false;    // also gates the visibility loss
  std::array<double, 3> pose{};     // degrees / 90
  bool pose_active = false;
  int gender = 0;
  bool gender_active = false;

  double max_iou = 0;
  int matched = -1;  // index of the max-IOU annotation, -1 when none
};

/// IOU band edges for target assignment.
inline constexpr double kPositiveIou = 0.5;
inline constexpr double kNegativeIou = 0.35;

/// Labels a proposal against the ground-truth faces of its image:
///   max IOU > 0.5          detection l=1, landmarks, visibility, pose, gender
///   0.35 < max IOU <= 0.5  landmarks and visibility only
///   max IOU < 0.35         detection l=0 only
/// Landmark targets are normalized against the proposal.
TaskTargets assign_targets(const Region& proposal, std::span<const FaceAnnotation> annotations);

enum TaskIndex : int { kDetection = 0, kLandmarks = 1, kVisibility = 2, kPose = 3, kGender = 4 };

/// Task weights, ordered detection, landmarks, visibility, pose, gender.
struct LossWeights {
  std::array<double, 5> lambda = {1.0, 5.0, 0.5, 5.0, 2.0};
};

/// -(1-l) log(1-p) - l log(p)
double detection_loss(double p, int label);

/// (1/2N) sum_i v_i ((x^_i - a_i)^2 + (y^_i - b_i)^2), v from the target.
double landmark_loss(const NormalizedLandmarkSet& pred, const NormalizedLandmarkSet& target);

/// (1/N) sum_i (v^_i - v_i)^2
double visibility_loss(std::span<const double> pred, std::span<const double> truth);

/// Mean of the three squared angle differences.
double pose_loss(const std::array<double, 3>& pred, const std::array<double, 3>& target);

/// -(1-g) log(1-p_g) - g log(p_g)
double gender_loss(double p_g, int g);

struct LossBreakdown {
  std::array<double, 5> components{};    // per-task mean over active samples
  std::array<std::size_t, 5> active{};   // active sample count per task
  double total = 0;                      // sum of lambda_t * component_t
};

/// Weighted multi-task loss over plain records. Each task is averaged over
/// the samples active for it (0 when none are).
LossBreakdown total_loss(std::span<const PredictionRecord> preds, std::span<const TaskTargets> targets,
                         const LossWeights& weights = {});

/// Combines precomputed per-task components with the task weights.
double combine_losses(const std::array<double, 5>& components, const LossWeights& weights);

}  // namespace mtf
