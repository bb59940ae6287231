#include "mtf/net/losses.hpp"

#include <cmath>

#include "mtf/core/error.hpp"

namespace mtf {

TaskTargets assign_targets(const Region& proposal, std::span<const FaceAnnotation> annotations) {
  TaskTargets t;
  if (annotations.empty()) {
    t.detection_label = 0;
    t.detection_active = true;
    return t;
  }
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const double o = iou(proposal, annotations[i].box);
    if (t.matched < 0 || o > t.max_iou) {
      t.max_iou = o;
      t.matched = static_cast<int>(i);
    }
  }
  const double o = t.max_iou;
  const FaceAnnotation& m = annotations[static_cast<std::size_t>(t.matched)];
  if (o > kPositiveIou) {
    t.detection_label = 1;
    t.detection_active = true;
  } else if (o < kNegativeIou) {
    t.detection_label = 0;
    t.detection_active = true;
  }
  if (o > kNegativeIou) {
    t.landmarks = normalize_landmarks(proposal, m.landmarks);
    t.landmarks_active = true;
  }
  if (o > kPositiveIou) {
    for (int a = 0; a < 3; ++a) t.pose[a] = m.pose_deg[a] / kPoseScale;
    t.pose_active = true;
    t.gender = m.gender;
    t.gender_active = true;
  }
  return t;
}

namespace {

double binary_log_loss(double p, int label) {
  // Only the term selected by the label is evaluated, so p = 0 or 1 on the
  // other side does not produce 0 * inf.
  return label ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace

double detection_loss(double p, int label) { return binary_log_loss(p, label); }

double gender_loss(double p_g, int g) { return binary_log_loss(p_g, g); }

double landmark_loss(const NormalizedLandmarkSet& pred, const NormalizedLandmarkSet& target) {
  const std::size_t n = target.size();
  if (pred.size() != n || target.visibility.size() != n) throw ShapeError("landmark_loss: landmark counts differ");
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (target.visibility[i] == 0) continue;
    const double dx = pred.coords[i].x - target.coords[i].x;
    const double dy = pred.coords[i].y - target.coords[i].y;
    s += target.visibility[i] * (dx * dx + dy * dy);
  }
  return s / (2.0 * static_cast<double>(n));
}

double visibility_loss(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || truth.empty()) throw ShapeError("visibility_loss: counts differ or empty");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(truth.size());
}

double pose_loss(const std::array<double, 3>& pred, const std::array<double, 3>& target) {
  double s = 0;
  for (int a = 0; a < 3; ++a) s += (pred[a] - target[a]) * (pred[a] - target[a]);
  return s / 3.0;
}

double combine_losses(const std::array<double, 5>& components, const LossWeights& weights) {
  double total = 0;
  for (int t = 0; t < 5; ++t) {
    if (weights.lambda[t] < 0) throw ConfigError("loss weights must be >= 0");
    total += weights.lambda[t] * components[t];
  }
  return total;
}

LossBreakdown total_loss(std::span<const PredictionRecord> preds, std::span<const TaskTargets> targets,
                         const LossWeights& weights) {
  if (preds.size() != targets.size()) throw ShapeError("total_loss: prediction and target counts differ");
  LossBreakdown b;
  std::array<double, 5> sums{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const PredictionRecord& p = preds[i];
    const TaskTargets& t = targets[i];
    if (t.detection_active && p.has_detection) {
      sums[kDetection] += detection_loss(p.detection, t.detection_label);
      ++b.active[kDetection];
    }
    if (t.landmarks_active && p.has_landmarks) {
      sums[kLandmarks] += landmark_loss(p.landmarks, t.landmarks);
      sums[kVisibility] += visibility_loss(p.landmarks.visibility, t.landmarks.visibility);
      ++b.active[kLandmarks];
      ++b.active[kVisibility];
    }
    if (t.pose_active && p.has_pose) {
      sums[kPose] += pose_loss(p.pose, t.pose);
      ++b.active[kPose];
    }
    if (t.gender_active && p.has_gender) {
      sums[kGender] += gender_loss(p.gender, t.gender);
      ++b.active[kGender];
    }
  }
  for (int t = 0; t < 5; ++t) {
    b.components[t] = b.active[t] ? sums[t] / static_cast<double>(b.active[t]) : 0.0;
  }
  b.total = combine_losses(b.components, weights);
  return b;
}

}  // namespace mtf
