#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtf/dataset.hpp"
#include "mtf/pipeline/output.hpp"

namespace mtf {

struct MatchResult {
  std::vector<std::size_t> order;  // detections by descending score (ties: lower index first)
  std::vector<bool> tp;            // per detection, input order
  std::vector<int> gt_index;       // matched ground truth per detection, -1 for FP
  std::vector<bool> gt_matched;
};

/// Greedy matching: in score order, each detection takes the unmatched
/// ground truth with the highest IOU >= threshold (ties: lower index).
MatchResult match_detections(std::span<const Region> dets, std::span<const double> scores,
                             std::span<const Region> gt, double iou_threshold);

struct PRCurve {
  std::vector<double> recall, precision;  // one point per detection rank
  double ap = 0;
  double iou_threshold = 0.5;
};

/// AP of TP/FP flags given in descending score order: area under the
/// precision envelope (precision at recall r = max precision at recall
/// >= r), all points.
PRCurve average_precision(const std::vector<bool>& flags_by_rank, std::size_t n_gt);

/// Mean Euclidean error over ground-truth-visible points divided by
/// normalizer, in percent; nullopt when no point is visible.
std::optional<double> landmark_nme(const LandmarkSet& pred, const LandmarkSet& gt, double normalizer);

inline double box_normalizer(const Region& gt_box) { return std::sqrt(gt_box.w * gt_box.h); }
double pupil_normalizer(const LandmarkSet& gt, int a, int b);

struct CEDCurve {
  std::vector<double> thresholds, fractions;
};

/// Fraction of values <= t for each grid threshold t.
CEDCurve ced(std::span<const double> values, std::span<const double> thresholds);

/// Evenly spaced grid lo, lo+step, ..., up to hi inclusive.
std::vector<double> threshold_grid(double lo, double hi, double step);

struct PoseReport {
  std::size_t count = 0;
  std::array<double, 3> mae{};              // roll, pitch, yaw in degrees
  std::array<double, 3> within_tolerance{};  // fraction with |error| <= tolerance
  double tolerance = 15;
  std::array<CEDCurve, 3> curves;
};

PoseReport pose_report(std::span<const std::array<double, 3>> pred, std::span<const std::array<double, 3>> gt,
                       double tolerance, std::span<const double> thresholds);

double gender_accuracy(std::span<const int> pred, std::span<const int> gt);

/// `eval.*` config keys.
struct EvalConfig {
  double iou_threshold = 0.5;
  std::string normalizer = "box";  // "box" (sqrt(w*h) of the GT box) or "pupils"
  std::array<int, 2> pupils = {7, 10};
  double nme_max = 20, nme_step = 0.5;    // CED grid, percent
  double pose_max = 60, pose_step = 1;    // CED grid, degrees
  double pose_tolerance = 15;
};

struct EvalReport {
  EvalConfig config;
  std::size_t images = 0, n_gt = 0, detections = 0, tp = 0;
  std::optional<PRCurve> pr;  // nullopt when the detections carry no scores worth ranking (none given)
  std::vector<double> pr_scores;  // score at each rank
  std::vector<double> nme;        // per matched face with visible points, percent
  std::size_t nme_excluded = 0;
  bool has_landmarks = false, has_pose = false, has_gender = false;
  PoseReport pose;
  std::size_t gender_faces = 0;
  double gender_acc = 0;
  CEDCurve nme_ced;

  std::optional<double> ap() const { return pr ? std::optional<double>(pr->ap) : std::nullopt; }
  std::optional<double> nme_mean() const;
  std::optional<double> pose_mae_mean() const;
  std::optional<double> gender() const;
};

/// Matches detections to ground truth image by image; landmark, pose and
/// gender metrics use the matched pairs. Metrics whose fields are absent
/// from the detections are reported as missing.
EvalReport evaluate(const std::vector<ImageDetection>& dets, const std::vector<DatasetRecord>& gt,
                    const EvalConfig& cfg, bool score_detections = true);

nlohmann::json report_json(const EvalReport& r);

/// Writes metrics.json plus pr.csv, ced_nme.csv, ced_pose_{roll,pitch,yaw}.csv
/// and matching .svg plots (when `plots`).
void write_report(const EvalReport& r, const std::filesystem::path& out_dir, bool plots = true);

/// Minimal SVG line chart.
std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          std::span<const double> xs, std::span<const double> ys);

struct AblationRow {
  std::string arch;
  std::optional<double> ap, nme, pose_mae, gender_acc;
};

/// CSV (arch,ap,nme,pose_mae,gender_acc; missing metrics empty) and JSON.
std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace mtf
