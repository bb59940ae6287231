#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mtf/model.hpp"
#include "mtf/pipeline/proposals.hpp"

namespace mtf {

/// Crops `region` to the network input size and runs the model.
PredictionRecord infer_region(const Model& model, const Tensor<float>& image, const Region& region);

/// Scores regions in input order, spreading the work over `threads`.
std::vector<PredictionRecord> infer_regions(const Model& model, const Tensor<float>& image,
                                            std::span<const Region> regions, int threads = 1);

/// Maps regions to their predictions, in order. Lets the post-processing
/// run against a model or against a scripted stand-in.
using RegionScorer = std::function<std::vector<PredictionRecord>(std::span<const Region>)>;

struct IrpOptions {
  int stages = 1;                     // T
  double candidate_threshold = 0.25;  // minimum detection score to seed stage 1
  double visibility_threshold = 0.5;
  double pad = 1.25;  // face box from landmarks
  bool square = true;
  int width = 0, height = 0;  // when set, new boxes must overlap the image
};

/// Accumulated boxes with the prediction each was scored with. stage is 0
/// for thresholded input boxes and k for boxes created in stage k.
struct IrpResult {
  std::vector<Region> regions;
  std::vector<PredictionRecord> records;
  std::vector<int> stage;
};

/// Iterative region proposals. Scores the initial boxes and keeps those
/// with p >= candidate_threshold; then, T times, turns the predicted
/// landmarks of the newest boxes into face boxes (landmark_extent_box) and
/// appends them. Finally every accumulated box carries its score. Since a
/// prediction depends only on (image, box), each box is scored once and
/// that record is its rescoring. Boxes whose prediction has fewer than two
/// visible landmarks spawn nothing.
IrpResult iterative_region_proposals(const RegionScorer& score, std::span<const Region> initial,
                                     const IrpOptions& opt);

struct LnmsOptions {
  double overlap = 0.3;
  int k = 5;
  double final_threshold = 0.5;
  double visibility_threshold = 0.5;
  double pad = 1.25;
  bool square = true;
};

struct DetectionResult {
  Region box;
  double score = 0;
  bool has_landmarks = false, has_pose = false, has_gender = false;
  LandmarkSet landmarks;  // image frame, visibility = predicted v
  std::array<double, 3> pose_deg{};
  int gender = 0;
  double gender_prob = 0;
  int contributors = 0;
};

/// Lower median: element ceil(n/2) - 1 of the sorted values.
double lower_median(std::vector<double> v);

/// Landmarks-based NMS over scored regions with landmark predictions.
///   1. landmarks go to the image frame against their region;
///   2. each region is replaced by its precise box, the tight extent of
///      its predicted-visible landmarks (regions with fewer than two are
///      dropped);
///   3. greedy NMS on precise boxes by detection score;
///   4. for each kept box, the pool is every region whose precise box
///      overlaps it by more than `overlap`; the top k of the pool by score
///      contribute;
///   5. landmarks, visibilities, pose and gender probability are
///      coordinate-wise lower medians over the contributors; the score is
///      their maximum; gender is the median probability > 0.5;
///   6. the box is the landmark extent box (pad, square) of the medians.
/// Results with score below final_threshold are discarded. Order follows
/// the NMS order.
std::vector<DetectionResult> landmark_nms(std::span<const Region> regions, std::span<const PredictionRecord> records,
                                          const LnmsOptions& opt);

/// Plain NMS on the scored boxes, for models without a landmark head.
std::vector<DetectionResult> box_nms(std::span<const Region> regions, std::span<const PredictionRecord> records,
                                     const LnmsOptions& opt);

struct DetectOptions {
  GridOptions grid;
  IrpOptions irp;
  LnmsOptions lnms;
  int threads = 1;
};

/// Proposals (grid, or `proposals` when non-empty), then IRP, then L-NMS.
/// Models without a landmark head skip IRP and use box_nms.
std::vector<DetectionResult> detect(const Model& model, const Tensor<float>& image, const DetectOptions& opt,
                                    std::span<const Region> proposals = {});

}  // namespace mtf
