#include "mtf/pipeline/detect.hpp"

#include <algorithm>

#include "mtf/core/error.hpp"
#include "mtf/core/parallel.hpp"
#include "mtf/image.hpp"

namespace mtf {

PredictionRecord infer_region(const Model& model, const Tensor<float>& image, const Region& region) {
  return model.predict(crop_and_resize(image, region, model.spec().input_edge));
}

std::vector<PredictionRecord> infer_regions(const Model& model, const Tensor<float>& image,
                                            std::span<const Region> regions, int threads) {
  std::vector<PredictionRecord> out(regions.size());
  parallel_for(regions.size(), threads, [&](std::size_t i) { out[i] = infer_region(model, image, regions[i]); });
  return out;
}

IrpResult iterative_region_proposals(const RegionScorer& score, std::span<const Region> initial,
                                     const IrpOptions& opt) {
  if (opt.stages < 0) throw ConfigError("IRP stage count must be >= 0");
  IrpResult res;
  const std::vector<PredictionRecord> first = score(initial);
  if (first.size() != initial.size()) throw InternalError("scorer returned a wrong number of records");
  std::vector<std::size_t> newest;
  for (std::size_t i = 0; i < initial.size(); ++i) {
    if (first[i].detection >= opt.candidate_threshold) {
      newest.push_back(res.regions.size());
      res.regions.push_back(initial[i]);
      res.records.push_back(first[i]);
      res.stage.push_back(0);
    }
  }
  const ExtentBoxOptions box_opt{opt.pad, opt.square, opt.visibility_threshold};
  for (int t = 1; t <= opt.stages; ++t) {
    std::vector<Region> boxes;
    for (std::size_t i : newest) {
      if (!res.records[i].has_landmarks) continue;
      const LandmarkSet fids = denormalize_landmarks(res.regions[i], res.records[i].landmarks);
      const auto box = landmark_extent_box(fids, box_opt);
      if (!box) continue;
      if (opt.width > 0 && !intersects_image(*box, opt.width, opt.height)) continue;
      boxes.push_back(*box);
    }
    const std::vector<PredictionRecord> recs = score(boxes);
    if (recs.size() != boxes.size()) throw InternalError("scorer returned a wrong number of records");
    newest.clear();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      newest.push_back(res.regions.size());
      res.regions.push_back(boxes[i]);
      res.records.push_back(recs[i]);
      res.stage.push_back(t);
    }
  }
  return res;
}

double lower_median(std::vector<double> v) {
  if (v.empty()) throw InternalError("median of an empty set");
  const std::size_t m = (v.size() + 1) / 2 - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  return v[m];
}

std::vector<DetectionResult> landmark_nms(std::span<const Region> regions, std::span<const PredictionRecord> records,
                                          const LnmsOptions& opt) {
  if (opt.k < 1) throw ConfigError("L-NMS k must be >= 1");
  if (regions.size() != records.size()) throw ShapeError("landmark_nms: region and record counts differ");

  std::vector<std::size_t> live;
  std::vector<LandmarkSet> fids;
  std::vector<Region> precise;
  std::vector<double> scores;
  const ExtentBoxOptions tight{1.0, false, opt.visibility_threshold};
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (!records[i].has_landmarks) continue;
    LandmarkSet lm = denormalize_landmarks(regions[i], records[i].landmarks);
    const auto box = landmark_extent_box(lm, tight);
    if (!box) continue;
    live.push_back(i);
    fids.push_back(std::move(lm));
    precise.push_back(*box);
    scores.push_back(records[i].detection);
  }

  const std::vector<std::size_t> kept = nms(precise, scores, opt.overlap);
  const std::vector<std::size_t> order = order_by_score(scores);
  std::vector<DetectionResult> out;
  for (std::size_t kpos : kept) {
    std::vector<std::size_t> pool;
    for (std::size_t j : order) {
      if (j == kpos || iou(precise[j], precise[kpos]) > opt.overlap) pool.push_back(j);
      if (pool.size() == static_cast<std::size_t>(opt.k)) break;
    }
    DetectionResult d;
    d.contributors = static_cast<int>(pool.size());
    d.score = 0;
    for (std::size_t j : pool) d.score = std::max(d.score, scores[j]);
    if (d.score < opt.final_threshold) continue;

    const std::size_t n = fids[kpos].size();
    d.has_landmarks = true;
    d.landmarks.points.resize(n);
    d.landmarks.visibility.resize(n);
    std::vector<double> xs, ys, vs;
    for (std::size_t p = 0; p < n; ++p) {
      xs.clear();
      ys.clear();
      vs.clear();
      for (std::size_t j : pool) {
        xs.push_back(fids[j].points[p].x);
        ys.push_back(fids[j].points[p].y);
        vs.push_back(fids[j].visibility[p]);
      }
      d.landmarks.points[p] = {lower_median(xs), lower_median(ys)};
      d.landmarks.visibility[p] = lower_median(vs);
    }
    const PredictionRecord& lead = records[live[kpos]];
    d.has_pose = lead.has_pose;
    if (d.has_pose) {
      for (int a = 0; a < 3; ++a) {
        std::vector<double> v;
        for (std::size_t j : pool) v.push_back(records[live[j]].pose_degrees()[a]);
        d.pose_deg[a] = lower_median(v);
      }
    }
    d.has_gender = lead.has_gender;
    if (d.has_gender) {
      std::vector<double> v;
      for (std::size_t j : pool) v.push_back(records[live[j]].gender);
      d.gender_prob = lower_median(v);
      d.gender = d.gender_prob > 0.5 ? 1 : 0;
    }
    auto box = landmark_extent_box(d.landmarks, {opt.pad, opt.square, opt.visibility_threshold});
    // Medians can leave fewer than two points over the visibility
    // threshold even though every contributor had two; fall back to all
    // points then.
    if (!box) box = landmark_extent_box(d.landmarks, {opt.pad, opt.square, -1.0});
    d.box = *box;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<DetectionResult> box_nms(std::span<const Region> regions, std::span<const PredictionRecord> records,
                                     const LnmsOptions& opt) {
  if (regions.size() != records.size()) throw ShapeError("box_nms: region and record counts differ");
  std::vector<double> scores;
  for (const auto& r : records) scores.push_back(r.detection);
  std::vector<DetectionResult> out;
  for (std::size_t i : nms(regions, scores, opt.overlap)) {
    if (scores[i] < opt.final_threshold) continue;
    DetectionResult d;
    d.box = regions[i];
    d.score = scores[i];
    d.contributors = 1;
    d.has_pose = records[i].has_pose;
    d.pose_deg = records[i].pose_degrees();
    d.has_gender = records[i].has_gender;
    d.gender_prob = records[i].gender;
    d.gender = d.gender_prob > 0.5 ? 1 : 0;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<DetectionResult> detect(const Model& model, const Tensor<float>& image, const DetectOptions& opt,
                                    std::span<const Region> proposals) {
  if (!model.spec().has_detection()) {
    throw ConfigError("detect needs a model with a detection head, got " + arch_name(model.spec()));
  }
  const int W = image_width(image), H = image_height(image);
  std::vector<Region> initial;
  if (proposals.empty()) {
    initial = grid_proposals(W, H, opt.grid).regions;
  } else {
    for (const Region& r : proposals) {
      if (intersects_image(r, W, H)) initial.push_back(r);
    }
  }
  const RegionScorer scorer = [&](std::span<const Region> rs) { return infer_regions(model, image, rs, opt.threads); };
  if (!model.spec().has_landmarks()) {
    const auto recs = scorer(initial);
    return box_nms(initial, recs, opt.lnms);
  }
  IrpOptions irp = opt.irp;
  irp.width = W;
  irp.height = H;
  const IrpResult acc = iterative_region_proposals(scorer, initial, irp);
  return landmark_nms(acc.regions, acc.records, opt.lnms);
}

}  // namespace mtf
