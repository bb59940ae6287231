#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mtf {

/// Center-parameterized box in image pixels. Corner forms only appear at
/// file boundaries, through from_corners()/corners().
struct Region {
  double x = 0;  // center abscissa
  double y = 0;  // center ordinate
  double w = 1;
  double h = 1;

  static Region from_corners(double x1, double y1, double x2, double y2) {
    return {(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
  }
  double left() const { return x - w / 2; }
  double top() const { return y - h / 2; }
  double right() const { return x + w / 2; }
  double bottom() const { return y + h / 2; }
  double area() const { return w * h; }
  bool valid() const { return w > 0 && h > 0; }

  friend bool operator==(const Region&, const Region&) = default;
};

struct Point2 {
  double x = 0;
  double y = 0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Landmarks in the image frame. Ground-truth visibility is exactly 0 or 1;
/// predicted visibility lies in [0,1].
struct LandmarkSet {
  std::vector<Point2> points;
  std::vector<double> visibility;

  std::size_t size() const { return points.size(); }
};

/// Landmarks as offsets from a region center in units of the region's
/// width and height.
struct NormalizedLandmarkSet {
  std::vector<Point2> coords;
  std::vector<double> visibility;

  std::size_t size() const { return coords.size(); }
};

/// Intersection over union; 0 for disjoint regions.
double iou(const Region& a, const Region& b);

/// a_i = (x_i - x) / w, b_i = (y_i - y) / h. Visibility is copied; invisible
/// points keep their coordinates.
NormalizedLandmarkSet normalize_landmarks(const Region& region, const LandmarkSet& lm);

/// x_i = a_i w + x, y_i = b_i h + y.
LandmarkSet denormalize_landmarks(const Region& region, const NormalizedLandmarkSet& nlm);

struct ExtentBoxOptions {
  /// Scale applied to width and height about the box center.
  double pad = 1.0;
  /// Grow the shorter side to match the longer one (after padding).
  bool square = false;
  /// Points with visibility >= this value take part.
  double visibility_threshold = 0.5;
};

/// Axis-aligned box over the visible landmarks, extents floored at one
/// pixel before padding. Empty when fewer than two points are visible; the
/// caller must then drop the region.
std::optional<Region> landmark_extent_box(const LandmarkSet& lm, const ExtentBoxOptions& opt = {});

/// Greedy non-maximum suppression. A region is suppressed when its IOU with
/// an already kept region exceeds `overlap`. Kept indices are returned in
/// descending score order; equal scores go to the lower index first.
std::vector<std::size_t> nms(std::span<const Region> regions, std::span<const double> scores, double overlap);

/// Indices sorted by descending score, ties by ascending index.
std::vector<std::size_t> order_by_score(std::span<const double> scores);

}  // namespace mtf
