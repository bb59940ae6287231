#include "mtf/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "mtf/core/error.hpp"

namespace mtf {

namespace {

void require_valid(const Region& r, const char* what) {
  if (!r.valid()) {
    throw ShapeError(std::string(what) + ": region must have positive width and height, got w=" +
                     std::to_string(r.w) + " h=" + std::to_string(r.h));
  }
}

}  // namespace

double iou(const Region& a, const Region& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (iw <= 0 || ih <= 0) return 0.0;
  // areas from the same corner differences as the intersection, so iou(a, a) is exactly 1
  const double inter = iw * ih;
  const double uni = (a.right() - a.left()) * (a.bottom() - a.top()) + (b.right() - b.left()) * (b.bottom() - b.top()) - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

NormalizedLandmarkSet normalize_landmarks(const Region& region, const LandmarkSet& lm) {
  require_valid(region, "normalize_landmarks");
  NormalizedLandmarkSet out;
  out.coords.reserve(lm.size());
  for (const Point2& p : lm.points) out.coords.push_back({(p.x - region.x) / region.w, (p.y - region.y) / region.h});
  out.visibility = lm.visibility;
  return out;
}

LandmarkSet denormalize_landmarks(const Region& region, const NormalizedLandmarkSet& nlm) {
  require_valid(region, "denormalize_landmarks");
  LandmarkSet out;
  out.points.reserve(nlm.size());
  for (const Point2& c : nlm.coords) out.points.push_back({c.x * region.w + region.x, c.y * region.h + region.y});
  out.visibility = nlm.visibility;
  return out;
}

std::optional<Region> landmark_extent_box(const LandmarkSet& lm, const ExtentBoxOptions& opt) {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < lm.size(); ++i) {
    const bool visible = i < lm.visibility.size() ? lm.visibility[i] >= opt.visibility_threshold : true;
    if (!visible) continue;
    const Point2& p = lm.points[i];
    if (n == 0) {
      x1 = x2 = p.x;
      y1 = y2 = p.y;
    } else {
      x1 = std::min(x1, p.x);
      x2 = std::max(x2, p.x);
      y1 = std::min(y1, p.y);
      y2 = std::max(y2, p.y);
    }
    ++n;
  }
  if (n < 2) return std::nullopt;
  Region r{(x1 + x2) / 2, (y1 + y2) / 2, std::max(x2 - x1, 1.0), std::max(y2 - y1, 1.0)};
  r.w *= opt.pad;
  r.h *= opt.pad;
  if (opt.square) r.w = r.h = std::max(r.w, r.h);
  return r;
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::size_t> nms(std::span<const Region> regions, std::span<const double> scores, double overlap) {
  if (regions.size() != scores.size()) throw ShapeError("nms: region and score counts differ");
  std::vector<std::size_t> kept;
  for (std::size_t i : order_by_score(scores)) {
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](std::size_t k) { return iou(regions[i], regions[k]) > overlap; });
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

}  // namespace mtf
