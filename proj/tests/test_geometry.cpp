#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mtf/core/random.hpp"
#include "mtf/geometry.hpp"

using namespace mtf;

namespace {

Region random_region(Rng& rng, double span = 100) {
  return {uniform(rng, -span, span), uniform(rng, -span, span), uniform(rng, 0.5, span / 2), uniform(rng, 0.5, span / 2)};
}

LandmarkSet random_landmarks(Rng& rng, std::size_t n, double span) {
  LandmarkSet lm;
  for (std::size_t i = 0; i < n; ++i) {
    lm.points.push_back({uniform(rng, -span, span), uniform(rng, -span, span)});
    lm.visibility.push_back(uniform01(rng) < 0.7 ? 1.0 : 0.0);
  }
  return lm;
}

/// Corner-form intersection over union written independently of iou().
double iou_reference(const Region& a, const Region& b) {
  const double ax1 = a.x - a.w / 2, ax2 = a.x + a.w / 2, ay1 = a.y - a.h / 2, ay2 = a.y + a.h / 2;
  const double bx1 = b.x - b.w / 2, bx2 = b.x + b.w / 2, by1 = b.y - b.h / 2, by2 = b.y + b.h / 2;
  const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double inter = iw * ih;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

/// Exhaustive NMS oracle: the kept set is the unique subset K where each
/// region belongs to K exactly when no higher-priority member of K overlaps
/// it above the threshold. Returns every subset meeting that condition.
std::vector<std::vector<std::size_t>> nms_fixed_points(const std::vector<Region>& r, const std::vector<double>& s,
                                                       double overlap) {
  const std::size_t n = r.size();
  auto before = [&](std::size_t i, std::size_t j) { return s[i] > s[j] || (s[i] == s[j] && i < j); };
  std::vector<std::vector<std::size_t>> found;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      bool blocked = false;
      for (std::size_t j = 0; j < n; ++j) {
        if ((mask >> j & 1) && before(j, i) && iou_reference(r[i], r[j]) > overlap) blocked = true;
      }
      ok = ((mask >> i & 1) != 0) == !blocked;
    }
    if (!ok) continue;
    std::vector<std::size_t> k;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) k.push_back(i);
    }
    std::sort(k.begin(), k.end(), [&](std::size_t a, std::size_t b) { return before(a, b); });
    found.push_back(k);
  }
  return found;
}

}  // namespace

TEST_CASE("iou examples") {
  const Region a{1, 1, 2, 2};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Region{10, 10, 2, 2}) == 0.0);
  CHECK(iou(a, Region{2, 1, 2, 2}) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(iou(a, Region{3, 1, 2, 2}) == 0.0);  // touching edges
}

TEST_CASE("iou properties: symmetry, bounds, identity, scale invariance, reference agreement") {
  Rng rng(1);
  for (int trial = 0; trial < 20000; ++trial) {
    const Region a = random_region(rng), b = random_region(rng);
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(iou_reference(a, b)).epsilon(1e-12));
    CHECK(iou(a, a) == 1.0);
    if (!(a == b)) CHECK(v < 1.0);
    const double k = uniform(rng, 0.01, 100);
    const Region as{a.x * k, a.y * k, a.w * k, a.h * k}, bs{b.x * k, b.y * k, b.w * k, b.h * k};
    CHECK(iou(as, bs) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("normalize and denormalize examples") {
  const Region r{10, 10, 20, 20};
  LandmarkSet lm{{{10, 10}, {20, 15}, {0, 0}}, {1, 1, 0}};
  const NormalizedLandmarkSet n = normalize_landmarks(r, lm);
  CHECK(n.coords[0] == Point2{0, 0});
  CHECK(n.coords[1] == Point2{0.5, 0.25});
  CHECK(n.coords[2] == Point2{-0.5, -0.5});
  CHECK(n.visibility == lm.visibility);
  const LandmarkSet back = denormalize_landmarks(r, {{{0, 0}, {0.5, 0.25}}, {1, 0}});
  CHECK(back.points[0] == Point2{10, 10});
  CHECK(back.points[1] == Point2{20, 15});
  CHECK(back.visibility == std::vector<double>{1, 0});
}

TEST_CASE("normalize/denormalize round trip to 1e-12 on 1e5 random cases") {
  Rng rng(2);
  double worst = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    const Region r{uniform(rng, -500, 500), uniform(rng, -500, 500), uniform(rng, 1e-2, 500), uniform(rng, 1e-2, 500)};
    const LandmarkSet lm = random_landmarks(rng, 3, 1000);
    const LandmarkSet back = denormalize_landmarks(r, normalize_landmarks(r, lm));
    for (std::size_t i = 0; i < lm.size(); ++i) {
      worst = std::max({worst, std::abs(back.points[i].x - lm.points[i].x), std::abs(back.points[i].y - lm.points[i].y)});
    }
    REQUIRE(back.visibility == lm.visibility);
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("normalized coordinates are invariant to joint translation and scaling about the center") {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const Region r = random_region(rng);
    const LandmarkSet lm = random_landmarks(rng, 4, 100);
    const NormalizedLandmarkSet base = normalize_landmarks(r, lm);
    const double dx = uniform(rng, -50, 50), dy = uniform(rng, -50, 50), k = uniform(rng, 0.1, 10);
    LandmarkSet moved = lm, scaled = lm;
    for (auto& p : moved.points) p = {p.x + dx, p.y + dy};
    for (auto& p : scaled.points) p = {r.x + k * (p.x - r.x), r.y + k * (p.y - r.y)};
    const NormalizedLandmarkSet nm = normalize_landmarks({r.x + dx, r.y + dy, r.w, r.h}, moved);
    const NormalizedLandmarkSet ns = normalize_landmarks({r.x, r.y, r.w * k, r.h * k}, scaled);
    for (std::size_t i = 0; i < lm.size(); ++i) {
      CHECK(nm.coords[i].x == doctest::Approx(base.coords[i].x).epsilon(1e-9));
      CHECK(nm.coords[i].y == doctest::Approx(base.coords[i].y).epsilon(1e-9));
      CHECK(ns.coords[i].x == doctest::Approx(base.coords[i].x).epsilon(1e-9));
      CHECK(ns.coords[i].y == doctest::Approx(base.coords[i].y).epsilon(1e-9));
    }
  }
}

TEST_CASE("landmark_extent_box examples") {
  const LandmarkSet two{{{0, 0}, {10, 20}}, {1, 1}};
  CHECK(*landmark_extent_box(two) == Region{5, 10, 10, 20});
  CHECK(*landmark_extent_box(two, {1.25, false, 0.5}) == Region{5, 10, 12.5, 25});
  CHECK(*landmark_extent_box(two, {1.25, true, 0.5}) == Region{5, 10, 25, 25});
  CHECK_FALSE(landmark_extent_box({{{0, 0}, {10, 20}}, {0, 0}}).has_value());
  CHECK_FALSE(landmark_extent_box({{{0, 0}, {10, 20}}, {1, 0}}).has_value());
  // zero extent in x floors at one pixel
  CHECK(*landmark_extent_box({{{3, 0}, {3, 8}}, {1, 1}}) == Region{3, 4, 1, 8});
  // invisible points do not take part
  CHECK(*landmark_extent_box({{{0, 0}, {10, 20}, {100, 100}}, {1, 1, 0}}) == Region{5, 10, 10, 20});
}

TEST_CASE("landmark_extent_box with pad 1 contains every visible landmark") {
  Rng rng(4);
  for (int trial = 0; trial < 5000; ++trial) {
    const LandmarkSet lm = random_landmarks(rng, 6, 50);
    const auto box = landmark_extent_box(lm);
    const auto visible = std::count(lm.visibility.begin(), lm.visibility.end(), 1.0);
    REQUIRE(box.has_value() == (visible >= 2));
    if (!box) continue;
    for (std::size_t i = 0; i < lm.size(); ++i) {
      if (lm.visibility[i] < 0.5) continue;
      CHECK(lm.points[i].x >= box->left() - 1e-9);
      CHECK(lm.points[i].x <= box->right() + 1e-9);
      CHECK(lm.points[i].y >= box->top() - 1e-9);
      CHECK(lm.points[i].y <= box->bottom() + 1e-9);
    }
  }
}

TEST_CASE("nms examples") {
  const std::vector<Region> one = {{0, 0, 4, 4}};
  const std::vector<double> s1 = {0.1};
  CHECK(nms(one, s1, 0.3) == std::vector<std::size_t>{0});
  const std::vector<Region> twins = {{0, 0, 4, 4}, {0, 0, 4, 4}};
  const std::vector<double> s2 = {0.8, 0.9};
  CHECK(nms(twins, s2, 0.5) == std::vector<std::size_t>{1});
  const std::vector<double> tie = {0.5, 0.5};
  CHECK(nms(twins, tie, 0.5) == std::vector<std::size_t>{0});
  CHECK(nms(std::vector<Region>{}, std::vector<double>{}, 0.3).empty());
}

TEST_CASE("nms matches the exhaustive fixed-point oracle on 8 random regions") {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Region> r;
    std::vector<double> s;
    for (int i = 0; i < 8; ++i) {
      r.push_back(random_region(rng, 20));
      s.push_back(trial % 5 == 0 ? std::floor(uniform(rng, 0, 3)) : uniform01(rng));  // some trials with ties
    }
    const auto oracle = nms_fixed_points(r, s, 0.3);
    REQUIRE(oracle.size() == 1);
    CHECK(nms(r, s, 0.3) == oracle[0]);
  }
}

TEST_CASE("nms kept set depends only on scores and geometry, not input order") {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Region> r;
    std::vector<double> s;
    for (int i = 0; i < 9; ++i) {
      r.push_back(random_region(rng, 20));
      s.push_back(uniform01(rng));
    }
    std::vector<std::size_t> perm(r.size());
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);
    std::vector<Region> rp;
    std::vector<double> sp;
    for (std::size_t i : perm) {
      rp.push_back(r[i]);
      sp.push_back(s[i]);
    }
    std::vector<std::size_t> a = nms(r, s, 0.3), b;
    for (std::size_t k : nms(rp, sp, 0.3)) b.push_back(perm[k]);
    CHECK(a == b);
  }
}

TEST_CASE("order_by_score breaks ties by index") {
  const std::vector<double> s = {0.5, 0.9, 0.5, 0.9};
  CHECK(order_by_score(s) == std::vector<std::size_t>{1, 3, 0, 2});
}
