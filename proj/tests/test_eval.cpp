#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "mtf/core/error.hpp"
#include "mtf/core/random.hpp"
#include "mtf/eval.hpp"
#include "mtf/synth.hpp"
#include "oracles.hpp"

using namespace mtf;
namespace fs = std::filesystem;
using namespace mtf::oracle;

namespace {

Region random_box(Rng& rng) {
  return {uniform(rng, 20, 40), uniform(rng, 20, 40), uniform(rng, 10, 25), uniform(rng, 10, 25)};
}

LandmarkSet points(std::initializer_list<Point2> pts, std::initializer_list<double> vis) { return {pts, vis}; }

DetectionResult from_face(const FaceAnnotation& f, double score) {
  DetectionResult d;
  d.box = f.box;
  d.score = score;
  d.has_landmarks = d.has_pose = d.has_gender = true;
  d.landmarks = f.landmarks;
  d.pose_deg = f.pose_deg;
  d.gender = f.gender;
  d.gender_prob = f.gender;
  d.contributors = 1;
  return d;
}

std::vector<DatasetRecord> synthetic_truth(std::size_t n) {
  std::vector<DatasetRecord> gt;
  for (std::size_t i = 0; i < n; ++i) {
    gt.push_back({"test/" + std::to_string(i) + ".ppm", render_sample(3, i, SynthConfig{}).faces});
  }
  return gt;
}

}  // namespace

TEST_CASE("average precision examples") {
  CHECK(std::abs(average_precision({true, false, true}, 2).ap - 5.0 / 6) < 1e-12);
  CHECK(average_precision({true, true, true}, 3).ap == 1.0);
  CHECK(average_precision({}, 4).ap == 0.0);
  CHECK(average_precision({false, false}, 1).ap == 0.0);
  CHECK(average_precision({true}, 2).ap == 0.5);
  const PRCurve c = average_precision({true, false, true}, 2);
  CHECK(c.recall == std::vector<double>{0.5, 0.5, 1.0});
  CHECK(c.precision[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(average_precision({true}, 0), ShapeError);
}

TEST_CASE("average precision matches the per-recall-level oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 0, 15));
    std::vector<bool> flags;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      flags.push_back(uniform01(rng) < 0.6);
      tp += flags.back();
    }
    const std::size_t n_gt = tp + static_cast<std::size_t>(uniform_int(rng, tp == 0 ? 1 : 0, 4));
    const PRCurve c = average_precision(flags, n_gt);
    CHECK(c.ap == doctest::Approx(ap_oracle(flags, n_gt)).epsilon(1e-12));
    CHECK(c.ap >= 0);
    CHECK(c.ap <= 1);
    for (std::size_t i = 1; i < c.recall.size(); ++i) CHECK(c.recall[i] >= c.recall[i - 1]);
  }
}

TEST_CASE("matching examples") {
  const std::vector<Region> gt = {{10, 10, 8, 8}};
  const std::vector<Region> one = {{10, 10, 8, 8}};
  const std::vector<double> s1 = {0.9};
  const MatchResult m1 = match_detections(one, s1, gt, 0.5);
  CHECK(m1.tp == std::vector<bool>{true});
  CHECK(m1.gt_matched == std::vector<bool>{true});
  const std::vector<Region> two = {{10, 10, 8, 8}, {10, 10, 8, 8}};
  const std::vector<double> s2 = {0.5, 0.7};
  const MatchResult m2 = match_detections(two, s2, gt, 0.5);
  CHECK(m2.tp == std::vector<bool>{false, true});
  CHECK(m2.gt_index == std::vector<int>{-1, 0});
  CHECK(m2.order == std::vector<std::size_t>{1, 0});
  CHECK(match_detections(one, s1, std::vector<Region>{}, 0.5).tp == std::vector<bool>{false});
}

TEST_CASE("matching agrees with the brute-force oracle on up to 5 detections and 3 faces") {
  Rng rng(2);
  for (int trial = 0; trial < 3000; ++trial) {
    const int nd = uniform_int(rng, 0, 5), ng = uniform_int(rng, 0, 3);
    std::vector<Region> dets, gt;
    std::vector<double> scores;
    for (int i = 0; i < ng; ++i) gt.push_back(random_box(rng));
    for (int i = 0; i < nd; ++i) {
      dets.push_back(random_box(rng));
      scores.push_back(uniform01(rng));
    }
    const double thr = trial % 2 ? 0.5 : 0.3;
    const MatchResult m = match_detections(dets, scores, gt, thr);
    const std::vector<int> want = match_oracle(dets, scores, gt, thr);
    CHECK(m.gt_index == want);
    std::size_t tp = 0;
    std::vector<int> hits(gt.size(), 0);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      CHECK(m.tp[i] == (want[i] >= 0));
      tp += m.tp[i];
      if (m.gt_index[i] >= 0) ++hits[static_cast<std::size_t>(m.gt_index[i])];
    }
    CHECK(tp <= gt.size());
    for (int h : hits) CHECK(h <= 1);
  }
}

TEST_CASE("AP is invariant under strictly monotone score transforms") {
  const auto gt = synthetic_truth(20);
  Rng rng(3);
  std::vector<ImageDetection> dets;
  for (const auto& rec : gt) {
    for (const auto& f : rec.faces) {
      if (uniform01(rng) < 0.8) dets.push_back({rec.image, from_face(f, uniform01(rng))});
    }
    for (int k = 0; k < 2; ++k) {
      DetectionResult d;
      d.box = {uniform(rng, 10, 110), uniform(rng, 10, 110), 30, 30};
      d.score = uniform01(rng);
      dets.push_back({rec.image, d});
    }
  }
  const double base = *evaluate(dets, gt, EvalConfig{}).ap();
  CHECK(base > 0);
  CHECK(base < 1);
  auto transformed = dets;
  for (auto& d : transformed) d.det.score = std::exp(3 * d.det.score) - 7;
  CHECK(*evaluate(transformed, gt, EvalConfig{}).ap() == base);
}

TEST_CASE("landmark NME examples and scale invariance") {
  const LandmarkSet gt = points({{10, 10}, {20, 20}}, {1, 1});
  CHECK(*landmark_nme(gt, gt, 100) == 0.0);
  CHECK(std::abs(*landmark_nme(points({{13, 14}, {0, 0}}, {1, 1}), points({{10, 10}, {0, 0}}, {1, 0}), 100) - 5.0) < 1e-12);
  CHECK(std::abs(*landmark_nme(points({{13, 14}, {20, 20}}, {1, 1}), gt, 100) - 2.5) < 1e-12);
  CHECK_FALSE(landmark_nme(gt, points({{10, 10}, {20, 20}}, {0, 0}), 100).has_value());
  CHECK(box_normalizer({0, 0, 100, 100}) == 100);
  CHECK(pupil_normalizer(points({{0, 0}, {3, 4}}, {1, 1}), 0, 1) == 5);

  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    LandmarkSet p, g;
    for (int i = 0; i < 6; ++i) {
      p.points.push_back({uniform(rng, 0, 100), uniform(rng, 0, 100)});
      p.visibility.push_back(1);
      g.points.push_back({uniform(rng, 0, 100), uniform(rng, 0, 100)});
      g.visibility.push_back(i == 0 || uniform01(rng) < 0.7 ? 1.0 : 0.0);
    }
    const Region box{50, 50, uniform(rng, 20, 80), uniform(rng, 20, 80)};
    const double k = uniform(rng, 0.1, 10);
    LandmarkSet ps = p, gs = g;
    for (auto& q : ps.points) q = {q.x * k, q.y * k};
    for (auto& q : gs.points) q = {q.x * k, q.y * k};
    const Region bs{box.x * k, box.y * k, box.w * k, box.h * k};
    CHECK(*landmark_nme(ps, gs, box_normalizer(bs)) == doctest::Approx(*landmark_nme(p, g, box_normalizer(box))).epsilon(1e-10));
  }
}

TEST_CASE("CED examples and counting oracle") {
  const std::vector<double> zeros(5, 0.0);
  const auto grid = threshold_grid(0, 2, 0.5);
  CHECK(grid == std::vector<double>{0, 0.5, 1, 1.5, 2});
  for (double f : ced(zeros, grid).fractions) CHECK(f == 1.0);
  const std::vector<double> v = {1, 2, 3};
  const std::vector<double> t2 = {2};
  CHECK(ced(v, t2).fractions[0] == doctest::Approx(2.0 / 3));

  Rng rng(5);
  std::vector<double> values;
  for (int i = 0; i < 100; ++i) values.push_back(std::round(uniform(rng, 0, 20) * 2) / 2);  // lands on grid points
  const auto g = threshold_grid(0, 20, 0.5);
  const CEDCurve c = ced(values, g);
  REQUIRE(c.fractions.size() == g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto count = std::count_if(values.begin(), values.end(), [&](double x) { return x <= g[i]; });
    CHECK(c.fractions[i] == static_cast<double>(count) / 100.0);
    if (i > 0) CHECK(c.fractions[i] >= c.fractions[i - 1]);
  }
}

TEST_CASE("pose report examples and counting oracle") {
  const auto grid = threshold_grid(0, 60, 1);
  const std::vector<std::array<double, 3>> gt = {{0, 10, 20}, {-30, 5, 40}, {15, -15, 0}};
  const PoseReport same = pose_report(gt, gt, 15, grid);
  CHECK(same.mae == std::array<double, 3>{0, 0, 0});
  CHECK(same.within_tolerance == std::array<double, 3>{1, 1, 1});
  auto biased = gt;
  for (auto& p : biased) p[2] += 10;
  const PoseReport b = pose_report(biased, gt, 15, grid);
  CHECK(b.mae[2] == doctest::Approx(10));
  CHECK(b.within_tolerance[2] == 1.0);

  Rng rng(6);
  std::vector<std::array<double, 3>> pred, truth;
  for (int i = 0; i < 200; ++i) {
    truth.push_back({uniform(rng, -60, 60), uniform(rng, -60, 60), uniform(rng, -60, 60)});
    pred.push_back({truth.back()[0] + uniform(rng, -30, 30), truth.back()[1] + uniform(rng, -30, 30),
                    truth.back()[2] + uniform(rng, -30, 30)});
  }
  const PoseReport r = pose_report(pred, truth, 15, grid);
  for (int a = 0; a < 3; ++a) {
    int within = 0;
    double sum = 0;
    for (int i = 0; i < 200; ++i) {
      const double e = std::abs(pred[i][a] - truth[i][a]);
      within += e <= 15;
      sum += e;
    }
    CHECK(r.within_tolerance[a] == within / 200.0);
    CHECK(r.mae[a] == doctest::Approx(sum / 200));
  }
}

TEST_CASE("gender accuracy") {
  const std::vector<int> g = {0, 1, 1, 0};
  CHECK(gender_accuracy(g, g) == 1.0);
  const std::vector<int> half = {0, 0, 1, 1};
  CHECK(gender_accuracy(half, g) == 0.5);
  Rng rng(7);
  std::vector<int> a, b;
  int same = 0;
  for (int i = 0; i < 300; ++i) {
    a.push_back(uniform01(rng) < 0.5);
    b.push_back(uniform01(rng) < 0.5);
    same += a.back() == b.back();
  }
  CHECK(gender_accuracy(a, b) == same / 300.0);
}

TEST_CASE("perfect detections score AP 1 and NME 0; no detections score AP 0") {
  const auto gt = synthetic_truth(30);
  std::vector<ImageDetection> perfect;
  std::size_t n_gt = 0;
  for (const auto& rec : gt) {
    for (const auto& f : rec.faces) perfect.push_back({rec.image, from_face(f, 0.9)});
    n_gt += rec.faces.size();
  }
  const EvalReport r = evaluate(perfect, gt, EvalConfig{});
  CHECK(*r.ap() == 1.0);
  CHECK(*r.nme_mean() == 0.0);
  CHECK(*r.pose_mae_mean() == 0.0);
  CHECK(*r.gender() == 1.0);
  CHECK(r.n_gt == n_gt);

  const EvalReport empty = evaluate({}, gt, EvalConfig{});
  CHECK(*empty.ap() == 0.0);
  CHECK(empty.n_gt == n_gt);
  CHECK_FALSE(empty.nme_mean().has_value());
  const auto j = report_json(empty);
  CHECK(j["n_gt"] == n_gt);
  CHECK(j["detection"]["ap"] == 0.0);

  std::vector<ImageDetection> stray = {{"elsewhere.ppm", DetectionResult{}}};
  CHECK_THROWS_AS(evaluate(stray, gt, EvalConfig{}), IoError);
}

TEST_CASE("report files") {
  const auto gt = synthetic_truth(5);
  std::vector<ImageDetection> dets;
  for (const auto& rec : gt) {
    for (const auto& f : rec.faces) dets.push_back({rec.image, from_face(f, 0.8)});
  }
  const fs::path dir = fs::temp_directory_path() / "mtf_test_eval_report";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_report(evaluate(dets, gt, EvalConfig{}), dir);
  for (const char* name : {"metrics.json", "pr.csv", "ced_nme.csv", "ced_pose_roll.csv", "ced_pose_pitch.csv",
                           "ced_pose_yaw.csv", "pr.svg", "ced_nme.svg"}) {
    CHECK_MESSAGE(fs::exists(dir / name), name);
  }
  std::ifstream f(dir / "metrics.json");
  const auto j = nlohmann::json::parse(f);
  CHECK(j["detection"]["ap"] == 1.0);
  fs::remove_all(dir);
}

TEST_CASE("ablation table layout") {
  const std::vector<AblationRow> rows = {{"fused", 0.9, 3.5, 3.1, 1.0}, {"single-pose", std::nullopt, std::nullopt, 4.0, std::nullopt}};
  const std::string csv = ablation_csv(rows);
  CHECK(csv.rfind("arch,ap,nme,pose_mae,gender_acc\n", 0) == 0);
  CHECK(csv.find("\nsingle-pose,,,4,\n") != std::string::npos);
  const auto j = ablation_json(rows);
  CHECK(j["rows"].size() == 2);
  CHECK(j["rows"][1]["ap"].is_null());
}
