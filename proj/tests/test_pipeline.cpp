#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mtf/core/error.hpp"
#include "mtf/image.hpp"
#include "mtf/pipeline/detect.hpp"
#include "mtf/pipeline/output.hpp"
#include "mtf/pipeline/proposals.hpp"
#include "mtf/pipeline/train.hpp"
#include "mtf/synth.hpp"
#include "oracles.hpp"

using namespace mtf;
namespace fs = std::filesystem;
using namespace mtf::oracle;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

NetworkSpec tiny_spec(const std::string& arch) {
  NetworkSpec s;
  set_arch(s, arch);
  s.input_edge = 16;
  s.landmarks = kGlyphLandmarks;
  s.trunk = {{3, 4, 1, 1, 2}, {3, 6, 1, 1, 2}};
  s.taps = {0, 1};
  s.adapter_channels = 4;
  s.reduce_channels = 3;
  s.shared_width = 12;
  s.head_width = 8;
  return s;
}

std::vector<TrainImage> tiny_training_set(std::size_t n) {
  SynthConfig cfg;
  cfg.image_size = 64;
  cfg.min_faces = 1;
  cfg.max_faces = 2;
  cfg.face_min = 18;
  cfg.face_max = 26;
  std::vector<TrainImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord s = render_sample(2, i, cfg);
    out.push_back({std::move(s.image), std::move(s.faces)});
  }
  return out;
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.epochs = 2;
  c.stage_a_epochs = 1;
  c.batch_size = 8;
  c.regions_per_face = 2;
  c.context_per_face = 1;
  c.negatives_per_image = 2;
  c.precision = 64;
  return c;
}

}  // namespace

TEST_CASE("grid proposal counts") {
  GridOptions opt;
  opt.scales = {32, 64};
  opt.stride = 0.5;
  const ProposalSet p = grid_proposals(128, 128, opt);
  CHECK(p.regions.size() == 58);
  CHECK(p.source == "grid");
  // enumeration oracle: every window of each scale at the step lattice that fits
  std::size_t expect = 0;
  for (double s : opt.scales) {
    const double step = s * opt.stride;
    std::size_t cols = 0;
    for (double x = 0; x + s <= 128; x += step) ++cols;
    expect += cols * cols;
  }
  CHECK(p.regions.size() == expect);
  for (const Region& r : p.regions) {
    CHECK(r.left() >= 0);
    CHECK(r.right() <= 128);
    CHECK(r.w == r.h);
  }

  GridOptions one;
  one.scales = {128};
  one.stride = 1.0;
  const ProposalSet single = grid_proposals(128, 128, one);
  REQUIRE(single.regions.size() == 1);
  CHECK(single.regions[0] == Region{64, 64, 128, 128});

  GridOptions big;
  big.scales = {200};
  CHECK(grid_proposals(128, 128, big).regions.empty());
}

TEST_CASE("grid proposals are deterministic in the jitter seed") {
  GridOptions opt;
  opt.jitter = 0.5;
  opt.seed = 3;
  const auto a = grid_proposals(128, 128, opt).regions;
  const auto b = grid_proposals(128, 128, opt).regions;
  CHECK(a == b);
  opt.seed = 4;
  CHECK(grid_proposals(128, 128, opt).regions != a);
  for (const Region& r : a) CHECK(intersects_image(r, 128, 128));
}

TEST_CASE("proposal file round trip") {
  const TempDir dir("mtf_test_proposals");
  fs::create_directories(dir.path);
  const std::vector<ProposalSet> sets = {{"a.ppm", {{10.5, 20.25, 30, 30}, {1, 2, 3, 4}}, "file"},
                                         {"b.ppm", {{0.1, 0.2, 0.3, 0.4}}, "file"}};
  write_proposal_file(dir.path / "p.txt", sets);
  const auto back = read_proposal_file(dir.path / "p.txt");
  REQUIRE(back.size() == 2);
  CHECK(back.at("a.ppm") == sets[0].regions);
  CHECK(back.at("b.ppm") == sets[1].regions);
  {
    std::ofstream f(dir.path / "bad.txt");
    f << "# comment\n\na.ppm 1 2 3\n";
  }
  CHECK_THROWS_AS(read_proposal_file(dir.path / "bad.txt"), IoError);
  CHECK_THROWS_AS(read_proposal_file(dir.path / "missing.txt"), IoError);
}

TEST_CASE("crop_and_resize: identity, constant and ramp oracles") {
  Tensor<float> img = make_image(8, 6);
  Rng rng(1);
  for (auto& v : img.data()) v = static_cast<float>(uniform01(rng));
  // identity needs a square crop, so use a square image
  Tensor<float> sq = make_image(8, 8);
  for (auto& v : sq.data()) v = static_cast<float>(uniform01(rng));
  const Tensor<float> same = crop_and_resize(sq, {4, 4, 8, 8}, 8);
  CHECK(std::equal(same.data().begin(), same.data().end(), sq.data().begin()));

  const Tensor<float> flat = make_image(20, 20, {0.3f, 0.6f, 0.9f});
  const Tensor<float> c = crop_and_resize(flat, {9, 11, 10, 10}, 7);
  for (std::size_t i = 0; i < 49; ++i) {
    CHECK(c[i] == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(c[49 + i] == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(c[98 + i] == doctest::Approx(0.9).epsilon(1e-6));
  }

  // 2x downscale of a ramp: output j samples source 2j + 0.5, so the slope doubles
  Tensor<float> ramp = make_image(16, 16);
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        ramp[static_cast<std::size_t>((ch * 16 + y) * 16 + x)] = static_cast<float>(0.1 + 0.04 * x + 0.01 * y + 0.1 * ch);
      }
    }
  }
  const Tensor<float> half = crop_and_resize(ramp, {8, 8, 16, 16}, 8);
  double worst = 0;
  for (int ch = 0; ch < 3; ++ch) {
    for (int j = 0; j < 8; ++j) {
      for (int i = 0; i < 8; ++i) {
        const double expect = 0.1 + 0.04 * (2 * i + 0.5) + 0.01 * (2 * j + 0.5) + 0.1 * ch;
        worst = std::max(worst, std::abs(half[static_cast<std::size_t>((ch * 8 + j) * 8 + i)] - expect));
      }
    }
  }
  CHECK(worst < 1e-6);

  CHECK_THROWS_AS(crop_and_resize(img, {100, 100, 10, 10}, 4), ShapeError);
  // partly outside reads zeros there
  const Tensor<float> edge = crop_and_resize(flat, {0, 10, 10, 10}, 10);
  CHECK(edge[0] == 0.0f);
  CHECK(edge[9] == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("IRP with zero stages is the identity on thresholded proposals") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto initial = random_regions(rng, 20);
    IrpOptions opt;
    opt.stages = 0;
    opt.candidate_threshold = uniform01(rng);
    const IrpResult r = iterative_region_proposals(scripted_scorer(), initial, opt);
    std::vector<Region> expect;
    for (const Region& b : initial) {
      if (scripted(b).detection >= opt.candidate_threshold) expect.push_back(b);
    }
    CHECK(r.regions == expect);
    for (std::size_t i = 0; i < r.regions.size(); ++i) {
      CHECK(r.records[i].detection == scripted(r.regions[i]).detection);
      CHECK(r.stage[i] == 0);
    }
  }
}

TEST_CASE("IRP output is a superset of the stage-0 set and grows stage by stage") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto initial = random_regions(rng, 15);
    IrpOptions base;
    base.stages = 0;
    base.candidate_threshold = 0.4;
    const IrpResult r0 = iterative_region_proposals(scripted_scorer(), initial, base);
    IrpOptions opt = base;
    opt.stages = 1 + trial % 3;
    int calls = 0;
    const IrpResult r = iterative_region_proposals(scripted_scorer(&calls), initial, opt);
    CHECK(calls == 1 + opt.stages);
    REQUIRE(r.regions.size() >= r0.regions.size());
    CHECK(std::equal(r0.regions.begin(), r0.regions.end(), r.regions.begin()));
    for (std::size_t i = 1; i < r.stage.size(); ++i) CHECK(r.stage[i] >= r.stage[i - 1]);
    // every box of stage t comes from the landmarks of a stage t-1 box
    for (std::size_t i = 0; i < r.regions.size(); ++i) {
      if (r.stage[i] == 0) continue;
      bool found = false;
      for (std::size_t j = 0; j < r.regions.size() && !found; ++j) {
        if (r.stage[j] != r.stage[i] - 1) continue;
        const auto box = landmark_extent_box(denormalize_landmarks(r.regions[j], r.records[j].landmarks),
                                             {opt.pad, opt.square, opt.visibility_threshold});
        found = box && *box == r.regions[i];
      }
      CHECK(found);
    }
  }
}

TEST_CASE("IRP with nothing above threshold is empty") {
  Rng rng(4);
  IrpOptions opt;
  opt.candidate_threshold = 1.5;
  opt.stages = 2;
  CHECK(iterative_region_proposals(scripted_scorer(), random_regions(rng, 10), opt).regions.empty());
  opt.stages = -1;
  CHECK_THROWS_AS(iterative_region_proposals(scripted_scorer(), random_regions(rng, 3), opt), ConfigError);
}

TEST_CASE("lower median") {
  CHECK(lower_median({3}) == 3);
  CHECK(lower_median({4, 1}) == 1);
  CHECK(lower_median({5, 1, 3}) == 3);
  CHECK(lower_median({4, 2, 3, 1}) == 2);
  CHECK_THROWS_AS(lower_median({}), InternalError);
}

TEST_CASE("L-NMS on a single region returns its own predictions") {
  const Region r{50, 50, 30, 30};
  PredictionRecord p = scripted(r, 0);
  p.detection = 0.9;
  LnmsOptions opt;
  const auto out = landmark_nms(std::span(&r, 1), std::span(&p, 1), opt);
  REQUIRE(out.size() == 1);
  const LandmarkSet lm = denormalize_landmarks(r, p.landmarks);
  CHECK(out[0].landmarks.points == lm.points);
  CHECK(out[0].landmarks.visibility == lm.visibility);
  CHECK(out[0].score == 0.9);
  CHECK(out[0].contributors == 1);
  CHECK(out[0].pose_deg == p.pose_degrees());
  CHECK(out[0].gender_prob == p.gender);
  CHECK(out[0].box == *landmark_extent_box(lm, {opt.pad, opt.square, opt.visibility_threshold}));
}

TEST_CASE("L-NMS with k = 1 reports the top region of each cluster") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Scene s = two_face_scene(rng, 10);
    LnmsOptions opt;
    opt.k = 1;
    opt.final_threshold = 0;
    for (const DetectionResult& d : landmark_nms(s.regions, s.records, opt)) {
      CHECK(d.contributors == 1);
      bool found = false;
      for (std::size_t i = 0; i < s.regions.size(); ++i) {
        if (s.records[i].detection != d.score) continue;
        found = found || denormalize_landmarks(s.regions[i], s.records[i].landmarks).points == d.landmarks.points;
      }
      CHECK(found);
    }
  }
}

TEST_CASE("L-NMS matches the exhaustive reference over 500 trials") {
  Rng rng(6);
  int faces_found = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const Scene s = two_face_scene(rng, 2 + static_cast<std::size_t>(trial % 9));
    LnmsOptions opt;
    opt.k = 1 + trial % 6;
    opt.final_threshold = trial % 2 ? 0.5 : 0.8;
    const auto got = landmark_nms(s.regions, s.records, opt);
    const auto want = lnms_reference(s, opt);
    REQUIRE(got.size() == want.size());
    faces_found += static_cast<int>(got.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].box == want[i].box);
      CHECK(got[i].score == want[i].score);
      CHECK(got[i].contributors == want[i].contributors);
      CHECK(got[i].landmarks.points == want[i].landmarks.points);
      CHECK(got[i].landmarks.visibility == want[i].landmarks.visibility);
      CHECK(got[i].pose_deg == want[i].pose_deg);
      CHECK(got[i].gender_prob == want[i].gender_prob);
      CHECK(got[i].gender == want[i].gender);
    }
    std::vector<double> scores;
    for (const auto& r : s.records) scores.push_back(r.detection);
    CHECK(got.size() <= s.regions.size());
  }
  CHECK(faces_found > 500);
}

TEST_CASE("L-NMS drops regions with fewer than two visible landmarks and rejects k < 1") {
  const Region r{50, 50, 30, 30};
  PredictionRecord p = scripted(r, 0);
  p.detection = 0.9;
  for (std::size_t i = 1; i < p.landmarks.size(); ++i) p.landmarks.visibility[i] = 0.1;
  CHECK(landmark_nms(std::span(&r, 1), std::span(&p, 1), LnmsOptions{}).empty());
  LnmsOptions bad;
  bad.k = 0;
  CHECK_THROWS_AS(landmark_nms(std::span(&r, 1), std::span(&p, 1), bad), ConfigError);
}

TEST_CASE("detection lines round trip") {
  Rng rng(7);
  const Scene s = two_face_scene(rng, 6);
  LnmsOptions opt;
  opt.final_threshold = 0;
  for (const DetectionResult& d : landmark_nms(s.regions, s.records, opt)) {
    const ImageDetection in{"test/000001.ppm", d};
    const std::string line = detection_line(in);
    const ImageDetection out = parse_detection_line(line, "t");
    CHECK(out.image == in.image);
    CHECK(out.det.box == d.box);
    CHECK(out.det.score == d.score);
    CHECK(out.det.landmarks.points == d.landmarks.points);
    CHECK(out.det.landmarks.visibility == d.landmarks.visibility);
    CHECK(out.det.pose_deg == d.pose_deg);
    CHECK(out.det.gender == d.gender);
    CHECK(out.det.contributors == d.contributors);
    CHECK(detection_line(out) == line);
  }
  DetectionResult box_only;
  box_only.box = {1, 2, 3, 4};
  box_only.score = 0.7;
  const ImageDetection parsed = parse_detection_line(detection_line({"x.ppm", box_only}), "t");
  CHECK_FALSE(parsed.det.has_landmarks);
  CHECK_FALSE(parsed.det.has_pose);
  CHECK_FALSE(parsed.det.has_gender);
}

TEST_CASE("annotated outputs draw something") {
  Rng rng(8);
  const Scene s = two_face_scene(rng, 6);
  LnmsOptions opt;
  opt.final_threshold = 0;
  const auto dets = landmark_nms(s.regions, s.records, opt);
  REQUIRE_FALSE(dets.empty());
  const Tensor<float> img = make_image(128, 128, {0.5f, 0.5f, 0.5f});
  const Tensor<float> ann = annotate_image(img, dets);
  CHECK_FALSE(std::equal(ann.data().begin(), ann.data().end(), img.data().begin()));
  const std::string svg = detections_svg(128, 128, "scene.ppm", dets);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("scene.ppm") != std::string::npos);
  CHECK(svg.find("<rect") != std::string::npos);
}

TEST_CASE("untrained model inference is bounded, finite and repeatable") {
  const Model model(tiny_spec("fused"), 1, 8);
  const Tensor<float> img = render_sample(1, 0, SynthConfig{}).image;
  const Region r{60, 60, 40, 40};
  const PredictionRecord a = infer_region(model, img, r), b = infer_region(model, img, r);
  CHECK(a.detection > 0);
  CHECK(a.detection < 1);
  CHECK(a.gender > 0);
  CHECK(a.gender < 1);
  for (const auto& c : a.landmarks.coords) CHECK(std::isfinite(c.x));
  for (double v : a.landmarks.visibility) CHECK((v >= 0 && v <= 1));
  CHECK(a.landmarks.coords == b.landmarks.coords);
  CHECK(a.detection == b.detection);
  const std::vector<Region> rs = {r, {30, 30, 20, 20}, {90, 90, 50, 50}};
  const auto serial = infer_regions(model, img, rs, 1), threaded = infer_regions(model, img, rs, 3);
  for (std::size_t i = 0; i < rs.size(); ++i) CHECK(serial[i].detection == threaded[i].detection);
}

TEST_CASE("detect is repeatable and thread-count independent") {
  const Model model(tiny_spec("fused"), 2, 4);
  const Tensor<float> img = render_sample(1, 1, SynthConfig{}).image;
  DetectOptions opt;
  opt.irp.candidate_threshold = 0;
  opt.lnms.final_threshold = 0;
  const auto a = detect(model, img, opt);
  opt.threads = 4;
  const auto b = detect(model, img, opt);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].box == b[i].box);
    CHECK(a[i].score == b[i].score);
  }
  NetworkSpec pose = tiny_spec("single-pose");
  CHECK_THROWS_AS(detect(Model(pose, 1, 4), img, opt), ConfigError);
}

TEST_CASE("training samples follow the assignment rules") {
  const auto images = tiny_training_set(6);
  const TrainConfig cfg = tiny_train_config();
  Rng rng(9);
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const TrainingSample& s : sample_regions(images[i], i, rng, cfg)) {
      CHECK(s.image == i);
      const TaskTargets t = assign_targets(s.region, images[i].faces);
      CHECK(t.detection_active == s.targets.detection_active);
      CHECK(t.landmarks_active == s.targets.landmarks_active);
      CHECK(t.pose_active == s.targets.pose_active);
      CHECK((s.targets.detection_active || s.targets.landmarks_active));
    }
  }
}

TEST_CASE("64-bit training is bit-reproducible and reduces the loss") {
  const auto images = tiny_training_set(16);
  TrainConfig cfg = tiny_train_config();
  cfg.epochs = 4;
  const TrainResult a = train(images, tiny_spec("fused"), cfg, 5);
  const TrainResult b = train(images, tiny_spec("fused"), cfg, 5);
  CHECK(a.model.encode() == b.model.encode());
  REQUIRE(a.stage_b.size() == 4);
  REQUIRE(a.stage_a.size() == 1);
  CHECK(a.stage_b.back().loss.total < a.stage_b.front().loss.total);
  for (std::size_t i = 0; i < a.stage_b.size(); ++i) CHECK(a.stage_b[i].loss.total == b.stage_b[i].loss.total);
  const TrainResult c = train(images, tiny_spec("fused"), cfg, 6);
  CHECK(c.model.encode() != a.model.encode());
}

TEST_CASE("detection-only weights on the shared trunk reproduce single-task detection training") {
  const auto images = tiny_training_set(10);
  TrainConfig cfg = tiny_train_config();
  cfg.stage_a_epochs = 0;
  cfg.epochs = 2;
  cfg.weights.lambda = {1, 0, 0, 0, 0};
  const TrainResult shared = train(images, tiny_spec("shared-trunk"), cfg, 3);
  const TrainResult single = train(images, tiny_spec("single-detection"), cfg, 3);
  REQUIRE(shared.stage_b.size() == single.stage_b.size());
  for (std::size_t i = 0; i < shared.stage_b.size(); ++i) {
    CHECK(shared.stage_b[i].loss.total == single.stage_b[i].loss.total);
    CHECK(shared.stage_b[i].loss.components[kDetection] == single.stage_b[i].loss.components[kDetection]);
  }
  for (const char* name : {"conv1.w", "conv2.w", "fc_all.w", "out_det.w"}) {
    const auto* a = shared.model.get<double>()->find(name);
    const auto* b = single.model.get<double>()->find(name);
    REQUIRE(a);
    REQUIRE(b);
    CHECK(std::equal(a->value.data().begin(), a->value.data().end(), b->value.data().begin()));
  }
}

TEST_CASE("stage-A warm start replaces stage A exactly") {
  const auto images = tiny_training_set(8);
  const TrainConfig cfg = tiny_train_config();
  const TrainResult full = train(images, tiny_spec("fused"), cfg, 4);
  REQUIRE(full.warm_start.has_value());
  const TrainResult reused = train(images, tiny_spec("fused"), cfg, 4, {}, &*full.warm_start);
  CHECK(reused.model.encode() == full.model.encode());
  TrainConfig f32 = cfg;
  f32.precision = 32;
  CHECK_THROWS_AS(train(images, tiny_spec("fused"), f32, 4, {}, &*full.warm_start), ConfigError);
}

TEST_CASE("loss csv layout") {
  EpochLog e;
  e.epoch = 1;
  e.loss.components = {0.5, 0.25, 0.125, 1, 2};
  e.loss.total = 3;
  const std::string csv = loss_csv({e});
  CHECK(csv.rfind("epoch,loss_D,loss_L,loss_V,loss_P,loss_G,total\n", 0) == 0);
  CHECK(csv.find("\n1,0.5,0.25,0.125,1,2,3\n") != std::string::npos);
}
