#include "mtf/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "mtf/core/error.hpp"
#include "mtf/core/kv.hpp"
#include "mtf/core/parallel.hpp"
#include "mtf/core/random.hpp"
#include "mtf/dataset.hpp"
#include "mtf/image.hpp"

namespace mtf {

namespace {

constexpr double kHeadAspect = 1.2;  // height / width
constexpr double kBoxPad = 1.25;

// Canonical landmark positions on the unit front hemisphere (X right,
// Y down); Z follows from the sphere.
constexpr std::array<std::array<double, 2>, kGlyphLandmarks> kTemplate = {{
    {-0.58, -0.42}, {-0.36, -0.50}, {-0.14, -0.42},  // left brow
    {0.14, -0.42},  {0.36, -0.50},  {0.58, -0.42},   // right brow
    {-0.56, -0.22}, {-0.36, -0.22}, {-0.16, -0.22},  // left eye
    {0.16, -0.22},  {0.36, -0.22},  {0.56, -0.22},   // right eye
    {0.0, -0.10},   {-0.13, 0.16},  {0.0, 0.20},     // nose
    {0.13, 0.16},                                    //
    {-0.28, 0.42},  {0.0, 0.38},    {0.28, 0.42},    // mouth
    {0.0, 0.50},    {0.0, 0.76},                     // lower lip, chin
}};

Eigen::Vector3d template_point(int i) {
  const double x = kTemplate[i][0], y = kTemplate[i][1];
  return {x, y, std::sqrt(1 - x * x - y * y)};
}

double deg(double d) { return d * std::numbers::pi / 180.0; }

Eigen::Matrix3d rotation(const std::array<double, 3>& pose_deg) {
  const double r = deg(pose_deg[0]), p = deg(pose_deg[1]), y = deg(pose_deg[2]);
  Eigen::Matrix3d rz, rx, ry;
  rz << std::cos(r), -std::sin(r), 0, std::sin(r), std::cos(r), 0, 0, 0, 1;
  rx << 1, 0, 0, 0, std::cos(p), -std::sin(p), 0, std::sin(p), std::cos(p);
  ry << std::cos(y), 0, std::sin(y), 0, 1, 0, -std::sin(y), 0, std::cos(y);
  return rz * rx * ry;
}

struct Head {
  double cx, cy, width;
  std::array<double, 3> pose_deg;
  int gender;
  Eigen::Matrix3d R, S, Sinv;
  Rgb skin, hair;
};

Head make_head(double cx, double cy, double width, const std::array<double, 3>& pose, int gender) {
  Head h{cx, cy, width, pose, gender, rotation(pose), {}, {}, {}, {}};
  const double a = width / 2;
  h.S = Eigen::Vector3d(a, a * kHeadAspect, a).asDiagonal();
  h.Sinv = h.S.inverse();
  return h;
}

// Rounds each point to a fixed point of denormalize(normalize(.)) against
// the box, so stored annotations round-trip exactly.
void snap_to_box(LandmarkSet& lm, const Region& box) {
  for (int iter = 0; iter < 16; ++iter) {
    const LandmarkSet back = denormalize_landmarks(box, normalize_landmarks(box, lm));
    bool same = true;
    for (std::size_t i = 0; i < lm.size(); ++i) same = same && back.points[i] == lm.points[i];
    if (same) return;
    lm.points = back.points;
  }
}

FaceAnnotation annotate(const Head& h) {
  FaceAnnotation f;
  f.pose_deg = h.pose_deg;
  f.gender = h.gender;
  for (int i = 0; i < kGlyphLandmarks; ++i) {
    const Eigen::Vector3d u = template_point(i);
    const Eigen::Vector3d p = h.R * h.S * u;
    const Eigen::Vector3d n = h.R * h.Sinv * u;
    f.landmarks.points.push_back({h.cx + p.x(), h.cy + p.y()});
    f.landmarks.visibility.push_back(n.z() > 0 ? 1.0 : 0.0);
  }
  const auto box = landmark_extent_box(f.landmarks, {kBoxPad, true, 0.5});
  if (!box) throw InternalError("synthetic face with fewer than 2 visible landmarks");
  f.box = *box;
  snap_to_box(f.landmarks, f.box);
  return f;
}

double segment_distance(double px, double py, int a, int b) {
  const double ax = kTemplate[a][0], ay = kTemplate[a][1];
  const double dx = kTemplate[b][0] - ax, dy = kTemplate[b][1] - ay;
  const double t = std::clamp(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(px - ax - t * dx, py - ay - t * dy);
}

Rgb scale(Rgb c, double s) {
  return {static_cast<float>(c[0] * s), static_cast<float>(c[1] * s), static_cast<float>(c[2] * s)};
}

// Surface color at head-frame point u (unit sphere).
Rgb surface_color(const Head& h, const Eigen::Vector3d& u) {
  const double X = u.x(), Y = u.y(), Z = u.z();
  const bool female = h.gender == 1;
  const double hairline = female ? -0.58 : -0.64;
  if (Z < -0.1 || Y < hairline || (female && std::abs(X) > 0.8 && Y < 0.35)) return h.hair;
  if (Z < 0.3) return h.skin;

  for (int eye : {kLeftPupil, kRightPupil}) {
    const double ex = kTemplate[eye][0], ey = kTemplate[eye][1];
    if (std::hypot(X - ex, Y - ey) < 0.065) return {0.08f, 0.06f, 0.05f};
    const double e = std::pow((X - ex) / 0.21, 2) + std::pow((Y - ey) / 0.085, 2);
    if (e < 1) return {0.95f, 0.95f, 0.93f};
  }
  if (segment_distance(X, Y, 0, 1) < 0.04 || segment_distance(X, Y, 1, 2) < 0.04 ||
      segment_distance(X, Y, 3, 4) < 0.04 || segment_distance(X, Y, 4, 5) < 0.04) {
    return scale(h.hair, 0.8);
  }
  if (segment_distance(X, Y, 12, 14) < 0.03) return scale(h.skin, 0.78);
  for (int n : {13, 15}) {
    if (std::hypot(X - kTemplate[n][0], Y - kTemplate[n][1]) < 0.045) return scale(h.skin, 0.45);
  }
  if (segment_distance(X, Y, 16, 17) < 0.04 || segment_distance(X, Y, 17, 18) < 0.04 ||
      segment_distance(X, Y, 16, 19) < 0.04 || segment_distance(X, Y, 19, 18) < 0.04) {
    return {0.68f, 0.18f, 0.22f};
  }
  return h.skin;
}

void paint_head(Tensor<float>& img, const Head& h) {
  const int W = image_width(img), H = image_height(img);
  const std::size_t plane = static_cast<std::size_t>(W) * static_cast<std::size_t>(H);
  const Eigen::Matrix3d M = h.Sinv * h.R.transpose();
  const Eigen::Vector3d m = M.col(2);
  const double A = m.squaredNorm();
  const double reach = h.width / 2 * kHeadAspect + 1;
  const int c0 = std::max(0, static_cast<int>(h.cx - reach)), c1 = std::min(W, static_cast<int>(h.cx + reach) + 1);
  const int r0 = std::max(0, static_cast<int>(h.cy - reach)), r1 = std::min(H, static_cast<int>(h.cy + reach) + 1);
  constexpr int kSub = 3;
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      std::array<double, 3> acc{};
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double qx = c + (sx + 0.5) / kSub - h.cx, qy = r + (sy + 0.5) / kSub - h.cy;
          const Eigen::Vector3d u0 = M.col(0) * qx + M.col(1) * qy;
          const double B = 2 * u0.dot(m), C = u0.squaredNorm() - 1;
          const double disc = B * B - 4 * A * C;
          if (disc < 0) continue;
          const Eigen::Vector3d u = u0 + m * ((-B + std::sqrt(disc)) / (2 * A));
          const Eigen::Vector3d n = (h.R * h.Sinv * u).normalized();
          const double shade = 0.72 + 0.28 * std::max(0.0, n.z());
          const Rgb col = surface_color(h, u);
          for (int k = 0; k < 3; ++k) acc[k] += col[k] * shade;
          ++hits;
        }
      }
      if (!hits) continue;
      const double a = static_cast<double>(hits) / (kSub * kSub);
      const std::size_t p = static_cast<std::size_t>(r) * static_cast<std::size_t>(W) + static_cast<std::size_t>(c);
      for (std::size_t k = 0; k < 3; ++k) {
        float& px = img[k * plane + p];
        px = static_cast<float>(px * (1 - a) + acc[k] / hits * a);
      }
    }
  }
}

Rgb jitter(Rng& rng, Rgb base, double amount) {
  const double bright = uniform(rng, 0.88, 1.08);
  Rgb out;
  for (int k = 0; k < 3; ++k) {
    out[k] = static_cast<float>(std::clamp((base[k] + uniform(rng, -amount, amount)) * bright, 0.0, 1.0));
  }
  return out;
}

constexpr Rgb kMaleSkin = {0.82f, 0.58f, 0.40f};
constexpr Rgb kFemaleSkin = {0.84f, 0.64f, 0.74f};

Rgb random_color(Rng& rng) {
  return {static_cast<float>(uniform01(rng)), static_cast<float>(uniform01(rng)), static_cast<float>(uniform01(rng))};
}

void paint_background(Tensor<float>& img, Rng& rng) {
  const int W = image_width(img), H = image_height(img);
  const std::size_t plane = static_cast<std::size_t>(W) * static_cast<std::size_t>(H);
  Rgb a, b;
  for (Rgb* c : {&a, &b}) {
    const double gray = uniform(rng, 0.2, 0.8);
    for (int k = 0; k < 3; ++k) (*c)[k] = static_cast<float>(std::clamp(gray + uniform(rng, -0.15, 0.15), 0.0, 1.0));
  }
  const double theta = uniform(rng, 0, 2 * std::numbers::pi);
  const double dx = std::cos(theta), dy = std::sin(theta);
  const double span = std::abs(dx) * W + std::abs(dy) * H;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double t = ((c + 0.5 - W / 2.0) * dx + (r + 0.5 - H / 2.0) * dy) / span + 0.5;
      const std::size_t p = static_cast<std::size_t>(r) * static_cast<std::size_t>(W) + static_cast<std::size_t>(c);
      for (std::size_t k = 0; k < 3; ++k) img[k * plane + p] = static_cast<float>(a[k] + (b[k] - a[k]) * t);
    }
  }
}

void paint_distractor(Tensor<float>& img, Rng& rng, const SynthConfig& cfg) {
  const double S = cfg.image_size;
  const double x = uniform(rng, 0, S), y = uniform(rng, 0, S);
  switch (uniform_int(rng, 0, 3)) {
    case 0: {
      const double w = uniform(rng, 6, 40), h = uniform(rng, 6, 40);
      fill_rect(img, {x, y, w, h}, random_color(rng), uniform(rng, 0.6, 1.0));
      break;
    }
    case 1: {
      const double len = uniform(rng, 10, 60), th = uniform(rng, 0, 2 * std::numbers::pi);
      draw_line(img, x, y, x + len * std::cos(th), y + len * std::sin(th), uniform(rng, 1, 4), random_color(rng));
      break;
    }
    case 2:
      fill_ellipse(img, x, y, uniform(rng, 4, 20), uniform(rng, 4, 20), uniform(rng, 0, std::numbers::pi),
                   random_color(rng), uniform(rng, 0.6, 1.0));
      break;
    default: {
      // Featureless skin-colored blob: a hard negative for the detector.
      const double w = uniform(rng, cfg.face_min, cfg.face_max) / 2;
      const Rgb skin = jitter(rng, uniform01(rng) < 0.5 ? kMaleSkin : kFemaleSkin, 0.03);
      fill_ellipse(img, x, y, w, w * uniform(rng, 0.8, 1.3), uniform(rng, 0, std::numbers::pi), skin);
      break;
    }
  }
}

}  // namespace

const std::array<int, kGlyphLandmarks>& mirror_partner() {
  static const std::array<int, kGlyphLandmarks> m = {5,  4,  3,  2,  1,  0,  11, 10, 9,  8, 7,
                                                     6,  12, 15, 14, 13, 18, 17, 16, 19, 20};
  return m;
}

void validate(const SynthConfig& cfg) {
  if (cfg.image_size < 64) throw ConfigError("synth.image_size must be >= 64");
  if (cfg.min_faces < 0 || cfg.max_faces < cfg.min_faces) {
    throw ConfigError("synth.min_faces/max_faces must satisfy 0 <= min <= max");
  }
  if (cfg.face_min <= 8 || cfg.face_max < cfg.face_min) {
    throw ConfigError("synth.face_min/face_max must satisfy 8 < min <= max");
  }
  if (cfg.face_max * kHeadAspect + 2 > cfg.image_size) {
    throw ConfigError("synth.face_max is too large for synth.image_size: faces would leave the image");
  }
  if (cfg.max_angle < 0 || cfg.max_angle > 60) throw ConfigError("synth.max_angle must be in [0, 60]");
  if (cfg.distractors < 0) throw ConfigError("synth.distractors must be >= 0");
  if (cfg.noise < 0) throw ConfigError("synth.noise must be >= 0");
  if (cfg.train_count < 0 || cfg.test_count < 0) throw ConfigError("synth.train_count/test_count must be >= 0");
}

std::string to_text(const SynthConfig& cfg) {
  std::string s;
  auto put = [&](const char* k, const std::string& v) { s += std::string("synth.") + k + " = " + v + "\n"; };
  put("image_size", std::to_string(cfg.image_size));
  put("min_faces", std::to_string(cfg.min_faces));
  put("max_faces", std::to_string(cfg.max_faces));
  put("face_min", format_double(cfg.face_min));
  put("face_max", format_double(cfg.face_max));
  put("max_angle", format_double(cfg.max_angle));
  put("distractors", std::to_string(cfg.distractors));
  put("noise", format_double(cfg.noise));
  put("train_count", std::to_string(cfg.train_count));
  put("test_count", std::to_string(cfg.test_count));
  return s;
}

bool apply_synth_key(SynthConfig& cfg, std::string_view key, std::string_view value) {
  auto as_int = [&] { return static_cast<int>(parse_int(key, value)); };
  if (key == "synth.image_size") cfg.image_size = as_int();
  else if (key == "synth.min_faces") cfg.min_faces = as_int();
  else if (key == "synth.max_faces") cfg.max_faces = as_int();
  else if (key == "synth.face_min") cfg.face_min = parse_double(key, value);
  else if (key == "synth.face_max") cfg.face_max = parse_double(key, value);
  else if (key == "synth.max_angle") cfg.max_angle = parse_double(key, value);
  else if (key == "synth.distractors") cfg.distractors = as_int();
  else if (key == "synth.noise") cfg.noise = parse_double(key, value);
  else if (key == "synth.train_count") cfg.train_count = as_int();
  else if (key == "synth.test_count") cfg.test_count = as_int();
  else return false;
  return true;
}

FaceAnnotation make_face(double cx, double cy, double width, const std::array<double, 3>& pose_deg, int gender) {
  return annotate(make_head(cx, cy, width, pose_deg, gender));
}

SampleRecord render_sample(std::uint64_t seed, std::uint64_t index, const SynthConfig& cfg) {
  validate(cfg);
  SampleRecord rec;
  rec.scene_seed = derive_seed(seed, "synth", index);
  Rng rng(rec.scene_seed);
  const double S = cfg.image_size;
  rec.image = make_image(cfg.image_size, cfg.image_size);
  paint_background(rec.image, rng);

  const int n_dis = uniform_int(rng, 0, cfg.distractors);
  for (int i = 0; i < n_dis; ++i) paint_distractor(rec.image, rng, cfg);

  const int n_faces = uniform_int(rng, cfg.min_faces, cfg.max_faces);
  std::vector<Head> heads;
  for (int i = 0; i < n_faces; ++i) {
    for (int attempt = 0; attempt < 40; ++attempt) {
      const double w = uniform(rng, cfg.face_min, cfg.face_max);
      const double ry = w / 2 * kHeadAspect + 1;
      const double cx = uniform(rng, ry, S - ry), cy = uniform(rng, ry, S - ry);
      bool clear = true;
      for (const Head& o : heads) {
        const double need = (w + o.width) / 2 * kHeadAspect;
        clear = clear && std::hypot(cx - o.cx, cy - o.cy) > need;
      }
      if (!clear) continue;
      std::array<double, 3> pose;
      for (double& a : pose) a = uniform(rng, -cfg.max_angle, cfg.max_angle);
      const int gender = uniform_int(rng, 0, 1);
      Head h = make_head(cx, cy, w, pose, gender);
      h.skin = jitter(rng, gender ? kFemaleSkin : kMaleSkin, 0.03);
      const double hv = uniform(rng, 0.08, 0.35);
      h.hair = {static_cast<float>(hv * 1.25), static_cast<float>(hv), static_cast<float>(hv * 0.8)};
      heads.push_back(h);
      break;
    }
  }
  for (const Head& h : heads) {
    paint_head(rec.image, h);
    rec.faces.push_back(annotate(h));
  }
  if (cfg.noise > 0) {
    for (auto& v : rec.image.data()) v += static_cast<float>(cfg.noise * normal(rng));
  }
  quantize(rec.image);
  return rec;
}

DatasetSummary generate_dataset(std::uint64_t seed, const SynthConfig& cfg, const std::filesystem::path& out_dir,
                                int threads) {
  validate(cfg);
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"train", "test"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  const auto n_train = static_cast<std::size_t>(cfg.train_count);
  const auto n_total = n_train + static_cast<std::size_t>(cfg.test_count);
  std::vector<DatasetRecord> records(n_total);
  parallel_for(n_total, threads, [&](std::size_t i) {
    SampleRecord s = render_sample(seed, i, cfg);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.ppm", i < n_train ? i : i - n_train);
    records[i].image = std::string(i < n_train ? "train/" : "test/") + name;
    records[i].faces = std::move(s.faces);
    write_ppm(out_dir / records[i].image, s.image);
  });

  DatasetSummary sum;
  sum.train = n_train;
  sum.test = n_total - n_train;
  for (const auto& r : records) sum.faces += r.faces.size();
  write_annotations(out_dir / "train.jsonl", {records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_train)});
  write_annotations(out_dir / "test.jsonl", {records.begin() + static_cast<std::ptrdiff_t>(n_train), records.end()});

  const std::string text = to_text(cfg);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  sum.config_hash = hash;
  nlohmann::json config = nlohmann::json::object();
  for (const auto& kv : parse_key_values(text)) config[kv.key] = kv.value;
  const nlohmann::json manifest = {{"seed", seed},
                                   {"config_hash", sum.config_hash},
                                   {"config", config},
                                   {"train", {{"count", sum.train}, {"annotations", "train.jsonl"}}},
                                   {"test", {{"count", sum.test}, {"annotations", "test.jsonl"}}},
                                   {"faces", sum.faces}};
  std::ofstream f(out_dir / "manifest.json", std::ios::binary);
  f << manifest.dump(2) << '\n';
  if (!f) throw IoError("cannot write " + (out_dir / "manifest.json").string());
  return sum;
}

}  // namespace mtf
