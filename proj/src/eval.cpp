#include "mtf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mtf/core/error.hpp"
#include "mtf/core/kv.hpp"

namespace mtf {

using nlohmann::json;

MatchResult match_detections(std::span<const Region> dets, std::span<const double> scores,
                             std::span<const Region> gt, double iou_threshold) {
  if (dets.size() != scores.size()) throw ShapeError("match_detections: detection and score counts differ");
  MatchResult m;
  m.order = order_by_score(scores);
  m.tp.assign(dets.size(), false);
  m.gt_index.assign(dets.size(), -1);
  m.gt_matched.assign(gt.size(), false);
  for (std::size_t d : m.order) {
    int best = -1;
    double best_iou = 0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (m.gt_matched[g]) continue;
      const double o = iou(dets[d], gt[g]);
      if (o >= iou_threshold && (best < 0 || o > best_iou)) {
        best = static_cast<int>(g);
        best_iou = o;
      }
    }
    if (best >= 0) {
      m.tp[d] = true;
      m.gt_index[d] = best;
      m.gt_matched[static_cast<std::size_t>(best)] = true;
    }
  }
  return m;
}

PRCurve average_precision(const std::vector<bool>& flags, std::size_t n_gt) {
  if (n_gt == 0) throw ShapeError("average_precision needs at least one ground-truth face");
  PRCurve c;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    tp += flags[i] ? 1 : 0;
    c.recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    c.precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  std::vector<double> env = c.precision;
  for (std::size_t i = env.size(); i-- > 1;) env[i - 1] = std::max(env[i - 1], env[i]);
  double prev = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (!flags[i]) continue;
    c.ap += (c.recall[i] - prev) * env[i];
    prev = c.recall[i];
  }
  return c;
}

std::optional<double> landmark_nme(const LandmarkSet& pred, const LandmarkSet& gt, double normalizer) {
  if (pred.size() != gt.size()) throw ShapeError("landmark_nme: landmark counts differ");
  if (!(normalizer > 0)) throw ShapeError("landmark_nme: normalizer must be > 0");
  double sum = 0;
  int n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.visibility[i] < 0.5) continue;
    sum += std::hypot(pred.points[i].x - gt.points[i].x, pred.points[i].y - gt.points[i].y);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return 100.0 * sum / n / normalizer;
}

double pupil_normalizer(const LandmarkSet& gt, int a, int b) {
  const auto n = static_cast<int>(gt.size());
  if (a < 0 || b < 0 || a >= n || b >= n) throw ConfigError("eval.pupils index out of range");
  return std::hypot(gt.points[a].x - gt.points[b].x, gt.points[a].y - gt.points[b].y);
}

CEDCurve ced(std::span<const double> values, std::span<const double> thresholds) {
  if (values.empty()) throw ShapeError("ced needs at least one value");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  CEDCurve c;
  for (double t : thresholds) {
    const auto k = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    c.thresholds.push_back(t);
    c.fractions.push_back(static_cast<double>(k) / static_cast<double>(sorted.size()));
  }
  return c;
}

std::vector<double> threshold_grid(double lo, double hi, double step) {
  if (!(step > 0) || hi < lo) throw ConfigError("threshold grid needs step > 0 and hi >= lo");
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) g.push_back(lo + static_cast<double>(i) * step);
  return g;
}

PoseReport pose_report(std::span<const std::array<double, 3>> pred, std::span<const std::array<double, 3>> gt,
                       double tolerance, std::span<const double> thresholds) {
  if (pred.size() != gt.size()) throw ShapeError("pose_report: prediction and ground-truth counts differ");
  PoseReport r;
  r.count = pred.size();
  r.tolerance = tolerance;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> err;
    for (std::size_t i = 0; i < pred.size(); ++i) err.push_back(std::abs(pred[i][a] - gt[i][a]));
    if (err.empty()) continue;
    r.mae[a] = std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(err.size());
    r.within_tolerance[a] =
        static_cast<double>(std::count_if(err.begin(), err.end(), [&](double e) { return e <= tolerance; })) /
        static_cast<double>(err.size());
    r.curves[a] = ced(err, thresholds);
  }
  return r;
}

double gender_accuracy(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size()) throw ShapeError("gender_accuracy: label counts differ");
  if (pred.empty()) throw ShapeError("gender_accuracy needs at least one label");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == gt[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

std::optional<double> EvalReport::nme_mean() const {
  if (!has_landmarks || nme.empty()) return std::nullopt;
  return std::accumulate(nme.begin(), nme.end(), 0.0) / static_cast<double>(nme.size());
}

std::optional<double> EvalReport::pose_mae_mean() const {
  if (!has_pose || pose.count == 0) return std::nullopt;
  return (pose.mae[0] + pose.mae[1] + pose.mae[2]) / 3;
}

std::optional<double> EvalReport::gender() const {
  if (!has_gender || gender_faces == 0) return std::nullopt;
  return gender_acc;
}

EvalReport evaluate(const std::vector<ImageDetection>& dets, const std::vector<DatasetRecord>& gt,
                    const EvalConfig& cfg, bool score_detections) {
  EvalReport rep;
  rep.config = cfg;
  rep.images = gt.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    index.emplace(gt[i].image, i);
    rep.n_gt += gt[i].faces.size();
  }
  std::vector<std::vector<const DetectionResult*>> per_image(gt.size());
  for (const auto& d : dets) {
    auto it = index.find(d.image);
    if (it == index.end()) throw IoError("detection refers to an image not in the ground truth: " + d.image);
    per_image[it->second].push_back(&d.det);
    rep.has_landmarks = rep.has_landmarks || d.det.has_landmarks;
    rep.has_pose = rep.has_pose || d.det.has_pose;
    rep.has_gender = rep.has_gender || d.det.has_gender;
  }
  rep.detections = dets.size();

  struct Ranked {
    double score;
    std::size_t seq;
    bool tp;
  };
  std::vector<Ranked> ranked;
  std::vector<std::array<double, 3>> pose_pred, pose_gt;
  std::vector<int> g_pred, g_gt;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    std::vector<Region> boxes, gboxes;
    std::vector<double> scores;
    for (const auto* d : per_image[i]) {
      boxes.push_back(d->box);
      scores.push_back(d->score);
    }
    for (const auto& f : gt[i].faces) gboxes.push_back(f.box);
    const MatchResult m = match_detections(boxes, scores, gboxes, cfg.iou_threshold);
    for (std::size_t d = 0; d < boxes.size(); ++d) {
      ranked.push_back({scores[d], ranked.size(), m.tp[d]});
      if (!m.tp[d]) continue;
      ++rep.tp;
      const DetectionResult& det = *per_image[i][d];
      const FaceAnnotation& face = gt[i].faces[static_cast<std::size_t>(m.gt_index[d])];
      if (det.has_landmarks) {
        const double norm = cfg.normalizer == "pupils"
                                ? pupil_normalizer(face.landmarks, cfg.pupils[0], cfg.pupils[1])
                                : box_normalizer(face.box);
        const auto e = norm > 0 ? landmark_nme(det.landmarks, face.landmarks, norm) : std::nullopt;
        if (e) rep.nme.push_back(*e);
        else ++rep.nme_excluded;
      }
      if (det.has_pose) {
        pose_pred.push_back(det.pose_deg);
        pose_gt.push_back(face.pose_deg);
      }
      if (det.has_gender) {
        g_pred.push_back(det.gender);
        g_gt.push_back(face.gender);
      }
    }
  }
  if (score_detections && rep.n_gt > 0) {
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
    std::vector<bool> flags;
    for (const auto& r : ranked) {
      flags.push_back(r.tp);
      rep.pr_scores.push_back(r.score);
    }
    rep.pr = average_precision(flags, rep.n_gt);
    rep.pr->iou_threshold = cfg.iou_threshold;
  }
  const auto pose_grid = threshold_grid(0, cfg.pose_max, cfg.pose_step);
  rep.pose = pose_report(pose_pred, pose_gt, cfg.pose_tolerance, pose_grid);
  if (!rep.nme.empty()) rep.nme_ced = ced(rep.nme, threshold_grid(0, cfg.nme_max, cfg.nme_step));
  rep.gender_faces = g_pred.size();
  if (!g_pred.empty()) rep.gender_acc = gender_accuracy(g_pred, g_gt);
  return rep;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string curve_csv(std::span<const double> xs, std::span<const double> ys) {
  std::string s = "threshold,value\n";
  for (std::size_t i = 0; i < xs.size(); ++i) s += format_double(xs[i]) + "," + format_double(ys[i]) + "\n";
  return s;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + p.string());
}

constexpr const char* kAngles[3] = {"roll", "pitch", "yaw"};

}  // namespace

json report_json(const EvalReport& r) {
  json j;
  j["iou_threshold"] = r.config.iou_threshold;
  j["images"] = r.images;
  j["n_gt"] = r.n_gt;
  j["detections"] = r.detections;
  j["detection"] = {{"ap", opt(r.ap())}, {"tp", r.tp}, {"fp", r.detections - r.tp}};
  j["landmarks"] = {{"normalizer", r.config.normalizer},
                    {"faces", r.nme.size()},
                    {"excluded", r.nme_excluded},
                    {"nme_percent", opt(r.nme_mean())}};
  json mae = nullptr, within = nullptr;
  if (r.pose_mae_mean()) {
    mae = json::object();
    within = json::object();
    for (int a = 0; a < 3; ++a) {
      mae[kAngles[a]] = r.pose.mae[a];
      within[kAngles[a]] = r.pose.within_tolerance[a];
    }
  }
  j["pose"] = {{"faces", r.has_pose ? r.pose.count : 0},
               {"tolerance_deg", r.pose.tolerance},
               {"mae_deg", mae},
               {"within_tolerance", within}};
  j["gender"] = {{"faces", r.gender_faces}, {"accuracy", opt(r.gender())}};
  return j;
}

void write_report(const EvalReport& r, const std::filesystem::path& out_dir, bool plots) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_text(out_dir / "metrics.json", report_json(r).dump(2) + "\n");

  std::string pr = "threshold,recall,precision\n";
  if (r.pr) {
    for (std::size_t i = 0; i < r.pr->recall.size(); ++i) {
      pr += format_double(r.pr_scores[i]) + "," + format_double(r.pr->recall[i]) + "," +
            format_double(r.pr->precision[i]) + "\n";
    }
  }
  write_text(out_dir / "pr.csv", pr);
  write_text(out_dir / "ced_nme.csv", curve_csv(r.nme_ced.thresholds, r.nme_ced.fractions));
  for (int a = 0; a < 3; ++a) {
    const CEDCurve& c = r.pose.curves[a];
    write_text(out_dir / (std::string("ced_pose_") + kAngles[a] + ".csv"), curve_csv(c.thresholds, c.fractions));
  }
  if (!plots) return;
  if (r.pr) {
    write_text(out_dir / "pr.svg", svg_line_plot("Precision-recall", "recall", "precision", r.pr->recall, r.pr->precision));
  }
  if (!r.nme.empty()) {
    write_text(out_dir / "ced_nme.svg",
               svg_line_plot("Landmark CED", "NME (%)", "fraction of faces", r.nme_ced.thresholds, r.nme_ced.fractions));
  }
  for (int a = 0; a < 3; ++a) {
    const CEDCurve& c = r.pose.curves[a];
    if (c.thresholds.empty()) continue;
    write_text(out_dir / (std::string("ced_pose_") + kAngles[a] + ".svg"),
               svg_line_plot(std::string("Pose CED (") + kAngles[a] + ")", "error (deg)", "fraction of faces",
                             c.thresholds, c.fractions));
  }
}

std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          std::span<const double> xs, std::span<const double> ys) {
  constexpr double W = 360, H = 260, L = 50, R = 15, T = 30, B = 40;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!xs.empty()) {
    x0 = std::min(0.0, *std::min_element(xs.begin(), xs.end()));
    x1 = std::max(x0 + 1e-9, *std::max_element(xs.begin(), xs.end()));
    y1 = std::max(1.0, *std::max_element(ys.begin(), ys.end()));
  }
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "  <text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n";
  s << "  <line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  s << "  <line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "  <text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"11\">" << xlabel
    << "</text>\n";
  s << "  <text x=\"12\" y=\"" << H / 2 << "\" font-size=\"11\" transform=\"rotate(-90 12 " << H / 2
    << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
  s << "  <text x=\"" << L - 4 << "\" y=\"" << py(y1) + 4 << "\" text-anchor=\"end\" font-size=\"9\">"
    << format_double(y1) << "</text>\n";
  s << "  <text x=\"" << W - R << "\" y=\"" << H - B + 12 << "\" text-anchor=\"end\" font-size=\"9\">"
    << format_double(x1) << "</text>\n";
  s << "  <polyline fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) s << (i ? " " : "") << px(xs[i]) << "," << py(ys[i]);
  s << "\"/>\n</svg>\n";
  return s.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  std::string s = "arch,ap,nme,pose_mae,gender_acc\n";
  for (const auto& r : rows) {
    s += r.arch + "," + cell(r.ap) + "," + cell(r.nme) + "," + cell(r.pose_mae) + "," + cell(r.gender_acc) + "\n";
  }
  return s;
}

json ablation_json(const std::vector<AblationRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"arch", r.arch},
                   {"ap", opt(r.ap)},
                   {"nme", opt(r.nme)},
                   {"pose_mae", opt(r.pose_mae)},
                   {"gender_acc", opt(r.gender_acc)}});
  }
  return {{"rows", arr}};
}

}  // namespace mtf
