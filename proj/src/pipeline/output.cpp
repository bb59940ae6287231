#include "mtf/pipeline/output.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mtf/core/error.hpp"
#include "mtf/core/kv.hpp"
#include "mtf/image.hpp"

namespace mtf {

using nlohmann::json;

std::string detection_line(const ImageDetection& d) {
  const DetectionResult& r = d.det;
  json j;
  j["image"] = d.image;
  j["box"] = {r.box.x, r.box.y, r.box.w, r.box.h};
  j["score"] = r.score;
  if (r.has_landmarks) {
    json pts = json::array();
    for (const auto& p : r.landmarks.points) pts.push_back({p.x, p.y});
    j["landmarks"] = std::move(pts);
    j["visibility"] = r.landmarks.visibility;
  } else {
    j["landmarks"] = nullptr;
    j["visibility"] = nullptr;
  }
  j["pose_deg"] = r.has_pose ? json{r.pose_deg[0], r.pose_deg[1], r.pose_deg[2]} : json(nullptr);
  j["gender"] = r.has_gender ? json(r.gender) : json(nullptr);
  j["gender_prob"] = r.has_gender ? json(r.gender_prob) : json(nullptr);
  j["contributors"] = r.contributors;
  return j.dump();
}

ImageDetection parse_detection_line(const std::string& line, const std::string& where) {
  try {
    const json j = json::parse(line);
    ImageDetection d;
    d.image = j.at("image").get<std::string>();
    DetectionResult& r = d.det;
    const auto box = j.at("box").get<std::vector<double>>();
    if (box.size() != 4) throw IoError(where + ": box must have 4 numbers");
    r.box = {box[0], box[1], box[2], box[3]};
    r.score = j.at("score").get<double>();
    if (!j.at("landmarks").is_null()) {
      r.has_landmarks = true;
      for (const auto& p : j.at("landmarks")) {
        const auto xy = p.get<std::vector<double>>();
        if (xy.size() != 2) throw IoError(where + ": landmark must be [x, y]");
        r.landmarks.points.push_back({xy[0], xy[1]});
      }
      r.landmarks.visibility = j.at("visibility").get<std::vector<double>>();
      if (r.landmarks.visibility.size() != r.landmarks.points.size()) {
        throw IoError(where + ": landmark and visibility counts differ");
      }
    }
    if (!j.at("pose_deg").is_null()) {
      const auto pose = j.at("pose_deg").get<std::vector<double>>();
      if (pose.size() != 3) throw IoError(where + ": pose_deg must have 3 numbers");
      r.has_pose = true;
      r.pose_deg = {pose[0], pose[1], pose[2]};
    }
    if (!j.at("gender").is_null()) {
      r.has_gender = true;
      r.gender = j.at("gender").get<int>();
      r.gender_prob = j.value("gender_prob", json(static_cast<double>(r.gender))).get<double>();
    }
    r.contributors = j.value("contributors", 1);
    return d;
  } catch (const json::exception& e) {
    throw IoError(where + ": " + e.what());
  }
}

void write_detections(const std::filesystem::path& path, const std::vector<ImageDetection>& dets) {
  std::ofstream f(path, std::ios::binary);
  for (const auto& d : dets) f << detection_line(d) << '\n';
  if (!f) throw IoError("cannot write " + path.string());
}

std::vector<ImageDetection> read_detections(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open detections file " + path.string());
  std::vector<ImageDetection> out;
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (trim(line).empty()) continue;
    out.push_back(parse_detection_line(line, path.string() + ":" + std::to_string(n)));
  }
  return out;
}

namespace {

constexpr Rgb kBoxColor = {0.1f, 0.95f, 0.2f};
constexpr Rgb kVisible = {1.0f, 0.15f, 0.1f};
constexpr Rgb kHidden = {0.2f, 0.4f, 1.0f};

}  // namespace

Tensor<float> annotate_image(const Tensor<float>& image, const std::vector<DetectionResult>& dets) {
  Tensor<float> out = image;
  for (const auto& d : dets) {
    draw_rect(out, d.box, 1.0, kBoxColor);
    for (std::size_t i = 0; i < d.landmarks.size(); ++i) {
      const Point2& p = d.landmarks.points[i];
      fill_ellipse(out, p.x, p.y, 1.2, 1.2, 0, d.landmarks.visibility[i] >= 0.5 ? kVisible : kHidden);
    }
  }
  return out;
}

std::string detections_svg(int width, int height, const std::string& image_href,
                           const std::vector<DetectionResult>& dets) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  s << "  <image href=\"" << image_href << "\" x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
    << "\"/>\n";
  for (const auto& d : dets) {
    s << "  <g>\n    <rect x=\"" << format_double(d.box.left()) << "\" y=\"" << format_double(d.box.top())
      << "\" width=\"" << format_double(d.box.w) << "\" height=\"" << format_double(d.box.h)
      << "\" fill=\"none\" stroke=\"#19f233\" stroke-width=\"1\"/>\n";
    s << "    <text x=\"" << format_double(d.box.left()) << "\" y=\"" << format_double(d.box.top() - 2)
      << "\" font-size=\"8\" fill=\"#19f233\">" << format_double(std::round(d.score * 1000) / 1000) << "</text>\n";
    for (std::size_t i = 0; i < d.landmarks.size(); ++i) {
      const Point2& p = d.landmarks.points[i];
      s << "    <circle cx=\"" << format_double(p.x) << "\" cy=\"" << format_double(p.y) << "\" r=\"1.2\" fill=\""
        << (d.landmarks.visibility[i] >= 0.5 ? "#ff261a" : "#3366ff") << "\"/>\n";
    }
    s << "  </g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace mtf
