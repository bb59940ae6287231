#include "mtf/dataset.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "mtf/core/error.hpp"
#include "mtf/image.hpp"

namespace mtf {

using nlohmann::json;

std::string annotation_line(const DatasetRecord& rec) {
  json faces = json::array();
  for (const auto& f : rec.faces) {
    json pts = json::array();
    for (const auto& p : f.landmarks.points) pts.push_back({p.x, p.y});
    json vis = json::array();
    for (double v : f.landmarks.visibility) vis.push_back(static_cast<int>(v));
    faces.push_back({{"box", {f.box.x, f.box.y, f.box.w, f.box.h}},
                     {"landmarks", std::move(pts)},
                     {"visibility", std::move(vis)},
                     {"pose_deg", {f.pose_deg[0], f.pose_deg[1], f.pose_deg[2]}},
                     {"gender", f.gender}});
  }
  json j = {{"image", rec.image}, {"faces", std::move(faces)}};
  return j.dump();
}

DatasetRecord parse_annotation_line(const std::string& line, const std::string& where) {
  try {
    const json j = json::parse(line);
    DatasetRecord rec;
    rec.image = j.at("image").get<std::string>();
    for (const auto& jf : j.at("faces")) {
      FaceAnnotation f;
      const auto box = jf.at("box").get<std::vector<double>>();
      if (box.size() != 4) throw IoError(where + ": box must have 4 numbers");
      f.box = {box[0], box[1], box[2], box[3]};
      for (const auto& p : jf.at("landmarks")) {
        const auto xy = p.get<std::vector<double>>();
        if (xy.size() != 2) throw IoError(where + ": landmark must be [x, y]");
        f.landmarks.points.push_back({xy[0], xy[1]});
      }
      for (const auto& v : jf.at("visibility")) f.landmarks.visibility.push_back(v.get<double>());
      const auto pose = jf.at("pose_deg").get<std::vector<double>>();
      if (pose.size() != 3) throw IoError(where + ": pose_deg must have 3 numbers");
      f.pose_deg = {pose[0], pose[1], pose[2]};
      f.gender = jf.at("gender").get<int>();
      rec.faces.push_back(std::move(f));
    }
    return rec;
  } catch (const json::exception& e) {
    throw IoError(where + ": " + e.what());
  }
}

std::vector<DatasetRecord> read_annotations(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open annotation file " + path.string());
  std::vector<DatasetRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_annotation_line(line, path.string() + ":" + std::to_string(n)));
  }
  return out;
}

void write_annotations(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  for (const auto& r : records) f << annotation_line(r) << '\n';
  if (!f) throw IoError("cannot write " + path.string());
}

Tensor<float> Dataset::image(std::size_t i) const { return read_ppm(image_path(i)); }

Dataset load_dataset(const std::filesystem::path& annotation_file) {
  Dataset ds;
  ds.root = annotation_file.parent_path();
  ds.records = read_annotations(annotation_file);
  return ds;
}

std::string check_annotation(const FaceAnnotation& face, int width, int height, double max_angle) {
  const LandmarkSet& lm = face.landmarks;
  if (lm.points.size() != lm.visibility.size()) return "landmark and visibility counts differ";
  if (!face.box.valid()) return "box has non-positive extent";
  double sx = 0, sy = 0;
  int visible = 0;
  for (std::size_t i = 0; i < lm.size(); ++i) {
    const double v = lm.visibility[i];
    if (v != 0 && v != 1) return "visibility " + std::to_string(i) + " is not 0 or 1";
    if (v == 0) continue;
    const Point2& p = lm.points[i];
    if (!(p.x >= 0 && p.x <= width && p.y >= 0 && p.y <= height)) {
      return "visible landmark " + std::to_string(i) + " lies outside the image";
    }
    sx += p.x;
    sy += p.y;
    ++visible;
  }
  if (visible > 0) {
    const double cx = sx / visible, cy = sy / visible;
    if (cx < face.box.left() || cx > face.box.right() || cy < face.box.top() || cy > face.box.bottom()) {
      return "box does not contain the visible landmark centroid";
    }
  }
  for (int a = 0; a < 3; ++a) {
    if (!(std::abs(face.pose_deg[a]) <= max_angle)) return "pose angle " + std::to_string(a) + " out of range";
  }
  if (face.gender != 0 && face.gender != 1) return "gender is not 0 or 1";
  const LandmarkSet back = denormalize_landmarks(face.box, normalize_landmarks(face.box, lm));
  for (std::size_t i = 0; i < lm.size(); ++i) {
    if (!(back.points[i] == lm.points[i])) return "landmark " + std::to_string(i) + " does not round-trip exactly";
  }
  return {};
}

std::vector<std::string> validate_dataset(const Dataset& ds, double max_angle) {
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const Tensor<float> img = ds.image(i);
    for (std::size_t k = 0; k < ds.records[i].faces.size(); ++k) {
      const std::string p = check_annotation(ds.records[i].faces[k], image_width(img), image_height(img), max_angle);
      if (!p.empty()) problems.push_back(ds.records[i].image + ": face " + std::to_string(k) + ": " + p);
    }
  }
  return problems;
}

}  // namespace mtf
