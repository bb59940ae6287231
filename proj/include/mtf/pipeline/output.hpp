#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mtf/pipeline/detect.hpp"

namespace mtf {

/// A detection tagged with the image it belongs to.
struct ImageDetection {
  std::string image;
  DetectionResult det;
};

/// One JSON object per line:
///   {"image", "box": [x, y, w, h], "score", "landmarks": [[x, y], ...] | null,
///    "visibility": [...] | null, "pose_deg": [roll, pitch, yaw] | null,
///    "gender": 0|1|null, "gender_prob": p|null, "contributors": n}
std::string detection_line(const ImageDetection& d);
ImageDetection parse_detection_line(const std::string& line, const std::string& where);

void write_detections(const std::filesystem::path& path, const std::vector<ImageDetection>& dets);
std::vector<ImageDetection> read_detections(const std::filesystem::path& path);

/// Copy of the image with boxes and landmarks burned in (visible points
/// red, others blue).
Tensor<float> annotate_image(const Tensor<float>& image, const std::vector<DetectionResult>& dets);

/// SVG overlay of the same drawing, referencing `image_href` as backdrop.
std::string detections_svg(int width, int height, const std::string& image_href,
                           const std::vector<DetectionResult>& dets);

}  // namespace mtf
