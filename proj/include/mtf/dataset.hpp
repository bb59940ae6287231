#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mtf/annotation.hpp"
#include "mtf/core/tensor.hpp"

namespace mtf {

/// One line of an annotation file: an image path relative to the file's
/// directory and its faces.
struct DatasetRecord {
  std::string image;
  std::vector<FaceAnnotation> faces;
};

/// JSON-lines annotation format, one record per line:
///   {"image": "train/000000.ppm",
///    "faces": [{"box": [x, y, w, h], "landmarks": [[x, y], ...],
///               "visibility": [0|1, ...], "pose_deg": [roll, pitch, yaw],
///               "gender": 0|1}]}
/// Boxes are center form.
std::string annotation_line(const DatasetRecord& rec);
DatasetRecord parse_annotation_line(const std::string& line, const std::string& where);

std::vector<DatasetRecord> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);

/// An annotation file with its records; image paths resolve against root.
struct Dataset {
  std::filesystem::path root;
  std::vector<DatasetRecord> records;

  std::filesystem::path image_path(std::size_t i) const { return root / records[i].image; }
  Tensor<float> image(std::size_t i) const;
};

Dataset load_dataset(const std::filesystem::path& annotation_file);

/// Checks one ground-truth face: equal landmark/visibility lengths, binary
/// visibility, visible points inside the image, box containing the visible
/// centroid, pose within +-max_angle, binary gender, and an exact
/// normalize/denormalize round trip. Returns a description of the first
/// violation, or an empty string.
std::string check_annotation(const FaceAnnotation& face, int width, int height, double max_angle);

/// Runs check_annotation over every face of every record (reading each
/// image for its size); returns "<image>: <problem>" lines.
std::vector<std::string> validate_dataset(const Dataset& ds, double max_angle);

}  // namespace mtf
