#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "mtf/core/tensor.hpp"
#include "mtf/geometry.hpp"

namespace mtf {

// Images are 3 x H x W float tensors with values in [0,1]. Pixel (row i,
// column j) covers [j, j+1) x [i, i+1) of the image frame, so its center is
// (j + 0.5, i + 0.5). Regions and landmarks use the same frame.

using Rgb = std::array<float, 3>;

Tensor<float> make_image(int width, int height, Rgb fill = {0, 0, 0});
inline int image_width(const Tensor<float>& img) { return static_cast<int>(img.shape()[2]); }
inline int image_height(const Tensor<float>& img) { return static_cast<int>(img.shape()[1]); }

/// Rounds every value to the nearest k/255 after clamping to [0,1], so the
/// image survives an 8-bit round trip unchanged.
void quantize(Tensor<float>& img);

std::string encode_ppm(const Tensor<float>& img);
void write_ppm(const std::filesystem::path& path, const Tensor<float>& img);
Tensor<float> read_ppm(const std::filesystem::path& path);

/// Bilinear resample of `region` to out_edge x out_edge. Output pixel j
/// samples source column left + (j + 0.5) * w / E - 0.5; samples that fall
/// off the image read zero. Throws ShapeError when the region does not
/// overlap the image.
Tensor<float> crop_and_resize(const Tensor<float>& img, const Region& region, int out_edge);

// Drawing. Coverage is anti-aliased over about one pixel; `alpha` scales
// the paint opacity.
void fill_ellipse(Tensor<float>& img, double cx, double cy, double rx, double ry, double angle, Rgb color,
                  double alpha = 1.0);
void draw_line(Tensor<float>& img, double x0, double y0, double x1, double y1, double width, Rgb color,
               double alpha = 1.0);
void fill_rect(Tensor<float>& img, const Region& r, Rgb color, double alpha = 1.0);
void draw_rect(Tensor<float>& img, const Region& r, double width, Rgb color);

}  // namespace mtf
