#include "mtf/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mtf/core/error.hpp"

namespace mtf {

Tensor<float> make_image(int width, int height, Rgb fill) {
  if (width < 1 || height < 1) throw ShapeError("image extents must be positive");
  Tensor<float> img(Shape{3, static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
  const std::size_t plane = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  for (std::size_t c = 0; c < 3; ++c) std::fill_n(img.ptr() + c * plane, plane, fill[c]);
  return img;
}

void quantize(Tensor<float>& img) {
  for (auto& v : img.data()) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
}

std::string encode_ppm(const Tensor<float>& img) {
  const int w = image_width(img), h = image_height(img);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  out.reserve(out.size() + 3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      out.push_back(static_cast<char>(std::lround(std::clamp(img[c * plane + p], 0.0f, 1.0f) * 255.0f)));
    }
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& img) {
  std::ofstream f(path, std::ios::binary);
  const std::string bytes = encode_ppm(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("cannot write " + path.string());
}

namespace {

int read_header_int(std::istream& in, const std::string& where) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = 0;
  if (!(in >> v) || v <= 0) throw IoError(where + ": malformed PPM header");
  return v;
}

}  // namespace

Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::string magic(2, '\0');
  f.read(magic.data(), 2);
  if (magic != "P6") throw IoError(path.string() + ": not a binary PPM (P6)");
  const int w = read_header_int(f, path.string());
  const int h = read_header_int(f, path.string());
  const int maxval = read_header_int(f, path.string());
  if (maxval != 255) throw IoError(path.string() + ": only 8-bit PPM is supported");
  f.get();
  const std::size_t plane = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::string bytes(3 * plane, '\0');
  f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(f.gcount()) != bytes.size()) throw IoError(path.string() + ": truncated pixel data");
  Tensor<float> img = make_image(w, h);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) img[c * plane + p] = static_cast<unsigned char>(bytes[3 * p + c]) / 255.0f;
  }
  return img;
}

Tensor<float> crop_and_resize(const Tensor<float>& img, const Region& region, int out_edge) {
  if (out_edge < 1) throw ShapeError("crop edge must be positive");
  if (!region.valid()) throw ShapeError("crop region must have positive extent");
  const int W = image_width(img), H = image_height(img);
  if (region.right() <= 0 || region.bottom() <= 0 || region.left() >= W || region.top() >= H) {
    throw ShapeError("crop region lies entirely outside the " + std::to_string(W) + "x" + std::to_string(H) + " image");
  }
  const auto E = static_cast<std::size_t>(out_edge);
  Tensor<float> out(Shape{3, E, E});
  const std::size_t plane = static_cast<std::size_t>(W) * static_cast<std::size_t>(H);
  const double sx = region.w / out_edge, sy = region.h / out_edge;

  // Per-column source taps are shared by every row.
  std::vector<int> x0(E);
  std::vector<float> fx(E);
  for (std::size_t j = 0; j < E; ++j) {
    const double u = region.left() + (static_cast<double>(j) + 0.5) * sx - 0.5;
    const double f = std::floor(u);
    x0[j] = static_cast<int>(f);
    fx[j] = static_cast<float>(u - f);
  }
  auto at = [&](std::size_t c, int r, int col) -> float {
    if (r < 0 || r >= H || col < 0 || col >= W) return 0.0f;
    return img[c * plane + static_cast<std::size_t>(r) * static_cast<std::size_t>(W) + static_cast<std::size_t>(col)];
  };
  for (std::size_t i = 0; i < E; ++i) {
    const double v = region.top() + (static_cast<double>(i) + 0.5) * sy - 0.5;
    const double fl = std::floor(v);
    const int y0 = static_cast<int>(fl);
    const auto fy = static_cast<float>(v - fl);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < E; ++j) {
        const float top = at(c, y0, x0[j]) * (1 - fx[j]) + at(c, y0, x0[j] + 1) * fx[j];
        const float bot = at(c, y0 + 1, x0[j]) * (1 - fx[j]) + at(c, y0 + 1, x0[j] + 1) * fx[j];
        out[(c * E + i) * E + j] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

namespace {

// Blends `color` into the pixels of the bounding box [x0,x1) x [y0,y1)
// with per-pixel coverage from `cover(px, py)` (pixel-center coordinates).
template <class Cover>
void paint(Tensor<float>& img, double x0, double y0, double x1, double y1, Rgb color, double alpha, Cover cover) {
  const int W = image_width(img), H = image_height(img);
  const int c0 = std::max(0, static_cast<int>(std::floor(x0)) - 1);
  const int c1 = std::min(W, static_cast<int>(std::ceil(x1)) + 1);
  const int r0 = std::max(0, static_cast<int>(std::floor(y0)) - 1);
  const int r1 = std::min(H, static_cast<int>(std::ceil(y1)) + 1);
  const std::size_t plane = static_cast<std::size_t>(W) * static_cast<std::size_t>(H);
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      const double a = alpha * std::clamp(cover(c + 0.5, r + 0.5), 0.0, 1.0);
      if (a <= 0) continue;
      const std::size_t p = static_cast<std::size_t>(r) * static_cast<std::size_t>(W) + static_cast<std::size_t>(c);
      for (std::size_t k = 0; k < 3; ++k) {
        float& px = img[k * plane + p];
        px = static_cast<float>(px * (1 - a) + color[k] * a);
      }
    }
  }
}

}  // namespace

void fill_ellipse(Tensor<float>& img, double cx, double cy, double rx, double ry, double angle, Rgb color,
                  double alpha) {
  if (rx <= 0 || ry <= 0) return;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double reach = std::max(rx, ry);
  paint(img, cx - reach, cy - reach, cx + reach, cy + reach, color, alpha, [&](double px, double py) {
    const double dx = px - cx, dy = py - cy;
    const double u = (dx * ca + dy * sa) / rx, v = (-dx * sa + dy * ca) / ry;
    const double r = std::hypot(u, v);
    if (r < 1e-9) return 1.0;
    // First-order distance to the boundary in pixels.
    const double g = std::hypot(u / rx, v / ry) / r;
    return 0.5 - (r - 1) / g;
  });
}

void draw_line(Tensor<float>& img, double x0, double y0, double x1, double y1, double width, Rgb color,
               double alpha) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  const double half = width / 2;
  paint(img, std::min(x0, x1) - half, std::min(y0, y1) - half, std::max(x0, x1) + half, std::max(y0, y1) + half,
        color, alpha, [&](double px, double py) {
          double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
          t = std::clamp(t, 0.0, 1.0);
          const double d = std::hypot(px - (x0 + t * dx), py - (y0 + t * dy));
          return 0.5 - (d - half);
        });
}

void fill_rect(Tensor<float>& img, const Region& r, Rgb color, double alpha) {
  paint(img, r.left(), r.top(), r.right(), r.bottom(), color, alpha, [&](double px, double py) {
    const double d = std::max(std::abs(px - r.x) - r.w / 2, std::abs(py - r.y) - r.h / 2);
    return 0.5 - d;
  });
}

void draw_rect(Tensor<float>& img, const Region& r, double width, Rgb color) {
  draw_line(img, r.left(), r.top(), r.right(), r.top(), width, color);
  draw_line(img, r.right(), r.top(), r.right(), r.bottom(), width, color);
  draw_line(img, r.right(), r.bottom(), r.left(), r.bottom(), width, color);
  draw_line(img, r.left(), r.bottom(), r.left(), r.top(), width, color);
}

}  // namespace mtf
