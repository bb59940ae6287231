#include "mtf/pipeline/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mtf/core/error.hpp"
#include "mtf/core/kv.hpp"
#include "mtf/core/random.hpp"

namespace mtf {

ProposalSet grid_proposals(int width, int height, const GridOptions& opt) {
  if (opt.stride <= 0) throw ConfigError("proposal stride must be > 0");
  ProposalSet set;
  set.source = "grid";
  Rng rng(derive_seed(opt.seed, "grid"));
  for (double s : opt.scales) {
    if (s <= 0) throw ConfigError("proposal scales must be > 0");
    if (s > width || s > height) continue;
    const double step = std::max(1.0, s * opt.stride);
    const int nx = static_cast<int>(std::floor((width - s) / step + 1e-9)) + 1;
    const int ny = static_cast<int>(std::floor((height - s) / step + 1e-9)) + 1;
    const double ox = (width - s - (nx - 1) * step) / 2, oy = (height - s - (ny - 1) * step) / 2;
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        Region r{ox + s / 2 + ix * step, oy + s / 2 + iy * step, s, s};
        if (opt.jitter > 0) {
          r.x += uniform(rng, -opt.jitter, opt.jitter) * step;
          r.y += uniform(rng, -opt.jitter, opt.jitter) * step;
        }
        set.regions.push_back(r);
      }
    }
  }
  return set;
}

bool intersects_image(const Region& r, int width, int height) {
  return r.valid() && r.right() > 0 && r.bottom() > 0 && r.left() < width && r.top() < height;
}

std::map<std::string, std::vector<Region>> read_proposal_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open proposal file " + path.string());
  std::map<std::string, std::vector<Region>> out;
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream in(t);
    std::string image;
    Region r{};
    std::string extra;
    if (!(in >> image >> r.x >> r.y >> r.w >> r.h) || (in >> extra)) {
      throw IoError(path.string() + ":" + std::to_string(n) + ": expected `image_path cx cy w h`");
    }
    if (!r.valid()) throw IoError(path.string() + ":" + std::to_string(n) + ": region must have w, h > 0");
    out[image].push_back(r);
  }
  return out;
}

void write_proposal_file(const std::filesystem::path& path, const std::vector<ProposalSet>& sets) {
  std::ofstream f(path);
  for (const auto& s : sets) {
    for (const auto& r : s.regions) {
      f << s.image << ' ' << format_double(r.x) << ' ' << format_double(r.y) << ' ' << format_double(r.w) << ' '
        << format_double(r.h) << '\n';
    }
  }
  if (!f) throw IoError("cannot write " + path.string());
}

}  // namespace mtf
