#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mtf/geometry.hpp"

namespace mtf {

struct ProposalSet {
  std::string image;
  std::vector<Region> regions;
  std::string source;  // "grid", "file" or "irp-stage-<k>"
};

struct GridOptions {
  std::vector<double> scales = {36, 44, 52, 60, 68};
  double stride = 0.25;  // step between neighbors as a fraction of the scale
  double jitter = 0;     // max center offset as a fraction of the step
  std::uint64_t seed = 0;
};

/// Square windows of every scale on a grid with step max(1, scale * stride).
/// Each scale gets floor((W - s) / step) + 1 columns (same for rows); the
/// grid is centered so the leftover margin is split evenly. Scales larger
/// than the image are skipped. Jitter, when set, is drawn from a stream
/// seeded by `seed`, so equal seeds give equal lists.
ProposalSet grid_proposals(int width, int height, const GridOptions& opt);

/// True when the region overlaps the image [0,W] x [0,H] with positive area.
bool intersects_image(const Region& r, int width, int height);

/// Proposal file: one region per line, `image_path cx cy w h`. Blank lines
/// and '#' comments are skipped. Regions are grouped by image path in file
/// order.
std::map<std::string, std::vector<Region>> read_proposal_file(const std::filesystem::path& path);
void write_proposal_file(const std::filesystem::path& path, const std::vector<ProposalSet>& sets);

}  // namespace mtf
