#include "mtf/net/spec.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "mtf/core/error.hpp"
#include "mtf/core/kv.hpp"

namespace mtf {

std::string arch_name(const NetworkSpec& spec) {
  switch (spec.kind) {
    case ArchKind::Fused:
      return "fused";
    case ArchKind::SharedTrunk:
      return "shared-trunk";
    case ArchKind::SingleTask:
      switch (spec.task) {
        case Task::Detection:
          return "single-detection";
        case Task::Landmarks:
          return "single-landmarks";
        case Task::Pose:
          return "single-pose";
        case Task::Gender:
          return "single-gender";
      }
  }
  return "?";
}

void set_arch(NetworkSpec& spec, std::string_view name) {
  if (name == "fused") {
    spec.kind = ArchKind::Fused;
  } else if (name == "shared-trunk") {
    spec.kind = ArchKind::SharedTrunk;
  } else if (name == "single-detection") {
    spec.kind = ArchKind::SingleTask;
    spec.task = Task::Detection;
  } else if (name == "single-landmarks") {
    spec.kind = ArchKind::SingleTask;
    spec.task = Task::Landmarks;
  } else if (name == "single-pose") {
    spec.kind = ArchKind::SingleTask;
    spec.task = Task::Pose;
  } else if (name == "single-gender") {
    spec.kind = ArchKind::SingleTask;
    spec.task = Task::Gender;
  } else {
    throw ConfigError("unknown architecture '" + std::string(name) +
                      "' (expected fused, shared-trunk, single-detection, single-landmarks, single-pose or "
                      "single-gender)");
  }
}

const std::vector<std::string>& ablation_arch_names() {
  static const std::vector<std::string> names = {"fused",           "shared-trunk", "single-detection",
                                                 "single-landmarks", "single-pose",  "single-gender"};
  return names;
}

std::vector<FeatureShape> validate(const NetworkSpec& spec) {
  if (spec.input_edge < 8) throw ShapeError("network.input: edge must be >= 8");
  if (spec.landmarks < 2) throw ShapeError("network.landmarks: need at least 2 landmarks");
  if (spec.trunk.empty()) throw ShapeError("network: trunk has no layers");
  if (spec.shared_width < 1 || spec.head_width < 1) throw ShapeError("network: layer widths must be >= 1");
  std::vector<FeatureShape> shapes;
  FeatureShape s{3, spec.input_edge, spec.input_edge};
  for (std::size_t i = 0; i < spec.trunk.size(); ++i) {
    const TrunkLayer& l = spec.trunk[i];
    const std::string name = "conv" + std::to_string(i + 1);
    if (l.kernel < 1 || l.channels < 1 || l.stride < 1 || l.pad < 0 || l.pool < 1) {
      throw ShapeError(name + ": kernel, channels, stride and pool must be >= 1 and pad >= 0");
    }
    if (s.height + 2 * l.pad < l.kernel || s.width + 2 * l.pad < l.kernel) {
      throw ShapeError(name + ": kernel " + std::to_string(l.kernel) + " does not fit input " +
                       std::to_string(s.height) + "x" + std::to_string(s.width));
    }
    s = {l.channels, (s.height + 2 * l.pad - l.kernel) / l.stride + 1, (s.width + 2 * l.pad - l.kernel) / l.stride + 1};
    if (l.pool > 1) {
      if (l.pool > s.height || l.pool > s.width) {
        throw ShapeError(name + ": pool window " + std::to_string(l.pool) + " exceeds feature map " +
                         std::to_string(s.height) + "x" + std::to_string(s.width));
      }
      s.height = (s.height - l.pool) / l.pool + 1;
      s.width = (s.width - l.pool) / l.pool + 1;
    }
    shapes.push_back(s);
  }
  if (spec.kind == ArchKind::Fused) {
    std::set<int> distinct(spec.taps.begin(), spec.taps.end());
    if (distinct.size() < 2 || distinct.size() != spec.taps.size()) {
      throw ShapeError("network.taps: fused networks need at least 2 distinct tap points");
    }
    for (int t : spec.taps) {
      if (t < 0 || t >= static_cast<int>(spec.trunk.size())) {
        throw ShapeError("network.taps: tap " + std::to_string(t) + " is not a trunk layer index");
      }
    }
    const FeatureShape deep = shapes[*distinct.rbegin()];
    for (int t : distinct) {
      const FeatureShape ts = shapes[t];
      if (ts.height == deep.height && ts.width == deep.width) continue;
      if (ts.height % deep.height != 0 || ts.width % deep.width != 0 ||
          ts.height / deep.height != ts.width / deep.width) {
        throw ShapeError("adapt" + std::to_string(t + 1) + ": tap " + std::to_string(ts.height) + "x" +
                         std::to_string(ts.width) + " cannot be stride-matched to " + std::to_string(deep.height) +
                         "x" + std::to_string(deep.width));
      }
    }
    if (spec.adapter_channels < 1 || spec.reduce_channels < 1) {
      throw ShapeError("network: adapter and reduction channels must be >= 1");
    }
  }
  return shapes;
}

namespace {

template <class F>
std::string join(const std::vector<TrunkLayer>& layers, F f) {
  std::string s;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(f(layers[i]));
  }
  return s;
}

void set_trunk_field(NetworkSpec& spec, std::string_view key, std::string_view value, int TrunkLayer::*field) {
  const auto v = parse_int_list(key, value);
  if (v.empty()) throw ConfigError("key '" + std::string(key) + "': empty list");
  if (spec.trunk.size() != v.size()) spec.trunk.resize(v.size(), spec.trunk.empty() ? TrunkLayer{} : spec.trunk.back());
  for (std::size_t i = 0; i < v.size(); ++i) spec.trunk[i].*field = v[i];
}

int positive_int(std::string_view key, std::string_view value) {
  const long v = parse_int(key, value);
  if (v < 1) throw ConfigError("key '" + std::string(key) + "': must be >= 1");
  return static_cast<int>(v);
}

}  // namespace

bool apply_network_key(NetworkSpec& spec, std::string_view key, std::string_view value) {
  if (key == "network.arch") {
    set_arch(spec, trim(value));
  } else if (key == "network.input") {
    spec.input_edge = positive_int(key, value);
  } else if (key == "network.landmarks") {
    spec.landmarks = positive_int(key, value);
  } else if (key == "network.kernels") {
    set_trunk_field(spec, key, value, &TrunkLayer::kernel);
  } else if (key == "network.channels") {
    set_trunk_field(spec, key, value, &TrunkLayer::channels);
  } else if (key == "network.strides") {
    set_trunk_field(spec, key, value, &TrunkLayer::stride);
  } else if (key == "network.pads") {
    set_trunk_field(spec, key, value, &TrunkLayer::pad);
  } else if (key == "network.pools") {
    set_trunk_field(spec, key, value, &TrunkLayer::pool);
  } else if (key == "network.taps") {
    spec.taps = parse_int_list(key, value);
  } else if (key == "network.adapter_channels") {
    spec.adapter_channels = positive_int(key, value);
  } else if (key == "network.reduce_channels") {
    spec.reduce_channels = positive_int(key, value);
  } else if (key == "network.shared_width") {
    spec.shared_width = positive_int(key, value);
  } else if (key == "network.head_width") {
    spec.head_width = positive_int(key, value);
  } else {
    return false;
  }
  return true;
}

std::string to_text(const NetworkSpec& spec) {
  std::ostringstream o;
  o << "network.arch = " << arch_name(spec) << "\n";
  o << "network.input = " << spec.input_edge << "\n";
  o << "network.landmarks = " << spec.landmarks << "\n";
  o << "network.kernels = " << join(spec.trunk, [](const TrunkLayer& l) { return l.kernel; }) << "\n";
  o << "network.channels = " << join(spec.trunk, [](const TrunkLayer& l) { return l.channels; }) << "\n";
  o << "network.strides = " << join(spec.trunk, [](const TrunkLayer& l) { return l.stride; }) << "\n";
  o << "network.pads = " << join(spec.trunk, [](const TrunkLayer& l) { return l.pad; }) << "\n";
  o << "network.pools = " << join(spec.trunk, [](const TrunkLayer& l) { return l.pool; }) << "\n";
  o << "network.taps = ";
  for (std::size_t i = 0; i < spec.taps.size(); ++i) o << (i ? "," : "") << spec.taps[i];
  o << "\n";
  o << "network.adapter_channels = " << spec.adapter_channels << "\n";
  o << "network.reduce_channels = " << spec.reduce_channels << "\n";
  o << "network.shared_width = " << spec.shared_width << "\n";
  o << "network.head_width = " << spec.head_width << "\n";
  return o.str();
}

NetworkSpec parse_network_spec(std::string_view text) {
  NetworkSpec spec;
  for (const auto& kv : parse_key_values(text, "<network spec>")) {
    if (!apply_network_key(spec, kv.key, kv.value)) throw ConfigError("unknown network key '" + kv.key + "'");
  }
  validate(spec);
  return spec;
}

}  // namespace mtf
