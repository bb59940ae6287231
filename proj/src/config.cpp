#include "mtf/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mtf/core/error.hpp"
#include "mtf/core/kv.hpp"

namespace mtf {

namespace {

template <class T>
std::string join_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>) {
      s += format_double(v[i]);
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

int as_int(std::string_view key, std::string_view value) { return static_cast<int>(parse_int(key, value)); }

bool apply_train_key(TrainConfig& t, std::string_view key, std::string_view value) {
  if (key == "train.lr") t.lr = parse_double(key, value);
  else if (key == "train.momentum") t.momentum = parse_double(key, value);
  else if (key == "train.weight_decay") t.weight_decay = parse_double(key, value);
  else if (key == "train.lr_floor") t.lr_floor = parse_double(key, value);
  else if (key == "train.clip_norm") t.clip_norm = parse_double(key, value);
  else if (key == "train.epochs") t.epochs = as_int(key, value);
  else if (key == "train.stage_a_epochs") t.stage_a_epochs = as_int(key, value);
  else if (key == "train.batch_size") t.batch_size = as_int(key, value);
  else if (key == "train.regions_per_face") t.regions_per_face = as_int(key, value);
  else if (key == "train.context_per_face") t.context_per_face = as_int(key, value);
  else if (key == "train.negatives_per_image") t.negatives_per_image = as_int(key, value);
  else if (key == "train.precision") t.precision = as_int(key, value);
  else if (key == "train.lambda") {
    const auto l = parse_double_list(key, value);
    if (l.size() != 5) throw ConfigError("key 'train.lambda': expected 5 weights (D, L, V, P, G)");
    std::copy(l.begin(), l.end(), t.weights.lambda.begin());
  } else {
    return false;
  }
  return true;
}

bool apply_pipeline_key(DetectOptions& p, std::string_view key, std::string_view value) {
  if (key == "pipeline.scales") p.grid.scales = parse_double_list(key, value);
  else if (key == "pipeline.stride") p.grid.stride = parse_double(key, value);
  else if (key == "pipeline.jitter") p.grid.jitter = parse_double(key, value);
  else if (key == "pipeline.T") p.irp.stages = as_int(key, value);
  else if (key == "pipeline.candidate_threshold") p.irp.candidate_threshold = parse_double(key, value);
  else if (key == "pipeline.final_threshold") p.lnms.final_threshold = parse_double(key, value);
  else if (key == "pipeline.visibility_threshold") {
    p.irp.visibility_threshold = p.lnms.visibility_threshold = parse_double(key, value);
  } else if (key == "pipeline.overlap") p.lnms.overlap = parse_double(key, value);
  else if (key == "pipeline.k") p.lnms.k = as_int(key, value);
  else if (key == "pipeline.pad") p.irp.pad = p.lnms.pad = parse_double(key, value);
  else if (key == "pipeline.square_face_boxes") p.irp.square = p.lnms.square = parse_bool(key, value);
  else return false;
  return true;
}

bool apply_eval_key(EvalConfig& e, std::string_view key, std::string_view value) {
  if (key == "eval.iou_threshold") e.iou_threshold = parse_double(key, value);
  else if (key == "eval.normalizer") e.normalizer = trim(value);
  else if (key == "eval.pupils") {
    const auto p = parse_int_list(key, value);
    if (p.size() != 2) throw ConfigError("key 'eval.pupils': expected two landmark indices");
    e.pupils = {p[0], p[1]};
  } else if (key == "eval.nme_max") e.nme_max = parse_double(key, value);
  else if (key == "eval.nme_step") e.nme_step = parse_double(key, value);
  else if (key == "eval.pose_max") e.pose_max = parse_double(key, value);
  else if (key == "eval.pose_step") e.pose_step = parse_double(key, value);
  else if (key == "eval.pose_tolerance") e.pose_tolerance = parse_double(key, value);
  else return false;
  return true;
}

const std::map<std::string, std::string>& descriptions() {
  static const std::map<std::string, std::string> d = {
      {"seed", "root seed; synth, init, sampling and shuffling streams derive from it"},
      {"synth.image_size", "edge of the square synthetic images, pixels"},
      {"synth.min_faces", "fewest faces per image"},
      {"synth.max_faces", "most faces per image"},
      {"synth.face_min", "smallest head width, pixels"},
      {"synth.face_max", "largest head width, pixels"},
      {"synth.max_angle", "pose angles are drawn from [-max_angle, max_angle] degrees"},
      {"synth.distractors", "most background clutter shapes per image"},
      {"synth.noise", "std-dev of additive Gaussian pixel noise (intensity 0..1)"},
      {"synth.train_count", "training images"},
      {"synth.test_count", "held-out test images"},
      {"network.arch", "fused | shared-trunk | single-detection | single-landmarks | single-pose | single-gender"},
      {"network.input", "crop edge fed to the network, pixels"},
      {"network.landmarks", "landmark count"},
      {"network.kernels", "conv kernel size per trunk layer"},
      {"network.channels", "output channels per trunk layer"},
      {"network.strides", "conv stride per trunk layer"},
      {"network.pads", "zero padding per trunk layer"},
      {"network.pools", "max-pool window per trunk layer (1 = none)"},
      {"network.taps", "trunk layers whose outputs are fused (fused arch only)"},
      {"network.adapter_channels", "channels of each tap adapter conv"},
      {"network.reduce_channels", "channels of the 1x1 reduction after concatenation"},
      {"network.shared_width", "width of the shared fully connected layer"},
      {"network.head_width", "width of each task branch"},
      {"train.lr", "initial learning rate of each stage"},
      {"train.momentum", "SGD momentum"},
      {"train.weight_decay", "L2 weight decay"},
      {"train.lr_floor", "cosine schedule ends at lr * lr_floor"},
      {"train.clip_norm", "global gradient-norm cap (0 = off)"},
      {"train.epochs", "multi-task (stage B) epochs"},
      {"train.stage_a_epochs", "detection-only warm-start epochs (0 = skip)"},
      {"train.batch_size", "regions per SGD step"},
      {"train.regions_per_face", "jittered boxes drawn around each face per epoch"},
      {"train.context_per_face", "boxes of 0.35x to 2.5x the face size drawn near each face per epoch"},
      {"train.negatives_per_image", "random boxes drawn per image per epoch"},
      {"train.precision", "32 or 64 bit parameters"},
      {"train.lambda", "loss weights for detection, landmarks, visibility, pose, gender"},
      {"pipeline.scales", "grid proposal edges, pixels"},
      {"pipeline.stride", "grid step as a fraction of the scale"},
      {"pipeline.jitter", "deterministic proposal jitter as a fraction of the step"},
      {"pipeline.T", "iterative region proposal stages (0 = off)"},
      {"pipeline.candidate_threshold", "score a proposal needs to seed region regeneration"},
      {"pipeline.final_threshold", "score a detection needs to be reported"},
      {"pipeline.visibility_threshold", "predicted visibility at which a landmark counts as visible"},
      {"pipeline.overlap", "IOU above which regions join the kept face during NMS"},
      {"pipeline.k", "top-scoring regions aggregated per face"},
      {"pipeline.pad", "face box size relative to the landmark extent"},
      {"pipeline.square_face_boxes", "make face boxes from landmarks square"},
      {"eval.iou_threshold", "IOU for a detection to match a ground-truth face"},
      {"eval.normalizer", "landmark error normalizer: box (sqrt(w*h) of the GT box) or pupils"},
      {"eval.pupils", "landmark indices of the two pupils for the pupils normalizer"},
      {"eval.nme_max", "last threshold of the NME error curve, percent"},
      {"eval.nme_step", "spacing of the NME error curve, percent"},
      {"eval.pose_max", "last threshold of the pose error curves, degrees"},
      {"eval.pose_step", "spacing of the pose error curves, degrees"},
      {"eval.pose_tolerance", "pose error counted as correct, degrees"},
  };
  return d;
}

}  // namespace

bool apply_run_key(RunConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "seed") {
    const std::string v = trim(value);
    std::uint64_t s = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
      throw ConfigError("key 'seed': expected an unsigned 64-bit integer, got '" + v + "'");
    }
    cfg.seed = s;
    return true;
  }
  return apply_synth_key(cfg.synth, key, value) || apply_network_key(cfg.network, key, value) ||
         apply_train_key(cfg.train, key, value) || apply_pipeline_key(cfg.pipeline, key, value) ||
         apply_eval_key(cfg.eval, key, value);
}

RunConfig parse_run_config(std::string_view text, std::string_view source) {
  RunConfig cfg;
  std::set<std::string> seen;
  for (const KeyValue& kv : parse_key_values(text, source)) {
    const std::string where = std::string(source) + ":" + std::to_string(kv.line);
    if (!seen.insert(kv.key).second) throw ConfigError(where + ": key '" + kv.key + "' given twice");
    bool known = false;
    try {
      known = apply_run_key(cfg, kv.key, kv.value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    } catch (const ShapeError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    if (!known) throw ConfigError(where + ": unknown key '" + kv.key + "'");
  }
  validate(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return parse_run_config(s.str(), path.string());
}

std::string to_text(const RunConfig& cfg) {
  std::string s = "seed = " + std::to_string(cfg.seed) + "\n";
  s += to_text(cfg.synth);
  s += to_text(cfg.network);
  const TrainConfig& t = cfg.train;
  auto put = [&](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
  put("train.lr", format_double(t.lr));
  put("train.momentum", format_double(t.momentum));
  put("train.weight_decay", format_double(t.weight_decay));
  put("train.lr_floor", format_double(t.lr_floor));
  put("train.clip_norm", format_double(t.clip_norm));
  put("train.epochs", std::to_string(t.epochs));
  put("train.stage_a_epochs", std::to_string(t.stage_a_epochs));
  put("train.batch_size", std::to_string(t.batch_size));
  put("train.regions_per_face", std::to_string(t.regions_per_face));
  put("train.context_per_face", std::to_string(t.context_per_face));
  put("train.negatives_per_image", std::to_string(t.negatives_per_image));
  put("train.precision", std::to_string(t.precision));
  put("train.lambda", join_list(std::vector<double>(t.weights.lambda.begin(), t.weights.lambda.end())));
  const DetectOptions& p = cfg.pipeline;
  put("pipeline.scales", join_list(p.grid.scales));
  put("pipeline.stride", format_double(p.grid.stride));
  put("pipeline.jitter", format_double(p.grid.jitter));
  put("pipeline.T", std::to_string(p.irp.stages));
  put("pipeline.candidate_threshold", format_double(p.irp.candidate_threshold));
  put("pipeline.final_threshold", format_double(p.lnms.final_threshold));
  put("pipeline.visibility_threshold", format_double(p.lnms.visibility_threshold));
  put("pipeline.overlap", format_double(p.lnms.overlap));
  put("pipeline.k", std::to_string(p.lnms.k));
  put("pipeline.pad", format_double(p.lnms.pad));
  put("pipeline.square_face_boxes", p.lnms.square ? "true" : "false");
  const EvalConfig& e = cfg.eval;
  put("eval.iou_threshold", format_double(e.iou_threshold));
  put("eval.normalizer", e.normalizer);
  put("eval.pupils", std::to_string(e.pupils[0]) + "," + std::to_string(e.pupils[1]));
  put("eval.nme_max", format_double(e.nme_max));
  put("eval.nme_step", format_double(e.nme_step));
  put("eval.pose_max", format_double(e.pose_max));
  put("eval.pose_step", format_double(e.pose_step));
  put("eval.pose_tolerance", format_double(e.pose_tolerance));
  return s;
}

std::vector<ConfigKeyDoc> config_reference() {
  std::vector<ConfigKeyDoc> out;
  for (const KeyValue& kv : parse_key_values(to_text(RunConfig{}))) {
    const auto it = descriptions().find(kv.key);
    if (it == descriptions().end()) throw InternalError("undocumented config key " + kv.key);
    out.push_back({kv.key, kv.value, it->second});
  }
  return out;
}

std::string config_help() {
  std::size_t w = 0;
  const auto ref = config_reference();
  for (const auto& d : ref) w = std::max(w, d.key.size() + d.default_value.size() + 3);
  std::string s = "Config keys (`key = value`, one per line, # comments; defaults shown):\n";
  for (const auto& d : ref) {
    std::string left = d.key + " = " + d.default_value;
    left.resize(w, ' ');
    s += "  " + left + "  " + d.description + "\n";
  }
  return s;
}

void validate(const RunConfig& cfg) {
  validate(cfg.synth);
  try {
    validate(cfg.network);
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  const TrainConfig& t = cfg.train;
  if (t.lr <= 0) throw ConfigError("train.lr must be > 0");
  if (t.momentum < 0 || t.momentum >= 1) throw ConfigError("train.momentum must be in [0, 1)");
  if (t.weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  if (t.lr_floor < 0 || t.lr_floor > 1) throw ConfigError("train.lr_floor must be in [0, 1]");
  if (t.clip_norm < 0) throw ConfigError("train.clip_norm must be >= 0");
  if (t.epochs < 0 || t.stage_a_epochs < 0) throw ConfigError("train.epochs and train.stage_a_epochs must be >= 0");
  if (t.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (t.regions_per_face < 0 || t.context_per_face < 0 || t.negatives_per_image < 0) {
    throw ConfigError("train.regions_per_face, train.context_per_face and train.negatives_per_image must be >= 0");
  }
  if (t.precision != 32 && t.precision != 64) throw ConfigError("train.precision must be 32 or 64");
  for (double l : t.weights.lambda) {
    if (l < 0) throw ConfigError("train.lambda weights must be >= 0");
  }
  const DetectOptions& p = cfg.pipeline;
  if (p.grid.scales.empty()) throw ConfigError("pipeline.scales must not be empty");
  for (double s : p.grid.scales) {
    if (s <= 0) throw ConfigError("pipeline.scales must be > 0");
  }
  if (p.grid.stride <= 0) throw ConfigError("pipeline.stride must be > 0");
  if (p.grid.jitter < 0) throw ConfigError("pipeline.jitter must be >= 0");
  if (p.irp.stages < 0) throw ConfigError("pipeline.T must be >= 0");
  if (p.lnms.k < 1) throw ConfigError("pipeline.k must be >= 1");
  if (p.lnms.pad <= 0) throw ConfigError("pipeline.pad must be > 0");
  if (p.lnms.overlap < 0 || p.lnms.overlap > 1) throw ConfigError("pipeline.overlap must be in [0, 1]");
  const EvalConfig& e = cfg.eval;
  if (e.iou_threshold <= 0 || e.iou_threshold > 1) throw ConfigError("eval.iou_threshold must be in (0, 1]");
  if (e.normalizer != "box" && e.normalizer != "pupils") throw ConfigError("eval.normalizer must be box or pupils");
  if (e.pupils[0] < 0 || e.pupils[1] < 0 || e.pupils[0] >= cfg.network.landmarks ||
      e.pupils[1] >= cfg.network.landmarks) {
    throw ConfigError("eval.pupils must be landmark indices");
  }
  if (e.nme_step <= 0 || e.pose_step <= 0) throw ConfigError("eval.nme_step and eval.pose_step must be > 0");
  if (e.nme_max < 0 || e.pose_max < 0 || e.pose_tolerance < 0) {
    throw ConfigError("eval.nme_max, eval.pose_max and eval.pose_tolerance must be >= 0");
  }
}

}  // namespace mtf
