#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtf/eval.hpp"
#include "mtf/net/spec.hpp"
#include "mtf/pipeline/detect.hpp"
#include "mtf/pipeline/train.hpp"
#include "mtf/synth.hpp"

namespace mtf {

/// Everything a run reads from its config file. All randomness derives from
/// `seed`.
struct RunConfig {
  std::uint64_t seed = 1;
  SynthConfig synth;
  NetworkSpec network;
  TrainConfig train;
  DetectOptions pipeline;
  EvalConfig eval;
};

/// Strict `key = value` parsing on top of the defaults: unknown keys,
/// repeated keys and malformed values are ConfigErrors naming the key.
RunConfig parse_run_config(std::string_view text, std::string_view source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies one key; false when the key is unknown.
bool apply_run_key(RunConfig& cfg, std::string_view key, std::string_view value);

/// Every key with its current value, one `key = value` line each, in
/// reference order. parse_run_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& cfg);

struct ConfigKeyDoc {
  std::string key;
  std::string default_value;
  std::string description;
};

/// Documentation of every key with its default.
std::vector<ConfigKeyDoc> config_reference();

/// config_reference() as aligned text for --help.
std::string config_help();

/// Cross-field checks (synth ranges, network shapes, pipeline and eval
/// parameters).
void validate(const RunConfig& cfg);

}  // namespace mtf
