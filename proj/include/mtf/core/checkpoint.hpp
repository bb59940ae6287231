#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mtf/core/tape.hpp"

namespace mtf {

/// Parameter container file:
///
///   "MFK1"                       magic
///   u8   precision               4 or 8 (bytes per scalar)
///   u32  n, n bytes              network spec text (key = value lines)
///   u32  block count
///   per block: u32 n, n bytes name; u8 rank; u64 extent x rank
///   raw little-endian scalar blocks in manifest order
struct Checkpoint {
  int precision = 8;
  std::string spec_text;
  std::vector<std::string> names;
  std::vector<Tensor<double>> values;  // widened to 64-bit on load
};

template <class T>
void save_checkpoint(const std::filesystem::path& path, const std::string& spec_text,
                     std::span<const Parameter<T>> params);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Serialized bytes, used by save_checkpoint and by determinism checks.
template <class T>
std::string encode_checkpoint(const std::string& spec_text, std::span<const Parameter<T>> params);

}  // namespace mtf
