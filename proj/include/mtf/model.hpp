#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "mtf/net/network.hpp"

namespace mtf {

/// A network in either precision behind one interface: what the pipeline,
/// the CLI and checkpoints deal with.
class Model {
 public:
  /// precision is 4 (float) or 8 (double) bytes per scalar.
  Model(const NetworkSpec& spec, std::uint64_t seed, int precision);
  template <class T>
  explicit Model(Network<T> net) : net_(std::move(net)) {}

  static Model load(const std::filesystem::path& path);
  static Model from_checkpoint(const Checkpoint& ck);
  void save(const std::filesystem::path& path) const;
  std::string encode() const;

  const NetworkSpec& spec() const;
  int precision() const { return net_.index() == 0 ? 4 : 8; }

  /// Forward pass on one 3 x E x E crop with values in [0,1]. Every region
  /// is evaluated on its own, so a record never depends on which other
  /// regions were scored alongside it.
  PredictionRecord predict(const Tensor<float>& crop) const;

  template <class T>
  Network<T>* get() { return std::get_if<Network<T>>(&net_); }
  template <class T>
  const Network<T>* get() const { return std::get_if<Network<T>>(&net_); }

 private:
  std::variant<Network<float>, Network<double>> net_;
};

}  // namespace mtf
