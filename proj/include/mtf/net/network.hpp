#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtf/core/checkpoint.hpp"
#include "mtf/core/tape.hpp"
#include "mtf/net/losses.hpp"
#include "mtf/net/spec.hpp"

namespace mtf {

/// Output nodes of a forward pass; heads the architecture lacks are empty.
struct Heads {
  std::optional<Var> detection;   // N x 2 logits
  std::optional<Var> landmarks;   // N x 2L, interleaved (x, y)
  std::optional<Var> visibility;  // N x L
  std::optional<Var> pose;        // N x 3
  std::optional<Var> gender;      // N x 2 logits
};

/// Parameterized instance of a NetworkSpec.
///
/// Layer names: conv<i> for the trunk, adapt<i> for the tap adapters,
/// reduce for the 1x1 channel reduction, fc_all for the shared layer and
/// fc_<task>/out_<task> for each branch (task in det, lmk, vis, pose,
/// gender). Each parameter is initialized from its own seed stream derived
/// from (seed, name), so layers with the same name and shape start equal
/// across architectures.
template <class T>
class Network {
 public:
  Network(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  std::span<Parameter<T>> parameters() { return params_; }
  std::span<const Parameter<T>> parameters() const { return params_; }
  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;

  /// Forward pass over a batch N x 3 x E x E (or a single 3 x E x E crop).
  Heads forward(Tape<T>& tape, Var input) const;

  /// Copies values from a checkpoint whose manifest matches exactly.
  void load(const Checkpoint& ck);

  /// Copies every trunk (conv<i>) parameter of `other` whose name and shape
  /// match; returns how many were copied.
  template <class U>
  std::size_t copy_trunk_from(const Network<U>& other);

 private:
  struct Conv {
    std::size_t w, b;
    int stride, pad, pool;
  };
  struct Dense {
    std::size_t w, b;
  };
  struct Branch {
    Dense hidden, out;
  };

  std::size_t add(std::string name, Shape shape, std::size_t fan_in, double gain, std::uint64_t seed);
  Conv add_conv(const std::string& name, int cin, int cout, int k, int stride, int pad, int pool, std::uint64_t seed);
  Dense add_dense(const std::string& name, int in, int out, double gain, std::uint64_t seed);
  Branch add_branch(const std::string& tag, int in, int out, std::uint64_t seed);
  Var conv(Tape<T>& tape, Var x, const Conv& c) const;
  Var dense(Tape<T>& tape, Var x, const Dense& d, bool activate) const;
  Var branch(Tape<T>& tape, Var x, const Branch& b) const;

  NetworkSpec spec_;
  std::vector<Parameter<T>> params_;
  std::vector<Conv> trunk_;
  std::vector<int> taps_;                   // sorted distinct tap indices (fused only)
  std::vector<std::optional<Conv>> adapters_;  // parallel to taps_
  std::optional<Conv> reduce_;
  Dense fc_all_{};
  std::optional<Branch> det_, lmk_, vis_, pose_, gender_;
};

/// Stacks crops (3 x E x E, values in [0,1]) into a centered N x 3 x E x E
/// batch.
template <class T>
Tensor<T> make_input_batch(std::span<const Tensor<float>> crops);

template <class T>
struct LossNodes {
  Var total;
  LossBreakdown values;
};

/// Builds the weighted multi-task loss on the tape. Each task term is a
/// mean over the samples active for that task; a term whose head is absent
/// or that has no active sample contributes a constant 0.
template <class T>
LossNodes<T> multitask_loss(Tape<T>& tape, const Heads& heads, std::span<const TaskTargets> targets,
                            const LossWeights& weights, int landmarks);

/// Converts head outputs into per-sample records (softmax for detection and
/// gender, visibility clamped to [0,1]).
template <class T>
std::vector<PredictionRecord> decode_predictions(const Tape<T>& tape, const Heads& heads, int landmarks);

}  // namespace mtf
