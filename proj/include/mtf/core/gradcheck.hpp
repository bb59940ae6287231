#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mtf/core/random.hpp"
#include "mtf/core/tape.hpp"

namespace mtf {

struct GradCheckOptions {
  double step = 1e-6;
  /// Entries sampled per parameter block; 0 checks every entry.
  std::size_t entries_per_block = 0;
  std::uint64_t seed = 0;
  /// Lower bound on the relative-error denominator, so gradients that are
  /// zero up to roundoff are compared in absolute terms.
  double denominator_floor = 1e-6;
};

struct GradBlockReport {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0;
  double max_abs_error = 0;
};

struct GradCheckReport {
  std::vector<GradBlockReport> blocks;

  double max_rel_error() const {
    double m = 0;
    for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
    return m;
  }
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares tape gradients of a scalar loss against central differences.
/// `loss` must register every parameter it uses on the tape it receives and
/// return the scalar loss node. Requires 64-bit parameters.
inline GradCheckReport grad_check(std::span<Parameter<double>> params,
                                  const std::function<Var(Tape<double>&)>& loss,
                                  const GradCheckOptions& opt = {}) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    Var root = loss(tape);
    tape.backward(root);
    for (const auto& p : params) {
      const Tensor<double>* g = tape.gradient(p);
      analytic.push_back(g ? *g : Tensor<double>(p.value.shape()));
    }
  }
  auto eval = [&] {
    Tape<double> tape(false);
    return tape.value(loss(tape))[0];
  };

  Rng rng(opt.seed);
  GradCheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& p = params[b];
    std::vector<std::size_t> idx(p.value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (opt.entries_per_block && opt.entries_per_block < idx.size()) {
      shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.entries_per_block);
      std::sort(idx.begin(), idx.end());
    }
    GradBlockReport r{p.name, idx.size(), 0, 0};
    for (std::size_t i : idx) {
      const double saved = p.value[i];
      p.value[i] = saved + opt.step;
      const double up = eval();
      p.value[i] = saved - opt.step;
      const double down = eval();
      p.value[i] = saved;
      const double numeric = (up - down) / (2 * opt.step);
      r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic[b][i] - numeric));
      r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic[b][i], numeric, opt.denominator_floor));
    }
    report.blocks.push_back(std::move(r));
  }
  return report;
}

}  // namespace mtf
