#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtf/core/gradcheck.hpp"
#include "mtf/net/spec.hpp"

namespace mtf {

/// One checked graph (an operator or the whole network), aggregated over
/// seeds: per block the largest errors and the total entries checked.
struct GradCheckCase {
  std::string name;
  int seeds = 0;
  std::vector<GradBlockReport> blocks;

  double max_rel_error() const;
};

struct GradCheckSuite {
  double tolerance = 1e-4;
  std::vector<GradCheckCase> cases;

  double max_rel_error() const;
  bool passed() const { return max_rel_error() < tolerance; }
};

struct GradCheckSuiteOptions {
  int seeds = 20;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  double step = 1e-6;
  double denominator_floor = 1e-4;
  std::size_t network_entries_per_block = 4;  // sampled per block per seed; operators check every entry
  std::size_t network_batch = 3;
};

/// Names of the operator cases, in run order.
const std::vector<std::string>& gradcheck_operator_names();

/// Central-difference check of one operator on random 64-bit inputs.
GradCheckReport check_operator(const std::string& name, std::uint64_t seed, const GradCheckOptions& opt);

/// Checks the full network of `spec` with every loss term active: a batch
/// of random crops holding a male positive, a female positive and a
/// negative.
GradCheckReport check_network(const NetworkSpec& spec, std::uint64_t seed, const GradCheckOptions& opt,
                              std::size_t batch = 3);

/// Every operator plus the network of `spec`, each over opt.seeds seeds.
GradCheckSuite run_gradcheck_suite(const NetworkSpec& spec, const GradCheckSuiteOptions& opt);

nlohmann::json gradcheck_json(const GradCheckSuite& suite);

}  // namespace mtf
