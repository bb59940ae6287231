#include "mtf/gradcheck_suite.hpp"

#include <algorithm>
#include <map>

#include "mtf/core/error.hpp"
#include "mtf/core/ops.hpp"
#include "mtf/net/network.hpp"

namespace mtf {

namespace {

using P = Parameter<double>;

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

/// Values bounded away from zero so a central difference never straddles
/// the ReLU kink.
Tensor<double> off_kink_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(shape);
  for (auto& v : t.data()) {
    const double m = uniform(rng, 0.05, 1);
    v = uniform01(rng) < 0.5 ? -m : m;
  }
  return t;
}

/// Scalar read-out (1/n) sum_i w_i (y_i - t_i)^2 with fixed random t and
/// w > 0, so every output entry receives a distinct upstream gradient. The
/// 1/n keeps the loss O(1), which keeps difference roundoff near 1e-10.
Var project(Tape<double>& tape, Var y, std::uint64_t seed) {
  Rng rng(seed);
  const Shape& s = tape.value(y).shape();
  Tensor<double> w = random_tensor(s, rng, 0.5, 1.5);
  for (auto& v : w.data()) v /= static_cast<double>(w.size());
  return weighted_sq_error(tape, y, random_tensor(s, rng), std::move(w));
}

struct OpCase {
  std::vector<P> params;
  std::function<Var(Tape<double>&, std::vector<Var>&)> body;
};

OpCase make_case(const std::string& name, Rng& rng) {
  OpCase c;
  auto add = [&](const std::string& n, Tensor<double> v) { c.params.emplace_back(n, std::move(v)); };
  if (name == "conv2d") {
    add("x", random_tensor({2, 3, 7, 7}, rng));
    add("weight", random_tensor({4, 3, 3, 3}, rng));
    add("bias", random_tensor({4}, rng));
    c.body = [](Tape<double>& t, std::vector<Var>& v) { return conv2d(t, v[0], v[1], v[2], 1, 1); };
  } else if (name == "conv2d_strided") {
    add("x", random_tensor({2, 2, 9, 8}, rng));
    add("weight", random_tensor({3, 2, 5, 5}, rng));
    add("bias", random_tensor({3}, rng));
    c.body = [](Tape<double>& t, std::vector<Var>& v) { return conv2d(t, v[0], v[1], v[2], 2, 2); };
  } else if (name == "maxpool2d") {
    add("x", random_tensor({2, 3, 6, 6}, rng));
    c.body = [](Tape<double>& t, std::vector<Var>& v) { return maxpool2d(t, v[0], 2, 2); };
  } else if (name == "relu") {
    add("x", off_kink_tensor({3, 10}, rng));
    c.body = [](Tape<double>& t, std::vector<Var>& v) { return relu(t, v[0]); };
  } else if (name == "linear") {
    add("x", random_tensor({4, 6}, rng));
    add("weight", random_tensor({5, 6}, rng));
    add("bias", random_tensor({5}, rng));
    c.body = [](Tape<double>& t, std::vector<Var>& v) { return linear(t, v[0], v[1], v[2]); };
  } else if (name == "flatten") {
    add("x", random_tensor({2, 3, 2, 2}, rng));
    c.body = [](Tape<double>& t, std::vector<Var>& v) { return flatten(t, v[0]); };
  } else if (name == "concat_channels") {
    add("a", random_tensor({2, 2, 3, 3}, rng));
    add("b", random_tensor({2, 3, 3, 3}, rng));
    c.body = [](Tape<double>& t, std::vector<Var>& v) {
      const std::vector<Var> in = {v[0], v[1]};
      return concat_channels<double>(t, in);
    };
  } else if (name == "slice_channels") {
    add("x", random_tensor({2, 5, 3, 3}, rng));
    c.body = [](Tape<double>& t, std::vector<Var>& v) { return slice_channels(t, v[0], 1, 3); };
  } else if (name == "softmax2") {
    add("z", random_tensor({4, 2}, rng, -3, 3));
    c.body = [](Tape<double>& t, std::vector<Var>& v) { return softmax2(t, v[0]); };
  } else if (name == "log_loss") {
    add("p", random_tensor({4, 2}, rng, 0.05, 0.95));
    std::vector<int> labels(4);
    std::vector<double> w(4);
    for (int i = 0; i < 4; ++i) {
      labels[i] = uniform01(rng) < 0.5;
      w[i] = uniform(rng, 0.2, 2);
    }
    c.body = [labels, w](Tape<double>& t, std::vector<Var>& v) { return log_loss(t, v[0], labels, w); };
  } else if (name == "softmax_xent") {
    add("z", random_tensor({5, 2}, rng, -3, 3));
    std::vector<int> labels(5);
    std::vector<double> w(5);
    for (int i = 0; i < 5; ++i) {
      labels[i] = uniform01(rng) < 0.5;
      w[i] = i == 2 ? 0.0 : uniform(rng, 0.2, 2);
    }
    c.body = [labels, w](Tape<double>& t, std::vector<Var>& v) { return softmax_xent(t, v[0], labels, w); };
  } else if (name == "weighted_sq_error") {
    add("pred", random_tensor({3, 4}, rng));
    Tensor<double> target = random_tensor({3, 4}, rng), weights = random_tensor({3, 4}, rng, 0, 2);
    weights[5] = 0;
    c.body = [target, weights](Tape<double>& t, std::vector<Var>& v) {
      return weighted_sq_error(t, v[0], target, weights);
    };
  } else if (name == "weighted_sum") {
    add("s0", random_tensor({1}, rng));
    add("s1", random_tensor({1}, rng));
    add("s2", random_tensor({1}, rng));
    const std::vector<double> coefs = {uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2)};
    c.body = [coefs](Tape<double>& t, std::vector<Var>& v) {
      return weighted_sum<double>(t, std::span<const Var>(v), coefs);
    };
  } else {
    throw ConfigError("unknown gradcheck operator '" + name + "'");
  }
  return c;
}

bool is_scalar_loss(const std::string& name) {
  return name == "log_loss" || name == "softmax_xent" || name == "weighted_sq_error" || name == "weighted_sum";
}

void merge(GradCheckCase& into, const GradCheckReport& r) {
  ++into.seeds;
  for (const auto& b : r.blocks) {
    auto it = std::find_if(into.blocks.begin(), into.blocks.end(), [&](const auto& x) { return x.name == b.name; });
    if (it == into.blocks.end()) {
      into.blocks.push_back(b);
    } else {
      it->checked += b.checked;
      it->max_rel_error = std::max(it->max_rel_error, b.max_rel_error);
      it->max_abs_error = std::max(it->max_abs_error, b.max_abs_error);
    }
  }
}

}  // namespace

double GradCheckCase::max_rel_error() const {
  double m = 0;
  for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
  return m;
}

double GradCheckSuite::max_rel_error() const {
  double m = 0;
  for (const auto& c : cases) m = std::max(m, c.max_rel_error());
  return m;
}

const std::vector<std::string>& gradcheck_operator_names() {
  static const std::vector<std::string> names = {
      "conv2d", "conv2d_strided", "maxpool2d",    "relu",         "linear",           "flatten",          "concat_channels",
      "slice_channels", "softmax2", "log_loss", "softmax_xent", "weighted_sq_error", "weighted_sum"};
  return names;
}

GradCheckReport check_operator(const std::string& name, std::uint64_t seed, const GradCheckOptions& opt) {
  Rng rng(derive_seed(seed, "gradcheck:" + name));
  OpCase c = make_case(name, rng);
  const std::uint64_t proj_seed = derive_seed(seed, "gradcheck:project:" + name);
  const bool scalar = is_scalar_loss(name);
  auto loss = [&](Tape<double>& tape) {
    std::vector<Var> vars;
    for (const P& p : c.params) vars.push_back(tape.param(p));
    Var y = c.body(tape, vars);
    return scalar ? y : project(tape, y, proj_seed);
  };
  return grad_check(std::span<P>(c.params), loss, opt);
}

GradCheckReport check_network(const NetworkSpec& spec, std::uint64_t seed, const GradCheckOptions& opt,
                              std::size_t batch) {
  Network<double> net(spec, derive_seed(seed, "gradcheck:network"));
  Rng rng(derive_seed(seed, "gradcheck:data"));
  std::vector<Tensor<float>> crops;
  std::vector<TaskTargets> targets;
  const auto L = static_cast<std::size_t>(spec.landmarks);
  for (std::size_t i = 0; i < std::max<std::size_t>(batch, 1); ++i) {
    Tensor<float> crop({3, static_cast<std::size_t>(spec.input_edge), static_cast<std::size_t>(spec.input_edge)});
    for (auto& v : crop.data()) v = static_cast<float>(uniform01(rng));
    crops.push_back(std::move(crop));
    TaskTargets t;
    t.detection_active = true;
    if (i % 3 == 2) {
      t.detection_label = 0;
    } else {
      t.detection_label = 1;
      t.landmarks_active = t.pose_active = t.gender_active = true;
      t.gender = static_cast<int>(i % 3);
      for (std::size_t j = 0; j < L; ++j) {
        t.landmarks.coords.push_back({uniform(rng, -0.4, 0.4), uniform(rng, -0.4, 0.4)});
        t.landmarks.visibility.push_back(uniform01(rng) < 0.8 ? 1.0 : 0.0);
      }
      for (double& a : t.pose) a = uniform(rng, -0.6, 0.6);
    }
    targets.push_back(std::move(t));
  }
  const Tensor<double> input = make_input_batch<double>(crops);
  const LossWeights weights;
  auto loss = [&](Tape<double>& tape) {
    Var x = tape.constant(input);
    const Heads heads = net.forward(tape, x);
    return multitask_loss(tape, heads, targets, weights, spec.landmarks).total;
  };
  return grad_check(net.parameters(), loss, opt);
}

GradCheckSuite run_gradcheck_suite(const NetworkSpec& spec, const GradCheckSuiteOptions& opt) {
  GradCheckSuite suite;
  suite.tolerance = opt.tolerance;
  GradCheckOptions g;
  g.step = opt.step;
  g.denominator_floor = opt.denominator_floor;
  for (const auto& name : gradcheck_operator_names()) {
    GradCheckCase c{name, 0, {}};
    for (int s = 0; s < opt.seeds; ++s) {
      const std::uint64_t seed = derive_seed(opt.seed, "gradcheck:seed", static_cast<std::uint64_t>(s));
      g.seed = seed;
      g.entries_per_block = 0;
      merge(c, check_operator(name, seed, g));
    }
    suite.cases.push_back(std::move(c));
  }
  GradCheckCase net{"network:" + arch_name(spec), 0, {}};
  for (int s = 0; s < opt.seeds; ++s) {
    const std::uint64_t seed = derive_seed(opt.seed, "gradcheck:seed", static_cast<std::uint64_t>(s));
    g.seed = seed;
    g.entries_per_block = opt.network_entries_per_block;
    merge(net, check_network(spec, seed, g, opt.network_batch));
  }
  suite.cases.push_back(std::move(net));
  return suite;
}

nlohmann::json gradcheck_json(const GradCheckSuite& suite) {
  nlohmann::json j;
  j["tolerance"] = suite.tolerance;
  j["max_rel_error"] = suite.max_rel_error();
  j["passed"] = suite.passed();
  j["cases"] = nlohmann::json::array();
  for (const auto& c : suite.cases) {
    nlohmann::json cj;
    cj["name"] = c.name;
    cj["seeds"] = c.seeds;
    cj["max_rel_error"] = c.max_rel_error();
    cj["blocks"] = nlohmann::json::array();
    for (const auto& b : c.blocks) {
      cj["blocks"].push_back(
          {{"name", b.name}, {"checked", b.checked}, {"max_rel_error", b.max_rel_error}, {"max_abs_error", b.max_abs_error}});
    }
    j["cases"].push_back(std::move(cj));
  }
  return j;
}

}  // namespace mtf
