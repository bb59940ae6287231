#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mtf/core/checkpoint.hpp"
#include "mtf/core/error.hpp"
#include "mtf/core/gradcheck.hpp"
#include "mtf/core/ops.hpp"
#include "mtf/core/optim.hpp"
#include "mtf/gradcheck_suite.hpp"

using namespace mtf;

namespace {

Tensor<double> T1(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>(Shape{n}, std::move(v));
}

Tensor<double> random_tensor(Shape s, Rng& rng) {
  Tensor<double> t(s);
  for (auto& v : t.data()) v = uniform(rng, -1, 1);
  return t;
}

GradCheckOptions fd(std::uint64_t seed = 0) {
  GradCheckOptions o;
  o.seed = seed;
  o.denominator_floor = 1e-4;
  return o;
}

template <class T>
std::vector<T> vec(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace

TEST_CASE("tensor shape and data length agree") {
  Tensor<double> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.shape().rank() == 3);
  CHECK_THROWS_AS(Tensor<double>(Shape{2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("conv2d scalar and identity examples") {
  Tape<double> tape;
  Var x = tape.constant(Tensor<double>({1, 1, 1}, {2}));
  Var w = tape.constant(Tensor<double>({1, 1, 1, 1}, {3}));
  Var b = tape.constant(T1({0}));
  CHECK(tape.value(conv2d(tape, x, w, b, 1, 0))[0] == 6);

  Tensor<double> in({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Var xi = tape.constant(in);
  Var wi = tape.constant(Tensor<double>({1, 1, 1, 1}, {1}));
  const Tensor<double>& y = tape.value(conv2d(tape, xi, wi, b, 1, 0));
  CHECK(vec(y) == vec(in));
}

TEST_CASE("conv2d output extents use floor semantics") {
  Tape<double> tape;
  Var x = tape.constant(Tensor<double>({2, 7, 6}));
  Var w = tape.constant(Tensor<double>({4, 2, 3, 3}));
  Var b = tape.constant(Tensor<double>({4}));
  const Shape s = tape.value(conv2d(tape, x, w, b, 2, 1)).shape();
  CHECK(s[0] == 4);
  CHECK(s[1] == 4);  // floor((7 + 2 - 3) / 2) + 1
  CHECK(s[2] == 3);  // floor((6 + 2 - 3) / 2) + 1
}

TEST_CASE("conv2d rejects channel mismatch with a shape diagnostic") {
  Tape<double> tape;
  Var x = tape.constant(Tensor<double>({3, 5, 5}));
  Var w = tape.constant(Tensor<double>({2, 2, 3, 3}));
  Var b = tape.constant(Tensor<double>({2}));
  CHECK_THROWS_AS(conv2d(tape, x, w, b, 1, 0), ShapeError);
}

TEST_CASE("conv2d gradients match finite differences: 2x5x5, 3x2x3x3, stride 2, pad 1") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<Parameter<double>> p;
    p.emplace_back("x", random_tensor({2, 5, 5}, rng));
    p.emplace_back("w", random_tensor({3, 2, 3, 3}, rng));
    p.emplace_back("b", random_tensor({3}, rng));
    const Tensor<double> r = random_tensor({3, 3, 3}, rng);
    auto loss = [&](Tape<double>& t) {
      Var y = conv2d(t, t.param(p[0]), t.param(p[1]), t.param(p[2]), 2, 1);
      Tensor<double> ones(r.shape());
      ones.fill(1);
      return weighted_sq_error(t, y, r, ones);
    };
    const auto rep = grad_check(std::span<Parameter<double>>(p), loss, fd(seed));
    CHECK(rep.max_rel_error() < 1e-5);
  }
}

TEST_CASE("maxpool2d forward, argmax routing and tie rule") {
  Tape<double> tape;
  Parameter<double> x("x", Tensor<double>({1, 2, 2}, {1, 2, 3, 4}));
  Var y = maxpool2d(tape, tape.param(x), 2, 2);
  CHECK(tape.value(y)[0] == 4);
  tape.backward(y);
  CHECK(vec(*tape.gradient(x)) == std::vector<double>{0, 0, 0, 1});

  Tape<double> t2;
  Parameter<double> c("c", Tensor<double>({1, 4, 4}));
  c.value.fill(5);
  Var yc = maxpool2d(t2, t2.param(c), 2, 2);
  for (double v : t2.value(yc).data()) CHECK(v == 5);
  Tensor<double> w(t2.value(yc).shape());
  w.fill(1);
  t2.backward(weighted_sq_error(t2, yc, Tensor<double>(w.shape()), w));
  const Tensor<double>& g = *t2.gradient(c);
  // first element of each 2x2 window: (0,0), (0,2), (2,0), (2,2)
  for (std::size_t i = 0; i < 16; ++i) {
    const bool first = (i / 4) % 2 == 0 && (i % 4) % 2 == 0;
    CHECK((g[i] != 0) == first);
  }
  CHECK_THROWS_AS(maxpool2d(t2, t2.param(c), 0, 1), ShapeError);
  CHECK_THROWS_AS(maxpool2d(t2, t2.param(c), 2, 0), ShapeError);
}

TEST_CASE("maxpool2d gradients match finite differences on random 4x8x8") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    std::vector<Parameter<double>> p;
    p.emplace_back("x", random_tensor({4, 8, 8}, rng));
    const Tensor<double> r = random_tensor({4, 4, 4}, rng);
    Tensor<double> ones(r.shape());
    ones.fill(1);
    auto loss = [&](Tape<double>& t) { return weighted_sq_error(t, maxpool2d(t, t.param(p[0]), 2, 2), r, ones); };
    CHECK(grad_check(std::span<Parameter<double>>(p), loss, fd(seed)).max_rel_error() < 1e-5);
  }
}

TEST_CASE("relu examples") {
  Tape<double> tape;
  Parameter<double> x("x", T1({-1, 0, 2}));
  Var y = relu(tape, tape.param(x));
  CHECK(vec(tape.value(y)) == std::vector<double>{0, 0, 2});
  Tensor<double> w = T1({1, 1, 1});
  tape.backward(weighted_sq_error(tape, y, T1({-1, -1, -1}), w));
  // d/dy (y+1)^2 = 2(y+1); passes only where x > 0, zero at x == 0
  CHECK(vec(*tape.gradient(x)) == std::vector<double>{0, 0, 6});

  Tape<double> t2;
  Parameter<double> n("n", T1({-3, -0.5, -2}));
  Var yn = relu(t2, t2.param(n));
  for (double v : t2.value(yn).data()) CHECK(v == 0);
  t2.backward(weighted_sq_error(t2, yn, T1({1, 1, 1}), w));
  for (double v : t2.gradient(n)->data()) CHECK(v == 0);
}

TEST_CASE("relu-only net at strictly positive inputs is locally linear") {
  Rng rng(3);
  std::vector<Parameter<double>> p;
  Tensor<double> x({10});
  for (auto& v : x.data()) v = uniform(rng, 0.1, 1);
  p.emplace_back("x", x);
  const Tensor<double> r = random_tensor({10}, rng);
  Tensor<double> ones({10});
  ones.fill(1);
  auto loss = [&](Tape<double>& t) { return weighted_sq_error(t, relu(t, relu(t, t.param(p[0]))), r, ones); };
  CHECK(grad_check(std::span<Parameter<double>>(p), loss, fd()).max_rel_error() < 1e-7);
}

TEST_CASE("linear examples and finite differences") {
  Tape<double> tape;
  Parameter<double> x("x", T1({1, -2, 3}));
  Parameter<double> eye("w", Tensor<double>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  Parameter<double> zero_b("b", T1({0, 0, 0}));
  CHECK(vec(tape.value(linear(tape, tape.param(x), tape.param(eye), tape.param(zero_b)))) == vec(x.value));

  Tape<double> t2;
  Parameter<double> zw("zw", Tensor<double>({2, 3}));
  Parameter<double> b("b2", T1({4, 5}));
  Var y = linear(t2, t2.param(x), t2.param(zw), t2.param(b));
  CHECK(vec(t2.value(y)) == std::vector<double>{4, 5});
  t2.backward(weighted_sq_error(t2, y, T1({0, 0}), T1({1, 1})));
  for (double v : t2.gradient(x)->data()) CHECK(v == 0);

  Tape<double> t3;
  Parameter<double> bad("bad", Tensor<double>({2, 4}));
  CHECK_THROWS_AS(linear(t3, t3.param(x), t3.param(bad), t3.param(b)), ShapeError);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 200);
    std::vector<Parameter<double>> p;
    p.emplace_back("x", random_tensor({8}, rng));
    p.emplace_back("w", random_tensor({5, 8}, rng));
    p.emplace_back("b", random_tensor({5}, rng));
    const Tensor<double> r = random_tensor({5}, rng);
    auto loss = [&](Tape<double>& t) {
      return weighted_sq_error(t, linear(t, t.param(p[0]), t.param(p[1]), t.param(p[2])), r, T1({1, 1, 1, 1, 1}));
    };
    CHECK(grad_check(std::span<Parameter<double>>(p), loss, fd(seed)).max_rel_error() < 1e-6);
  }
}

TEST_CASE("concat_channels order, single input, gradient split and slice recovery") {
  Rng rng(5);
  Tape<double> tape;
  Parameter<double> a("a", random_tensor({2, 2, 2}, rng));
  Parameter<double> b("b", random_tensor({3, 2, 2}, rng));
  Var va = tape.param(a), vb = tape.param(b);
  const std::vector<Var> one = {va};
  CHECK(vec(tape.value(concat_channels<double>(tape, one))) == vec(a.value));
  const std::vector<Var> both = {va, vb};
  Var c = concat_channels<double>(tape, both);
  const Tensor<double>& cv = tape.value(c);
  CHECK(cv.shape()[0] == 5);
  for (std::size_t i = 0; i < 8; ++i) CHECK(cv[i] == a.value[i]);
  for (std::size_t i = 0; i < 12; ++i) CHECK(cv[8 + i] == b.value[i]);
  CHECK(vec(tape.value(slice_channels(tape, c, 0, 2))) == vec(a.value));
  CHECK(vec(tape.value(slice_channels(tape, c, 2, 3))) == vec(b.value));

  // upstream all ones: d/dy of sum_i 0.5 (y_i + 1)^2 at... use a linear read-out instead
  Tensor<double> ones(cv.shape());
  ones.fill(1);
  Tensor<double> target = cv;
  for (auto& v : target.data()) v -= 0.5;  // 2 * 1 * (y - (y - 0.5)) = 1
  tape.backward(weighted_sq_error(tape, c, target, ones));
  for (double g : tape.gradient(a)->data()) CHECK(g == doctest::Approx(1).epsilon(1e-15));
  for (double g : tape.gradient(b)->data()) CHECK(g == doctest::Approx(1).epsilon(1e-15));

  Tape<double> t2;
  Var bad = t2.constant(Tensor<double>({1, 3, 2}));
  const std::vector<Var> mismatch = {t2.constant(a.value), bad};
  CHECK_THROWS_AS(concat_channels<double>(t2, mismatch), ShapeError);
}

TEST_CASE("softmax2 examples and stability") {
  Tape<double> tape;
  const Tensor<double>& p0 = tape.value(softmax2(tape, tape.constant(T1({0, 0}))));
  CHECK(p0[0] == 0.5);
  CHECK(p0[1] == 0.5);
  const Tensor<double>& p1 = tape.value(softmax2(tape, tape.constant(T1({1000, 0}))));
  CHECK(std::isfinite(p1[0]));
  CHECK(p1[0] == doctest::Approx(1));
  CHECK(p1[1] >= 0);
  CHECK(p1[1] < 1e-300);
  CHECK_THROWS_AS(softmax2(tape, tape.constant(T1({NAN, 0}))), NumericError);
  CHECK_THROWS_AS(softmax2(tape, tape.constant(T1({INFINITY, 0}))), NumericError);
}

TEST_CASE("softmax2 rows sum to one and lie in (0,1)") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const double a = uniform(rng, -15, 15), b = uniform(rng, -15, 15);  // gaps beyond ~36 round p to 1
    const Tensor<double> p = softmax2_values(T1({a, b}));
    CHECK(std::abs(p[0] + p[1] - 1) <= 1e-12);
    CHECK(p[0] > 0);
    CHECK(p[0] < 1);
  }
}

TEST_CASE("softmax2 composed with log loss matches finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 300);
    std::vector<Parameter<double>> p;
    p.emplace_back("z", random_tensor({3, 2}, rng));
    const std::vector<int> labels = {1, 0, 1};
    const std::vector<double> w = {1, 1, 1};
    auto loss = [&](Tape<double>& t) { return log_loss(t, softmax2(t, t.param(p[0])), labels, w); };
    CHECK(grad_check(std::span<Parameter<double>>(p), loss, fd(seed)).max_rel_error() < 1e-6);
  }
}

TEST_CASE("every operator passes the finite-difference check over 20 seeds") {
  GradCheckOptions o = fd();
  for (const auto& name : gradcheck_operator_names()) {
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      o.seed = seed;
      worst = std::max(worst, check_operator(name, seed, o).max_rel_error());
    }
    INFO(name << " max relative error " << worst);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("corrupted backward passes are caught") {
  struct Reset {
    ~Reset() { g_op_fault.store(OpFault::None); }
  } reset;
  g_op_fault.store(OpFault::ReluBackward);
  CHECK(check_operator("relu", 1, fd()).max_rel_error() > 1e-2);
  g_op_fault.store(OpFault::ConvWeightBackward);
  CHECK(check_operator("conv2d", 1, fd()).max_rel_error() > 1e-2);
  g_op_fault.store(OpFault::None);
  CHECK(check_operator("conv2d", 1, fd()).max_rel_error() < 1e-4);
}

TEST_CASE("backward twice gives the same gradients; forward is deterministic") {
  Rng rng(9);
  Parameter<double> w("w", random_tensor({4, 3, 3, 3}, rng));
  Parameter<double> b("b", random_tensor({4}, rng));
  const Tensor<double> x = random_tensor({3, 6, 6}, rng);
  Tape<double> t1, t2;
  Var y1 = relu(t1, conv2d(t1, t1.constant(x), t1.param(w), t1.param(b), 1, 1));
  Var y2 = relu(t2, conv2d(t2, t2.constant(x), t2.param(w), t2.param(b), 1, 1));
  CHECK(vec(t1.value(y1)) == vec(t2.value(y2)));
  Tensor<double> ones(t1.value(y1).shape());
  ones.fill(1);
  Var l = weighted_sq_error(t1, y1, Tensor<double>(ones.shape()), ones);
  t1.backward(l);
  const Tensor<double> g1 = *t1.gradient(w);
  t1.backward(l);
  CHECK(vec(*t1.gradient(w)) == vec(g1));
}

TEST_CASE("sgd_step examples") {
  Parameter<double> p("p", T1({1, 2}));
  sgd_step(std::span<Parameter<double>>(&p, 1), {0.1, 0.0, 0.0});
  CHECK(vec(p.value) == std::vector<double>{1, 2});

  p.grad = T1({0.5, -1});
  sgd_step(std::span<Parameter<double>>(&p, 1), {0.1, 0.0, 0.0});
  CHECK(p.value[0] == doctest::Approx(1 - 0.05).epsilon(1e-15));
  CHECK(p.value[1] == doctest::Approx(2 + 0.1).epsilon(1e-15));
  CHECK(p.grad[0] == 0);

  // two steps with momentum 0.9 and decay 0.01 against the hand recurrence
  Parameter<double> q("q", T1({1.0}));
  const double lr = 0.1, mu = 0.9, wd = 0.01, g1 = 0.3, g2 = -0.2;
  double v = 0, w = 1;
  q.grad = T1({g1});
  sgd_step(std::span<Parameter<double>>(&q, 1), {lr, mu, wd});
  v = mu * v + g1 + wd * w;
  w -= lr * v;
  q.grad = T1({g2});
  sgd_step(std::span<Parameter<double>>(&q, 1), {lr, mu, wd});
  v = mu * v + g2 + wd * w;
  w -= lr * v;
  CHECK(q.value[0] == w);

  q.grad = T1({NAN});
  const double before = q.value[0];
  CHECK_THROWS_AS(sgd_step(std::span<Parameter<double>>(&q, 1), {lr, mu, wd}), NumericError);
  CHECK(q.value[0] == before);
  CHECK_THROWS_AS(sgd_step(std::span<Parameter<double>>(&q, 1), {0.0, mu, wd}), ConfigError);
  CHECK_THROWS_AS(sgd_step(std::span<Parameter<double>>(&q, 1), {lr, 1.0, wd}), ConfigError);
}

TEST_CASE("checkpoint round trip and format errors") {
  const auto dir = std::filesystem::temp_directory_path() / "mtf_test_ckpt";
  std::filesystem::create_directories(dir);
  Rng rng(4);
  std::vector<Parameter<double>> ps;
  ps.emplace_back("conv1.w", random_tensor({2, 3, 3, 3}, rng));
  ps.emplace_back("conv1.b", random_tensor({2}, rng));
  const auto path = dir / "a.mfk";
  save_checkpoint<double>(path, "network.input = 8\n", ps);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.precision == 8);
  CHECK(ck.spec_text == "network.input = 8\n");
  REQUIRE(ck.names.size() == 2);
  CHECK(ck.names[0] == "conv1.w");
  CHECK(vec(ck.values[0]) == vec(ps[0].value));
  CHECK(ck.values[1].shape() == ps[1].value.shape());

  std::string bytes = encode_checkpoint<double>("x", ps);
  CHECK(bytes.substr(0, 4) == "MFK1");
  {
    std::ofstream f(dir / "bad.mfk", std::ios::binary);
    f << "MFK2" << bytes.substr(4);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.mfk"), IoError);
  {
    std::ofstream f(dir / "short.mfk", std::ios::binary);
    f << bytes.substr(0, bytes.size() - 3);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "short.mfk"), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.mfk"), IoError);

  std::vector<Parameter<float>> pf;
  pf.emplace_back("w", Tensor<float>({3}, {1.5f, -2.25f, 0.125f}));
  save_checkpoint<float>(dir / "f.mfk", "", pf);
  const Checkpoint cf = load_checkpoint(dir / "f.mfk");
  CHECK(cf.precision == 4);
  CHECK(vec(cf.values[0]) == std::vector<double>{1.5, -2.25, 0.125});
  std::filesystem::remove_all(dir);
}
