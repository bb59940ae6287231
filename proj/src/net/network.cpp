#include "mtf/net/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mtf/core/ops.hpp"
#include "mtf/core/random.hpp"

namespace mtf {

template <class T>
Network<T>::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  const auto shapes = validate(spec_);
  params_.reserve(64);

  int cin = 3;
  for (std::size_t i = 0; i < spec_.trunk.size(); ++i) {
    const TrunkLayer& l = spec_.trunk[i];
    trunk_.push_back(add_conv("conv" + std::to_string(i + 1), cin, l.channels, l.kernel, l.stride, l.pad, l.pool, seed));
    cin = l.channels;
  }

  int shared_in = 0;
  if (spec_.kind == ArchKind::Fused) {
    std::set<int> distinct(spec_.taps.begin(), spec_.taps.end());
    taps_.assign(distinct.begin(), distinct.end());
    const FeatureShape deep = shapes[taps_.back()];
    int concat_channels = 0;
    for (int t : taps_) {
      const FeatureShape s = shapes[t];
      if (s.height == deep.height && s.width == deep.width) {
        adapters_.push_back(std::nullopt);
        concat_channels += s.channels;
      } else {
        const int k = s.height / deep.height;
        adapters_.push_back(add_conv("adapt" + std::to_string(t + 1), s.channels, spec_.adapter_channels, k, k, 0, 1, seed));
        concat_channels += spec_.adapter_channels;
      }
    }
    reduce_ = add_conv("reduce", concat_channels, spec_.reduce_channels, 1, 1, 0, 1, seed);
    shared_in = spec_.reduce_channels * deep.height * deep.width;
  } else {
    const FeatureShape last = shapes.back();
    shared_in = last.channels * last.height * last.width;
  }
  fc_all_ = add_dense("fc_all", shared_in, spec_.shared_width, 2.0, seed);

  const int L = spec_.landmarks;
  if (spec_.has_detection()) det_ = add_branch("det", spec_.shared_width, 2, seed);
  if (spec_.has_landmarks()) {
    lmk_ = add_branch("lmk", spec_.shared_width, 2 * L, seed);
    vis_ = add_branch("vis", spec_.shared_width, L, seed);
  }
  if (spec_.has_pose()) pose_ = add_branch("pose", spec_.shared_width, 3, seed);
  if (spec_.has_gender()) gender_ = add_branch("gender", spec_.shared_width, 2, seed);
}

template <class T>
std::size_t Network<T>::add(std::string name, Shape shape, std::size_t fan_in, double gain, std::uint64_t seed) {
  Tensor<T> v(shape);
  if (gain > 0) {
    Rng rng(derive_seed(seed, "init:" + name));
    const double sd = std::sqrt(gain / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(sd * normal(rng));
  }
  params_.emplace_back(std::move(name), std::move(v));
  return params_.size() - 1;
}

template <class T>
typename Network<T>::Conv Network<T>::add_conv(const std::string& name, int cin, int cout, int k, int stride, int pad,
                                               int pool, std::uint64_t seed) {
  const auto uk = static_cast<std::size_t>(k);
  Conv c{};
  c.w = add(name + ".w", Shape{static_cast<std::size_t>(cout), static_cast<std::size_t>(cin), uk, uk},
            static_cast<std::size_t>(cin) * uk * uk, 2.0, seed);
  c.b = add(name + ".b", Shape{static_cast<std::size_t>(cout)}, 1, 0.0, seed);
  c.stride = stride;
  c.pad = pad;
  c.pool = pool;
  return c;
}

template <class T>
typename Network<T>::Dense Network<T>::add_dense(const std::string& name, int in, int out, double gain,
                                                 std::uint64_t seed) {
  Dense d{};
  d.w = add(name + ".w", Shape{static_cast<std::size_t>(out), static_cast<std::size_t>(in)},
            static_cast<std::size_t>(in), gain, seed);
  d.b = add(name + ".b", Shape{static_cast<std::size_t>(out)}, 1, 0.0, seed);
  return d;
}

template <class T>
typename Network<T>::Branch Network<T>::add_branch(const std::string& tag, int in, int out, std::uint64_t seed) {
  Branch b;
  b.hidden = add_dense("fc_" + tag, in, spec_.head_width, 2.0, seed);
  b.out = add_dense("out_" + tag, spec_.head_width, out, 1.0, seed);
  return b;
}

template <class T>
Parameter<T>* Network<T>::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <class T>
const Parameter<T>* Network<T>::find(std::string_view name) const {
  return const_cast<Network*>(this)->find(name);
}

template <class T>
Var Network<T>::conv(Tape<T>& tape, Var x, const Conv& c) const {
  Var y = conv2d(tape, x, tape.param(params_[c.w]), tape.param(params_[c.b]), static_cast<std::size_t>(c.stride),
                 static_cast<std::size_t>(c.pad));
  y = relu(tape, y);
  if (c.pool > 1) y = maxpool2d(tape, y, static_cast<std::size_t>(c.pool), static_cast<std::size_t>(c.pool));
  return y;
}

template <class T>
Var Network<T>::dense(Tape<T>& tape, Var x, const Dense& d, bool activate) const {
  Var y = linear(tape, x, tape.param(params_[d.w]), tape.param(params_[d.b]));
  return activate ? relu(tape, y) : y;
}

template <class T>
Var Network<T>::branch(Tape<T>& tape, Var x, const Branch& b) const {
  return dense(tape, dense(tape, x, b.hidden, true), b.out, false);
}

template <class T>
Heads Network<T>::forward(Tape<T>& tape, Var input) const {
  const Shape& s = tape.value(input).shape();
  const auto E = static_cast<std::size_t>(spec_.input_edge);
  const bool ok = (s.rank() == 4 && s[1] == 3 && s[2] == E && s[3] == E) || (s.rank() == 3 && s[0] == 3 && s[1] == E && s[2] == E);
  if (!ok) throw ShapeError("network input must be N x 3 x " + std::to_string(E) + " x " + std::to_string(E) + ", got " + s.str());
  Var x = input;
  if (s.rank() == 3) {
    x = tape.constant(tape.value(input).reshaped(Shape{1, 3, E, E}));
    if (tape.needs_grad(input)) throw ShapeError("network input gradients require a batched input");
  }

  std::vector<Var> features;
  for (const Conv& c : trunk_) {
    x = conv(tape, x, c);
    features.push_back(x);
  }

  Var shared;
  if (spec_.kind == ArchKind::Fused) {
    std::vector<Var> parts;
    for (std::size_t i = 0; i < taps_.size(); ++i) {
      const Var f = features[static_cast<std::size_t>(taps_[i])];
      parts.push_back(adapters_[i] ? conv(tape, f, *adapters_[i]) : f);
    }
    Var fused = concat_channels<T>(tape, parts);
    fused = conv(tape, fused, *reduce_);
    shared = dense(tape, flatten(tape, fused), fc_all_, true);
  } else {
    shared = dense(tape, flatten(tape, features.back()), fc_all_, true);
  }

  Heads h;
  if (det_) h.detection = branch(tape, shared, *det_);
  if (lmk_) h.landmarks = branch(tape, shared, *lmk_);
  if (vis_) h.visibility = branch(tape, shared, *vis_);
  if (pose_) h.pose = branch(tape, shared, *pose_);
  if (gender_) h.gender = branch(tape, shared, *gender_);
  return h;
}

template <class T>
void Network<T>::load(const Checkpoint& ck) {
  if (ck.names.size() != params_.size()) {
    throw IoError("checkpoint has " + std::to_string(ck.names.size()) + " parameter blocks, network expects " +
                  std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (ck.names[i] != params_[i].name || !(ck.values[i].shape() == params_[i].value.shape())) {
      throw IoError("checkpoint block " + std::to_string(i) + " '" + ck.names[i] + "' " + ck.values[i].shape().str() +
                    " does not match '" + params_[i].name + "' " + params_[i].value.shape().str());
    }
    params_[i].value = ck.values[i].template cast<T>();
    params_[i].grad.fill(T(0));
    params_[i].momentum.fill(T(0));
  }
}

template <class T>
template <class U>
std::size_t Network<T>::copy_trunk_from(const Network<U>& other) {
  std::size_t copied = 0;
  for (auto& p : params_) {
    if (p.name.rfind("conv", 0) != 0) continue;
    const Parameter<U>* q = other.find(p.name);
    if (q && q->value.shape() == p.value.shape()) {
      p.value = q->value.template cast<T>();
      ++copied;
    }
  }
  return copied;
}

template <class T>
Tensor<T> make_input_batch(std::span<const Tensor<float>> crops) {
  if (crops.empty()) throw ShapeError("make_input_batch: no crops");
  const Shape& s = crops[0].shape();
  if (s.rank() != 3 || s[0] != 3) throw ShapeError("make_input_batch: crops must be 3 x E x E, got " + s.str());
  Tensor<T> batch(Shape{crops.size(), s[0], s[1], s[2]});
  T* out = batch.ptr();
  for (const auto& c : crops) {
    if (!(c.shape() == s)) throw ShapeError("make_input_batch: crop shapes differ");
    for (std::size_t i = 0; i < c.size(); ++i) *out++ = static_cast<T>(c[i]) - T(0.5);
  }
  return batch;
}

template <class T>
LossNodes<T> multitask_loss(Tape<T>& tape, const Heads& heads, std::span<const TaskTargets> targets,
                            const LossWeights& weights, int landmarks) {
  const std::size_t n = targets.size();
  const auto L = static_cast<std::size_t>(landmarks);
  LossNodes<T> out;
  std::vector<Var> terms;
  std::vector<T> coefs;
  auto count = [&](auto pred) {
    std::size_t c = 0;
    for (const auto& t : targets) c += pred(t) ? 1 : 0;
    return c;
  };
  auto record = [&](int task, Var term, std::size_t active) {
    out.values.components[task] = static_cast<double>(tape.value(term)[0]);
    out.values.active[task] = active;
    terms.push_back(term);
    coefs.push_back(static_cast<T>(weights.lambda[task]));
  };

  if (heads.detection) {
    const std::size_t a = count([](const TaskTargets& t) { return t.detection_active; });
    if (a) {
      std::vector<int> labels(n);
      std::vector<T> w(n, T(0));
      for (std::size_t i = 0; i < n; ++i) {
        labels[i] = targets[i].detection_label;
        if (targets[i].detection_active) w[i] = T(1) / static_cast<T>(a);
      }
      record(kDetection, softmax_xent(tape, *heads.detection, std::move(labels), std::move(w)), a);
    }
  }
  if (heads.landmarks && heads.visibility) {
    const std::size_t a = count([](const TaskTargets& t) { return t.landmarks_active; });
    if (a) {
      Tensor<T> tgt(Shape{n, 2 * L}), w(Shape{n, 2 * L});
      Tensor<T> vt(Shape{n, L}), vw(Shape{n, L});
      for (std::size_t i = 0; i < n; ++i) {
        const TaskTargets& t = targets[i];
        if (!t.landmarks_active) continue;
        if (t.landmarks.size() != L) throw ShapeError("multitask_loss: target landmark count differs from network");
        for (std::size_t j = 0; j < L; ++j) {
          const T v = static_cast<T>(t.landmarks.visibility[j]);
          tgt[i * 2 * L + 2 * j] = static_cast<T>(t.landmarks.coords[j].x);
          tgt[i * 2 * L + 2 * j + 1] = static_cast<T>(t.landmarks.coords[j].y);
          w[i * 2 * L + 2 * j] = w[i * 2 * L + 2 * j + 1] = v / static_cast<T>(2 * L * a);
          vt[i * L + j] = v;
          vw[i * L + j] = T(1) / static_cast<T>(L * a);
        }
      }
      record(kLandmarks, weighted_sq_error(tape, *heads.landmarks, std::move(tgt), std::move(w)), a);
      record(kVisibility, weighted_sq_error(tape, *heads.visibility, std::move(vt), std::move(vw)), a);
    }
  }
  if (heads.pose) {
    const std::size_t a = count([](const TaskTargets& t) { return t.pose_active; });
    if (a) {
      Tensor<T> tgt(Shape{n, 3}), w(Shape{n, 3});
      for (std::size_t i = 0; i < n; ++i) {
        if (!targets[i].pose_active) continue;
        for (std::size_t k = 0; k < 3; ++k) {
          tgt[i * 3 + k] = static_cast<T>(targets[i].pose[k]);
          w[i * 3 + k] = T(1) / static_cast<T>(3 * a);
        }
      }
      record(kPose, weighted_sq_error(tape, *heads.pose, std::move(tgt), std::move(w)), a);
    }
  }
  if (heads.gender) {
    const std::size_t a = count([](const TaskTargets& t) { return t.gender_active; });
    if (a) {
      std::vector<int> labels(n);
      std::vector<T> w(n, T(0));
      for (std::size_t i = 0; i < n; ++i) {
        labels[i] = targets[i].gender;
        if (targets[i].gender_active) w[i] = T(1) / static_cast<T>(a);
      }
      record(kGender, softmax_xent(tape, *heads.gender, std::move(labels), std::move(w)), a);
    }
  }
  if (terms.empty()) {
    out.total = tape.constant(Tensor<T>(Shape{1}));
  } else {
    out.total = weighted_sum<T>(tape, terms, coefs);
  }
  out.values.total = static_cast<double>(tape.value(out.total)[0]);
  return out;
}

template <class T>
std::vector<PredictionRecord> decode_predictions(const Tape<T>& tape, const Heads& heads, int landmarks) {
  const auto L = static_cast<std::size_t>(landmarks);
  std::size_t n = 0;
  for (const auto& h : {heads.detection, heads.landmarks, heads.pose, heads.gender}) {
    if (h) n = tape.value(*h).shape()[0];
  }
  std::vector<PredictionRecord> out(n);
  if (heads.detection) {
    const Tensor<T> p = softmax2_values(tape.value(*heads.detection));
    for (std::size_t i = 0; i < n; ++i) {
      out[i].has_detection = true;
      out[i].detection = static_cast<double>(p[2 * i + 1]);
    }
  }
  if (heads.landmarks && heads.visibility) {
    const Tensor<T>& c = tape.value(*heads.landmarks);
    const Tensor<T>& v = tape.value(*heads.visibility);
    for (std::size_t i = 0; i < n; ++i) {
      out[i].has_landmarks = true;
      auto& lm = out[i].landmarks;
      lm.coords.resize(L);
      lm.visibility.resize(L);
      for (std::size_t j = 0; j < L; ++j) {
        lm.coords[j] = {static_cast<double>(c[i * 2 * L + 2 * j]), static_cast<double>(c[i * 2 * L + 2 * j + 1])};
        lm.visibility[j] = std::clamp(static_cast<double>(v[i * L + j]), 0.0, 1.0);
      }
    }
  }
  if (heads.pose) {
    const Tensor<T>& p = tape.value(*heads.pose);
    for (std::size_t i = 0; i < n; ++i) {
      out[i].has_pose = true;
      for (std::size_t k = 0; k < 3; ++k) out[i].pose[k] = static_cast<double>(p[i * 3 + k]);
    }
  }
  if (heads.gender) {
    const Tensor<T> p = softmax2_values(tape.value(*heads.gender));
    for (std::size_t i = 0; i < n; ++i) {
      out[i].has_gender = true;
      out[i].gender = static_cast<double>(p[2 * i + 1]);
    }
  }
  return out;
}

template class Network<float>;
template class Network<double>;
template std::size_t Network<float>::copy_trunk_from(const Network<float>&);
template std::size_t Network<float>::copy_trunk_from(const Network<double>&);
template std::size_t Network<double>::copy_trunk_from(const Network<float>&);
template std::size_t Network<double>::copy_trunk_from(const Network<double>&);
template Tensor<float> make_input_batch<float>(std::span<const Tensor<float>>);
template Tensor<double> make_input_batch<double>(std::span<const Tensor<float>>);
template LossNodes<float> multitask_loss<float>(Tape<float>&, const Heads&, std::span<const TaskTargets>,
                                                const LossWeights&, int);
template LossNodes<double> multitask_loss<double>(Tape<double>&, const Heads&, std::span<const TaskTargets>,
                                                  const LossWeights&, int);
template std::vector<PredictionRecord> decode_predictions<float>(const Tape<float>&, const Heads&, int);
template std::vector<PredictionRecord> decode_predictions<double>(const Tape<double>&, const Heads&, int);

}  // namespace mtf
