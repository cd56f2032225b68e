#pragma once
// Minimal feed-forward machinery shared by the pattern predictor and the
// denoiser: dense layers, tanh/relu, an optional per-step softmax head,
// reverse-mode gradients for squared-error and KL losses, and Adam.

#include "pgdm/common.hpp"
#include "pgdm/simplex.hpp"

#include <cmath>

namespace pgdm {

enum class Activation { Tanh, Relu };
enum class Head { Linear, StepSoftmax };
enum class LossKind { SquaredError, KlDivergence };

constexpr double kKlEps = 1e-12;  // floor inside log terms, tolerates zeros

struct Mlp {
  std::vector<int> layer_dims;     // input, hidden..., output
  std::vector<Matrix> weights;     // weights[l]: dims[l+1] x dims[l]
  std::vector<Vector> biases;
  Activation activation = Activation::Tanh;
  Head head = Head::Linear;
  int softmax_group = 0;  // output entries per softmax step when head != Linear

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int layers() const { return int(weights.size()); }

  void validate() const {
    require(layer_dims.size() >= 2, ErrorKind::ShapeError, "Mlp: need at least two layer dims");
    require(weights.size() + 1 == layer_dims.size() && biases.size() == weights.size(),
            ErrorKind::ShapeError, "Mlp: parameter count does not match layer dims");
    for (size_t l = 0; l < weights.size(); ++l) {
      require(int(weights[l].rows()) == layer_dims[l + 1] &&
                  int(weights[l].cols()) == layer_dims[l] &&
                  int(biases[l].size()) == layer_dims[l + 1],
              ErrorKind::ShapeError, "Mlp: layer " + std::to_string(l) + " mis-shaped");
      require(weights[l].allFinite() && biases[l].allFinite(), ErrorKind::InvalidState,
              "Mlp: non-finite parameters in layer " + std::to_string(l));
    }
    if (head == Head::StepSoftmax) {
      require(softmax_group >= 1 && layer_dims.back() % softmax_group == 0,
              ErrorKind::ShapeError, "Mlp: output dim not divisible by softmax group");
    }
  }
};

// Xavier-uniform weights, zero biases.
inline Mlp make_mlp(std::vector<int> layer_dims, Activation act, Head head,
                    int softmax_group, Rng& rng) {
  require(layer_dims.size() >= 2, ErrorKind::ShapeError, "make_mlp: need at least two layer dims");
  for (int d : layer_dims)
    require(d >= 1, ErrorKind::ShapeError, "make_mlp: non-positive layer dim");
  Mlp net;
  net.layer_dims = std::move(layer_dims);
  net.activation = act;
  net.head = head;
  net.softmax_group = softmax_group;
  for (size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    int in = net.layer_dims[l], out = net.layer_dims[l + 1];
    double limit = std::sqrt(6.0 / double(in + out));
    Matrix w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = rng.uniform() * 2.0 * limit - limit;
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(out));
  }
  net.validate();
  return net;
}

inline Vector apply_activation(const Vector& z, Activation act) {
  if (act == Activation::Tanh) return z.array().tanh();
  return z.cwiseMax(0.0);
}

inline Vector activation_derivative(const Vector& z, const Vector& a, Activation act) {
  if (act == Activation::Tanh) return (1.0 - a.array().square()).matrix();
  return (z.array() > 0.0).cast<double>().matrix();
}

inline Vector apply_head(const Mlp& net, const Vector& z) {
  if (net.head == Head::Linear) return z;
  const int g = net.softmax_group;
  Vector out(z.size());
  for (int start = 0; start < z.size(); start += g) {
    auto seg = z.segment(start, g);
    double mx = seg.maxCoeff();
    Vector e = (seg.array() - mx).exp();
    out.segment(start, g) = e / e.sum();
  }
  return out;
}

inline Vector forward(const Mlp& net, const Vector& input) {
  require(int(input.size()) == net.input_dim(), ErrorKind::ShapeError,
          "forward: input length does not match first layer");
  Vector a = input;
  for (int l = 0; l < net.layers(); ++l) {
    Vector z = net.weights[size_t(l)] * a + net.biases[size_t(l)];
    a = (l + 1 < net.layers()) ? apply_activation(z, net.activation)
                               : apply_head(net, z);
  }
  return a;
}

struct Gradients {
  std::vector<Matrix> d_weights;
  std::vector<Vector> d_biases;

  static Gradients like(const Mlp& net) {
    Gradients g;
    for (int l = 0; l < net.layers(); ++l) {
      g.d_weights.push_back(Matrix::Zero(net.weights[size_t(l)].rows(),
                                         net.weights[size_t(l)].cols()));
      g.d_biases.push_back(Vector::Zero(net.biases[size_t(l)].size()));
    }
    return g;
  }
  void set_zero() {
    for (auto& m : d_weights) m.setZero();
    for (auto& v : d_biases) v.setZero();
  }
  void scale(double s) {
    for (auto& m : d_weights) m *= s;
    for (auto& v : d_biases) v *= s;
  }
};

namespace detail {

inline void validate_kl_target(const Vector& target, int group) {
  require(group >= 1 && target.size() % group == 0, ErrorKind::ShapeError,
          "kl loss: target length not divisible by softmax group");
  for (int start = 0; start < target.size(); start += group) {
    auto seg = target.segment(start, group);
    double s = 0.0;
    for (int i = 0; i < group; ++i) {
      require(seg[i] >= -1e-9, ErrorKind::InvalidTarget,
              "kl loss: negative target coefficient");
      s += std::max(seg[i], 0.0);
    }
    require(std::abs(s - 1.0) <= 1e-6, ErrorKind::InvalidTarget,
            "kl loss: target step does not sum to 1");
  }
}

}  // namespace detail

// Loss of the network output against a target. SquaredError is the plain sum
// of squares; KlDivergence is sum over steps of KL(target || predicted) and
// requires the softmax head.
inline double loss_value(const Mlp& net, LossKind loss, const Vector& input,
                         const Vector& target) {
  require(int(target.size()) == net.output_dim(), ErrorKind::ShapeError,
          "loss_value: target length does not match output");
  Vector y = forward(net, input);
  if (loss == LossKind::SquaredError) return (y - target).squaredNorm();
  require(net.head == Head::StepSoftmax, ErrorKind::InvalidState,
          "loss_value: KL loss needs the softmax head");
  detail::validate_kl_target(target, net.softmax_group);
  double total = 0.0;
  for (int i = 0; i < y.size(); ++i) {
    double t = std::max(target[i], 0.0);
    total += t * (std::log(t + kKlEps) - std::log(y[i] + kKlEps));
  }
  return total;
}

// One reverse-mode pass; gradients are accumulated into grads so callers can
// average over a batch. Returns the loss value.
inline double loss_and_gradients(const Mlp& net, LossKind loss, const Vector& input,
                                 const Vector& target, Gradients& grads) {
  require(int(input.size()) == net.input_dim(), ErrorKind::ShapeError,
          "loss_and_gradients: input length does not match first layer");
  require(int(target.size()) == net.output_dim(), ErrorKind::ShapeError,
          "loss_and_gradients: target length does not match output");
  require(int(grads.d_weights.size()) == net.layers(), ErrorKind::ShapeError,
          "loss_and_gradients: gradient buffers do not match network");

  const int L = net.layers();
  std::vector<Vector> pre(static_cast<size_t>(L));    // z_l
  std::vector<Vector> post(static_cast<size_t>(L));   // activation(z_l) or head output
  Vector a = input;
  for (int l = 0; l < L; ++l) {
    pre[size_t(l)] = net.weights[size_t(l)] * a + net.biases[size_t(l)];
    post[size_t(l)] = (l + 1 < L) ? apply_activation(pre[size_t(l)], net.activation)
                                  : apply_head(net, pre[size_t(l)]);
    a = post[size_t(l)];
  }
  const Vector& y = post[size_t(L - 1)];

  double value = 0.0;
  Vector dy(y.size());
  if (loss == LossKind::SquaredError) {
    value = (y - target).squaredNorm();
    dy = 2.0 * (y - target);
  } else {
    require(net.head == Head::StepSoftmax, ErrorKind::InvalidState,
            "loss_and_gradients: KL loss needs the softmax head");
    detail::validate_kl_target(target, net.softmax_group);
    for (int i = 0; i < y.size(); ++i) {
      double t = std::max(target[i], 0.0);
      value += t * (std::log(t + kKlEps) - std::log(y[i] + kKlEps));
      dy[i] = -t / (y[i] + kKlEps);
    }
  }

  // head backward
  Vector dz;
  if (net.head == Head::Linear) {
    dz = dy;
  } else {
    // exact softmax Jacobian per group: dz = s .* (dy - <s, dy>)
    dz.resize(y.size());
    const int g = net.softmax_group;
    for (int start = 0; start < y.size(); start += g) {
      auto s = y.segment(start, g);
      auto d = dy.segment(start, g);
      double dot = s.dot(d);
      dz.segment(start, g) = s.cwiseProduct(d - Vector::Constant(g, dot));
    }
  }

  for (int l = L - 1; l >= 0; --l) {
    const Vector& in = (l == 0) ? input : post[size_t(l - 1)];
    grads.d_weights[size_t(l)] += dz * in.transpose();
    grads.d_biases[size_t(l)] += dz;
    if (l > 0) {
      Vector da = net.weights[size_t(l)].transpose() * dz;
      dz = da.cwiseProduct(
          activation_derivative(pre[size_t(l - 1)], post[size_t(l - 1)], net.activation));
    }
  }
  return value;
}

struct AdamState {
  int64_t step = 0;
  std::vector<Matrix> m_weights, v_weights;
  std::vector<Vector> m_biases, v_biases;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState like(const Mlp& net, double lr) {
    AdamState s;
    s.lr = lr;
    for (int l = 0; l < net.layers(); ++l) {
      s.m_weights.push_back(Matrix::Zero(net.weights[size_t(l)].rows(),
                                         net.weights[size_t(l)].cols()));
      s.v_weights.push_back(s.m_weights.back());
      s.m_biases.push_back(Vector::Zero(net.biases[size_t(l)].size()));
      s.v_biases.push_back(s.m_biases.back());
    }
    return s;
  }
};

inline void adam_step(AdamState& state, Mlp& net, const Gradients& grads) {
  require(int(state.m_weights.size()) == net.layers() &&
              int(grads.d_weights.size()) == net.layers(),
          ErrorKind::ShapeError, "adam_step: state/gradient shape mismatch");
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    auto m_hat = m / bc1;
    auto v_hat = v / bc2;
    param -= state.lr * (m_hat.array() / (v_hat.array().sqrt() + state.eps)).matrix();
  };
  for (int l = 0; l < net.layers(); ++l) {
    update(net.weights[size_t(l)], state.m_weights[size_t(l)],
           state.v_weights[size_t(l)], grads.d_weights[size_t(l)]);
    update(net.biases[size_t(l)], state.m_biases[size_t(l)],
           state.v_biases[size_t(l)], grads.d_biases[size_t(l)]);
    require(net.weights[size_t(l)].allFinite() && net.biases[size_t(l)].allFinite(),
            ErrorKind::NumericalDivergence,
            "adam_step: non-finite parameters after update in layer " + std::to_string(l));
  }
}

}  // namespace pgdm
