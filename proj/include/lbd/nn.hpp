#pragma once

// Minimal convolutional network engine: conv / relu / global pooling (average
// or max) / linear layers with explicit backward passes, a sequential container and
// Adam. Templated on the scalar so training runs in float while gradient
// checks run the same code in double.

#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lbd/common.hpp"
#include "lbd/image.hpp"
#include "lbd/rng.hpp"

namespace lbd::nn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRow = Eigen::Map<RowMat<T>>;
template <class T>
using CMapRow = Eigen::Map<const RowMat<T>>;

template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

  std::size_t size() const { return v.size(); }
  std::size_t per_sample() const { return static_cast<std::size_t>(c) * h * w; }
  T* sample(int i) { return v.data() + i * per_sample(); }
  const T* sample(int i) const { return v.data() + i * per_sample(); }
  T& operator()(int i, int ch, int y, int x) {
    return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  T operator()(int i, int ch, int y, int x) const {
    return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
};

template <class T>
struct Param {
  std::string name;
  std::vector<T> value;
  std::vector<T> grad;
};

enum class LayerKind { Conv, Relu, GlobalAvgPool, GlobalMaxPool, Linear };

struct LayerDesc {
  LayerKind kind;
  int in = 0;
  int out = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  // Set on the ReLU that closes a convolutional block ("block1", ...).
  std::string block;
};

struct Arch {
  std::string id;
  Shape input;
  std::vector<LayerDesc> layers;
};

// Target detector: four stride-2 3x3 conv blocks, global pool, linear head.
inline Arch arch_cnn_a(Shape input) {
  Arch a{"cnn-A", input, {}};
  const int widths[4] = {8, 16, 32, 32};
  int in = input.channels;
  for (int b = 0; b < 4; ++b) {
    if (b == 0) {
      // Full-resolution stem so the response to pixel-period patterns does
      // not depend on their phase against the stride grid.
      a.layers.push_back({LayerKind::Conv, in, widths[0], 3, 1, 1, ""});
      a.layers.push_back({LayerKind::Relu, 0, 0, 0, 1, 0, ""});
      in = widths[0];
    }
    a.layers.push_back({LayerKind::Conv, in, widths[b], 3, 2, 1, ""});
    a.layers.push_back({LayerKind::Relu, 0, 0, 0, 1, 0, "block" + std::to_string(b + 1)});
    in = widths[b];
  }
  a.layers.push_back({LayerKind::GlobalMaxPool, 0, 0, 0, 1, 0, ""});
  a.layers.push_back({LayerKind::Linear, in, kNumClasses, 0, 1, 0, ""});
  return a;
}

// Substitute detector: three conv blocks with 5x5 then 3x3 kernels and a
// two-layer head.
inline Arch arch_cnn_b(Shape input) {
  Arch a{"cnn-B", input, {}};
  a.layers.push_back({LayerKind::Conv, input.channels, 8, 5, 2, 2, ""});
  a.layers.push_back({LayerKind::Relu, 0, 0, 0, 1, 0, "block1"});
  a.layers.push_back({LayerKind::Conv, 8, 16, 3, 2, 1, ""});
  a.layers.push_back({LayerKind::Relu, 0, 0, 0, 1, 0, "block2"});
  a.layers.push_back({LayerKind::Conv, 16, 24, 3, 2, 1, ""});
  a.layers.push_back({LayerKind::Relu, 0, 0, 0, 1, 0, "block3"});
  a.layers.push_back({LayerKind::GlobalAvgPool, 0, 0, 0, 1, 0, ""});
  a.layers.push_back({LayerKind::Linear, 24, 16, 0, 1, 0, ""});
  a.layers.push_back({LayerKind::Relu, 0, 0, 0, 1, 0, ""});
  a.layers.push_back({LayerKind::Linear, 16, kNumClasses, 0, 1, 0, ""});
  return a;
}

inline Arch arch_by_id(const std::string& id, Shape input) {
  if (id == "cnn-A") return arch_cnn_a(input);
  if (id == "cnn-B") return arch_cnn_b(input);
  throw ConfigError("unknown architecture: " + id);
}

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  // Caches whatever backward needs for the most recent batch.
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy, bool param_grads) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
};

template <class T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in, int out, int k, int stride, int pad)
      : in_(in), out_(out), k_(k), stride_(stride), pad_(pad), mask_(out, T(1)) {
    weight_.name = "weight";
    weight_.value.assign(static_cast<std::size_t>(out) * in * k * k, T(0));
    bias_.name = "bias";
    bias_.value.assign(out, T(0));
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  // Multiplies each output channel; zero entries prune the channel.
  std::vector<T>& channel_mask() { return mask_; }
  const std::vector<T>& channel_mask() const { return mask_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c != in_) throw InputError("conv: channel mismatch");
    in_h_ = x.h;
    in_w_ = x.w;
    out_h_ = (x.h + 2 * pad_ - k_) / stride_ + 1;
    out_w_ = (x.w + 2 * pad_ - k_) / stride_ + 1;
    const int K = in_ * k_ * k_;
    const int P = out_h_ * out_w_;
    cols_.assign(static_cast<std::size_t>(x.n) * K * P, T(0));
    Tensor<T> y(x.n, out_, out_h_, out_w_);
    CMapRow<T> W(weight_.value.data(), out_, K);
    for (int i = 0; i < x.n; ++i) {
      T* col = cols_.data() + static_cast<std::size_t>(i) * K * P;
      im2col(x.sample(i), col);
      MapRow<T> Y(y.sample(i), out_, P);
      Y.noalias() = W * CMapRow<T>(col, K, P);
      for (int o = 0; o < out_; ++o) {
        Y.row(o).array() += bias_.value[o];
        Y.row(o) *= mask_[o];
      }
    }
    batch_ = x.n;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy_in, bool param_grads) override {
    const int K = in_ * k_ * k_;
    const int P = out_h_ * out_w_;
    Tensor<T> dx(batch_, in_, in_h_, in_w_);
    CMapRow<T> W(weight_.value.data(), out_, K);
    RowMat<T> dY(out_, P);
    RowMat<T> dcol(K, P);
    if (param_grads) {
      weight_.grad.resize(weight_.value.size(), T(0));
      bias_.grad.resize(bias_.value.size(), T(0));
    }
    for (int i = 0; i < batch_; ++i) {
      dY = CMapRow<T>(dy_in.sample(i), out_, P);
      for (int o = 0; o < out_; ++o) dY.row(o) *= mask_[o];
      const T* col = cols_.data() + static_cast<std::size_t>(i) * K * P;
      if (param_grads) {
        MapRow<T>(weight_.grad.data(), out_, K).noalias() += dY * CMapRow<T>(col, K, P).transpose();
        for (int o = 0; o < out_; ++o) bias_.grad[o] += dY.row(o).sum();
      }
      dcol.noalias() = W.transpose() * dY;
      col2im(dcol.data(), dx.sample(i));
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  void im2col(const T* x, T* col) const {
    const int P = out_h_ * out_w_;
    for (int ci = 0; ci < in_; ++ci)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          T* row = col + static_cast<std::size_t>((ci * k_ + ky) * k_ + kx) * P;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= in_h_) continue;
            const T* src = x + (static_cast<std::size_t>(ci) * in_h_ + iy) * in_w_;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < in_w_) row[oy * out_w_ + ox] = src[ix];
            }
          }
        }
  }

  void col2im(const T* col, T* dx) const {
    const int P = out_h_ * out_w_;
    for (int ci = 0; ci < in_; ++ci)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = col + static_cast<std::size_t>((ci * k_ + ky) * k_ + kx) * P;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= in_h_) continue;
            T* dst = dx + (static_cast<std::size_t>(ci) * in_h_ + iy) * in_w_;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < in_w_) dst[ix] += row[oy * out_w_ + ox];
            }
          }
        }
  }

  int in_, out_, k_, stride_, pad_;
  Param<T> weight_, bias_;
  std::vector<T> mask_;
  std::vector<T> cols_;
  int batch_ = 0, in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
};

template <class T>
class Relu final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y = x;
    for (auto& v : y.v) v = v > T(0) ? v : T(0);
    last_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i)
      if (!(last_.v[i] > T(0))) dx.v[i] = T(0);
    return dx;
  }

 private:
  Tensor<T> last_;
};

template <class T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    n_ = x.n;
    c_ = x.c;
    h_ = x.h;
    w_ = x.w;
    Tensor<T> y(x.n, x.c, 1, 1);
    const int hw = x.h * x.w;
    for (int i = 0; i < x.n; ++i)
      for (int ch = 0; ch < x.c; ++ch) {
        const T* p = x.sample(i) + static_cast<std::size_t>(ch) * hw;
        T s(0);
        for (int k = 0; k < hw; ++k) s += p[k];
        y(i, ch, 0, 0) = s / T(hw);
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    Tensor<T> dx(n_, c_, h_, w_);
    const int hw = h_ * w_;
    for (int i = 0; i < n_; ++i)
      for (int ch = 0; ch < c_; ++ch) {
        const T g = dy(i, ch, 0, 0) / T(hw);
        T* p = dx.sample(i) + static_cast<std::size_t>(ch) * hw;
        for (int k = 0; k < hw; ++k) p[k] = g;
      }
    return dx;
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

template <class T>
class GlobalMaxPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    n_ = x.n;
    c_ = x.c;
    h_ = x.h;
    w_ = x.w;
    argmax_.assign(static_cast<std::size_t>(x.n) * x.c, 0);
    Tensor<T> y(x.n, x.c, 1, 1);
    const int hw = x.h * x.w;
    for (int i = 0; i < x.n; ++i)
      for (int ch = 0; ch < x.c; ++ch) {
        const T* p = x.sample(i) + static_cast<std::size_t>(ch) * hw;
        int best = 0;
        for (int k = 1; k < hw; ++k)
          if (p[k] > p[best]) best = k;
        argmax_[static_cast<std::size_t>(i) * x.c + ch] = best;
        y(i, ch, 0, 0) = p[best];
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy, bool) override {
    Tensor<T> dx(n_, c_, h_, w_);
    const int hw = h_ * w_;
    for (int i = 0; i < n_; ++i)
      for (int ch = 0; ch < c_; ++ch) {
        T* p = dx.sample(i) + static_cast<std::size_t>(ch) * hw;
        p[argmax_[static_cast<std::size_t>(i) * c_ + ch]] = dy(i, ch, 0, 0);
      }
    return dx;
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<int> argmax_;
};

template <class T>
class Linear final : public Layer<T> {
 public:
  Linear(int in, int out) : in_(in), out_(out) {
    weight_.name = "weight";
    weight_.value.assign(static_cast<std::size_t>(in) * out, T(0));
    bias_.name = "bias";
    bias_.value.assign(out, T(0));
  }
  Tensor<T> forward(const Tensor<T>& x) override {
    if (static_cast<int>(x.per_sample()) != in_) throw InputError("linear: input size mismatch");
    last_ = x;
    Tensor<T> y(x.n, out_, 1, 1);
    CMapRow<T> X(x.v.data(), x.n, in_);
    MapRow<T> Y(y.v.data(), x.n, out_);
    Y.noalias() = X * CMapRow<T>(weight_.value.data(), out_, in_).transpose();
    for (int i = 0; i < x.n; ++i)
      for (int o = 0; o < out_; ++o) Y(i, o) += bias_.value[o];
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy, bool param_grads) override {
    CMapRow<T> dY(dy.v.data(), dy.n, out_);
    CMapRow<T> W(weight_.value.data(), out_, in_);
    if (param_grads) {
      weight_.grad.resize(weight_.value.size(), T(0));
      bias_.grad.resize(bias_.value.size(), T(0));
      MapRow<T>(weight_.grad.data(), out_, in_).noalias() +=
          dY.transpose() * CMapRow<T>(last_.v.data(), last_.n, in_);
      for (int o = 0; o < out_; ++o) bias_.grad[o] += dY.col(o).sum();
    }
    Tensor<T> dx(last_.n, last_.c, last_.h, last_.w);
    MapRow<T>(dx.v.data(), last_.n, in_).noalias() = dY * W;
    return dx;
  }
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  int in_, out_;
  Param<T> weight_, bias_;
  Tensor<T> last_;
};

template <class T>
class Network {
 public:
  explicit Network(Arch arch) : arch_(std::move(arch)) { build(); }

  Network(const Network& o) : arch_(o.arch_) {
    build();
    copy_state_from(o);
  }
  Network& operator=(const Network& o) {
    if (this != &o) {
      arch_ = o.arch_;
      build();
      copy_state_from(o);
    }
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const Arch& arch() const { return arch_; }

  // He-normal weights, zero biases.
  void init(std::uint64_t seed) {
    Rng rng(seed, stream::kTrainInit);
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& d = arch_.layers[li];
      const int fan_in = d.kind == LayerKind::Conv ? d.in * d.kernel * d.kernel : d.in;
      for (auto* p : layers_[li]->params()) {
        if (p->name == "weight") {
          const double sd = std::sqrt(2.0 / fan_in);
          for (auto& v : p->value) v = static_cast<T>(rng.normal(0.0, sd));
        } else {
          for (auto& v : p->value) v = T(0);
        }
      }
    }
  }

  // Returns logits (N x 2). Caches activations for backward.
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> h = x;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      h = layers_[li]->forward(h);
      if (!arch_.layers[li].block.empty() && keep_blocks_) block_out_[arch_.layers[li].block] = h;
    }
    return h;
  }

  // Back-propagates d(loss)/d(logits); returns d(loss)/d(input).
  Tensor<T> backward(const Tensor<T>& dlogits, bool param_grads = true) {
    Tensor<T> g = dlogits;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      if (!arch_.layers[li].block.empty() && keep_blocks_) block_grad_[arch_.layers[li].block] = g;
      g = layers_[li]->backward(g, param_grads);
    }
    return g;
  }

  // Record block activations and their gradients (for saliency maps).
  void keep_block_tensors(bool on) { keep_blocks_ = on; }
  const Tensor<T>& block_output(const std::string& name) const { return lookup(block_out_, name); }
  const Tensor<T>& block_grad(const std::string& name) const { return lookup(block_grad_, name); }

  std::vector<std::string> block_names() const {
    std::vector<std::string> out;
    for (const auto& d : arch_.layers)
      if (!d.block.empty()) out.push_back(d.block);
    return out;
  }

  // Convolution feeding the named block.
  Conv2d<T>& block_conv(const std::string& name) {
    for (std::size_t li = 0; li < arch_.layers.size(); ++li)
      if (arch_.layers[li].block == name) {
        if (li == 0 || arch_.layers[li - 1].kind != LayerKind::Conv) break;
        return static_cast<Conv2d<T>&>(*layers_[li - 1]);
      }
    throw InputError("unknown convolutional block: " + name);
  }
  std::string last_block() const { return block_names().back(); }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }
  std::vector<const Param<T>*> params() const {
    std::vector<const Param<T>*> out;
    for (auto& l : layers_)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  // All conv channel masks in layer order.
  std::vector<std::vector<T>*> masks() {
    std::vector<std::vector<T>*> out;
    for (std::size_t li = 0; li < layers_.size(); ++li)
      if (arch_.layers[li].kind == LayerKind::Conv)
        out.push_back(&static_cast<Conv2d<T>&>(*layers_[li]).channel_mask());
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->grad.assign(p->value.size(), T(0));
  }

  template <class U>
  Network<U> cast() const {
    Network<U> out(arch_);
    auto dst = out.params();
    auto src = params();
    for (std::size_t i = 0; i < src.size(); ++i)
      for (std::size_t k = 0; k < src[i]->value.size(); ++k)
        dst[i]->value[k] = static_cast<U>(src[i]->value[k]);
    auto dm = out.masks();
    auto sm = const_cast<Network*>(this)->masks();
    for (std::size_t i = 0; i < sm.size(); ++i)
      for (std::size_t k = 0; k < sm[i]->size(); ++k) (*dm[i])[k] = static_cast<U>((*sm[i])[k]);
    return out;
  }

 private:
  void build() {
    layers_.clear();
    for (const auto& d : arch_.layers) {
      switch (d.kind) {
        case LayerKind::Conv:
          layers_.push_back(std::make_unique<Conv2d<T>>(d.in, d.out, d.kernel, d.stride, d.pad));
          break;
        case LayerKind::Relu:
          layers_.push_back(std::make_unique<Relu<T>>());
          break;
        case LayerKind::GlobalAvgPool:
          layers_.push_back(std::make_unique<GlobalAvgPool<T>>());
          break;
        case LayerKind::GlobalMaxPool:
          layers_.push_back(std::make_unique<GlobalMaxPool<T>>());
          break;
        case LayerKind::Linear:
          layers_.push_back(std::make_unique<Linear<T>>(d.in, d.out));
          break;
      }
    }
  }
  void copy_state_from(const Network& o) {
    auto dst = params();
    auto src = o.params();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    auto dm = masks();
    auto sm = const_cast<Network&>(o).masks();
    for (std::size_t i = 0; i < sm.size(); ++i) *dm[i] = *sm[i];
  }
  static const Tensor<T>& lookup(const std::map<std::string, Tensor<T>>& m, const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) throw InputError("no recorded tensor for block " + k);
    return it->second;
  }

  Arch arch_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  bool keep_blocks_ = false;
  std::map<std::string, Tensor<T>> block_out_;
  std::map<std::string, Tensor<T>> block_grad_;
};

// Row-wise softmax of N x 2 logits.
template <class T>
std::vector<T> softmax(const Tensor<T>& logits) {
  std::vector<T> p(logits.v.size());
  const int k = logits.c;
  for (int i = 0; i < logits.n; ++i) {
    const T* z = logits.sample(i);
    T m = z[0];
    for (int j = 1; j < k; ++j) m = std::max(m, z[j]);
    T s(0);
    for (int j = 0; j < k; ++j) s += std::exp(z[j] - m);
    for (int j = 0; j < k; ++j) p[i * k + j] = std::exp(z[j] - m) / s;
  }
  return p;
}

// Mean cross-entropy over the batch; writes d(loss)/d(logits).
template <class T>
T cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels, Tensor<T>& dlogits) {
  const auto p = softmax(logits);
  const int k = logits.c;
  dlogits = Tensor<T>(logits.n, k, 1, 1);
  T loss(0);
  for (int i = 0; i < logits.n; ++i) {
    const int y = labels[i];
    loss -= std::log(std::max(p[i * k + y], T(1e-30)));
    for (int j = 0; j < k; ++j) dlogits.v[i * k + j] = (p[i * k + j] - (j == y ? T(1) : T(0))) / T(logits.n);
  }
  return loss / T(logits.n);
}

template <class T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<Param<T>*>& params) {
    if (m_.size() != params.size()) {
      m_.assign(params.size(), {});
      v_.assign(params.size(), {});
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i]->value.size(), 0.0);
        v_[i].assign(params[i]->value.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad[k];
        m_[i][k] = b1_ * m_[i][k] + (1 - b1_) * g;
        v_[i][k] = b2_ * v_[i][k] + (1 - b2_) * g * g;
        const double upd = lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
        p.value[k] = static_cast<T>(p.value[k] - upd);
      }
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace lbd::nn
