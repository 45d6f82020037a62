#include "lbd/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lbd/imageio.hpp"
#include "lbd/imageops.hpp"

namespace lbd {

namespace {

std::vector<const Image*> pointers(const std::vector<Image>& images) {
  std::vector<const Image*> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(&im);
  return out;
}

double binary_entropy(double p) {
  double h = 0.0;
  for (double q : {p, 1.0 - p})
    if (q > 0.0) h -= q * std::log2(q);
  return h;
}

std::uint64_t image_seed(const Image& im, std::uint64_t seed) {
  Fnv1a h;
  h.update(im.px.data(), im.px.size() * sizeof(float));
  return derive_seed(seed, stream::kStrip, h.digest());
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

std::vector<double> strip_entropy(const DetectorModel& model, const std::vector<Image>& images,
                                  const std::vector<Image>& pool, const StripConfig& cfg) {
  if (images.empty() || pool.empty()) throw InputError("strip: empty image set or pool");
  if (cfg.n_blend < 1) throw ConfigError("strip: n_blend must be >= 1");
  if (static_cast<int>(pool.size()) < cfg.n_blend) throw InputError("strip: pool smaller than n_blend");
  std::vector<double> out;
  out.reserve(images.size());
  std::vector<Image> blends;
  blends.reserve(cfg.n_blend);
  for (const auto& im : images) {
    // Blend partners depend on the image content only, not its position.
    Rng rng(image_seed(im, cfg.seed));
    blends.clear();
    for (int k = 0; k < cfg.n_blend; ++k) blends.push_back(superimpose(im, pool[rng.index(pool.size())]));
    const auto probs = predict(model, pointers(blends));
    double h = 0.0;
    for (const auto& p : probs) h += binary_entropy(p[1]);
    out.push_back(h / cfg.n_blend);
  }
  return out;
}

StripReport strip(const DetectorModel& model, const std::vector<Image>& suspicious,
                  const std::vector<Image>& benign, const std::vector<Image>& pool,
                  const StripConfig& cfg) {
  StripReport r;
  r.suspicious_entropy = strip_entropy(model, suspicious, pool, cfg);
  r.benign_entropy = strip_entropy(model, benign, pool, cfg);
  r.benign_hist = histogram(r.benign_entropy, cfg.bins, 0.0, 1.0 + 1e-9);
  r.suspicious_hist = histogram(r.suspicious_entropy, cfg.bins, 0.0, 1.0 + 1e-9);
  r.overlap = overlap_coefficient(r.benign_hist, r.suspicious_hist);
  const double pooled = std::sqrt(0.5 * (variance(r.benign_entropy) + variance(r.suspicious_entropy)));
  const double diff = mean(r.benign_entropy) - mean(r.suspicious_entropy);
  r.separation = pooled > 0.0 ? diff / pooled : (diff == 0.0 ? 0.0 : std::copysign(1e9, diff));
  return r;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct AdamVec {
  explicit AdamVec(std::size_t n, double lr) : lr(lr), m(n, 0.0), v(n, 0.0) {}
  void step(std::vector<double>& x, const std::vector<double>& g) {
    ++t;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
  double lr;
  int t = 0;
  std::vector<double> m, v;
};

Image blend_with(const Image& x, const std::vector<double>& mask, const std::vector<double>& pattern) {
  Image out = x;
  const std::size_t plane = static_cast<std::size_t>(x.height) * x.width;
  for (int c = 0; c < x.channels; ++c)
    for (std::size_t k = 0; k < plane; ++k) {
      const std::size_t i = c * plane + k;
      out.px[i] = static_cast<float>((1.0 - mask[k]) * x.px[i] + mask[k] * pattern[i]);
    }
  return out;
}

}  // namespace

ReversedTrigger reverse_trigger(const DetectorModel& model, const std::vector<Image>& probes,
                                Label target, const NeuralCleanseConfig& cfg) {
  if (probes.empty()) throw InputError("neural_cleanse: no probe images");
  if (!(cfg.lambda > 0.0)) throw ConfigError("neural_cleanse: lambda must be > 0");
  if (cfg.steps < 1 || cfg.batch_size < 1) throw ConfigError("neural_cleanse: steps and batch size must be >= 1");
  const Shape s = model.input_shape();
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  const std::size_t full = plane * s.channels;

  // Small initial mask, mid-grey pattern.
  std::vector<double> a(plane, -2.0), b(full, 0.0);
  std::vector<double> m(plane), p(full);
  AdamVec opt_a(plane, cfg.learning_rate), opt_b(full, cfg.learning_rate);
  auto squash = [&] {
    for (std::size_t k = 0; k < plane; ++k) m[k] = sigmoid(a[k]);
    for (std::size_t k = 0; k < full; ++k) p[k] = sigmoid(b[k]);
  };

  ReversedTrigger r;
  r.target = target;
  std::size_t cursor = 0;
  std::vector<double> ga(plane), gb(full);
  for (int step = 0; step < cfg.steps; ++step) {
    squash();
    std::vector<Image> batch;
    std::vector<const Image*> originals;
    for (int k = 0; k < cfg.batch_size; ++k) {
      const Image& x = probes[cursor];
      cursor = (cursor + 1) % probes.size();
      originals.push_back(&x);
      batch.push_back(blend_with(x, m, p));
    }
    const auto ig = input_gradient(model, pointers(batch), std::vector<Label>(batch.size(), target), false);
    double l1 = std::accumulate(m.begin(), m.end(), 0.0);
    const double loss = ig.loss + cfg.lambda * l1;
    if (!std::isfinite(loss))
      throw TrainingError("neural_cleanse diverged at step " + std::to_string(step));
    r.final_loss = loss;

    std::fill(ga.begin(), ga.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& g = ig.grads[i];
      const Image& x = *originals[i];
      for (int c = 0; c < s.channels; ++c)
        for (std::size_t k = 0; k < plane; ++k) {
          const std::size_t j = c * plane + k;
          ga[k] += g[j] * (p[j] - x.px[j]);
          gb[j] += g[j] * m[k];
        }
    }
    for (std::size_t k = 0; k < plane; ++k) ga[k] = (ga[k] + cfg.lambda) * m[k] * (1.0 - m[k]);
    for (std::size_t j = 0; j < full; ++j) gb[j] *= p[j] * (1.0 - p[j]);
    opt_a.step(a, ga);
    opt_b.step(b, gb);
  }
  squash();

  r.mask = Image(1, s.height, s.width);
  r.pattern = Image(s.channels, s.height, s.width);
  for (std::size_t k = 0; k < plane; ++k) r.mask.px[k] = static_cast<float>(m[k]);
  for (std::size_t j = 0; j < full; ++j) r.pattern.px[j] = static_cast<float>(p[j]);
  r.l1 = std::accumulate(m.begin(), m.end(), 0.0);

  std::vector<Image> flipped;
  flipped.reserve(probes.size());
  for (const auto& x : probes) flipped.push_back(blend_with(x, m, p));
  const auto labels = classify(model, flipped);
  r.success = 100.0 * static_cast<double>(std::count(labels.begin(), labels.end(), target)) /
              static_cast<double>(labels.size());
  return r;
}

NeuralCleanseResult neural_cleanse(const DetectorModel& model, const std::vector<Image>& fakes,
                                   const std::vector<Image>& reals, const NeuralCleanseConfig& cfg) {
  NeuralCleanseResult r;
  r.config = cfg;
  r.real = reverse_trigger(model, fakes, Label::Real, cfg);
  r.fake = reverse_trigger(model, reals, Label::Fake, cfg);
  r.ratio = r.fake.l1 > 0.0 ? r.real.l1 / r.fake.l1 : 0.0;
  return r;
}

std::vector<double> channel_activity(const DetectorModel& model, const std::vector<Image>& benign) {
  if (benign.empty()) throw InputError("fine_prune: empty benign set");
  nn::Network<float> net = model.net();
  net.keep_block_tensors(true);
  const std::string block = net.last_block();
  std::vector<double> act;
  constexpr std::size_t kBatch = 128;
  for (std::size_t b0 = 0; b0 < benign.size(); b0 += kBatch) {
    std::vector<const Image*> ptrs;
    for (std::size_t i = b0; i < std::min(benign.size(), b0 + kBatch); ++i) ptrs.push_back(&benign[i]);
    net.forward(to_tensor(ptrs, model.input_shape()));
    const auto& a = net.block_output(block);
    if (act.empty()) act.assign(a.c, 0.0);
    const int hw = a.h * a.w;
    for (int i = 0; i < a.n; ++i)
      for (int c = 0; c < a.c; ++c) {
        const float* q = a.sample(i) + static_cast<std::size_t>(c) * hw;
        double s = 0.0;
        for (int k = 0; k < hw; ++k) s += std::abs(q[k]);
        act[c] += s / hw;
      }
  }
  for (double& v : act) v /= static_cast<double>(benign.size());
  return act;
}

PruneCurve fine_prune(const DetectorModel& model, const std::vector<Image>& benign,
                      const std::vector<double>& fractions, const Dataset& test, const Generator& g,
                      const PoisonRender* poisoned, const EvalConfig& eval_cfg, bool retrain,
                      const Dataset* retrain_set, const TrainConfig* retrain_cfg) {
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] < 1.0)) throw InputError("fine_prune: fractions must lie in [0, 1)");
    if (i > 0 && !(fractions[i] > fractions[i - 1])) throw InputError("fine_prune: fractions must be increasing");
  }
  if (retrain && (!retrain_set || !retrain_cfg)) throw ConfigError("fine_prune: retraining needs data and a config");

  const auto act = channel_activity(model, benign);
  std::vector<int> order(act.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return act[x] < act[y]; });

  PruneCurve curve;
  for (double f : fractions) {
    DetectorModel pruned = model;
    auto& conv = pruned.net().block_conv(pruned.net().last_block());
    const int k = static_cast<int>(std::floor(f * static_cast<double>(order.size()) + 1e-9));
    for (int i = 0; i < k; ++i) conv.channel_mask()[order[i]] = 0.0f;
    if (retrain) {
      TrainConfig tc = *retrain_cfg;
      tc.epochs = 1;
      pruned = train(pruned, *retrain_set, tc);
    }
    curve.push_back({f, k, evaluate(pruned, test, g, poisoned, eval_cfg)});
  }
  return curve;
}

void TransformSpec::validate() const {
  switch (kind) {
    case Kind::Identity: return;
    case Kind::Rotate:
      if (!std::isfinite(value)) throw InputError("rotation angle must be finite");
      return;
    case Kind::Jpeg:
      if (!(value >= 10.0 && value <= 100.0)) throw InputError("jpeg quality must lie in [10, 100]");
      return;
    case Kind::CenterCrop:
      if (!(value > 0.0 && value <= 1.0)) throw InputError("center crop fraction must lie in (0, 1]");
      return;
    case Kind::DownUp:
      if (!(value > 0.0 && value <= 1.0)) throw InputError("down/up scale must lie in (0, 1]");
      return;
  }
}

std::string TransformSpec::name() const {
  char buf[64];
  switch (kind) {
    case Kind::Identity: return "identity";
    case Kind::Rotate: std::snprintf(buf, sizeof buf, "rotate(%g)", value); return buf;
    case Kind::Jpeg: std::snprintf(buf, sizeof buf, "jpeg(%g)", value); return buf;
    case Kind::CenterCrop: std::snprintf(buf, sizeof buf, "center_crop(%g)", value); return buf;
    case Kind::DownUp: std::snprintf(buf, sizeof buf, "down_up(%g)", value); return buf;
  }
  return "?";
}

ImageTransform make_transform(const TransformSpec& spec) {
  spec.validate();
  const double v = spec.value;
  switch (spec.kind) {
    case TransformSpec::Kind::Identity: return [](const Image& im) { return im; };
    case TransformSpec::Kind::Rotate: return [v](const Image& im) { return rotate(im, v); };
    case TransformSpec::Kind::Jpeg:
      return [v](const Image& im) { return jpeg_roundtrip(im, static_cast<int>(std::lround(v))); };
    case TransformSpec::Kind::CenterCrop: return [v](const Image& im) { return center_crop_resize(im, v); };
    case TransformSpec::Kind::DownUp: return [v](const Image& im) { return down_up(im, v); };
  }
  return {};
}

MetricsReport transform_eval(const DetectorModel& model, const Dataset& test, const Generator& g,
                             const PoisonRender* poisoned, const TransformSpec& spec,
                             const EvalConfig& cfg, const PoisonRender* benign) {
  return evaluate(model, test, g, poisoned, cfg, make_transform(spec), benign);
}

Image grad_cam(const DetectorModel& model, const Image& image, Label target_class,
               const std::string& block) {
  nn::Network<float> net = model.net();
  const std::string name = block.empty() ? net.last_block() : block;
  const auto names = net.block_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw InputError("grad_cam: unknown block " + name);
  net.keep_block_tensors(true);
  const Image* ptr = &image;
  const auto logits = net.forward(to_tensor(std::span<const Image* const>(&ptr, 1), model.input_shape()));
  nn::Tensor<float> dlogits(1, logits.c, 1, 1);
  dlogits.v[static_cast<int>(target_class)] = 1.0f;
  net.backward(dlogits, false);
  const auto& a = net.block_output(name);
  const auto& da = net.block_grad(name);
  const int hw = a.h * a.w;
  Image cam(1, a.h, a.w);
  for (int c = 0; c < a.c; ++c) {
    const float* gq = da.sample(0) + static_cast<std::size_t>(c) * hw;
    const float* aq = a.sample(0) + static_cast<std::size_t>(c) * hw;
    double alpha = 0.0;
    for (int k = 0; k < hw; ++k) alpha += gq[k];
    alpha /= hw;
    for (int k = 0; k < hw; ++k) cam.px[k] += static_cast<float>(alpha * aq[k]);
  }
  for (auto& v : cam.px) v = std::max(v, 0.0f);
  Image up = resize_bilinear(cam, image.height, image.width);
  const float peak = *std::max_element(up.px.begin(), up.px.end());
  for (auto& v : up.px) v = peak > 0.0f ? std::clamp(v / peak, 0.0f, 1.0f) : 0.0f;
  return up;
}

double saliency_mass(const Image& saliency, int x0, int y0, int x1, int y1) {
  double inside = 0.0, total = 0.0;
  for (int y = 0; y < saliency.height; ++y)
    for (int x = 0; x < saliency.width; ++x) {
      const double v = saliency.at(0, y, x);
      total += v;
      if (x >= x0 && x <= x1 && y >= y0 && y <= y1) inside += v;
    }
  return total > 0.0 ? inside / total : 0.0;
}

}  // namespace lbd
