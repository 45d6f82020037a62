#include "lbd/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "lbd/imageops.hpp"

namespace lbd {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (hflip_prob < 0.0 || hflip_prob > 1.0) throw ConfigError("hflip_prob must lie in [0, 1]");
  if (!(crop_area_lo > 0.0 && crop_area_lo <= crop_area_hi && crop_area_hi <= 1.0)) {
    throw ConfigError("crop area range must satisfy 0 < lo <= hi <= 1");
  }
  if (!(crop_aspect_lo > 0.0 && crop_aspect_lo <= crop_aspect_hi)) {
    throw ConfigError("crop aspect range must satisfy 0 < lo <= hi");
  }
}

DetectorModel::DetectorModel(const std::string& arch_id, Shape input, std::uint64_t init_seed)
    : net_(nn::arch_by_id(arch_id, input)) {
  net_.init(init_seed);
}

DetectorModel::DetectorModel(nn::Network<float> net) : net_(std::move(net)) {}

std::uint64_t DetectorModel::parameter_hash() const {
  Fnv1a h;
  h.update(net_.arch().id);
  for (const auto* p : net_.params()) h.update_span<float>(p->value);
  for (const auto* m : const_cast<nn::Network<float>&>(net_).masks()) h.update_span<float>(*m);
  return h.digest();
}

nn::Tensor<float> to_tensor(std::span<const Image* const> images, Shape expected) {
  nn::Tensor<float> t(static_cast<int>(images.size()), expected.channels, expected.height,
                      expected.width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = *images[i];
    if (shape_of(im) != expected) throw InputError("image shape does not match model input shape");
    float* dst = t.sample(static_cast<int>(i));
    for (std::size_t k = 0; k < im.px.size(); ++k) dst[k] = (im.px[k] - 0.5f) * kInputScale;
  }
  return t;
}

namespace {

std::vector<const Image*> pointers(std::span<const Image> images) {
  std::vector<const Image*> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(&im);
  return out;
}

Image augment(const Image& src, const TrainConfig& cfg, Rng& rng) {
  Image im = rng.bernoulli(cfg.hflip_prob) ? flip_horizontal(src) : src;
  const CropBox box = random_resized_crop_box(im.height, im.width, cfg.crop_area_lo,
                                              cfg.crop_area_hi, cfg.crop_aspect_lo,
                                              cfg.crop_aspect_hi, rng);
  return crop_resize(im, box.x0, box.y0, box.w, box.h, im.height, im.width);
}

}  // namespace

DetectorModel train(const DetectorModel& init, const Dataset& data, const TrainConfig& cfg,
                    std::vector<TrainLogEntry>* log) {
  cfg.validate();
  if (data.empty()) throw TrainingError("training data is empty");
  const bool has_real = std::any_of(data.begin(), data.end(), [](auto& s) { return s.label == Label::Real; });
  const bool has_fake = std::any_of(data.begin(), data.end(), [](auto& s) { return s.label == Label::Fake; });
  if (!has_real || !has_fake) throw TrainingError("training data must contain both classes");

  DetectorModel model = init;
  auto& net = model.net();
  const Shape shape = model.input_shape();
  nn::Adam<float> opt(cfg.learning_rate);
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(cfg.seed, stream::kTrainOrder, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), order_rng.engine());

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(n, b0 + cfg.batch_size);
      std::vector<Image> batch;
      std::vector<int> labels;
      batch.reserve(b1 - b0);
      for (std::size_t k = b0; k < b1; ++k) {
        const auto& s = data[order[k]];
        if (cfg.augment) {
          Rng aug(cfg.seed, stream::kAugment, static_cast<std::uint64_t>(epoch) * n + order[k]);
          batch.push_back(augment(s.image, cfg, aug));
        } else {
          batch.push_back(s.image);
        }
        labels.push_back(static_cast<int>(s.label));
      }
      const auto ptrs = pointers(batch);
      const auto x = to_tensor(ptrs, shape);
      net.zero_grad();
      const auto logits = net.forward(x);
      nn::Tensor<float> dlogits;
      const float loss = nn::cross_entropy(logits, labels, dlogits);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b0 / cfg.batch_size));
      }
      net.backward(dlogits, true);
      if (cfg.weight_decay > 0.0) {
        for (auto* p : net.params())
          for (std::size_t k = 0; k < p->value.size(); ++k)
            p->grad[k] += static_cast<float>(cfg.weight_decay) * p->value[k];
      }
      opt.step(net.params());

      loss_sum += loss * static_cast<double>(b1 - b0);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const int pred = logits.v[i * 2 + 1] > logits.v[i * 2] ? 1 : 0;
        correct += pred == labels[i];
      }
      seen += b1 - b0;
    }
    if (log) log->push_back({epoch, loss_sum / seen, 100.0 * correct / seen});
  }
  model.bump_version();
  return model;
}

Probabilities predict(const DetectorModel& model, std::span<const Image* const> images) {
  constexpr std::size_t kBatch = 128;
  nn::Network<float> net = model.net();
  Probabilities out;
  out.reserve(images.size());
  for (std::size_t b0 = 0; b0 < images.size(); b0 += kBatch) {
    const std::size_t b1 = std::min(images.size(), b0 + kBatch);
    const auto x = to_tensor(images.subspan(b0, b1 - b0), model.input_shape());
    const auto p = nn::softmax(net.forward(x));
    for (std::size_t i = 0; i < b1 - b0; ++i) out.push_back({p[i * 2], p[i * 2 + 1]});
  }
  return out;
}

Probabilities predict(const DetectorModel& model, std::span<const Image> images) {
  const auto ptrs = pointers(images);
  return predict(model, std::span<const Image* const>(ptrs));
}

std::vector<Label> classify(const DetectorModel& model, std::span<const Image* const> images) {
  std::vector<Label> out;
  for (const auto& p : predict(model, images)) out.push_back(p[1] > p[0] ? Label::Real : Label::Fake);
  return out;
}

std::vector<Label> classify(const DetectorModel& model, std::span<const Image> images) {
  const auto ptrs = pointers(images);
  return classify(model, std::span<const Image* const>(ptrs));
}

double accuracy(const DetectorModel& model, const Dataset& data) {
  if (data.empty()) throw InputError("accuracy: empty dataset");
  std::vector<const Image*> ptrs;
  for (const auto& s : data) ptrs.push_back(&s.image);
  const auto labels = classify(model, ptrs);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < data.size(); ++i) ok += labels[i] == data[i].label;
  return 100.0 * ok / data.size();
}

namespace {

template <class T>
InputGradient input_gradient_as(const DetectorModel& model, std::span<const Image* const> images,
                                const std::vector<Label>& targets) {
  nn::Network<T> net = model.net().cast<T>();
  const auto xf = to_tensor(images, model.input_shape());
  nn::Tensor<T> x(xf.n, xf.c, xf.h, xf.w);
  for (std::size_t i = 0; i < xf.v.size(); ++i) x.v[i] = static_cast<T>(xf.v[i]);
  const auto logits = net.forward(x);
  std::vector<int> y;
  for (auto t : targets) y.push_back(static_cast<int>(t));
  nn::Tensor<T> dlogits;
  InputGradient out;
  out.loss = nn::cross_entropy(logits, y, dlogits);
  const auto p = nn::softmax(logits);
  for (std::size_t i = 0; i < images.size(); ++i) out.probs.push_back({p[i * 2], p[i * 2 + 1]});
  const auto dx = net.backward(dlogits, false);
  out.grads.resize(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const T* g = dx.sample(static_cast<int>(i));
    out.grads[i].assign(g, g + dx.per_sample());
    for (double& v : out.grads[i]) v *= kInputScale;
  }
  return out;
}

}  // namespace

InputGradient input_gradient(const DetectorModel& model, std::span<const Image* const> images,
                             const std::vector<Label>& targets, bool double_precision) {
  if (images.size() != targets.size()) throw InputError("input_gradient: label count mismatch");
  return double_precision ? input_gradient_as<double>(model, images, targets)
                          : input_gradient_as<float>(model, images, targets);
}

// Checkpoint container:
//   "LBDCKPT\0" | u32 format | str arch | i32 C,H,W | u32 classes + names |
//   u64 version | u32 arrays (str name, u64 n, f32[n]) | u32 masks (u64 n, f32[n]) |
//   u64 FNV-1a of all preceding bytes
namespace {

constexpr char kMagic[8] = {'L', 'B', 'D', 'C', 'K', 'P', 'T', '\0'};

struct Writer {
  std::string buf;
  template <class T>
  void pod(const T& v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    buf += s;
  }
  void floats(const std::vector<float>& v) {
    pod(static_cast<std::uint64_t>(v.size()));
    buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
};

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  void need(std::size_t n) {
    if (pos + n > buf.size()) throw LoadError("checkpoint truncated");
  }
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof v);
    pos += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  std::vector<float> floats() {
    const auto n = pod<std::uint64_t>();
    need(n * sizeof(float));
    std::vector<float> v(n);
    std::memcpy(v.data(), buf.data() + pos, n * sizeof(float));
    pos += n * sizeof(float);
    return v;
  }
};

}  // namespace

void save_checkpoint(const DetectorModel& model, const std::filesystem::path& path) {
  Writer w;
  w.buf.append(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.str(model.arch_id());
  const Shape s = model.input_shape();
  w.pod<std::int32_t>(s.channels);
  w.pod<std::int32_t>(s.height);
  w.pod<std::int32_t>(s.width);
  w.pod<std::uint32_t>(kNumClasses);
  w.str(std::string(to_string(Label::Fake)));
  w.str(std::string(to_string(Label::Real)));
  w.pod<std::uint64_t>(model.version());
  const auto params = model.net().params();
  w.pod(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.str(std::to_string(i) + "." + params[i]->name);
    w.floats(params[i]->value);
  }
  auto masks = const_cast<nn::Network<float>&>(model.net()).masks();
  w.pod(static_cast<std::uint32_t>(masks.size()));
  for (const auto* m : masks) w.floats(*m);
  w.pod(hash_bytes(w.buf));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
}

DetectorModel load_checkpoint(const std::filesystem::path& path,
                              std::optional<std::string> expected_arch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 8 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw LoadError("not a detector checkpoint: " + path.string());
  }
  std::uint64_t stored_hash;
  std::memcpy(&stored_hash, buf.data() + buf.size() - 8, 8);
  if (stored_hash != hash_bytes(std::string_view(buf.data(), buf.size() - 8))) {
    throw LoadError("checkpoint integrity check failed: " + path.string());
  }
  Reader r{buf, sizeof kMagic};
  const auto format = r.pod<std::uint32_t>();
  if (format != kCheckpointVersion) {
    throw LoadError("checkpoint format version " + std::to_string(format) + " unsupported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const std::string arch = r.str();
  if (expected_arch && *expected_arch != arch) {
    throw LoadError("checkpoint architecture " + arch + " does not match expected " + *expected_arch);
  }
  Shape s;
  s.channels = r.pod<std::int32_t>();
  s.height = r.pod<std::int32_t>();
  s.width = r.pod<std::int32_t>();
  const auto classes = r.pod<std::uint32_t>();
  if (classes != kNumClasses || r.str() != "fake" || r.str() != "real") {
    throw LoadError("checkpoint class order mismatch");
  }
  const auto version = r.pod<std::uint64_t>();
  nn::Network<float> net(nn::arch_by_id(arch, s));
  auto params = net.params();
  if (r.pod<std::uint32_t>() != params.size()) throw LoadError("checkpoint parameter count mismatch");
  for (auto* p : params) {
    r.str();
    auto v = r.floats();
    if (v.size() != p->value.size()) throw LoadError("checkpoint parameter shape mismatch");
    p->value = std::move(v);
  }
  auto masks = net.masks();
  if (r.pod<std::uint32_t>() != masks.size()) throw LoadError("checkpoint mask count mismatch");
  for (auto* m : masks) {
    auto v = r.floats();
    if (v.size() != m->size()) throw LoadError("checkpoint mask shape mismatch");
    *m = std::move(v);
  }
  DetectorModel model(std::move(net));
  model.set_version(version);
  return model;
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogEntry>& log) {
  std::ofstream out(path);
  for (const auto& e : log) {
    out << nlohmann::json{{"epoch", e.epoch}, {"loss", e.loss}, {"train_accuracy", e.train_accuracy}}.dump()
        << '\n';
  }
}

}  // namespace lbd
