#include "lbd/worldgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "lbd/dual.hpp"
#include "lbd/imageio.hpp"

namespace lbd {

using nlohmann::json;

bool LatentCode::finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

double FactorDistribution::sample(Rng& rng) const {
  switch (kind) {
    case Kind::StandardNormal:
      return rng.normal();
    case Kind::HalfNormal:
      for (;;) {
        const double v = std::abs(rng.normal(0.0, sd));
        if (v >= lo && v <= hi) return v;
      }
    case Kind::TruncatedNormal:
      for (;;) {
        const double v = rng.normal(mean, sd);
        if (v >= lo && v <= hi) return v;
      }
  }
  return 0.0;
}

std::vector<FactorSpec> default_factor_specs(int d, std::uint64_t seed) {
  if (d < factor::kNamed) {
    throw ConfigError("latent dimension must be at least 5, got " + std::to_string(d));
  }
  // Gram-Schmidt on a seeded Gaussian matrix, twice for accuracy.
  Rng rng(seed, stream::kWorld);
  std::vector<std::vector<double>> basis(d, std::vector<double>(d));
  for (auto& row : basis)
    for (auto& v : row) v = rng.normal();
  for (int i = 0; i < d; ++i) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < i; ++j) {
        double dot = 0.0;
        for (int k = 0; k < d; ++k) dot += basis[i][k] * basis[j][k];
        for (int k = 0; k < d; ++k) basis[i][k] -= dot * basis[j][k];
      }
      double norm = 0.0;
      for (double v : basis[i]) norm += v * v;
      norm = std::sqrt(norm);
      for (double& v : basis[i]) v /= norm;
    }
  }

  static const char* kNames[factor::kNamed] = {"smile", "age", "face_width", "eye_size",
                                               "texture_amp"};
  std::vector<FactorSpec> specs;
  specs.reserve(d);
  for (int i = 0; i < d; ++i) {
    FactorSpec f;
    f.name = i < factor::kNamed ? kNames[i] : "free_" + std::to_string(i - factor::kNamed);
    f.direction = basis[i];
    f.real_world = FactorDistribution::standard_normal();
    specs.push_back(std::move(f));
  }
  specs[factor::kSmile].real_world = FactorDistribution::half_normal(0.5, 0.0, 3.0);
  specs[factor::kAge].real_world = FactorDistribution::truncated_normal(0.5, 0.4, -1.5, 2.0);
  return specs;
}

void validate_factor_specs(const std::vector<FactorSpec>& specs, int d) {
  if (static_cast<int>(specs.size()) != d) {
    throw ConfigError("factor list must cover all " + std::to_string(d) + " coordinates");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& a = specs[i];
    if (!names.insert(a.name).second) throw ConfigError("duplicate factor name: " + a.name);
    if (static_cast<int>(a.direction.size()) != d) {
      throw ConfigError("factor " + a.name + " has wrong direction dimension");
    }
    double n2 = 0.0;
    for (double v : a.direction) n2 += v * v;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-9) {
      throw ConfigError("factor " + a.name + " direction is not unit norm");
    }
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += a.direction[k] * specs[j].direction[k];
      if (std::abs(dot) >= 1e-9) {
        throw ConfigError("factors " + a.name + " and " + specs[j].name + " are not orthogonal");
      }
    }
  }
}

const FactorSpec& find_factor(const std::vector<FactorSpec>& specs, std::string_view name) {
  for (const auto& f : specs)
    if (f.name == name) return f;
  throw LookupError("unknown factor: " + std::string(name));
}

void GeneratorConfig::validate() const {
  if (d < factor::kNamed) throw ConfigError("generator latent dimension must be >= 5");
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  if (channels < 1 || channels > 3) throw ConfigError("channels must be 1..3");
  if (!(softness > 0.0)) throw ConfigError("softness must be > 0");
  if (fingerprint_amplitude < 0.0 || fingerprint_amplitude > 0.2) {
    throw ConfigError("fingerprint_amplitude must lie in [0, 0.2]");
  }
  if (!fingerprint_pattern.empty() &&
      fingerprint_pattern.size() != static_cast<std::size_t>(image_size) * image_size) {
    throw ConfigError("fingerprint_pattern must be image_size x image_size");
  }
}

std::vector<float> make_fingerprint_pattern(int size, std::uint64_t seed) {
  Rng rng(seed, stream::kWorld, 1);
  const int oy = static_cast<int>(rng.index(4));
  const int ox = static_cast<int>(rng.index(4));
  std::vector<float> p(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      p[static_cast<std::size_t>(y) * size + x] =
          (((y + oy) / 2 + (x + ox) / 2) % 2 == 0) ? 1.0f : -1.0f;
  return p;
}

double FaceGeometry::face_area() const { return std::numbers::pi * head_rx * head_ry; }

double FaceGeometry::mouth_area() const {
  return 4.0 / 3.0 * mouth_opening * mouth_half_width;
}

FaceGeometry::Box FaceGeometry::mouth_box(int size) const {
  auto to_px = [size](double u) { return (u + 1.0) * 0.5 * size - 0.5; };
  const double top = mouth_cy - mouth_curvature - mouth_opening * 0.5;
  const double bottom = mouth_cy + mouth_opening * 0.5;
  Box b;
  b.x0 = std::clamp(static_cast<int>(std::floor(to_px(mouth_cx - mouth_half_width))), 0, size - 1);
  b.x1 = std::clamp(static_cast<int>(std::ceil(to_px(mouth_cx + mouth_half_width))), 0, size - 1);
  b.y0 = std::clamp(static_cast<int>(std::floor(to_px(top))), 0, size - 1);
  b.y1 = std::clamp(static_cast<int>(std::ceil(to_px(bottom))), 0, size - 1);
  return b;
}

namespace {

template <class T>
T sigm(const T& z) {
  using std::exp;
  // Branch on the sign so exp never overflows; an infinite exp would turn
  // the dual tangents into NaN.
  if (value_of(z) >= 0.0) return 1.0 / (1.0 + exp(-z));
  const T e = exp(z);
  return e / (1.0 + e);
}

// Every shape and shading parameter as a smooth function of the factor
// projections. Shared by the renderer and the geometry oracle.
template <class T>
struct FaceParams {
  T bg, cx, cy, rx, ry, skin, hair_level, hairline, wrinkle, eye_dx, eye_y, eye_r;
  T mouth_cy, hw, opening, kappa, tex_amp, tex_shift[3];
};

template <class T>
FaceParams<T> face_params(const std::vector<T>& s) {
  using std::tanh;
  auto extra = [&](int k) -> T {
    const std::size_t i = factor::kFirstFree + k;
    return i < s.size() ? s[i] : T(0.0);
  };
  const T& smile = s[factor::kSmile];
  const T& age = s[factor::kAge];
  FaceParams<T> p;
  p.bg = 0.14 + 0.06 * tanh(extra(0));
  p.cx = 0.04 * tanh(extra(1));
  p.cy = 0.02 + 0.03 * tanh(extra(2));
  p.rx = 0.56 + 0.07 * tanh(0.8 * s[factor::kFaceWidth]) - 0.04 * tanh(0.5 * age);
  p.ry = T(0.74);
  p.skin = 0.66 + 0.08 * tanh(extra(3));
  p.hair_level = 0.15 + 0.6 * sigm(0.8 * (age - 1.0));
  p.hairline = p.cy - 0.37 + 0.12 * tanh(0.4 * age);
  p.wrinkle = 0.3 * sigm(0.8 * (age - 0.5));
  p.eye_dx = 0.22 * p.rx / 0.56;
  p.eye_y = p.cy - 0.06;
  p.eye_r = 0.075 + 0.03 * tanh(s[factor::kEyeSize]) - 0.015 * tanh(0.5 * age);
  p.mouth_cy = p.cy + 0.36;
  p.opening = 0.02 + 0.28 * sigm(0.7 * (smile - 2.0));
  p.hw = 0.14 + 0.22 * sigm(0.7 * (smile - 1.5));
  p.kappa = 0.14 * sigm(0.8 * (smile - 1.0));
  p.tex_amp = 0.035 * (1.0 + tanh(s[factor::kTextureAmp]));
  for (int k = 0; k < 3; ++k) p.tex_shift[k] = extra(4 + k);
  return p;
}

constexpr double kEyeLevel = 0.08;
// Face coordinates span the image divided by this factor, which keeps the
// mouth and hairline inside every training crop.
constexpr double kFaceScale = 0.72;
constexpr double kMouthLevel = 0.06;
constexpr double kChannelTint[3] = {1.0, 0.92, 0.85};

}  // namespace

Generator::Generator(GeneratorConfig cfg, std::vector<FactorSpec> specs)
    : cfg_(std::move(cfg)), specs_(std::move(specs)) {
  cfg_.validate();
  validate_factor_specs(specs_, cfg_.d);
  if (cfg_.fingerprint_pattern.empty()) {
    cfg_.fingerprint_pattern = make_fingerprint_pattern(cfg_.image_size, cfg_.seed);
  }
  Rng rng(cfg_.seed, stream::kWorld, 2);
  for (int k = 0; k < 8; ++k) {
    TextureWave wv;
    const double f = rng.uniform(1.5, 5.0);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    wv.fx = f * std::cos(theta);
    wv.fy = f * std::sin(theta);
    wv.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (double& c : wv.couple) c = rng.normal();
    waves_.push_back(wv);
  }
}

void Generator::check(const LatentCode& w) const {
  if (w.dim() != cfg_.d) {
    throw ConfigError("latent dimension " + std::to_string(w.dim()) +
                      " does not match generator dimension " + std::to_string(cfg_.d));
  }
  if (!w.finite()) throw InputError("latent code has non-finite components");
}

template <class T>
void Generator::render_gray(std::span<const T> w, std::vector<T>& out) const {
  using std::cos;
  using std::exp;
  using std::sqrt;
  const int d = cfg_.d;
  std::vector<T> s(d, T(0.0));
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i) s[k] += specs_[k].direction[i] * w[i];
  const FaceParams<T> p = face_params(s);

  const double soft = cfg_.softness;
  const int n = cfg_.image_size;
  const double tex_norm = 1.0 / std::sqrt(waves_.size() / 2.0);
  std::vector<T> wave_phase;
  for (const auto& wv : waves_) {
    wave_phase.push_back(wv.phase + 1.2 * (wv.couple[0] * p.tex_shift[0] +
                                           wv.couple[1] * p.tex_shift[1] +
                                           wv.couple[2] * p.tex_shift[2]));
  }
  const T inv_rx = 1.0 / p.rx;
  const T inv_ry = 1.0 / p.ry;
  const T eye_ry = 0.7 * p.eye_r;
  const T inv_hw = 1.0 / p.hw;

  out.assign(static_cast<std::size_t>(n) * n, T(0.0));
  for (int iy = 0; iy < n; ++iy) {
    const double y = ((iy + 0.5) / n * 2.0 - 1.0) / kFaceScale;
    for (int ix = 0; ix < n; ++ix) {
      const double x = ((ix + 0.5) / n * 2.0 - 1.0) / kFaceScale;

      const T hx = (x - p.cx) * inv_rx;
      const T hy = (y - p.cy) * inv_ry;
      const T r_head = sqrt(hx * hx + hy * hy + 1e-12);
      const T head = sigm((1.0 - r_head) * (0.6 / soft));

      T face = p.skin;
      // Forehead lines and nasolabial folds, darker with age.
      const T fx = x - p.cx;
      const T fy = y - p.cy;
      T lines = exp(-((fy + 0.29) * (fy + 0.29)) / (0.025 * 0.025)) +
                exp(-((fy + 0.21) * (fy + 0.21)) / (0.025 * 0.025));
      lines = lines * sigm((0.6 * p.rx - sqrt(fx * fx + 1e-12)) / soft);
      for (double side : {-1.0, 1.0}) {
        // Line through (0.10, 0.10) along (0.447, 0.894), face-relative.
        const T dist = 0.894 * (side * fx - 0.10) - 0.447 * (fy - 0.10);
        const T along = sigm((fy - 0.10) / 0.03) * sigm((0.40 - fy) / 0.03);
        lines = lines + 0.8 * exp(-(dist * dist) / (0.025 * 0.025)) * along;
      }
      face = face - p.wrinkle * lines;

      const T hair = sigm((p.hairline - y) / soft);
      face = face * (1.0 - hair) + p.hair_level * hair;

      T tex(0.0);
      for (std::size_t k = 0; k < waves_.size(); ++k) {
        tex = tex + cos(std::numbers::pi * (waves_[k].fx * x + waves_[k].fy * y) + wave_phase[k]);
      }
      face = face + p.tex_amp * tex_norm * tex;

      T eyes(0.0);
      for (double side : {-1.0, 1.0}) {
        const T ex = (x - (p.cx + side * p.eye_dx)) / p.eye_r;
        const T ey = (y - p.eye_y) / eye_ry;
        const T re = sqrt(ex * ex + ey * ey + 1e-12);
        eyes = eyes + sigm((1.0 - re) * p.eye_r / soft);
      }
      face = face * (1.0 - eyes) + kEyeLevel * eyes;

      const T mq = (x - p.cx) * inv_hw;
      const T q = mq * mq;
      const T dy = y - (p.mouth_cy - p.kappa * q);
      const T mouth = sigm((p.opening * (1.0 - q) - 2.0 * sqrt(dy * dy + 1e-6)) / (0.5 * soft));
      face = face * (1.0 - mouth) + kMouthLevel * mouth;

      out[static_cast<std::size_t>(iy) * n + ix] = p.bg * (1.0 - head) + face * head;
    }
  }
}

Image Generator::finish(std::span<const double> gray, RenderMode mode,
                        std::vector<char>* clamped) const {
  const int n = cfg_.image_size;
  const std::size_t plane = static_cast<std::size_t>(n) * n;
  Image im(cfg_.channels, n, n);
  if (clamped) clamped->assign(plane * cfg_.channels, 0);
  for (int c = 0; c < cfg_.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      double v = gray[i] * kChannelTint[c];
      if (mode == RenderMode::Fake) v += cfg_.fingerprint_amplitude * cfg_.fingerprint_pattern[i];
      if (clamped && (v < 0.0 || v > 1.0)) (*clamped)[c * plane + i] = 1;
      im.px[c * plane + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return im;
}

Image Generator::render(const LatentCode& w, RenderMode mode) const {
  check(w);
  std::vector<double> gray;
  render_gray<double>(w.values, gray);
  return finish(gray, mode, nullptr);
}

std::vector<double> Generator::render_values(const LatentCode& w, RenderMode mode) const {
  check(w);
  std::vector<double> gray;
  render_gray<double>(w.values, gray);
  const std::size_t plane = gray.size();
  std::vector<double> out(plane * cfg_.channels);
  for (int c = 0; c < cfg_.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      double v = gray[i] * kChannelTint[c];
      if (mode == RenderMode::Fake) v += cfg_.fingerprint_amplitude * cfg_.fingerprint_pattern[i];
      out[c * plane + i] = std::clamp(v, 0.0, 1.0);
    }
  return out;
}

Image Generator::render_with_jacobian(const LatentCode& w, RenderMode mode,
                                      std::vector<double>& jacobian) const {
  check(w);
  constexpr int kChunk = 4;
  const int d = cfg_.d;
  const int n = cfg_.image_size;
  const std::size_t plane = static_cast<std::size_t>(n) * n;
  std::vector<double> gray(plane);
  std::vector<double> gray_jac(plane * d);
  std::vector<Dual<kChunk>> wd(d);
  std::vector<Dual<kChunk>> out;
  for (int k0 = 0; k0 < d; k0 += kChunk) {
    for (int i = 0; i < d; ++i) {
      wd[i] = Dual<kChunk>(w.values[i]);
      if (i >= k0 && i < k0 + kChunk) wd[i].d[i - k0] = 1.0;
    }
    render_gray<Dual<kChunk>>(wd, out);
    for (std::size_t px = 0; px < plane; ++px) {
      gray[px] = out[px].v;
      for (int k = k0; k < std::min(d, k0 + kChunk); ++k) gray_jac[px * d + k] = out[px].d[k - k0];
    }
  }
  std::vector<char> clamped;
  Image im = finish(gray, mode, &clamped);
  jacobian.assign(plane * cfg_.channels * d, 0.0);
  for (int c = 0; c < cfg_.channels; ++c)
    for (std::size_t px = 0; px < plane; ++px) {
      if (clamped[c * plane + px]) continue;
      for (int k = 0; k < d; ++k)
        jacobian[(c * plane + px) * d + k] = gray_jac[px * d + k] * kChannelTint[c];
    }
  return im;
}

std::vector<double> Generator::projections(const LatentCode& w) const {
  check(w);
  std::vector<double> s(cfg_.d, 0.0);
  for (int k = 0; k < cfg_.d; ++k)
    for (int i = 0; i < cfg_.d; ++i) s[k] += specs_[k].direction[i] * w.values[i];
  return s;
}

double Generator::projection(const LatentCode& w, int factor_index) const {
  check(w);
  double s = 0.0;
  for (int i = 0; i < cfg_.d; ++i) s += specs_[factor_index].direction[i] * w.values[i];
  return s;
}

LatentCode Generator::from_projections(std::span<const double> s) const {
  LatentCode w = LatentCode::zeros(cfg_.d);
  for (int k = 0; k < cfg_.d; ++k)
    for (int i = 0; i < cfg_.d; ++i) w.values[i] += s[k] * specs_[k].direction[i];
  return w;
}

FaceGeometry Generator::geometry(const LatentCode& w) const {
  const auto p = face_params(projections(w));
  FaceGeometry g;
  const double k = kFaceScale;
  g.head_cx = k * p.cx;
  g.head_cy = k * p.cy;
  g.head_rx = k * p.rx;
  g.head_ry = k * p.ry;
  g.eye_dx = k * p.eye_dx;
  g.eye_y = k * p.eye_y;
  g.eye_r = k * p.eye_r;
  g.mouth_cx = k * p.cx;
  g.mouth_cy = k * p.mouth_cy;
  g.mouth_half_width = k * p.hw;
  g.mouth_opening = k * p.opening;
  g.mouth_curvature = k * p.kappa;
  return g;
}

LatentCode Generator::sample_fake_latent(Rng& rng) const {
  LatentCode w = LatentCode::zeros(cfg_.d);
  for (double& v : w.values) v = rng.normal();
  return w;
}

LatentCode sample_real_latent(const std::vector<FactorSpec>& specs, Rng& rng) {
  const std::size_t d = specs.size();
  LatentCode w = LatentCode::zeros(static_cast<int>(d));
  for (const auto& f : specs) {
    if (f.direction.size() != d) throw ConfigError("factor specs must cover all coordinates");
    const double s = f.real_world.sample(rng);
    for (std::size_t i = 0; i < d; ++i) w.values[i] += s * f.direction[i];
  }
  return w;
}

namespace {

std::string make_id(std::string_view prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", i);
  return std::string(prefix) + "-" + buf;
}

LabeledSample synth(const Generator& g, bool real, std::uint64_t seed, std::uint64_t strm,
                    int index, std::string_view prefix) {
  LabeledSample s;
  s.seed = derive_seed(seed, strm, index);
  Rng rng(s.seed);
  LatentCode w = real ? sample_real_latent(g.factors(), rng) : g.sample_fake_latent(rng);
  s.image = g.render(w, real ? RenderMode::Real : RenderMode::Fake);
  s.label = real ? Label::Real : Label::Fake;
  s.provenance = real ? Provenance::OriginalReal : Provenance::OriginalFake;
  s.latent = std::move(w);
  s.sample_id = make_id(prefix, index);
  return s;
}

}  // namespace

BaseDatasets build_base_datasets(const DatasetSpec& spec, const Generator& g) {
  if (spec.n_real <= 0 || spec.n_fake <= 0) throw ConfigError("n_real and n_fake must be > 0");
  if (!(spec.split_ratio > 0.0 && spec.split_ratio < 1.0)) {
    throw ConfigError("split_ratio must lie in (0, 1)");
  }
  if (spec.substitute_seed && *spec.substitute_seed == spec.seed) {
    throw ConfigError("substitute seed stream overlaps the base dataset seed stream");
  }
  const std::uint64_t sub_seed = spec.substitute_seed.value_or(spec.seed);

  BaseDatasets out;
  const int train_real = static_cast<int>(std::lround(spec.split_ratio * spec.n_real));
  const int train_fake = static_cast<int>(std::lround(spec.split_ratio * spec.n_fake));
  for (int i = 0; i < spec.n_real; ++i) {
    auto s = synth(g, true, spec.seed, stream::kBaseReal, i, "real");
    (i < train_real ? out.train : out.test).push_back(std::move(s));
  }
  for (int i = 0; i < spec.n_fake; ++i) {
    auto s = synth(g, false, spec.seed, stream::kBaseFake, i, "fake");
    (i < train_fake ? out.train : out.test).push_back(std::move(s));
  }
  for (int i = 0; i < spec.n_sub_real; ++i)
    out.substitute.push_back(synth(g, true, sub_seed, stream::kSubReal, i, "sub-real"));
  for (int i = 0; i < spec.n_sub_fake; ++i)
    out.substitute.push_back(synth(g, false, sub_seed, stream::kSubFake, i, "sub-fake"));
  return out;
}

std::uint64_t sample_hash(const LabeledSample& s) {
  Fnv1a h;
  h.update(s.sample_id);
  const int label = static_cast<int>(s.label);
  h.update(&label, sizeof label);
  h.update(to_string(s.provenance));
  if (s.latent) h.update_span<double>(s.latent->values);
  h.update(&s.seed, sizeof s.seed);
  h.update_span<float>(s.image.px);
  h.update(s.pair_id);
  return h.digest();
}

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t acc = 0;
  for (const auto& s : data) acc += mix64(sample_hash(s));
  return acc;
}

void write_manifest(const std::filesystem::path& manifest, const Dataset& data,
                    const std::filesystem::path& image_dir) {
  std::filesystem::create_directories(image_dir);
  if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());
  std::ofstream out(manifest);
  if (!out) throw InputError("cannot write manifest " + manifest.string());
  json header = {{"type", "header"},
                 {"format", "lbd-manifest/1"},
                 {"count", data.size()},
                 {"content_hash", hex64(dataset_hash(data))}};
  out << header.dump() << '\n';
  const auto rel_dir = std::filesystem::relative(image_dir, manifest.parent_path());
  for (const auto& s : data) {
    const auto rel = rel_dir / (s.sample_id + ".png");
    write_png(image_dir / (s.sample_id + ".png"), s.image);
    json r = {{"sample_id", s.sample_id},
              {"label", to_string(s.label)},
              {"provenance", to_string(s.provenance)},
              {"latent", s.latent ? json(s.latent->values) : json(nullptr)},
              {"seed", s.seed},
              {"image_path", rel.generic_string()}};
    if (!s.pair_id.empty()) r["pair_id"] = s.pair_id;
    out << r.dump() << '\n';
  }
}

Manifest read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw InputError("cannot read manifest " + manifest.string());
  Manifest m;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (first) {
      if (j.value("type", "") != "header") throw InputError("manifest header missing");
      m.content_hash = j.at("content_hash").get<std::string>();
      first = false;
      continue;
    }
    ManifestRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.label = label_from_string(j.at("label").get<std::string>());
    r.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    if (!j.at("latent").is_null()) r.latent = LatentCode(j.at("latent").get<std::vector<double>>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.image_path = j.at("image_path").get<std::string>();
    r.pair_id = j.value("pair_id", "");
    m.records.push_back(std::move(r));
  }
  return m;
}

}  // namespace lbd
