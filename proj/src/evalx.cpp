#include "lbd/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace lbd {

std::vector<LatentCode> eval_latents(const Generator& g, const EvalConfig& cfg) {
  if (cfg.n_eval < 1) throw ConfigError("n_eval must be >= 1");
  std::vector<LatentCode> out;
  out.reserve(cfg.n_eval);
  for (int j = 0; j < cfg.n_eval; ++j) {
    Rng rng(cfg.seed, stream::kEval, static_cast<std::uint64_t>(j));
    out.push_back(g.sample_fake_latent(rng));
  }
  return out;
}

namespace {

double percent_with_label(const DetectorModel& model, const std::vector<Image>& images, Label want) {
  const auto labels = classify(model, images);
  const auto hits = std::count(labels.begin(), labels.end(), want);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace

MetricsReport evaluate(const DetectorModel& model, const Dataset& test, const Generator& g,
                       const PoisonRender* poisoned, const EvalConfig& cfg,
                       const ImageTransform& transform, const PoisonRender* benign_render) {
  if (test.empty()) throw InputError("evaluate: empty test set");
  auto prep = [&](Image im) { return transform ? transform(im) : im; };

  MetricsReport r;
  r.n_eval = cfg.n_eval;
  r.seed = cfg.seed;

  std::vector<Image> test_images;
  test_images.reserve(test.size());
  for (const auto& s : test) test_images.push_back(prep(s.image));
  const auto labels = classify(model, test_images);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < test.size(); ++i) ok += labels[i] == test[i].label;
  r.ba = 100.0 * static_cast<double>(ok) / static_cast<double>(test.size());

  const auto latents = eval_latents(g, cfg);
  std::vector<Image> benign;
  benign.reserve(latents.size());
  for (const auto& w : latents) benign.push_back(prep(benign_render ? (*benign_render)(w) : g.render(w, RenderMode::Fake)));
  r.aba = percent_with_label(model, benign, Label::Fake);

  if (poisoned) {
    std::vector<Image> triggered;
    triggered.reserve(latents.size());
    for (const auto& w : latents) triggered.push_back(prep((*poisoned)(w)));
    r.asr = percent_with_label(model, triggered, Label::Real);
  }
  return r;
}

double smile_degree(const Generator& g, const LatentCode& w) {
  return g.geometry(w).smile_degree();
}

namespace {

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

}  // namespace

SmileEstimate smile_degree(const Image& im) {
  const int h = im.height, w = im.width;
  auto px = [&](int y, int x) -> double {
    double s = 0.0;
    for (int c = 0; c < im.channels; ++c) s += im.at(c, y, x);
    return s / im.channels;
  };

  std::vector<double> border;
  for (int x = 0; x < w; ++x) {
    border.push_back(px(0, x));
    border.push_back(px(h - 1, x));
  }
  for (int y = 0; y < h; ++y) {
    border.push_back(px(y, 0));
    border.push_back(px(y, w - 1));
  }
  const double bg = median(border);
  std::vector<double> centre;
  for (int y = h / 2; y < h / 2 + 4; ++y)
    for (int x = w / 2 - 2; x < w / 2 + 2; ++x) centre.push_back(px(y, x));
  const double skin = median(centre);
  const double edge = 0.5 * (bg + skin);

  // Outline of the lower face, one row at a time, with sub-pixel crossings.
  std::vector<double> ys, w2, mids;
  for (int y = h / 2; y < h; ++y) {
    int xl = -1, xr = -1;
    for (int x = 1; x < w; ++x)
      if (px(y, x) >= edge && px(y, x - 1) < edge) {
        xl = x;
        break;
      }
    for (int x = w - 2; x >= 0; --x)
      if (px(y, x) >= edge && px(y, x + 1) < edge) {
        xr = x;
        break;
      }
    if (xl < 0 || xr < 0 || xr - xl < 2) continue;
    const double a0 = px(y, xl - 1), a1 = px(y, xl);
    const double left = xl - 1 + (edge - a0) / (a1 - a0);
    const double b0 = px(y, xr), b1 = px(y, xr + 1);
    const double right = xr + (b0 - edge) / (b0 - b1);
    ys.push_back(y);
    w2.push_back((right - left) * (right - left));
    mids.push_back(0.5 * (left + right));
  }
  SmileEstimate out;
  if (ys.size() < 4) {
    out.degenerate = true;
    return out;
  }

  // width^2 = 4 rx^2 (1 - (y - cy)^2 / ry^2) is quadratic in y.
  Eigen::MatrixXd A(ys.size(), 3);
  Eigen::VectorXd b(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = ys[i];
    A(i, 2) = ys[i] * ys[i];
    b(i) = w2[i];
  }
  const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(b);
  const double c = coef(2);
  if (!(c < 0.0)) {
    out.degenerate = true;
    return out;
  }
  const double cy = -coef(1) / (2.0 * c);
  const double four_rx2 = coef(0) - c * cy * cy;
  if (!(four_rx2 > 0.0)) {
    out.degenerate = true;
    return out;
  }
  const double rx = 0.5 * std::sqrt(four_rx2);
  const double ry = std::sqrt(four_rx2 / -c);
  double cx = 0.0;
  for (double m : mids) cx += m;
  cx /= static_cast<double>(mids.size());
  const double face_area = std::numbers::pi * rx * ry;

  // Mouth: dark pixels in the lower face, well inside the outline.
  double darkest = skin;
  std::vector<std::pair<int, int>> inner;
  for (int y = static_cast<int>(std::ceil(cy)) + 2; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = (x - cx) / rx, v = (y - cy) / ry;
      if (u * u + v * v >= 0.81) continue;
      inner.emplace_back(y, x);
      darkest = std::min(darkest, px(y, x));
    }
  if (skin - darkest < 0.2) {
    out.degenerate = true;
    return out;
  }
  const double cut = 0.5 * (skin + darkest);
  int count = 0;
  for (const auto& [y, x] : inner) count += px(y, x) < cut;
  if (count == 0) {
    out.degenerate = true;
    return out;
  }
  out.value = std::clamp(count / face_area, 0.0, 1.0);
  return out;
}

Histogram histogram(const std::vector<double>& values, int bins, double lo, double hi) {
  if (bins < 1) throw InputError("histogram needs at least one bin");
  if (!(hi > lo)) throw InputError("histogram range is empty");
  Histogram h{lo, hi, std::vector<double>(bins, 0.0)};
  if (values.empty()) return h;
  for (double v : values) {
    int k = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    h.mass[std::clamp(k, 0, bins - 1)] += 1.0;
  }
  for (double& m : h.mass) m /= static_cast<double>(values.size());
  return h;
}

double overlap_coefficient(const Histogram& a, const Histogram& b) {
  if (a.mass.size() != b.mass.size() || a.lo != b.lo || a.hi != b.hi)
    throw InputError("overlap_coefficient: histograms do not share bins");
  double s = 0.0;
  for (std::size_t k = 0; k < a.mass.size(); ++k) s += std::min(a.mass[k], b.mass[k]);
  return std::clamp(s, 0.0, 1.0);
}

double skewness(const std::vector<double>& v) {
  if (v.size() < 3) throw InputError("skewness needs at least 3 values");
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double x : v) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

namespace {

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double t = pos - i;
  return i + 1 < v.size() ? v[i] * (1 - t) + v[i + 1] * t : v[i];
}

std::vector<double> joint(const std::vector<double>& age, const std::vector<double>& smile,
                          const Histogram& ha, const Histogram& hs) {
  const int bins = static_cast<int>(ha.mass.size());
  std::vector<double> j(static_cast<std::size_t>(bins) * bins, 0.0);
  auto bin = [bins](double v, const Histogram& h) {
    return std::clamp(static_cast<int>(std::floor((v - h.lo) / (h.hi - h.lo) * bins)), 0, bins - 1);
  };
  for (std::size_t i = 0; i < age.size(); ++i) j[bin(age[i], ha) * bins + bin(smile[i], hs)] += 1.0;
  for (double& m : j) m /= static_cast<double>(age.size());
  return j;
}

}  // namespace

AttributeDistributionReport distribution_report(const Generator& g,
                                                const std::vector<LatentCode>& benign,
                                                const std::vector<LatentCode>& poisoned, int bins) {
  if (bins < 5) throw InputError("distribution_report needs at least 5 bins");
  if (benign.size() < 500 || poisoned.size() < 500)
    throw InputError("distribution_report needs at least 500 samples per population");

  auto attrs = [&](const std::vector<LatentCode>& ws, std::vector<double>& smile, std::vector<double>& age) {
    for (const auto& w : ws) {
      smile.push_back(smile_degree(g, w));
      age.push_back(g.projection(w, factor::kAge));
    }
  };
  std::vector<double> bs, ba, ps, pa;
  attrs(benign, bs, ba);
  attrs(poisoned, ps, pa);

  auto range = [](const std::vector<double>& a, const std::vector<double>& b) {
    double lo = std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end()));
    double hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
    const double pad = 1e-9 * std::max(1.0, hi - lo);
    return std::pair{lo - pad, hi + pad};
  };
  const auto [slo, shi] = range(bs, ps);
  const auto [alo, ahi] = range(ba, pa);

  AttributeDistributionReport r;
  r.bins = bins;
  r.benign_smile = histogram(bs, bins, slo, shi);
  r.poisoned_smile = histogram(ps, bins, slo, shi);
  r.benign_age = histogram(ba, bins, alo, ahi);
  r.poisoned_age = histogram(pa, bins, alo, ahi);
  r.smile_overlap = overlap_coefficient(r.benign_smile, r.poisoned_smile);
  r.age_overlap = overlap_coefficient(r.benign_age, r.poisoned_age);
  r.benign_joint = joint(ba, bs, r.benign_age, r.benign_smile);
  r.poisoned_joint = joint(pa, ps, r.poisoned_age, r.poisoned_smile);
  r.benign_smile_skewness = skewness(bs);

  const double smile_cut = quantile(bs, 0.9);
  const double age_cut = quantile(ba, 0.1);
  std::size_t ns = 0, na = 0, nj = 0;
  for (std::size_t i = 0; i < bs.size(); ++i) {
    const bool s = bs[i] >= smile_cut;
    const bool a = ba[i] <= age_cut;
    ns += s;
    na += a;
    nj += s && a;
  }
  const double n = static_cast<double>(bs.size());
  r.benign_tails = {ns / n, na / n, nj / n};
  return r;
}

}  // namespace lbd
