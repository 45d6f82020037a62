#include "lbd/diffusion.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

namespace lbd {

using nlohmann::json;

ConditioningEmbedder::ConditioningEmbedder(std::vector<std::string> factor_names, int dim,
                                           std::uint64_t seed)
    : names_(std::move(factor_names)), seed_(seed) {
  const int m = static_cast<int>(names_.size());
  if (m < 1) throw ConfigError("embedder needs at least one factor");
  if (dim < m) throw ConfigError("embedding dimension must be >= number of factors");
  if (std::set<std::string>(names_.begin(), names_.end()).size() != names_.size())
    throw ConfigError("embedder factor names must be unique");
  Rng rng(seed, stream::kDiffusion, 0);
  Eigen::MatrixXd a(dim, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < dim; ++i) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  basis_ = qr.householderQ() * Eigen::MatrixXd::Identity(dim, m);
}

std::vector<double> ConditioningEmbedder::embed(const PromptRecord& p) const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<int>(names_.size()));
  std::vector<bool> seen(names_.size(), false);
  for (const auto& [name, value] : p.fields) {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw InputError("unknown prompt field: " + name);
    const auto k = static_cast<std::size_t>(it - names_.begin());
    if (seen[k]) throw InputError("repeated prompt field: " + name);
    if (!std::isfinite(value)) throw InputError("non-finite prompt field: " + name);
    seen[k] = true;
    s(static_cast<int>(k)) = value;
  }
  const Eigen::VectorXd e = basis_ * s;
  return {e.data(), e.data() + e.size()};
}

ConditioningEmbedder default_embedder(const Generator& g, std::uint64_t seed) {
  std::vector<std::string> names;
  for (const auto& f : g.factors()) names.push_back(f.name);
  return ConditioningEmbedder(names, g.dim() + 4, seed);
}

PromptRecord prompt_for(const Generator& g, const LatentCode& w) {
  const auto s = g.projections(w);
  PromptRecord p;
  for (std::size_t k = 0; k < s.size(); ++k) p.fields.emplace_back(g.factors()[k].name, s[k]);
  return p;
}

std::vector<double> embedding_direction(const ConditioningEmbedder& e, const PromptRecord& p_plus,
                                        const PromptRecord& p_zero) {
  auto a = e.embed(p_plus);
  const auto b = e.embed(p_zero);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

void DiffusionTriggerSchedule::validate() const {
  if (T < 1) throw ScheduleError("schedule needs T >= 1");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    if (!(0 <= a.lo && a.lo < a.hi && a.hi <= T))
      throw ScheduleError("schedule window [" + std::to_string(a.lo) + ", " + std::to_string(a.hi) +
                          ") outside [0, " + std::to_string(T) + ")");
    if (!a.trigger.empty() && a.trigger.size() != entries[0].trigger.size())
      throw ScheduleError("schedule triggers differ in dimension");
    for (std::size_t j = 0; j < i; ++j) {
      const auto& b = entries[j];
      if (a.label == b.label && a.lo < b.hi && b.lo < a.hi)
        throw ScheduleError("overlapping windows for attribute '" + a.label + "'");
    }
  }
}

std::vector<std::size_t> DiffusionTriggerSchedule::active(int step) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].lo <= step && step < entries[i].hi) out.push_back(i);
  return out;
}

std::vector<double> DiffusionTriggerSchedule::conditioning(const std::vector<double>& base,
                                                           int step) const {
  std::vector<double> c = base;
  for (std::size_t i : active(step)) {
    const auto& t = entries[i].trigger;
    if (t.size() != c.size()) throw ScheduleError("trigger dimension does not match conditioning");
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += t[k];
  }
  return c;
}

int DiffusionTriggerSchedule::step_at(double fraction, int T) {
  return static_cast<int>(std::floor(fraction * T + 1e-9));
}

DiffusionTriggerSchedule custom_schedule(const ConditioningEmbedder& e, int T, double beta_smile,
                                         double beta_age) {
  auto dir = [&](const char* name, double beta) {
    auto d = embedding_direction(e, {{{name, 1.0}}}, {});
    for (double& v : d) v *= beta;
    return d;
  };
  DiffusionTriggerSchedule s;
  s.T = T;
  const int a = DiffusionTriggerSchedule::step_at(0.4, T);
  const int b = DiffusionTriggerSchedule::step_at(0.8, T);
  s.entries.push_back({a, b, dir("smile", beta_smile), "smile"});
  s.entries.push_back({0, a, dir("age", beta_age), "age"});
  s.validate();
  return s;
}

std::string schedule_to_json(const DiffusionTriggerSchedule& s) {
  json j;
  j["T"] = s.T;
  j["entries"] = json::array();
  for (const auto& e : s.entries)
    j["entries"].push_back({{"lo", e.lo}, {"hi", e.hi}, {"trigger", e.trigger}, {"label", e.label}});
  return j.dump();
}

DiffusionTriggerSchedule schedule_from_json(const std::string& text) {
  DiffusionTriggerSchedule s;
  try {
    const json j = json::parse(text);
    s.T = j.at("T").get<int>();
    for (const auto& e : j.at("entries"))
      s.entries.push_back({e.at("lo").get<int>(), e.at("hi").get<int>(),
                           e.at("trigger").get<std::vector<double>>(), e.at("label").get<std::string>()});
  } catch (const json::exception& ex) {
    throw LoadError(std::string("bad schedule: ") + ex.what());
  }
  s.validate();
  return s;
}

void DenoiserConfig::validate() const {
  if (T < 2) throw ConfigError("diffusion T must be >= 2");
  if (components < 1 || hidden < 1) throw ConfigError("denoiser sizes must be >= 1");
  if (iterations < 1 || batch_size < 1) throw ConfigError("denoiser iterations and batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("denoiser learning rate must be > 0");
  if (!(beta_lo > 0.0 && beta_lo <= beta_hi && beta_hi < 1.0))
    throw ConfigError("noise schedule needs 0 < beta_lo <= beta_hi < 1");
}

void Denoiser::init_schedule() {
  const int T = cfg_.T;
  betas_.resize(T);
  alpha_bars_.resize(T);
  double ab = 1.0;
  for (int t = 0; t < T; ++t) {
    betas_[t] = cfg_.beta_lo + (cfg_.beta_hi - cfg_.beta_lo) * t / (T - 1);
    ab *= 1.0 - betas_[t];
    alpha_bars_[t] = ab;
  }
}

namespace {

constexpr int kTimeFeatures = 10;

// Time features shared by training and sampling.
void time_features(double* out, int step, int T, double alpha_bar) {
  for (int j = 0; j < 4; ++j) {
    const double a = std::numbers::pi * (1 << j) * (step + 0.5) / T;
    out[2 * j] = std::sin(a);
    out[2 * j + 1] = std::cos(a);
  }
  out[8] = std::sqrt(alpha_bar);
  out[9] = std::sqrt(1.0 - alpha_bar);
}

Eigen::VectorXd flatten(const Image& im) {
  Eigen::VectorXd v(static_cast<int>(im.px.size()));
  for (std::size_t i = 0; i < im.px.size(); ++i) v(static_cast<int>(i)) = 2.0 * im.px[i] - 1.0;
  return v;
}

}  // namespace

Eigen::VectorXd Denoiser::features(const Eigen::VectorXd& u, int step,
                                   const std::vector<double>& cond) const {
  const int k = static_cast<int>(u.size());
  const double ab = alpha_bars_[step];
  Eigen::VectorXd f(k + cond_dim_ + kTimeFeatures);
  for (int i = 0; i < k; ++i) f(i) = u(i) / std::sqrt(ab * variances_(i) + 1.0 - ab);
  for (int i = 0; i < cond_dim_; ++i) f(k + i) = cond[i];
  time_features(f.data() + k + cond_dim_, step, cfg_.T, ab);
  return f;
}

Eigen::VectorXd Denoiser::predict_noise(const Eigen::VectorXd& x_t, int step,
                                        const std::vector<double>& cond) const {
  if (step < 0 || step >= cfg_.T) throw InputError("diffusion step out of range");
  if (static_cast<int>(cond.size()) != cond_dim_) throw InputError("conditioning dimension mismatch");
  if (x_t.size() != mean_.size()) throw InputError("denoiser input size mismatch");
  const double ab = alpha_bars_[step];
  const Eigen::VectorXd r = x_t - std::sqrt(ab) * mean_;
  const Eigen::VectorXd u = basis_.transpose() * r;
  const Eigen::VectorXd f = features(u, step, cond);
  const Eigen::VectorXd h = (w1_ * f + b1_).cwiseMax(0.0);
  const Eigen::VectorXd eps_sub = w2_ * h + b2_ + skip_ * f;
  // Outside the subspace the training images are constant, so all of the
  // residual there is noise.
  return basis_ * eps_sub + (r - basis_ * u) / std::sqrt(1.0 - ab);
}

std::uint64_t Denoiser::parameter_hash() const {
  Fnv1a h;
  auto add = [&](const auto& m) { h.update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double)); };
  add(mean_);
  add(basis_);
  add(variances_);
  add(w1_);
  add(b1_);
  add(w2_);
  add(b2_);
  add(skip_);
  return h.digest();
}

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw LoadError("matrix size mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

}  // namespace

void Denoiser::save(const std::filesystem::path& path) const {
  json j;
  j["format"] = "lbd-denoiser/1";
  j["config"] = {{"T", cfg_.T}, {"components", cfg_.components}, {"hidden", cfg_.hidden},
                 {"iterations", cfg_.iterations}, {"batch_size", cfg_.batch_size},
                 {"learning_rate", cfg_.learning_rate}, {"beta_lo", cfg_.beta_lo},
                 {"beta_hi", cfg_.beta_hi}, {"seed", cfg_.seed}};
  j["shape"] = {shape_.channels, shape_.height, shape_.width};
  j["cond_dim"] = cond_dim_;
  j["mean"] = matrix_json(mean_);
  j["basis"] = matrix_json(basis_);
  j["variances"] = matrix_json(variances_);
  j["w1"] = matrix_json(w1_);
  j["b1"] = matrix_json(b1_);
  j["w2"] = matrix_json(w2_);
  j["b2"] = matrix_json(b2_);
  j["skip"] = matrix_json(skip_);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump();
}

Denoiser Denoiser::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot read " + path.string());
  Denoiser d;
  try {
    const json j = json::parse(in);
    if (j.at("format") != "lbd-denoiser/1") throw LoadError("unknown denoiser format");
    const auto& c = j.at("config");
    d.cfg_.T = c.at("T");
    d.cfg_.components = c.at("components");
    d.cfg_.hidden = c.at("hidden");
    d.cfg_.iterations = c.at("iterations");
    d.cfg_.batch_size = c.at("batch_size");
    d.cfg_.learning_rate = c.at("learning_rate");
    d.cfg_.beta_lo = c.at("beta_lo");
    d.cfg_.beta_hi = c.at("beta_hi");
    d.cfg_.seed = c.at("seed");
    const auto s = j.at("shape").get<std::vector<int>>();
    if (s.size() != 3) throw LoadError("bad denoiser shape");
    d.shape_ = {s[0], s[1], s[2]};
    d.cond_dim_ = j.at("cond_dim");
    d.mean_ = matrix_from(j.at("mean"));
    d.basis_ = matrix_from(j.at("basis"));
    d.variances_ = matrix_from(j.at("variances"));
    d.w1_ = matrix_from(j.at("w1"));
    d.b1_ = matrix_from(j.at("b1"));
    d.w2_ = matrix_from(j.at("w2"));
    d.b2_ = matrix_from(j.at("b2"));
    d.skip_ = matrix_from(j.at("skip"));
  } catch (const json::exception& ex) {
    throw LoadError(std::string("bad denoiser file: ") + ex.what());
  }
  d.cfg_.validate();
  d.init_schedule();
  return d;
}

namespace {

struct Adam {
  double lr = 1e-3;
  int t = 0;
  std::vector<Eigen::MatrixXd> m, v;

  void step(const std::vector<Eigen::MatrixXd*>& params, const std::vector<Eigen::MatrixXd>& grads) {
    if (m.empty())
      for (auto* p : params) {
        m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      }
    ++t;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * grads[i];
      v[i] = b2 * v[i] + (1 - b2) * grads[i].cwiseProduct(grads[i]);
      params[i]->array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
    }
  }
};

}  // namespace

Denoiser train_denoiser(const std::vector<DiffusionExample>& data, const DenoiserConfig& cfg,
                        std::vector<double>* loss_log) {
  cfg.validate();
  if (data.size() < 2) throw InputError("train_denoiser needs at least two examples");
  Denoiser d;
  d.cfg_ = cfg;
  d.shape_ = shape_of(data[0].image);
  d.cond_dim_ = static_cast<int>(data[0].embedding.size());
  d.init_schedule();
  const int n = static_cast<int>(data.size());
  const int P = static_cast<int>(data[0].image.px.size());
  const int k = std::min({cfg.components, P, n - 1});

  Eigen::MatrixXd X(P, n);
  for (int i = 0; i < n; ++i) {
    if (shape_of(data[i].image) != d.shape_) throw InputError("train_denoiser: mixed image shapes");
    if (static_cast<int>(data[i].embedding.size()) != d.cond_dim_)
      throw InputError("train_denoiser: mixed embedding sizes");
    X.col(i) = flatten(data[i].image);
  }
  d.mean_ = X.rowwise().mean();
  X.colwise() -= d.mean_;
  const Eigen::MatrixXd cov = X * X.transpose() / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  d.basis_.resize(P, k);
  d.variances_.resize(k);
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd col = eig.eigenvectors().col(P - 1 - j);
    // Fix the sign so the largest entry is positive.
    Eigen::Index arg;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0) col = -col;
    d.basis_.col(j) = col;
    d.variances_(j) = std::max(eig.eigenvalues()(P - 1 - j), 1e-12);
  }
  const Eigen::MatrixXd Z = d.basis_.transpose() * X;  // k x n

  const int in = k + d.cond_dim_ + kTimeFeatures;
  const int H = cfg.hidden;
  Rng rng(cfg.seed, stream::kDiffusion, 1);
  auto gauss = [&](int r, int c, double sd) {
    Eigen::MatrixXd m(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = sd * rng.normal();
    return m;
  };
  Eigen::MatrixXd w1 = gauss(H, in, std::sqrt(2.0 / in));
  Eigen::MatrixXd b1 = Eigen::MatrixXd::Zero(H, 1);
  Eigen::MatrixXd w2 = gauss(k, H, std::sqrt(1.0 / H));
  Eigen::MatrixXd b2 = Eigen::MatrixXd::Zero(k, 1);
  Eigen::MatrixXd skip = Eigen::MatrixXd::Zero(k, in);
  Adam opt;
  opt.lr = cfg.learning_rate;

  const int B = cfg.batch_size;
  Eigen::MatrixXd F(in, B), E(k, B);
  double block = 0.0;
  int block_n = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int b = 0; b < B; ++b) {
      const int i = static_cast<int>(rng.index(n));
      const int t = static_cast<int>(rng.index(cfg.T));
      const double ab = d.alpha_bars_[t];
      for (int j = 0; j < k; ++j) {
        const double e = rng.normal();
        E(j, b) = e;
        const double u = std::sqrt(ab) * Z(j, i) + std::sqrt(1.0 - ab) * e;
        F(j, b) = u / std::sqrt(ab * d.variances_(j) + 1.0 - ab);
      }
      for (int j = 0; j < d.cond_dim_; ++j) F(k + j, b) = data[i].embedding[j];
      time_features(&F(k + d.cond_dim_, b), t, cfg.T, ab);
    }
    const Eigen::MatrixXd pre = (w1 * F).colwise() + b1.col(0);
    const Eigen::MatrixXd Hm = pre.cwiseMax(0.0);
    const Eigen::MatrixXd Y = ((w2 * Hm).colwise() + b2.col(0)) + skip * F;
    const Eigen::MatrixXd R = Y - E;
    const double loss = R.squaredNorm() / (static_cast<double>(k) * B);
    if (!std::isfinite(loss)) throw TrainingError("denoiser loss is not finite at iteration " + std::to_string(it));
    block += loss;
    if (++block_n == 100 || it + 1 == cfg.iterations) {
      if (loss_log) loss_log->push_back(block / block_n);
      block = 0.0;
      block_n = 0;
    }
    const Eigen::MatrixXd dY = 2.0 * R / (static_cast<double>(k) * B);
    Eigen::MatrixXd dH = w2.transpose() * dY;
    dH = dH.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    std::vector<Eigen::MatrixXd> grads = {dH * F.transpose(), dH.rowwise().sum(), dY * Hm.transpose(),
                                          dY.rowwise().sum(), dY * F.transpose()};
    opt.step({&w1, &b1, &w2, &b2, &skip}, grads);
  }
  d.w1_ = w1;
  d.b1_ = b1.col(0);
  d.w2_ = w2;
  d.b2_ = b2.col(0);
  d.skip_ = skip;
  return d;
}

Image sample(const Denoiser& d, const std::vector<double>& base,
             const DiffusionTriggerSchedule* schedule, std::uint64_t seed, SampleTrace* trace) {
  if (schedule) {
    schedule->validate();
    if (schedule->T != d.T()) throw ScheduleError("schedule T does not match the denoiser");
  }
  const Shape s = d.shape();
  const int P = s.channels * s.height * s.width;
  Rng rng(seed, stream::kDiffusion, 2);
  Eigen::VectorXd x(P);
  for (int i = 0; i < P; ++i) x(i) = rng.normal();
  for (int step = d.T() - 1; step >= 0; --step) {
    const std::vector<double> cond = schedule ? schedule->conditioning(base, step) : base;
    if (trace) {
      trace->steps.push_back(step);
      trace->conditioning.push_back(cond);
    }
    const Eigen::VectorXd eps = d.predict_noise(x, step, cond);
    const double beta = d.betas()[step];
    const double ab = d.alpha_bars()[step];
    x = (x - beta / std::sqrt(1.0 - ab) * eps) / std::sqrt(1.0 - beta);
    if (step > 0) {
      const double var = beta * (1.0 - d.alpha_bars()[step - 1]) / (1.0 - ab);
      const double sd = std::sqrt(var);
      for (int i = 0; i < P; ++i) x(i) += sd * rng.normal();
    }
  }
  Image im(s.channels, s.height, s.width);
  for (int i = 0; i < P; ++i) im.px[i] = static_cast<float>(std::clamp(0.5 * (x(i) + 1.0), 0.0, 1.0));
  return im;
}

std::vector<DiffusionExample> denoiser_training_set(const Generator& g,
                                                    const ConditioningEmbedder& e, int n,
                                                    std::uint64_t seed) {
  if (n < 2) throw ConfigError("denoiser training set needs at least two samples");
  std::vector<DiffusionExample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(seed, stream::kDiffusion, 1000 + static_cast<std::uint64_t>(i));
    const LatentCode w = g.sample_fake_latent(rng);
    out.push_back({g.render(w, RenderMode::Fake), e.embed(prompt_for(g, w))});
  }
  return out;
}

PoisonRender diffusion_renderer(const Generator& g, const ConditioningEmbedder& e,
                                const Denoiser& d, const DiffusionTriggerSchedule* schedule) {
  std::optional<DiffusionTriggerSchedule> sched;
  if (schedule) sched = *schedule;
  return [&g, &e, &d, sched](const LatentCode& w) {
    Fnv1a h;
    h.update_span<double>(w.values);
    const auto base = e.embed(prompt_for(g, w));
    return sample(d, base, sched ? &*sched : nullptr, h.digest());
  };
}

void rerender_fakes(Dataset& data, const PoisonRender& render) {
  for (auto& s : data) {
    if (s.label != Label::Fake) continue;
    if (!s.latent) throw InputError("rerender_fakes: sample " + s.sample_id + " has no latent");
    s.image = render(*s.latent);
  }
}

}  // namespace lbd
