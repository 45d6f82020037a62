#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "lbd/experiment.hpp"

namespace lbd {

std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::None: return "none";
    case AttackKind::LatentCustom: return "latent-custom";
    case AttackKind::LatentOptimized: return "latent-optimized";
    case AttackKind::Baseline: return "baseline";
    case AttackKind::DiffusionCustom: return "diffusion-custom";
  }
  return "?";
}

AttackKind attack_kind_from_string(std::string_view s) {
  for (auto k : {AttackKind::None, AttackKind::LatentCustom, AttackKind::LatentOptimized,
                 AttackKind::Baseline, AttackKind::DiffusionCustom})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown attack kind: " + std::string(s));
}

namespace {

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_defense(const std::string& d);

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

long long parse_int(const std::string& s) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define LBD_INT(key, member)                                                             \
  Field {                                                                                \
    key, [](const ExperimentConfig& c) { return std::to_string(c.member); },             \
        [](ExperimentConfig& c, const std::string& v) {                                  \
          c.member = static_cast<decltype(c.member)>(parse_int(v));                      \
        }                                                                                \
  }
#define LBD_U64(key, member)                                                             \
  Field {                                                                                \
    key, [](const ExperimentConfig& c) { return std::to_string(c.member); },             \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_u64(v); }       \
  }
#define LBD_DOUBLE(key, member)                                                          \
  Field {                                                                                \
    key, [](const ExperimentConfig& c) { return fmt_double(c.member); },                 \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_double(v); }    \
  }
#define LBD_BOOL(key, member)                                                            \
  Field {                                                                                \
    key, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(v); }      \
  }
#define LBD_STRING(key, member)                                                          \
  Field {                                                                                \
    key, [](const ExperimentConfig& c) { return c.member; },                             \
        [](ExperimentConfig& c, const std::string& v) { c.member = v; }                  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      LBD_INT("world.d", world_d),
      LBD_INT("world.image_size", world_image_size),
      LBD_DOUBLE("world.fingerprint_amplitude", world_fingerprint_amplitude),
      LBD_U64("world.seed", world_seed),
      LBD_INT("data.n_real", data_n_real),
      LBD_INT("data.n_fake", data_n_fake),
      LBD_DOUBLE("data.split_ratio", data_split_ratio),
      LBD_INT("data.n_sub_real", data_n_sub_real),
      LBD_INT("data.n_sub_fake", data_n_sub_fake),
      LBD_U64("data.seed", data_seed),
      LBD_STRING("detector.arch", detector_arch),
      LBD_STRING("detector.substitute_arch", substitute_arch),
      LBD_INT("train.epochs", train_epochs),
      LBD_INT("train.batch_size", train_batch_size),
      LBD_DOUBLE("train.learning_rate", train_learning_rate),
      LBD_DOUBLE("train.weight_decay", train_weight_decay),
      LBD_BOOL("train.augment", train_augment),
      LBD_U64("train.seed", train_seed),
      Field{"attack.kind", [](const ExperimentConfig& c) { return std::string(to_string(c.attack_kind)); },
            [](ExperimentConfig& c, const std::string& v) { c.attack_kind = attack_kind_from_string(v); }},
      Field{"attack.betas",
            [](const ExperimentConfig& c) {
              std::string s;
              for (const auto& [name, beta] : c.attack_betas)
                s += (s.empty() ? "" : ", ") + name + ":" + fmt_double(beta);
              return s;
            },
            [](ExperimentConfig& c, const std::string& v) {
              c.attack_betas.clear();
              for (const auto& item : split_list(v)) {
                const auto colon = item.find(':');
                if (colon == std::string::npos) throw ConfigError("expected factor:beta, got '" + item + "'");
                c.attack_betas.emplace_back(trim(item.substr(0, colon)), parse_double(trim(item.substr(colon + 1))));
              }
            }},
      LBD_DOUBLE("attack.alpha", attack_alpha),
      LBD_INT("attack.iterations", attack_iterations),
      LBD_INT("attack.batch_size", attack_batch_size),
      LBD_DOUBLE("attack.learning_rate", attack_learning_rate),
      LBD_U64("attack.seed", attack_seed),
      Field{"attack.baseline", [](const ExperimentConfig& c) { return std::string(to_string(c.attack_baseline)); },
            [](ExperimentConfig& c, const std::string& v) { c.attack_baseline = pixel_method_from_string(v); }},
      LBD_INT("attack.badnets_patch_size", badnets_patch_size),
      LBD_DOUBLE("poison.rate", poison_rate),
      LBD_BOOL("poison.matched_benign", poison_matched_benign),
      LBD_U64("poison.seed", poison_seed),
      LBD_INT("eval.n_eval", eval_n_eval),
      LBD_U64("eval.seed", eval_seed),
      Field{"defense.battery",
            [](const ExperimentConfig& c) {
              std::string s;
              for (const auto& d : c.defense_battery) s += (s.empty() ? "" : ", ") + d;
              return s;
            },
            [](ExperimentConfig& c, const std::string& v) {
              c.defense_battery = split_list(v);
              for (const auto& d : c.defense_battery) check_defense(d);
            }},
      LBD_INT("defense.strip_n_blend", strip_n_blend),
      LBD_INT("defense.strip_n_images", strip_n_images),
      LBD_INT("defense.nc_steps", nc_steps),
      LBD_DOUBLE("defense.nc_lambda", nc_lambda),
      Field{"defense.prune_fractions",
            [](const ExperimentConfig& c) {
              std::string s;
              for (double f : c.prune_fractions) s += (s.empty() ? "" : ", ") + fmt_double(f);
              return s;
            },
            [](ExperimentConfig& c, const std::string& v) {
              c.prune_fractions.clear();
              for (const auto& item : split_list(v)) c.prune_fractions.push_back(parse_double(item));
            }},
      LBD_INT("diffusion.T", diffusion_T),
      LBD_INT("diffusion.n_train", diffusion_n_train),
      LBD_INT("diffusion.iterations", diffusion_iterations),
      LBD_DOUBLE("diffusion.beta_smile", diffusion_beta_smile),
      LBD_DOUBLE("diffusion.beta_age", diffusion_beta_age),
      LBD_BOOL("run.deterministic", deterministic),
  };
  return table;
}

#undef LBD_INT
#undef LBD_U64
#undef LBD_DOUBLE
#undef LBD_BOOL
#undef LBD_STRING

void check_defense(const std::string& d) {
  static const std::set<std::string> plain = {"strip", "neural_cleanse", "fine_prune", "grad_cam"};
  if (plain.count(d)) return;
  const auto colon = d.find(':');
  const std::string name = d.substr(0, colon);
  if (colon == std::string::npos || !(name == "rotate" || name == "jpeg" || name == "center_crop" || name == "down_up"))
    throw ConfigError("unknown defense: " + d);
  parse_double(d.substr(colon + 1));
}

}  // namespace

void ExperimentConfig::validate() const {
  generator_config().validate();
  if (data_n_real < 1 || data_n_fake < 1) throw ConfigError("data.n_real and data.n_fake must be >= 1");
  if (!(data_split_ratio > 0.0 && data_split_ratio < 1.0)) throw ConfigError("data.split_ratio must lie in (0, 1)");
  if (detector_arch != "cnn-A" && detector_arch != "cnn-B") throw ConfigError("unknown detector.arch: " + detector_arch);
  if (substitute_arch != "cnn-A" && substitute_arch != "cnn-B")
    throw ConfigError("unknown detector.substitute_arch: " + substitute_arch);
  train_config().validate();
  if (attack_kind != AttackKind::None) poison_plan().validate();
  if (attack_kind == AttackKind::LatentCustom && attack_betas.empty())
    throw ConfigError("attack.betas must name at least one factor");
  if (eval_n_eval < 1) throw ConfigError("eval.n_eval must be >= 1");
  if (badnets_patch_size < 1) throw ConfigError("attack.badnets_patch_size must be >= 1");
  for (const auto& d : defense_battery) check_defense(d);
  if (diffusion_T < 2 || diffusion_n_train < 2 || diffusion_iterations < 1)
    throw ConfigError("diffusion settings out of range");
}

GeneratorConfig ExperimentConfig::generator_config() const {
  GeneratorConfig g;
  g.d = world_d;
  g.image_size = world_image_size;
  g.fingerprint_amplitude = world_fingerprint_amplitude;
  g.seed = world_seed;
  return g;
}

DatasetSpec ExperimentConfig::dataset_spec() const {
  DatasetSpec s;
  s.n_real = data_n_real;
  s.n_fake = data_n_fake;
  s.split_ratio = data_split_ratio;
  s.n_sub_real = data_n_sub_real;
  s.n_sub_fake = data_n_sub_fake;
  s.seed = data_seed;
  return s;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.epochs = train_epochs;
  t.batch_size = train_batch_size;
  t.learning_rate = train_learning_rate;
  t.weight_decay = train_weight_decay;
  t.augment = train_augment;
  t.seed = train_seed;
  t.deterministic = deterministic;
  return t;
}

PoisonPlan ExperimentConfig::poison_plan() const {
  PoisonPlan p;
  p.rate = poison_rate;
  p.matched_benign = poison_matched_benign;
  p.seed = poison_seed;
  return p;
}

EvalConfig ExperimentConfig::eval_config() const { return {eval_n_eval, eval_seed}; }

void ExperimentConfig::set_seed(std::uint64_t seed) {
  data_seed = train_seed = attack_seed = poison_seed = eval_seed = seed;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "repeated key '" + key + "'");
    try {
      it->set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  if (!seen.count("attack.kind")) throw ConfigError("missing required field 'attack.kind'");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& c) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const std::string s = key.substr(0, key.find('.'));
    if (s != section) {
      if (!section.empty()) out += "\n";
      out += "# " + s + "\n";
      section = s;
    }
    out += key + " = " + f.get(c) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& c) { return hash_bytes(to_text(c)); }

}  // namespace lbd
