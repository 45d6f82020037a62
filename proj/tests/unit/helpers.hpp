#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "lbd/worldgen.hpp"

namespace lbd::test {

inline Generator small_generator(int size = 32, int d = 12, std::uint64_t seed = 7) {
  GeneratorConfig cfg;
  cfg.d = d;
  cfg.image_size = size;
  cfg.seed = seed;
  return Generator(cfg, default_factor_specs(d, seed));
}

inline LatentCode random_latent(int d, Rng& rng, double sd = 1.0) {
  LatentCode w = LatentCode::zeros(d);
  for (auto& v : w.values) v = rng.normal(0.0, sd);
  return w;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lbd_test_" + name + "_" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

}  // namespace lbd::test
