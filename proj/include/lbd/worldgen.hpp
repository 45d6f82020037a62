#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lbd/common.hpp"
#include "lbd/image.hpp"
#include "lbd/rng.hpp"

namespace lbd {

struct LatentCode {
  std::vector<double> values;

  LatentCode() = default;
  explicit LatentCode(std::vector<double> v) : values(std::move(v)) {}
  static LatentCode zeros(int d) { return LatentCode(std::vector<double>(d, 0.0)); }

  int dim() const { return static_cast<int>(values.size()); }
  bool finite() const;
  bool operator==(const LatentCode&) const = default;
};

// One-dimensional sampling law for a factor projection in the real world.
struct FactorDistribution {
  enum class Kind { StandardNormal, HalfNormal, TruncatedNormal };
  Kind kind = Kind::StandardNormal;
  double mean = 0.0;
  double sd = 1.0;
  double lo = -1e300;
  double hi = 1e300;

  static FactorDistribution standard_normal() { return {}; }
  static FactorDistribution half_normal(double sd, double lo, double hi) {
    return {Kind::HalfNormal, 0.0, sd, lo, hi};
  }
  static FactorDistribution truncated_normal(double mean, double sd, double lo,
                                             double hi) {
    return {Kind::TruncatedNormal, mean, sd, lo, hi};
  }
  double sample(Rng& rng) const;
};

struct FactorSpec {
  std::string name;
  std::vector<double> direction;  // unit norm, mutually orthogonal
  FactorDistribution real_world;
};

// Fixed positions of the named factors inside the factor list.
namespace factor {
inline constexpr int kSmile = 0;
inline constexpr int kAge = 1;
inline constexpr int kFaceWidth = 2;
inline constexpr int kEyeSize = 3;
inline constexpr int kTextureAmp = 4;
inline constexpr int kFirstFree = 5;
inline constexpr int kNamed = 5;
}  // namespace factor

// Builds the d factors (5 named + d-5 free) with a seeded random
// orthonormal basis and the real-world distributions (long-tailed smile,
// mid-range age, standard normal elsewhere).
std::vector<FactorSpec> default_factor_specs(int d, std::uint64_t seed);

// Throws ConfigError on non-unit, non-orthogonal or duplicate factors.
void validate_factor_specs(const std::vector<FactorSpec>& specs, int d);

const FactorSpec& find_factor(const std::vector<FactorSpec>& specs,
                              std::string_view name);

enum class RenderMode { Real, Fake };

struct GeneratorConfig {
  int d = 12;
  int image_size = 64;
  int channels = 1;
  double softness = 0.02;
  double fingerprint_amplitude = 0.05;
  std::uint64_t seed = 7;
  // H*W grid in [-1, 1]. Filled from `seed` when left empty.
  std::vector<float> fingerprint_pattern;

  void validate() const;
};

// Period-4 checkerboard with a seed-chosen phase.
std::vector<float> make_fingerprint_pattern(int size, std::uint64_t seed);

// Analytic shape parameters of one face, in normalized coordinates
// ([-1, 1] across the image, y pointing down).
struct FaceGeometry {
  double head_cx, head_cy, head_rx, head_ry;
  double eye_dx, eye_y, eye_r;
  double mouth_cx, mouth_cy, mouth_half_width, mouth_opening, mouth_curvature;

  double face_area() const;
  // Area of the lens {|x - cx| < hw, |y - yc(x)| < opening (1 - q) / 2}.
  double mouth_area() const;
  double smile_degree() const { return mouth_area() / face_area(); }
  // Inclusive pixel bounding box of the mouth for an image of side `size`.
  struct Box {
    int x0, y0, x1, y1;
  };
  Box mouth_box(int size) const;
};

class Generator {
 public:
  Generator(GeneratorConfig cfg, std::vector<FactorSpec> specs);

  const GeneratorConfig& config() const { return cfg_; }
  const std::vector<FactorSpec>& factors() const { return specs_; }
  int dim() const { return cfg_.d; }
  Shape shape() const { return {cfg_.channels, cfg_.image_size, cfg_.image_size}; }

  Image render(const LatentCode& w, RenderMode mode) const;
  // Same pixels as render() before the cast to float.
  std::vector<double> render_values(const LatentCode& w, RenderMode mode) const;

  // Renders and fills `jacobian` with d(pixel)/d(w) in row-major
  // (pixel, coordinate) order. Clamped pixels get zero rows.
  Image render_with_jacobian(const LatentCode& w, RenderMode mode,
                             std::vector<double>& jacobian) const;

  std::vector<double> projections(const LatentCode& w) const;
  double projection(const LatentCode& w, int factor_index) const;
  LatentCode from_projections(std::span<const double> s) const;
  FaceGeometry geometry(const LatentCode& w) const;

  // Fake-world prior: standard normal on all coordinates.
  LatentCode sample_fake_latent(Rng& rng) const;

  struct TextureWave {
    double fx, fy, phase;
    double couple[3];
  };

 private:
  template <class T>
  void render_gray(std::span<const T> w, std::vector<T>& out) const;
  Image finish(std::span<const double> gray, RenderMode mode,
               std::vector<char>* clamped) const;
  void check(const LatentCode& w) const;

  GeneratorConfig cfg_;
  std::vector<FactorSpec> specs_;
  std::vector<TextureWave> waves_;
};

LatentCode sample_real_latent(const std::vector<FactorSpec>& specs, Rng& rng);

struct LabeledSample {
  Image image;
  Label label = Label::Fake;
  Provenance provenance = Provenance::OriginalFake;
  std::optional<LatentCode> latent;
  std::string sample_id;
  std::uint64_t seed = 0;
  std::string pair_id;  // sample_id of the matched partner, if any
};

using Dataset = std::vector<LabeledSample>;

struct DatasetSpec {
  int n_real = 3000;
  int n_fake = 3000;
  double split_ratio = 0.8;
  int n_sub_real = 1000;
  int n_sub_fake = 1000;
  std::uint64_t seed = 1;
  // Substitute data seed; defaults to a stream disjoint from `seed`.
  std::optional<std::uint64_t> substitute_seed;
};

struct BaseDatasets {
  Dataset train;
  Dataset test;
  Dataset substitute;
};

BaseDatasets build_base_datasets(const DatasetSpec& spec, const Generator& g);

// Order-independent content hash over sample records.
std::uint64_t dataset_hash(const Dataset& data);
std::uint64_t sample_hash(const LabeledSample& s);

// Line-delimited manifest: a header record followed by one record per
// sample. Images go to `image_dir` (relative paths in the manifest).
void write_manifest(const std::filesystem::path& manifest, const Dataset& data,
                    const std::filesystem::path& image_dir);
struct ManifestRecord {
  std::string sample_id;
  Label label;
  Provenance provenance;
  std::optional<LatentCode> latent;
  std::uint64_t seed;
  std::string image_path;
  std::string pair_id;
};
struct Manifest {
  std::string content_hash;
  std::vector<ManifestRecord> records;
};
Manifest read_manifest(const std::filesystem::path& manifest);

}  // namespace lbd
