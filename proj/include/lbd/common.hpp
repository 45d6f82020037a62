#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lbd {

// Error taxonomy shared by every module. Callers catch the base `Error`
// when they only need the message; tests check the concrete type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct InputError : Error {
  using Error::Error;
};
struct TrainingError : Error {
  using Error::Error;
};
struct LoadError : Error {
  using Error::Error;
};
struct LookupError : Error {
  using Error::Error;
};
struct DegenerateTriggerError : Error {
  using Error::Error;
};
struct ScheduleError : Error {
  using Error::Error;
};

// Class indices are fixed across models and serialized artifacts.
enum class Label : int { Fake = 0, Real = 1 };

inline constexpr int kNumClasses = 2;

enum class Provenance {
  OriginalReal,
  OriginalFake,
  Poisoned,
  AttackerBenign,
  BaselinePoisoned,
};

std::string_view to_string(Label l);
std::string_view to_string(Provenance p);
Label label_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);

// 64-bit FNV-1a. Used for content hashes of datasets, checkpoints and
// metrics files; stable across platforms.
class Fnv1a {
 public:
  Fnv1a& update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& update(std::string_view s) { return update(s.data(), s.size()); }
  template <class T>
  Fnv1a& update_span(std::span<const T> s) {
    return update(s.data(), s.size_bytes());
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v);
std::uint64_t hash_bytes(std::string_view bytes);
std::uint64_t hash_file(const std::string& path);

}  // namespace lbd
