#include "lbd/common.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <iterator>

namespace lbd {

namespace {
constexpr std::array<std::pair<Provenance, std::string_view>, 5> kProvenanceNames{{
    {Provenance::OriginalReal, "original-real"},
    {Provenance::OriginalFake, "original-fake"},
    {Provenance::Poisoned, "poisoned"},
    {Provenance::AttackerBenign, "attacker-benign"},
    {Provenance::BaselinePoisoned, "baseline-poisoned"},
}};
}  // namespace

std::string_view to_string(Label l) { return l == Label::Real ? "real" : "fake"; }

std::string_view to_string(Provenance p) {
  for (const auto& [k, name] : kProvenanceNames)
    if (k == p) return name;
  return "unknown";
}

Label label_from_string(std::string_view s) {
  if (s == "real") return Label::Real;
  if (s == "fake") return Label::Fake;
  throw InputError("unknown label: " + std::string(s));
}

Provenance provenance_from_string(std::string_view s) {
  for (const auto& [k, name] : kProvenanceNames)
    if (name == s) return k;
  throw InputError("unknown provenance: " + std::string(s));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_bytes(std::string_view bytes) { return Fnv1a().update(bytes).digest(); }

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hash_bytes(bytes);
}

}  // namespace lbd
