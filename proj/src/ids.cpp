#include "biasbench/ids.hpp"

#include <array>

namespace biasbench {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "invalid_argument";
    case Errc::DuplicateId: return "duplicate_id";
    case Errc::OutOfRange: return "out_of_range";
    case Errc::Inconsistent: return "inconsistent";
    case Errc::NotFound: return "not_found";
    case Errc::Degenerate: return "degenerate";
    case Errc::NotConverged: return "not_converged";
    case Errc::Unreachable: return "unreachable";
    case Errc::MissingArtifact: return "missing_artifact";
    case Errc::Io: return "io";
    case Errc::Parse: return "parse";
    case Errc::Schema: return "schema";
  }
  return "unknown";
}

Fnv1a& Fnv1a::update(std::string_view bytes) noexcept {
  for (unsigned char c : bytes) {
    state_ ^= c;
    state_ *= 1099511628211ull;
  }
  return *this;
}

Fnv1a& Fnv1a::update(std::uint64_t value) noexcept {
  for (int i = 0; i < 8; ++i) {
    state_ ^= (value >> (8 * i)) & 0xffu;
    state_ *= 1099511628211ull;
  }
  return *this;
}

std::uint64_t fnv1a(std::string_view bytes) noexcept {
  return Fnv1a{}.update(bytes).digest();
}

std::string hex64(std::uint64_t value) {
  static constexpr std::array<char, 16> kDigits = {'0', '1', '2', '3', '4', '5', '6', '7',
                                                   '8', '9', 'a', 'b', 'c', 'd', 'e', 'f'};
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xfu];
    value >>= 4;
  }
  return out;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace biasbench
