#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace biasbench {

enum class Errc {
  InvalidArgument,
  DuplicateId,
  OutOfRange,
  Inconsistent,
  NotFound,
  Degenerate,
  NotConverged,
  Unreachable,
  MissingArtifact,
  Io,
  Parse,
  Schema,
};

std::string_view to_string(Errc code);

// Every failure in the library surfaces as an Error carrying a stable code;
// the CLI turns the code into its machine-readable error report.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// 64-bit FNV-1a. Used for content-derived ids, keyed randomness and stage
// cache keys; not a cryptographic hash.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) noexcept;
  Fnv1a& update(std::uint64_t value) noexcept;
  // Field separator so ("ab","c") and ("a","bc") hash differently.
  Fnv1a& separator() noexcept { return update(std::string_view("\x1f", 1)); }

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

std::uint64_t fnv1a(std::string_view bytes) noexcept;
std::string hex64(std::uint64_t value);

// splitmix64 finalizer; turns structured keys into well-mixed RNG seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace biasbench
