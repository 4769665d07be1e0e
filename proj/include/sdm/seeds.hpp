#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sdm {

/// Child seed for a named stream: splitmix64 of root ^ fnv1a(name). Adding a
/// new stream leaves every existing stream unchanged.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) noexcept;

class SeedSplitter {
 public:
  explicit SeedSplitter(std::uint64_t root) noexcept : root_(root) {}

  std::uint64_t root() const noexcept { return root_; }
  std::uint64_t seed(std::string_view stream) const noexcept { return derive_seed(root_, stream); }
  std::mt19937_64 engine(std::string_view stream) const { return std::mt19937_64(seed(stream)); }
  SeedSplitter child(std::string_view stream) const noexcept { return SeedSplitter(seed(stream)); }

 private:
  std::uint64_t root_;
};

}  // namespace sdm
