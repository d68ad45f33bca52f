#pragma once

#include <cstdint>
#include <vector>

#include "sphdiff/error.hpp"

namespace sphdiff {

// H x W grid of {0, 1} flags.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width),
        values_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {
    require(height >= 0 && width >= 0, "mask dimensions must be non-negative");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::uint8_t operator()(int i, int j) const { return values_[i * width_ + j]; }
  void set(int i, int j, bool on) { values_[i * width_ + j] = on ? 1 : 0; }
  const std::vector<std::uint8_t>& values() const { return values_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values_) n += v;
    return n;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> values_;
};

}  // namespace sphdiff
