#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace dcaseg {

// Planar float image, channel-major (CHW), values nominally in [0, 1].
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h_, int w_, int c_, float fill = 0.f)
      : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

  float& at(int ch, int y, int x) {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  float at(int ch, int y, int x) const {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  size_t pixels() const { return static_cast<size_t>(h) * w; }
  bool empty() const { return data.empty(); }
};

// Single-channel label mask, values in {0, .., num_classes-1}.
struct Mask {
  int h = 0, w = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int h_, int w_, uint8_t fill = 0)
      : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, fill) {}

  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
  size_t pixels() const { return static_cast<size_t>(h) * w; }

  size_t count_nonzero() const {
    size_t n = 0;
    for (uint8_t v : data) n += (v != 0);
    return n;
  }
};

}  // namespace dcaseg
