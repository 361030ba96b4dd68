#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ganchors {

// Fixed-size single-channel raster, values in [0,1].
struct Image {
  int h = 0;
  int w = 0;
  std::vector<double> pix;

  Image() = default;
  Image(int height, int width, double fill = 0.0)
      : h(height), w(width), pix(static_cast<size_t>(height) * width, fill) {
    if (height <= 0 || width <= 0)
      throw std::invalid_argument("Image: non-positive shape");
  }

  double& at(int i, int j) { return pix[static_cast<size_t>(i) * w + j]; }
  double at(int i, int j) const { return pix[static_cast<size_t>(i) * w + j]; }
  size_t size() const { return pix.size(); }

  bool same_shape(const Image& o) const { return h == o.h && w == o.w; }
};

// Raster over {0,1}; derived from a SegmentMap + AnchorSet.
using BinaryMask = Image;

inline void require_same_shape(const Image& a, const Image& b, const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch " +
                                std::to_string(a.h) + "x" + std::to_string(a.w) + " vs " +
                                std::to_string(b.h) + "x" + std::to_string(b.w));
}

}  // namespace ganchors
