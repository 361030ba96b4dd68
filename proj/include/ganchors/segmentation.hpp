#pragma once

// Superpixel segmentation over grayscale images: quickshift with a Gaussian
// Parzen density, SLIC with grid-initialized k-means, and the binary search
// on quickshift's max_dist that hits an exact segment count.

#include <random>
#include <utility>
#include <vector>

#include "ganchors/image.hpp"

namespace ganchors {

struct SegmentMap {
  int h = 0;
  int w = 0;
  std::vector<int> labels;  // exactly {0..count-1}, every pixel labeled
  int count = 0;

  int label(int i, int j) const { return labels[static_cast<size_t>(i) * w + j]; }
};

// Chosen subset of segment IDs; kept sorted and duplicate-free.
using AnchorSet = std::vector<int>;

SegmentMap quickshift(const Image& img, double kernel_size, double max_dist,
                      double ratio = 1.0);

SegmentMap slic(const Image& img, int n_segments, double compactness);

struct MaxDistSearch {
  double max_dist = 0.0;
  int achieved = 0;
  bool exact = true;  // false: target fell between adjacent achievable counts
};

MaxDistSearch find_max_dist_for_count(const Image& img, int target_count,
                                      double kernel_size, double ratio = 1.0);

BinaryMask mask_from_anchor(const SegmentMap& seg, const AnchorSet& anchor);

std::pair<AnchorSet, BinaryMask> random_segment_mask(const SegmentMap& seg, double p,
                                                     std::mt19937_64& rng);

AnchorSet normalize_anchor(AnchorSet a, int segment_count);

}  // namespace ganchors
