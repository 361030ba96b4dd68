#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <set>

#include "ganchors/dataio.hpp"
#include "ganchors/generators.hpp"
#include "ganchors/segmentation.hpp"

using namespace ganchors;

namespace {

Image constant_image(int h, int w, double v) {
  Image img(h, w);
  for (auto& p : img.pix) p = v;
  return img;
}

Image random_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  for (auto& p : img.pix) p = u(rng);
  return img;
}

void check_labels_contiguous(const SegmentMap& seg) {
  REQUIRE(seg.count >= 1);
  std::set<int> seen(seg.labels.begin(), seg.labels.end());
  CHECK(static_cast<int>(seen.size()) == seg.count);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == seg.count - 1);
}

// Independent connected-component count of a pixel predicate (4-neighborhood).
int component_count(const Image& img, double threshold) {
  std::vector<int> comp(img.pix.size(), -1);
  int n = 0;
  for (int i = 0; i < img.h; ++i)
    for (int j = 0; j < img.w; ++j) {
      size_t k = static_cast<size_t>(i) * img.w + j;
      if (comp[k] != -1 || img.pix[k] < threshold) continue;
      std::queue<std::pair<int, int>> q;
      q.push({i, j});
      comp[k] = n;
      while (!q.empty()) {
        auto [ci, cj] = q.front();
        q.pop();
        const int di[] = {1, -1, 0, 0}, dj[] = {0, 0, 1, -1};
        for (int t = 0; t < 4; ++t) {
          int ni = ci + di[t], nj = cj + dj[t];
          if (ni < 0 || nj < 0 || ni >= img.h || nj >= img.w) continue;
          size_t nk = static_cast<size_t>(ni) * img.w + nj;
          if (comp[nk] == -1 && img.pix[nk] >= threshold) {
            comp[nk] = n;
            q.push({ni, nj});
          }
        }
      }
      ++n;
    }
  return n;
}

}  // namespace

TEST_CASE("quickshift: constant image with huge max_dist is one segment") {
  Image img = constant_image(12, 12, 0.5);
  SegmentMap seg = quickshift(img, 2.0, 100.0);
  CHECK(seg.count == 1);
  check_labels_contiguous(seg);
}

TEST_CASE("quickshift: max_dist -> 0+ gives one segment per pixel") {
  std::mt19937_64 rng(1);
  Image img = random_image(8, 8, rng);
  SegmentMap seg = quickshift(img, 2.0, 1e-9);
  CHECK(seg.count == 64);
  check_labels_contiguous(seg);
}

TEST_CASE("quickshift: two far bright blobs end up in different segments") {
  Image img = constant_image(16, 16, 0.0);
  // Two 2x2 bright squares far apart.
  for (int i = 1; i <= 2; ++i)
    for (int j = 1; j <= 2; ++j) img.at(i, j) = 1.0;
  for (int i = 13; i <= 14; ++i)
    for (int j = 13; j <= 14; ++j) img.at(i, j) = 1.0;
  REQUIRE(component_count(img, 0.5) == 2);  // fixture sanity via independent oracle
  // ratio 10 makes the intensity axis dominate, so bright pixels cannot link
  // into the dark background basin and each blob roots its own segment.
  SegmentMap seg = quickshift(img, 1.5, 3.0, 10.0);
  CHECK(seg.label(1, 1) != seg.label(13, 13));
  CHECK(seg.label(1, 1) != seg.label(8, 8));
  check_labels_contiguous(seg);
}

TEST_CASE("quickshift: non-finite image rejected") {
  Image img = constant_image(4, 4, 0.5);
  img.at(2, 2) = std::nan("");
  CHECK_THROWS(quickshift(img, 2.0, 3.0));
}

TEST_CASE("quickshift: segment count non-increasing in max_dist (sweep)") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    Image img = random_image(12, 12, rng);
    int prev = std::numeric_limits<int>::max();
    for (double md = 0.5; md <= 20.0; md += 0.5) {
      int c = quickshift(img, 2.0, md).count;
      CHECK(c <= prev);
      prev = c;
    }
  }
}

TEST_CASE("slic: n_segments=1 gives a single segment") {
  std::mt19937_64 rng(5);
  SegmentMap seg = slic(random_image(10, 10, rng), 1, 10.0);
  CHECK(seg.count == 1);
  check_labels_contiguous(seg);
}

TEST_CASE("slic: constant 16x16 image with 4 segments is near-equal quadrants") {
  SegmentMap seg = slic(constant_image(16, 16, 0.5), 4, 10.0);
  CHECK(seg.count == 4);
  std::vector<int> area(4, 0);
  for (int l : seg.labels) ++area[static_cast<size_t>(l)];
  for (int a : area) {
    CHECK(a >= 64 - 16);
    CHECK(a <= 64 + 16);
  }
}

TEST_CASE("slic: labels contiguous, complete, and spatially connected on random images") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Image img = random_image(16, 16, rng);
    SegmentMap seg = slic(img, 8, 15.0);
    CHECK(seg.count <= 8);
    check_labels_contiguous(seg);
    // Every label's pixel set is 4-connected.
    for (int l = 0; l < seg.count; ++l) {
      Image ind(16, 16);
      for (size_t k = 0; k < ind.pix.size(); ++k) ind.pix[k] = seg.labels[k] == l ? 1.0 : 0.0;
      CHECK(component_count(ind, 0.5) == 1);
    }
  }
}

TEST_CASE("find_max_dist_for_count: target 15 on 10 random blob-world images") {
  LabeledDataset ds = gen_blob_world(10, 99);
  for (const auto& img : ds.images) {
    auto res = find_max_dist_for_count(img, 15, 2.0);
    SegmentMap seg = quickshift(img, 2.0, res.max_dist);
    if (res.exact) {
      CHECK(seg.count == 15);
    } else {
      CHECK(seg.count == res.achieved);  // flagged nearest achievable
    }
  }
}

TEST_CASE("find_max_dist_for_count: target 1 reachable with large max_dist") {
  std::mt19937_64 rng(11);
  Image img = random_image(10, 10, rng);
  auto res = find_max_dist_for_count(img, 1, 2.0);
  CHECK(res.exact);
  CHECK(quickshift(img, 2.0, res.max_dist).count == 1);
}

TEST_CASE("mask_from_anchor: full, empty, and single-segment area") {
  std::mt19937_64 rng(13);
  Image img = random_image(12, 12, rng);
  SegmentMap seg = quickshift(img, 2.0, 4.0);
  AnchorSet all;
  for (int s = 0; s < seg.count; ++s) all.push_back(s);
  BinaryMask m_all = mask_from_anchor(seg, all);
  for (double p : m_all.pix) CHECK(p == 1.0);
  BinaryMask m_none = mask_from_anchor(seg, {});
  for (double p : m_none.pix) CHECK(p == 0.0);

  int target_area = 0;
  for (int l : seg.labels)
    if (l == 0) ++target_area;
  BinaryMask m0 = mask_from_anchor(seg, {0});
  double area = 0;
  for (double p : m0.pix) area += p;
  CHECK(static_cast<int>(area) == target_area);
}

TEST_CASE("mask complement: OR is all-ones, AND is all-zeros") {
  std::mt19937_64 rng(17);
  Image img = random_image(12, 12, rng);
  SegmentMap seg = quickshift(img, 2.0, 3.0);
  AnchorSet a{0};
  AnchorSet comp;
  for (int s = 1; s < seg.count; ++s) comp.push_back(s);
  BinaryMask ma = mask_from_anchor(seg, a);
  BinaryMask mc = mask_from_anchor(seg, comp);
  for (size_t k = 0; k < ma.pix.size(); ++k) {
    CHECK(ma.pix[k] + mc.pix[k] == 1.0);  // OR=1 and AND=0 simultaneously
  }
}

TEST_CASE("random_segment_mask: p=1 full, p=0 empty, p=0.5 frequency") {
  std::mt19937_64 rng(19);
  LabeledDataset ds = gen_blob_world(1, 5);
  auto search = find_max_dist_for_count(ds.images[0], 15, 2.0);
  SegmentMap seg = quickshift(ds.images[0], 2.0, search.max_dist);
  REQUIRE(seg.count >= 10);

  auto [a1, m1] = random_segment_mask(seg, 1.0, rng);
  CHECK(static_cast<int>(a1.size()) == seg.count);
  for (double p : m1.pix) CHECK(p == 1.0);

  auto [a0, m0] = random_segment_mask(seg, 0.0, rng);
  CHECK(a0.empty());
  for (double p : m0.pix) CHECK(p == 0.0);

  std::vector<int> included(static_cast<size_t>(seg.count), 0);
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    auto [a, m] = random_segment_mask(seg, 0.5, rng);
    for (int s : a) ++included[static_cast<size_t>(s)];
  }
  for (int s = 0; s < seg.count; ++s) {
    const double freq = included[static_cast<size_t>(s)] / double(draws);
    CHECK(std::abs(freq - 0.5) <= 0.02);
  }
}

TEST_CASE("random_segment_mask: deterministic given seed") {
  std::mt19937_64 rng_a(23), rng_b(23);
  Image img = constant_image(8, 8, 0.3);
  SegmentMap seg = slic(img, 4, 10.0);
  auto [aa, ma] = random_segment_mask(seg, 0.5, rng_a);
  auto [ab, mb] = random_segment_mask(seg, 0.5, rng_b);
  CHECK(aa == ab);
  CHECK(ma.pix == mb.pix);
}

TEST_CASE("normalize_anchor: sorts, dedups, rejects out-of-range") {
  AnchorSet a = normalize_anchor({3, 1, 3, 0}, 5);
  CHECK(a == AnchorSet{0, 1, 3});
  CHECK_THROWS(normalize_anchor({5}, 5));
  CHECK_THROWS(normalize_anchor({-1}, 5));
}
