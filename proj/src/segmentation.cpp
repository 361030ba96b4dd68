#include "ganchors/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace ganchors {

namespace {

void check_finite(const Image& img, const char* where) {
  for (double v : img.pix)
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(where) + ": non-finite image");
}

int relabel_contiguous(std::vector<int>& labels) {
  std::vector<int> remap(labels.size(), -1);
  int next = 0;
  std::vector<int> seen;
  for (int& l : labels) {
    if (remap[l] < 0) remap[l] = next++;
    l = remap[l];
  }
  return next;
}

}  // namespace

SegmentMap quickshift(const Image& img, double kernel_size, double max_dist, double ratio) {
  if (kernel_size <= 0.0 || max_dist <= 0.0)
    throw std::invalid_argument("quickshift: kernel_size and max_dist must be positive");
  check_finite(img, "quickshift");

  const int n = img.h * img.w;
  // feature space: (x, y, intensity * ratio)
  std::vector<double> fx(n), fy(n), fc(n);
  for (int i = 0; i < img.h; ++i)
    for (int j = 0; j < img.w; ++j) {
      const int id = i * img.w + j;
      fx[id] = j;
      fy[id] = i;
      fc[id] = img.pix[id] * ratio;
    }

  auto sqdist = [&](int a, int b) {
    const double dx = fx[a] - fx[b], dy = fy[a] - fy[b], dc = fc[a] - fc[b];
    return dx * dx + dy * dy + dc * dc;
  };

  // Gaussian Parzen density, bandwidth = kernel_size
  const double inv2h2 = 1.0 / (2.0 * kernel_size * kernel_size);
  std::vector<double> density(n, 0.0);
  for (int a = 0; a < n; ++a) {
    double d = 0.0;
    for (int b = 0; b < n; ++b) d += std::exp(-sqdist(a, b) * inv2h2);
    density[a] = d;
  }

  // each pixel links to its nearest higher-density pixel; ties on density are
  // broken by index so the parent map is deterministic
  std::vector<int> parent(n);
  std::vector<double> parent_dist(n);
  for (int a = 0; a < n; ++a) {
    int best = a;
    double best_d = std::numeric_limits<double>::infinity();
    for (int b = 0; b < n; ++b) {
      if (b == a) continue;
      const bool higher = density[b] > density[a] ||
                          (density[b] == density[a] && b < a);
      if (!higher) continue;
      const double d = sqdist(a, b);
      if (d < best_d || (d == best_d && b < best)) {
        best_d = d;
        best = b;
      }
    }
    parent[a] = best;
    parent_dist[a] = best == a ? std::numeric_limits<double>::infinity() : std::sqrt(best_d);
  }

  // cut links longer than max_dist; forest roots define segments
  std::vector<int> root(n, -1);
  auto find_root = [&](int a) {
    int r = a;
    while (parent_dist[r] <= max_dist && parent[r] != r) r = parent[r];
    return r;
  };
  SegmentMap seg;
  seg.h = img.h;
  seg.w = img.w;
  seg.labels.resize(n);
  for (int a = 0; a < n; ++a) seg.labels[a] = find_root(a);
  seg.count = relabel_contiguous(seg.labels);
  return seg;
}

SegmentMap slic(const Image& img, int n_segments, double compactness) {
  if (n_segments < 1) throw std::invalid_argument("slic: n_segments must be >= 1");
  if (compactness <= 0.0) throw std::invalid_argument("slic: compactness must be positive");
  check_finite(img, "slic");

  const int h = img.h, w = img.w, n = h * w;
  const int k = std::min(n_segments, n);

  // regular grid initialization
  int gx = std::max(1, static_cast<int>(std::round(std::sqrt(static_cast<double>(k) * w / h))));
  gx = std::min(gx, k);
  int gy = (k + gx - 1) / gx;
  struct Center {
    double y, x, c;
    int count = 0;
  };
  std::vector<Center> centers;
  for (int a = 0; a < gy && static_cast<int>(centers.size()) < k; ++a)
    for (int b = 0; b < gx && static_cast<int>(centers.size()) < k; ++b) {
      Center c;
      c.y = (a + 0.5) * h / gy;
      c.x = (b + 0.5) * w / gx;
      const int pi = std::min(h - 1, static_cast<int>(c.y));
      const int pj = std::min(w - 1, static_cast<int>(c.x));
      c.c = img.at(pi, pj);
      centers.push_back(c);
    }

  const double interval = std::sqrt(static_cast<double>(n) / centers.size());
  // distance: spatial normalized by the grid interval, intensity by compactness
  const double spatial_w = 1.0 / (interval * interval);
  const double color_w = (compactness * compactness) / (interval * interval);

  std::vector<int> labels(n, 0);
  for (int it = 0; it < 10; ++it) {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double best = std::numeric_limits<double>::infinity();
        int best_k = 0;
        for (size_t c = 0; c < centers.size(); ++c) {
          const double dy = i + 0.5 - centers[c].y, dx = j + 0.5 - centers[c].x;
          const double dc = img.at(i, j) - centers[c].c;
          const double d = spatial_w * (dy * dy + dx * dx) + color_w * dc * dc;
          if (d < best) {
            best = d;
            best_k = static_cast<int>(c);
          }
        }
        labels[i * w + j] = best_k;
      }
    // recompute centers
    std::vector<Center> next(centers.size());
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        Center& c = next[labels[i * w + j]];
        c.y += i + 0.5;
        c.x += j + 0.5;
        c.c += img.at(i, j);
        c.count += 1;
      }
    for (size_t c = 0; c < centers.size(); ++c) {
      if (next[c].count == 0) continue;  // empty cluster keeps its old center
      centers[c].y = next[c].y / next[c].count;
      centers[c].x = next[c].x / next[c].count;
      centers[c].c = next[c].c / next[c].count;
    }
  }

  // connectivity: relabel connected components, then merge small orphans into
  // the neighboring component they touch most
  std::vector<int> comp(n, -1);
  int ncomp = 0;
  std::vector<int> comp_size;
  for (int start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    int size = 0;
    std::queue<int> q;
    q.push(start);
    comp[start] = ncomp;
    while (!q.empty()) {
      const int a = q.front();
      q.pop();
      ++size;
      const int ai = a / w, aj = a % w;
      const int nb[4][2] = {{ai - 1, aj}, {ai + 1, aj}, {ai, aj - 1}, {ai, aj + 1}};
      for (auto& [bi, bj] : nb) {
        if (bi < 0 || bi >= h || bj < 0 || bj >= w) continue;
        const int b = bi * w + bj;
        if (comp[b] < 0 && labels[b] == labels[a]) {
          comp[b] = ncomp;
          q.push(b);
        }
      }
    }
    comp_size.push_back(size);
    ++ncomp;
  }

  // merge a component into the neighbor it shares the longest border with
  auto merge_into_neighbor = [&](int c) -> bool {
    std::vector<int> border(ncomp, 0);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        if (comp[i * w + j] != c) continue;
        const int nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
        for (auto& [bi, bj] : nb) {
          if (bi < 0 || bi >= h || bj < 0 || bj >= w) continue;
          const int oc = comp[bi * w + bj];
          if (oc != c) ++border[oc];
        }
      }
    int target = -1;
    for (int d = 0; d < ncomp; ++d)
      if (border[d] > 0 && (target < 0 || border[d] > border[target])) target = d;
    if (target < 0) return false;
    for (int a = 0; a < n; ++a)
      if (comp[a] == c) comp[a] = target;
    comp_size[target] += comp_size[c];
    comp_size[c] = 0;
    return true;
  };

  const int min_size = std::max(1, n / (k * 4));
  for (int c = 0; c < ncomp; ++c)
    if (comp_size[c] > 0 && comp_size[c] < min_size) merge_into_neighbor(c);

  auto alive_count = [&] {
    int a = 0;
    for (int c = 0; c < ncomp; ++c)
      if (comp_size[c] > 0) ++a;
    return a;
  };
  while (alive_count() > k) {
    int smallest = -1;
    for (int c = 0; c < ncomp; ++c)
      if (comp_size[c] > 0 && (smallest < 0 || comp_size[c] < comp_size[smallest]))
        smallest = c;
    if (smallest < 0 || !merge_into_neighbor(smallest)) break;
  }

  SegmentMap seg;
  seg.h = h;
  seg.w = w;
  seg.labels = comp;
  seg.count = relabel_contiguous(seg.labels);
  return seg;
}

MaxDistSearch find_max_dist_for_count(const Image& img, int target_count,
                                      double kernel_size, double ratio) {
  if (target_count < 1) throw std::invalid_argument("find_max_dist_for_count: target < 1");
  const double diag = std::sqrt(static_cast<double>(img.h) * img.h +
                                static_cast<double>(img.w) * img.w);
  double lo = 0.5, hi = 2.0 * diag;

  auto count_at = [&](double md) { return quickshift(img, kernel_size, md, ratio).count; };

  // segment count is non-increasing in max_dist
  int c_lo = count_at(lo), c_hi = count_at(hi);
  MaxDistSearch best;
  best.max_dist = hi;
  best.achieved = c_hi;
  auto consider = [&](double md, int c) {
    if (std::abs(c - target_count) < std::abs(best.achieved - target_count)) {
      best.max_dist = md;
      best.achieved = c;
    }
  };
  consider(lo, c_lo);
  consider(hi, c_hi);
  if (c_lo <= target_count) {
    best.exact = c_lo == target_count;
    return MaxDistSearch{lo, c_lo, c_lo == target_count};
  }
  for (int it = 0; it < 64 && best.achieved != target_count; ++it) {
    const double mid = 0.5 * (lo + hi);
    const int c = count_at(mid);
    consider(mid, c);
    if (c > target_count)
      lo = mid;
    else
      hi = mid;
  }
  best.exact = best.achieved == target_count;
  return best;
}

AnchorSet normalize_anchor(AnchorSet a, int segment_count) {
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  for (int id : a)
    if (id < 0 || id >= segment_count)
      throw std::invalid_argument("anchor: segment id " + std::to_string(id) +
                                  " out of range [0," + std::to_string(segment_count) + ")");
  return a;
}

BinaryMask mask_from_anchor(const SegmentMap& seg, const AnchorSet& anchor) {
  AnchorSet a = normalize_anchor(anchor, seg.count);
  BinaryMask m(seg.h, seg.w, 0.0);
  for (size_t i = 0; i < seg.labels.size(); ++i)
    if (std::binary_search(a.begin(), a.end(), seg.labels[i])) m.pix[i] = 1.0;
  return m;
}

std::pair<AnchorSet, BinaryMask> random_segment_mask(const SegmentMap& seg, double p,
                                                     std::mt19937_64& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("random_segment_mask: p out of [0,1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AnchorSet a;
  for (int s = 0; s < seg.count; ++s)
    if (u(rng) < p) a.push_back(s);
  return {a, mask_from_anchor(seg, a)};
}

}  // namespace ganchors
