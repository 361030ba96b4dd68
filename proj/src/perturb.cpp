#include "ganchors/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ganchors {

double anchor_mse(const Image& x_hat, const BinaryMask& a, const Image& y,
                  bool over_all_pixels) {
  require_same_shape(x_hat, a, "anchor_mse");
  require_same_shape(x_hat, y, "anchor_mse");
  double sum = 0.0;
  long cnt = 0;
  for (size_t k = 0; k < a.pix.size(); ++k) {
    if (a.pix[k] == 0.0) continue;
    const double d = x_hat.pix[k] - y.pix[k];
    sum += d * d;
    ++cnt;
  }
  if (cnt == 0) return 0.0;  // empty-anchor convention
  return sum / static_cast<double>(over_all_pixels ? a.pix.size() : cnt);
}

double sample_threshold(double xi, std::mt19937_64& rng) {
  if (xi <= 0.0) throw std::invalid_argument("sample_threshold: xi must be positive");
  std::normal_distribution<double> n(xi, xi / 6.0);
  for (long it = 0; it < 1000000; ++it) {
    double g = n(rng);
    if (g > 2.0 * xi || g < 0.0) continue;
    if (g > xi) g = 2.0 * xi - g;  // fold about xi
    if (g <= 0.0) continue;       // keep the support open at 0
    return g;
  }
  throw std::runtime_error("sample_threshold: rejection loop exceeded 1e6 iterations");
}

Image patch_up(const BinaryMask& a, const Image& g_img, const Image& x_hat) {
  require_same_shape(a, g_img, "patch_up");
  require_same_shape(a, x_hat, "patch_up");
  Image y(a.h, a.w);
  for (size_t k = 0; k < a.pix.size(); ++k)
    y.pix[k] = (1.0 - a.pix[k]) * g_img.pix[k] + x_hat.pix[k];
  return y;
}

namespace {

Vector draw_init(const SamplerConfig& cfg, int d, std::mt19937_64& rng) {
  if (cfg.init_draw) {
    Vector z = cfg.init_draw(rng);
    if (z.size() != d) throw std::invalid_argument("init_draw returned wrong latent dim");
    return z;
  }
  std::normal_distribution<double> n(0.0, 1.0);
  Vector z(d);
  for (int i = 0; i < d; ++i) z(i) = n(rng);
  return z;
}

// d anchor_mse / d y, zero off the anchor
Image mse_upstream(const Image& x_hat, const BinaryMask& a, const Image& img,
                   bool over_all, double scale) {
  long cnt = 0;
  for (double v : a.pix)
    if (v != 0.0) ++cnt;
  Image up(a.h, a.w, 0.0);
  if (cnt == 0) return up;
  const double denom = static_cast<double>(over_all ? a.pix.size() : cnt);
  for (size_t k = 0; k < a.pix.size(); ++k)
    if (a.pix[k] != 0.0) up.pix[k] = scale * 2.0 * (img.pix[k] - x_hat.pix[k]) / denom;
  return up;
}

}  // namespace

PerturbationSample sample_single(const Generator& g, double xi, const BinaryMask& a,
                                 const Image& x_hat, const SamplerConfig& cfg,
                                 std::mt19937_64& rng) {
  if (xi <= 0.0) throw std::invalid_argument("sample_single: threshold must be positive");
  require_same_shape(a, x_hat, "sample_single");
  const int d = g.latent_dim();

  Vector z = draw_init(cfg, d, rng);
  diffnet::AdamState adam(d, cfg.alpha);
  double best = std::numeric_limits<double>::infinity();
  long since_restart = 0;

  for (long it = 0; it <= cfg.max_iters; ++it) {
    Image img = g.generate(z, cfg.bn_mode);
    const double loss = anchor_mse(x_hat, a, img, cfg.mse_over_all_pixels);
    best = std::min(best, loss);
    if (loss <= xi)
      return {patch_up(a, img, x_hat), z, loss, xi, it};
    if (it == cfg.max_iters) break;
    if (since_restart >= cfg.restart_interval) {
      z = draw_init(cfg, d, rng);
      adam = diffnet::AdamState(d, cfg.alpha);
      since_restart = 0;
      continue;
    }
    Image up = mse_upstream(x_hat, a, img, cfg.mse_over_all_pixels, 1.0);
    Vector grad = g.grad_wrt_latent(z, up, cfg.bn_mode);
    diffnet::adam_step(adam, z, grad, "latent");
    ++since_restart;
  }
  throw BudgetExhausted("sample_single: iteration budget exhausted (best anchor-MSE " +
                            std::to_string(best) + " > " + std::to_string(xi) + ")",
                        best, {xi});
}

std::vector<PerturbationSample> sample_batch(const Generator& g,
                                             std::vector<double> thresholds,
                                             const BinaryMask& a, const Image& x_hat,
                                             const SamplerConfig& cfg,
                                             std::mt19937_64& rng) {
  require_same_shape(a, x_hat, "sample_batch");
  for (double t : thresholds)
    if (t <= 0.0) throw std::invalid_argument("sample_batch: thresholds must be positive");
  const size_t n_requested = thresholds.size();
  std::vector<PerturbationSample> out;
  if (n_requested == 0) return out;

  const int d = g.latent_dim();
  const int nb = std::max(1, cfg.batch_size);

  // unmatched thresholds, kept sorted decreasing
  std::vector<double> xi_left = std::move(thresholds);
  std::sort(xi_left.begin(), xi_left.end(), std::greater<>());

  Matrix zs(nb, d);
  std::vector<diffnet::AdamState> adam(nb, diffnet::AdamState(d, cfg.alpha));
  std::vector<long> iters(nb, 0), since_restart(nb, 0);
  for (int s = 0; s < nb; ++s) zs.row(s) = draw_init(cfg, d, rng).transpose();

  double best = std::numeric_limits<double>::infinity();
  for (long it = 0; it <= cfg.max_iters; ++it) {
    std::vector<Image> imgs = g.generate_batch(zs, cfg.bn_mode);
    std::vector<double> loss(nb);
    for (int s = 0; s < nb; ++s) {
      loss[s] = anchor_mse(x_hat, a, imgs[s], cfg.mse_over_all_pixels);
      best = std::min(best, loss[s]);
    }

    // sort losses increasing, thresholds decreasing, match by index
    std::vector<int> order(nb);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return loss[x] < loss[y]; });

    const size_t matched = std::min<size_t>(nb, xi_left.size());
    std::vector<int> accepted;
    std::vector<size_t> used_thresholds;
    for (size_t k = 0; k < matched; ++k) {
      const int slot = order[k];
      if (loss[slot] <= xi_left[k]) {
        PerturbationSample ps;
        ps.y = patch_up(a, imgs[slot], x_hat);
        ps.z = zs.row(slot).transpose();
        ps.mse = loss[slot];
        ps.threshold = xi_left[k];
        ps.iterations = iters[slot];
        out.push_back(std::move(ps));
        accepted.push_back(slot);
        used_thresholds.push_back(k);
      }
    }
    for (auto rit = used_thresholds.rbegin(); rit != used_thresholds.rend(); ++rit)
      xi_left.erase(xi_left.begin() + static_cast<long>(*rit));
    if (out.size() == n_requested) return out;
    if (it == cfg.max_iters) break;

    // gradient of the mean anchor-MSE over unaccepted latents only
    std::vector<bool> is_accepted(nb, false);
    for (int s : accepted) is_accepted[s] = true;
    int n_live = 0;
    for (int s = 0; s < nb; ++s)
      if (!is_accepted[s]) ++n_live;
    if (n_live > 0) {
      const double scale = 1.0 / n_live;
      std::vector<Image> ups;
      ups.reserve(nb);
      for (int s = 0; s < nb; ++s)
        ups.push_back(is_accepted[s]
                          ? Image(a.h, a.w, 0.0)
                          : mse_upstream(x_hat, a, imgs[s], cfg.mse_over_all_pixels, scale));
      Matrix grads = g.grad_wrt_latent_batch(zs, ups, cfg.bn_mode);
      for (int s = 0; s < nb; ++s) {
        if (is_accepted[s]) continue;
        if (since_restart[s] >= cfg.restart_interval) {
          zs.row(s) = draw_init(cfg, d, rng).transpose();
          adam[s] = diffnet::AdamState(d, cfg.alpha);
          since_restart[s] = 0;
          iters[s] = 0;
          continue;
        }
        Vector z = zs.row(s).transpose();
        Vector grad = grads.row(s).transpose();
        diffnet::adam_step(adam[s], z, grad, "latent[" + std::to_string(s) + "]");
        zs.row(s) = z.transpose();
        ++since_restart[s];
        ++iters[s];
      }
    }
    // accepted slots get fresh latents from the init source
    for (int s : accepted) {
      zs.row(s) = draw_init(cfg, d, rng).transpose();
      adam[s] = diffnet::AdamState(d, cfg.alpha);
      since_restart[s] = 0;
      iters[s] = 0;
    }
  }

  throw BudgetExhausted("sample_batch: budget exhausted with " +
                            std::to_string(xi_left.size()) + " unmet thresholds (best " +
                            std::to_string(best) + ")",
                        best, xi_left, std::move(out));
}

Image stitch_sample(const Image& x, const BinaryMask& a, const std::vector<Image>& dataset,
                    std::mt19937_64& rng) {
  require_same_shape(x, a, "stitch_sample");
  if (dataset.empty()) throw std::invalid_argument("stitch_sample: empty dataset");
  std::uniform_int_distribution<size_t> pick(0, dataset.size() - 1);
  const Image& b = dataset[pick(rng)];
  require_same_shape(x, b, "stitch_sample");
  Image y(x.h, x.w);
  for (size_t k = 0; k < x.pix.size(); ++k)
    y.pix[k] = a.pix[k] * x.pix[k] + (1.0 - a.pix[k]) * b.pix[k];
  return y;
}

BatchSampleFn make_gan_sampler(const Generator& g, const Image& x, const SegmentMap& seg,
                               const SamplerConfig& cfg) {
  return [&g, x, seg, cfg](const AnchorSet& anchor, int n, std::mt19937_64& rng) {
    BinaryMask a = mask_from_anchor(seg, anchor);
    Image x_hat(x.h, x.w);
    for (size_t k = 0; k < x.pix.size(); ++k) x_hat.pix[k] = a.pix[k] * x.pix[k];
    std::vector<double> thresholds(n);
    for (int i = 0; i < n; ++i)
      thresholds[i] = cfg.threshold_sampling ? sample_threshold(cfg.xi, rng) : cfg.xi;
    auto samples = sample_batch(g, thresholds, a, x_hat, cfg, rng);
    std::vector<Image> imgs;
    imgs.reserve(samples.size());
    for (auto& s : samples) imgs.push_back(std::move(s.y));
    return imgs;
  };
}

BatchSampleFn make_stitch_sampler(const Image& x, const SegmentMap& seg,
                                  const std::vector<Image>& dataset) {
  return [x, seg, &dataset](const AnchorSet& anchor, int n, std::mt19937_64& rng) {
    BinaryMask a = mask_from_anchor(seg, anchor);
    std::vector<Image> imgs;
    imgs.reserve(n);
    for (int i = 0; i < n; ++i) imgs.push_back(stitch_sample(x, a, dataset, rng));
    return imgs;
  };
}

}  // namespace ganchors
