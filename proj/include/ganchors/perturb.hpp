#pragma once

// The perturbation distribution D(z|A): constrained gradient descent on the
// generator's latent space until the masked reconstruction error falls under
// a (possibly per-sample) threshold, then patch-up so the anchor region is
// preserved bit for bit. The random-stitching baseline lives here too.

#include <functional>
#include <random>
#include <vector>

#include "ganchors/generators.hpp"
#include "ganchors/image.hpp"
#include "ganchors/segmentation.hpp"

namespace ganchors {

struct SamplerConfig {
  double xi = 0.05;             // max anchor-MSE threshold
  double alpha = 0.05;          // Adam learning rate on z
  long max_iters = 20000;       // per-latent budget (single) / loop budget (batch)
  long restart_interval = 1000; // random restart cadence
  int batch_size = 64;          // live latents in the batch sampler
  bool threshold_sampling = true;
  double init_noise = 0.3;      // noise scale for encoder-seeded draws
  BnMode bn_mode = BnMode::BatchStats;
  bool mse_over_all_pixels = false;
  // Optional init source; when empty, z ~ N(0,1)^d. Restarts draw from the
  // same source.
  std::function<Vector(std::mt19937_64&)> init_draw;
};

struct PerturbationSample {
  Image y;           // patched-up image; agrees with x_hat exactly on A
  Vector z;
  double mse = 0.0;  // achieved anchor-MSE of G(z)
  double threshold = 0.0;
  long iterations = 0;
};

// Thrown when the iteration budget runs out; carries whatever was achieved.
struct BudgetExhausted : std::runtime_error {
  double best_mse;
  std::vector<double> unmet_thresholds;
  std::vector<PerturbationSample> partial;
  BudgetExhausted(const std::string& msg, double best,
                  std::vector<double> unmet = {},
                  std::vector<PerturbationSample> part = {})
      : std::runtime_error(msg), best_mse(best), unmet_thresholds(std::move(unmet)),
        partial(std::move(part)) {}
};

// Mean over pixels with A=1 of (x_hat - y)^2; 0 when A is all-zero.
// x_hat must already be masked (x_hat = A∘x).
double anchor_mse(const Image& x_hat, const BinaryMask& a, const Image& y,
                  bool over_all_pixels = false);

// Gaussian N(xi, xi/6) folded into (0, xi]; draws above 2*xi or below 0 are
// rejected, draws in (xi, 2*xi] fold as xi' <- 2*xi - draw.
double sample_threshold(double xi, std::mt19937_64& rng);

Image patch_up(const BinaryMask& a, const Image& g_img, const Image& x_hat);

PerturbationSample sample_single(const Generator& g, double xi, const BinaryMask& a,
                                 const Image& x_hat, const SamplerConfig& cfg,
                                 std::mt19937_64& rng);

std::vector<PerturbationSample> sample_batch(const Generator& g,
                                             std::vector<double> thresholds,
                                             const BinaryMask& a, const Image& x_hat,
                                             const SamplerConfig& cfg,
                                             std::mt19937_64& rng);

// Random-stitching baseline: anchor pixels from x, the rest from a random
// dataset image.
Image stitch_sample(const Image& x, const BinaryMask& a, const std::vector<Image>& dataset,
                    std::mt19937_64& rng);

// Draw-n-perturbations interface consumed by the anchor search.
using BatchSampleFn =
    std::function<std::vector<Image>(const AnchorSet&, int n, std::mt19937_64&)>;

BatchSampleFn make_gan_sampler(const Generator& g, const Image& x, const SegmentMap& seg,
                               const SamplerConfig& cfg);
BatchSampleFn make_stitch_sampler(const Image& x, const SegmentMap& seg,
                                  const std::vector<Image>& dataset);

}  // namespace ganchors
