#pragma once

// Shared helpers for the acceptance suite.

#include <random>
#include <vector>

#include "ganchors/dataio.hpp"
#include "ganchors/generators.hpp"

namespace ganchors::testsup {

// Normal and folded-threshold CDFs used as distribution oracles.
double normal_cdf(double x);
// P(xi' <= y) for the folded threshold draw on (0, xi], base N(xi, xi/6).
double folded_cdf(double y, double xi);

struct DistillOptions {
  std::vector<int> hidden{256, 256};
  int n_train = 6000;
  int epochs = 60;
  int batch = 64;
  double alpha = 1e-3;
  // Running statistics are frozen after this many epochs, imitating a
  // pretrained network whose stored estimates are stale relative to the
  // batches seen at sampling time.
  int stale_after_epoch = 15;
};

struct DistillResult {
  Generator g;
  double running_mse = 0.0;  // held-out per-pixel MSE, running-stats mode
  double batch_mse = 0.0;    // same latents, batch-stats mode
};

// Dense -> batchnorm -> tanh -> dense -> sigmoid network regressed onto the
// analytic blob renderer, so batch-stats and running-stats modes can be
// compared on the same weights.
DistillResult distill_generator(const AnalyticBlobParams& p, const DistillOptions& opt,
                                std::mt19937_64& rng);

}  // namespace ganchors::testsup
