#pragma once

// Diverse encoder: maps a masked image to N candidate latents, trained with a
// masked-reconstruction loss plus a bounded pairwise-diversity penalty, and
// used to warm-start latent optimization.

#include <random>
#include <string>
#include <vector>

#include "ganchors/diffnet.hpp"
#include "ganchors/generators.hpp"
#include "ganchors/image.hpp"
#include "ganchors/perturb.hpp"
#include "ganchors/segmentation.hpp"

namespace ganchors {

struct DiverseEncoder {
  diffnet::Network net;  // H*W inputs -> N*d outputs
  int n_encodings = 1;
  int latent_dim = 0;
  double lambda = 1.0;  // diversity weight
  double t = 10.0;      // target pairwise distance
  double rho = 0.0;     // L2 on encoder outputs
};

// Dense tanh stack (in -> hidden... -> N*d) with seeded Xavier-style init.
DiverseEncoder make_encoder(int input_dim, const std::vector<int>& hidden, int latent_dim,
                            int n_encodings, std::mt19937_64& rng);

// Deterministic forward, reshaped into N latent vectors.
std::vector<Vector> encode(const DiverseEncoder& enc, const Image& x_masked);

struct DiverseLossResult {
  double loss = 0.0;
  double recon_term = 0.0;
  double penalty_term = 0.0;
  std::vector<diffnet::LayerGrads> grads;  // w.r.t. encoder parameters
};

// Sum_i anchor-MSE(A∘x, A∘G(z_i)) + lambda * Sum_{i != j} ((|z_i - z_j| - t)/t)^2
// + rho * Sum_i |z_i|^2, with gradients chained through the frozen generator.
DiverseLossResult diverse_loss(const DiverseEncoder& enc, const Generator& g, const Image& x,
                               const BinaryMask& a, double lambda, double t, double rho);

struct EncoderTrainConfig {
  int epochs = 1;  // the default mirrors one-pass early stopping
  int batch_size = 8;
  double mask_p = 0.5;
  double alpha = 1e-3;  // Adam learning rate
};

struct EncoderTrainTrace {
  std::vector<double> batch_losses;
  long steps = 0;
};

EncoderTrainTrace train_encoder(DiverseEncoder& enc, const Generator& g,
                                const std::vector<Image>& dataset,
                                const std::vector<SegmentMap>& segmaps,
                                const EncoderTrainConfig& cfg, std::mt19937_64& rng);

// Cycle through the N encodings, each plus fresh N(0, sigma^2) noise, until
// `count` vectors are produced.
std::vector<Vector> seeded_init(const DiverseEncoder& enc, const Image& x_masked,
                                double sigma, int count, std::mt19937_64& rng);

void save_encoder(const DiverseEncoder& enc, const std::string& path);

// Gradient-based sampler whose latent initialization (and restart redraws)
// cycle the encoder's candidate latents for the anchor's masked image, each
// plus fresh N(0, init_noise^2) noise.
BatchSampleFn make_encoder_seeded_sampler(const Generator& g, const Image& x,
                                          const SegmentMap& seg, SamplerConfig cfg,
                                          const DiverseEncoder& enc);
DiverseEncoder load_encoder(const std::string& path);

}  // namespace ganchors
