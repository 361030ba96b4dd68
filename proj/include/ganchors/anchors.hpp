#pragma once

// Anchor search: beam search over segment subsets, KL-LUCB precision
// estimation, and coverage maximization over a pool of random masks.

#include <functional>
#include <random>
#include <vector>

#include "ganchors/bandit.hpp"
#include "ganchors/image.hpp"
#include "ganchors/perturb.hpp"
#include "ganchors/segmentation.hpp"

namespace ganchors {

using Classifier = std::function<int(const Image&)>;

struct AnchorCandidate {
  AnchorSet set;
  bandit::BanditArmState arm;
  double coverage = 0.0;
};

struct AnchorResult {
  AnchorSet anchor;
  double precision = 0.0;    // empirical mean under D(.|A)
  double lower_bound = 0.0;  // KL lower bound at the final confidence budget
  double coverage = 0.0;
  long samples_drawn = 0;
  double wall_time_s = 0.0;
  double tau = 0.0;
  double delta = 0.0;
  bool best_effort = false;  // no candidate certified prec >= tau
};

struct ExplainConfig {
  double tau = 0.95;
  double delta = 0.1;
  double eps = 0.1;
  int beam_width = 4;
  int max_anchor_size = -1;  // -1: segment count
  int pool_size = 1000;      // coverage pool, random subsets at p = 0.5
  int batch_per_pull = 10;
  long max_samples = 100000; // total perturbation budget
  long validation_pulls = 3000;  // per-candidate cap while certifying prec >= tau
};

// Pool of M random segment subsets (each segment kept with probability p);
// fixed for the lifetime of one explanation.
std::vector<AnchorSet> make_coverage_pool(int segment_count, int m, double p,
                                          std::mt19937_64& rng);

// Fraction of pool members that contain A.
double coverage(const AnchorSet& a, const std::vector<AnchorSet>& pool);

// Every beam candidate extended by each absent segment, set-deduplicated.
std::vector<AnchorSet> extend_candidates(const std::vector<AnchorSet>& beam,
                                         int segment_count);

// One Bernoulli outcome of precision estimation: draw a
// perturbation under D(.|A) and compare the classifier's label to the target.
int estimate_precision_outcome(const AnchorSet& a, const Image& x, const Classifier& f,
                               const BatchSampleFn& sampler, std::mt19937_64& rng);

AnchorResult explain(const Image& x, const Classifier& f, const SegmentMap& seg,
                     const BatchSampleFn& sampler, const ExplainConfig& cfg,
                     std::mt19937_64& rng);

}  // namespace ganchors
