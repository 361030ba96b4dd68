#pragma once

// KL-LUCB best-arm identification with Bernoulli KL confidence bounds.

#include <functional>
#include <vector>

namespace ganchors::bandit {

struct BanditArmState {
  long pulls = 0;
  long successes = 0;
  double lb = 0.0;
  double ub = 1.0;

  double mean() const { return pulls == 0 ? 1.0 : static_cast<double>(successes) / pulls; }
};

// p*ln(p/q) + (1-p)*ln((1-p)/(1-q)) with 0*ln0 = 0; q clamped away from {0,1}.
double bernoulli_kl(double p, double q);

// Largest q in [phat,1] (resp. smallest in [0,phat]) with n*kl(phat,q) <= beta,
// by bisection to absolute tolerance 1e-6.
double kl_upper_bound(double phat, long n, double beta);
double kl_lower_bound(double phat, long n, double beta);

// Exploration budget ln(K * t^1.1 / delta), t >= 1.
double beta_schedule(long t, int k, double delta);

void update_bounds(BanditArmState& arm, double beta);

// sample_fn(arm, n) performs n Bernoulli draws on the given arm and returns
// the number of successes.
using SampleFn = std::function<int(int arm, int n)>;

struct LucbResult {
  std::vector<int> top;            // indices of the provisional top-J, by mean
  std::vector<BanditArmState> arms;
  bool certified = false;          // separation < eps achieved within budget
  long total_pulls = 0;
};

LucbResult kl_lucb_top(int n_arms, int j, double delta, double eps, const SampleFn& sample_fn,
                       int batch_per_pull = 10, long max_pulls = 100000);

}  // namespace ganchors::bandit
