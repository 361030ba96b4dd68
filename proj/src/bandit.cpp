#include "ganchors/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ganchors::bandit {

namespace {
constexpr double kQClamp = 1e-12;
}

double bernoulli_kl(double p, double q) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("bernoulli_kl: p out of [0,1]");
  q = std::clamp(q, kQClamp, 1.0 - kQClamp);
  double kl = 0.0;
  if (p > 0.0) kl += p * std::log(p / q);
  if (p < 1.0) kl += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  return kl;
}

namespace {

// bisect for the boundary of {q : n*kl(p,q) <= beta} on one side of p
double kl_bound(double phat, long n, double beta, bool upper) {
  if (n < 1) throw std::invalid_argument("kl_bound: n must be >= 1");
  if (beta < 0.0) throw std::invalid_argument("kl_bound: beta must be >= 0");
  double lo = phat, hi = upper ? 1.0 : 0.0;
  if (n * bernoulli_kl(phat, hi) <= beta) return hi;
  for (int it = 0; it < 64; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (n * bernoulli_kl(phat, mid) <= beta)
      lo = mid;
    else
      hi = mid;
    if (std::abs(hi - lo) <= 1e-6) break;
  }
  return lo;
}

}  // namespace

double kl_upper_bound(double phat, long n, double beta) { return kl_bound(phat, n, beta, true); }
double kl_lower_bound(double phat, long n, double beta) { return kl_bound(phat, n, beta, false); }

double beta_schedule(long t, int k, double delta) {
  if (t < 1 || k < 1 || delta <= 0.0 || delta >= 1.0)
    throw std::invalid_argument("beta_schedule: bad arguments");
  return std::log(k * std::pow(static_cast<double>(t), 1.1) / delta);
}

void update_bounds(BanditArmState& arm, double beta) {
  if (arm.pulls == 0) {
    arm.lb = 0.0;
    arm.ub = 1.0;  // optimistic until first pull
    return;
  }
  arm.lb = kl_lower_bound(arm.mean(), arm.pulls, beta);
  arm.ub = kl_upper_bound(arm.mean(), arm.pulls, beta);
}

LucbResult kl_lucb_top(int n_arms, int j, double delta, double eps, const SampleFn& sample_fn,
                       int batch_per_pull, long max_pulls) {
  if (n_arms < 1 || j < 1 || j > n_arms)
    throw std::invalid_argument("kl_lucb_top: need 1 <= J <= n_arms");
  if (batch_per_pull < 1) throw std::invalid_argument("kl_lucb_top: batch_per_pull < 1");

  LucbResult res;
  res.arms.resize(n_arms);

  auto pull = [&](int arm, int n) {
    const int succ = sample_fn(arm, n);
    res.arms[arm].pulls += n;
    res.arms[arm].successes += succ;
    res.total_pulls += n;
  };

  // minimum one pull batch per arm before any bound matters
  for (int a = 0; a < n_arms; ++a) pull(a, batch_per_pull);

  auto by_mean_desc = [&](std::vector<int>& idx) {
    std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) {
      return res.arms[x].mean() > res.arms[y].mean();
    });
  };

  long t = 1;
  while (true) {
    const double beta = beta_schedule(t, n_arms, delta);
    for (auto& arm : res.arms) update_bounds(arm, beta);

    std::vector<int> idx(n_arms);
    std::iota(idx.begin(), idx.end(), 0);
    by_mean_desc(idx);
    res.top.assign(idx.begin(), idx.begin() + j);

    if (j == n_arms) {
      res.certified = true;
      return res;
    }
    // critical pair: weakest lower bound inside, strongest upper bound outside
    int weakest = res.top[0];
    for (int a : res.top)
      if (res.arms[a].lb < res.arms[weakest].lb) weakest = a;
    int challenger = idx[j];
    for (size_t k = j; k < idx.size(); ++k)
      if (res.arms[idx[k]].ub > res.arms[challenger].ub) challenger = idx[k];

    if (res.arms[challenger].ub - res.arms[weakest].lb < eps) {
      res.certified = true;
      return res;
    }
    if (res.total_pulls + 2L * batch_per_pull > max_pulls) {
      res.certified = false;  // budget exhausted; caller treats result as uncertain
      return res;
    }
    pull(weakest, batch_per_pull);
    pull(challenger, batch_per_pull);
    ++t;
  }
}

}  // namespace ganchors::bandit
