#include "ganchors/anchors.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <stdexcept>

namespace ganchors {

std::vector<AnchorSet> make_coverage_pool(int segment_count, int m, double p,
                                          std::mt19937_64& rng) {
  if (m < 1) throw std::invalid_argument("make_coverage_pool: m must be >= 1");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<AnchorSet> pool;
  pool.reserve(m);
  for (int i = 0; i < m; ++i) {
    AnchorSet a;
    for (int s = 0; s < segment_count; ++s)
      if (u(rng) < p) a.push_back(s);
    pool.push_back(std::move(a));
  }
  return pool;
}

double coverage(const AnchorSet& a, const std::vector<AnchorSet>& pool) {
  if (pool.empty()) throw std::invalid_argument("coverage: empty pool");
  long hits = 0;
  for (const AnchorSet& z : pool)
    if (std::includes(z.begin(), z.end(), a.begin(), a.end())) ++hits;
  return static_cast<double>(hits) / pool.size();
}

std::vector<AnchorSet> extend_candidates(const std::vector<AnchorSet>& beam,
                                         int segment_count) {
  std::set<AnchorSet> seen;
  std::vector<AnchorSet> out;
  for (const AnchorSet& base : beam) {
    for (int s = 0; s < segment_count; ++s) {
      if (std::binary_search(base.begin(), base.end(), s)) continue;
      AnchorSet ext = base;
      ext.insert(std::lower_bound(ext.begin(), ext.end(), s), s);
      if (seen.insert(ext).second) out.push_back(std::move(ext));
    }
  }
  return out;
}

int estimate_precision_outcome(const AnchorSet& a, const Image& x, const Classifier& f,
                               const BatchSampleFn& sampler, std::mt19937_64& rng) {
  const int target = f(x);
  auto imgs = sampler(a, 1, rng);
  return f(imgs.at(0)) == target ? 1 : 0;
}

namespace {

struct AbortExplain {};  // sampler budget exhausted; finish best-effort

struct Evaluated {
  AnchorSet set;
  bandit::BanditArmState arm;
  double coverage = 0.0;
};

bool better_result(const Evaluated& a, const Evaluated& b) {
  // coverage, then lower bound, then smaller anchor, then lexicographic
  if (a.coverage != b.coverage) return a.coverage > b.coverage;
  if (a.arm.lb != b.arm.lb) return a.arm.lb > b.arm.lb;
  if (a.set.size() != b.set.size()) return a.set.size() < b.set.size();
  return a.set < b.set;
}

}  // namespace

AnchorResult explain(const Image& x, const Classifier& f, const SegmentMap& seg,
                     const BatchSampleFn& sampler, const ExplainConfig& cfg,
                     std::mt19937_64& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.tau <= 0.0 || cfg.tau > 1.0 || cfg.delta <= 0.0 || cfg.delta >= 1.0)
    throw std::invalid_argument("explain: tau/delta out of range");

  const int s_count = seg.count;
  const int max_size =
      cfg.max_anchor_size < 0 ? s_count : std::min(cfg.max_anchor_size, s_count);
  const int target = f(x);
  auto pool = make_coverage_pool(s_count, cfg.pool_size, 0.5, rng);

  // confidence split: one bandit invocation per level plus the empty-anchor test
  const double delta_level = cfg.delta / (max_size + 1);

  long samples_drawn = 0;
  auto sample_outcomes = [&](const AnchorSet& a, int n) -> int {
    if (samples_drawn + n > cfg.max_samples) throw AbortExplain{};
    std::vector<Image> imgs;
    try {
      imgs = sampler(a, n, rng);
    } catch (const BudgetExhausted&) {
      throw AbortExplain{};
    }
    samples_drawn += n;
    int succ = 0;
    for (const Image& im : imgs)
      if (f(im) == target) ++succ;
    return succ;
  };

  std::vector<Evaluated> valid;
  Evaluated best_seen;  // highest precision lower bound, for best-effort fallback
  bool have_best = false;

  auto note = [&](const Evaluated& e) {
    if (!have_best || e.arm.lb > best_seen.arm.lb) {
      best_seen = e;
      have_best = true;
    }
  };

  // pull until the bound certifies prec >= tau or refutes it
  auto certify = [&](Evaluated& e) -> bool {
    long round = 1;
    while (true) {
      const double beta = bandit::beta_schedule(round, 1, delta_level);
      bandit::update_bounds(e.arm, beta);
      if (e.arm.lb >= cfg.tau) return true;
      if (e.arm.ub < cfg.tau) return false;
      if (e.arm.pulls >= cfg.validation_pulls) return false;
      e.arm.successes += sample_outcomes(e.set, cfg.batch_per_pull);
      e.arm.pulls += cfg.batch_per_pull;
      ++round;
    }
  };

  try {
    // level 0: the empty anchor (a constant classifier needs nothing anchored)
    {
      Evaluated e;
      e.set = {};
      e.coverage = coverage(e.set, pool);
      if (certify(e)) valid.push_back(e);
      note(e);
    }

    std::vector<AnchorSet> beam{AnchorSet{}};
    for (int level = 1; level <= max_size && valid.empty(); ++level) {
      auto cands = extend_candidates(beam, s_count);
      if (cands.empty()) break;
      const int j = std::min<int>(cfg.beam_width, static_cast<int>(cands.size()));

      auto lucb = bandit::kl_lucb_top(
          static_cast<int>(cands.size()), j, delta_level, cfg.eps,
          [&](int arm, int n) { return sample_outcomes(cands[arm], n); },
          cfg.batch_per_pull, cfg.max_samples - samples_drawn);

      beam.clear();
      for (int idx : lucb.top) {
        Evaluated e;
        e.set = cands[idx];
        e.arm = lucb.arms[idx];
        e.coverage = coverage(e.set, pool);
        if (certify(e)) valid.push_back(e);
        note(e);
        beam.push_back(cands[idx]);
      }
    }
  } catch (const AbortExplain&) {
    // fall through to the best-effort result
  }

  AnchorResult res;
  res.tau = cfg.tau;
  res.delta = cfg.delta;
  res.samples_drawn = samples_drawn;

  // a certified candidate keeps its guarantee even if the budget ran out later
  if (!valid.empty()) {
    auto best = std::min_element(valid.begin(), valid.end(),
                                 [](const Evaluated& a, const Evaluated& b) {
                                   return better_result(a, b);
                                 });
    res.anchor = best->set;
    res.precision = best->arm.mean();
    res.lower_bound = best->arm.lb;
    res.coverage = best->coverage;
    res.best_effort = false;
  } else if (have_best) {
    res.anchor = best_seen.set;
    res.precision = best_seen.arm.mean();
    res.lower_bound = best_seen.arm.lb;
    res.coverage = best_seen.coverage;
    res.best_effort = true;
  } else {
    res.best_effort = true;
  }
  res.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace ganchors
