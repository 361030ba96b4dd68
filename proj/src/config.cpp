#include "ganchors/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ganchors {

using nlohmann::json;

SamplerConfig RunConfig::sampler_config() const {
  SamplerConfig s;
  s.xi = xi;
  s.alpha = alpha;
  s.batch_size = batch_size;
  s.restart_interval = restart_interval;
  s.max_iters = max_iters;
  s.bn_mode = bn_mode == "running-stats" ? BnMode::RunningStats : BnMode::BatchStats;
  return s;
}

ExplainConfig RunConfig::explain_config() const {
  ExplainConfig e;
  e.tau = tau;
  e.delta = delta;
  e.eps = epsilon;
  e.beam_width = beam;
  e.pool_size = pool_size;
  e.batch_per_pull = batch_per_pull;
  e.max_samples = max_samples;
  return e;
}

void validate_config(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw std::runtime_error("config: " + msg); };
  if (!(c.tau > 0.0 && c.tau <= 1.0)) fail("tau must be in (0,1]");
  if (!(c.delta > 0.0 && c.delta < 1.0)) fail("delta must be in (0,1)");
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) fail("epsilon must be in (0,1)");
  if (c.beam < 1) fail("beam must be >= 1");
  if (!(c.xi > 0.0)) fail("xi must be positive");
  if (!(c.alpha > 0.0)) fail("alpha must be positive");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (c.restart_interval < 1) fail("restart_interval must be >= 1");
  if (c.max_iters < 1) fail("max_iters must be >= 1");
  if (c.sampler != "gan" && c.sampler != "stitch") fail("sampler must be gan|stitch");
  if (c.bn_mode != "batch-stats" && c.bn_mode != "running-stats")
    fail("bn_mode must be batch-stats|running-stats");
  if (c.segment_target < 1) fail("segment_target must be >= 1");
  if (c.pool_size < 100) fail("pool_size must be >= 100");
  if (c.batch_per_pull < 1) fail("batch_per_pull must be >= 1");
  if (c.max_samples < 1) fail("max_samples must be >= 1");
}

RunConfig config_from_json(const json& j) {
  static const std::set<std::string> known{
      "tau", "delta", "epsilon", "beam", "xi", "alpha", "batch_size",
      "restart_interval", "max_iters", "sampler", "bn_mode", "segment_target",
      "pool_size", "batch_per_pull", "max_samples", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::runtime_error("config: unknown key '" + it.key() + "'");

  RunConfig c;
  c.tau = j.value("tau", c.tau);
  c.delta = j.value("delta", c.delta);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.beam = j.value("beam", c.beam);
  c.xi = j.value("xi", c.xi);
  c.alpha = j.value("alpha", c.alpha);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.restart_interval = j.value("restart_interval", c.restart_interval);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.sampler = j.value("sampler", c.sampler);
  c.bn_mode = j.value("bn_mode", c.bn_mode);
  c.segment_target = j.value("segment_target", c.segment_target);
  c.pool_size = j.value("pool_size", c.pool_size);
  c.batch_per_pull = j.value("batch_per_pull", c.batch_per_pull);
  c.max_samples = j.value("max_samples", c.max_samples);
  c.seed = j.value("seed", c.seed);
  validate_config(c);
  return c;
}

json config_to_json(const RunConfig& c) {
  return json{{"tau", c.tau},
              {"delta", c.delta},
              {"epsilon", c.epsilon},
              {"beam", c.beam},
              {"xi", c.xi},
              {"alpha", c.alpha},
              {"batch_size", c.batch_size},
              {"restart_interval", c.restart_interval},
              {"max_iters", c.max_iters},
              {"sampler", c.sampler},
              {"bn_mode", c.bn_mode},
              {"segment_target", c.segment_target},
              {"pool_size", c.pool_size},
              {"batch_per_pull", c.batch_per_pull},
              {"max_samples", c.max_samples},
              {"seed", c.seed}};
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config: malformed JSON in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace ganchors
