#pragma once

// One validated configuration document for the CLI; unknown keys are
// rejected, every field is range-checked at load.

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "ganchors/anchors.hpp"
#include "ganchors/perturb.hpp"

namespace ganchors {

struct RunConfig {
  double tau = 0.95;
  double delta = 0.1;
  double epsilon = 0.1;
  int beam = 4;
  double xi = 0.05;
  double alpha = 0.05;
  int batch_size = 64;
  long restart_interval = 1000;
  long max_iters = 20000;
  std::string sampler = "gan";         // gan | stitch
  std::string bn_mode = "batch-stats"; // batch-stats | running-stats
  int segment_target = 15;
  int pool_size = 1000;
  int batch_per_pull = 10;
  long max_samples = 100000;
  unsigned long seed = 0;

  SamplerConfig sampler_config() const;
  ExplainConfig explain_config() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);
void validate_config(const RunConfig& c);

}  // namespace ganchors
