#pragma once

// Benchmark harness: per-(instance, sampler-mode) explanation runs with
// wall time / anchor size / precision columns, plus recomputable aggregates.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ganchors/anchors.hpp"
#include "ganchors/config.hpp"
#include "ganchors/dataio.hpp"
#include "ganchors/encoder.hpp"

namespace ganchors {

struct BenchmarkRow {
  int instance = 0;
  int label = 0;
  std::string mode;
  int trial = 0;
  double wall_s = 0.0;
  int anchor_size = 0;
  double precision = 0.0;
  double lower_bound = 0.0;
  double coverage = 0.0;
  long samples = 0;
  long iterations = -1;  // mean sampler iterations per accepted sample; -1 if n/a
  bool best_effort = false;
  bool failed = false;
  std::string error;
};

struct ModeAggregate {
  std::string mode;
  long rows = 0;
  double mean_wall_s = 0.0;
  double mean_anchor_size = 0.0;
  double mean_precision = 0.0;
  double mean_lower_bound = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::vector<ModeAggregate> aggregates;
};

inline const std::vector<std::string> kBenchmarkModes{
    "stitch", "gan-batch-stats", "gan-running-stats", "gan-encoder"};

// One representative instance per class, `trials` runs per sampler mode.
// Per-row failures are recorded and the run continues.
BenchmarkReport run_benchmark(const RunConfig& cfg, const LabeledDataset& ds,
                              const Classifier& f, const Generator& g,
                              const DiverseEncoder* enc, int trials,
                              const std::vector<std::string>& modes = kBenchmarkModes);

std::vector<ModeAggregate> aggregate_rows(const std::vector<BenchmarkRow>& rows);

nlohmann::json benchmark_to_json(const BenchmarkReport& r);
std::string benchmark_to_csv(const BenchmarkReport& r);

}  // namespace ganchors
