#include "ganchors/benchmark.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ganchors/perturb.hpp"
#include "ganchors/segmentation.hpp"

namespace ganchors {

using nlohmann::json;

namespace {

BatchSampleFn build_sampler(const std::string& mode, const RunConfig& cfg,
                            const Generator& g, const Image& x, const SegmentMap& seg,
                            const std::vector<Image>& stitch_pool,
                            const DiverseEncoder* enc) {
  SamplerConfig sc = cfg.sampler_config();
  if (mode == "stitch") return make_stitch_sampler(x, seg, stitch_pool);
  if (mode == "gan-batch-stats") {
    sc.bn_mode = diffnet::BnMode::BatchStats;
    return make_gan_sampler(g, x, seg, sc);
  }
  if (mode == "gan-running-stats") {
    sc.bn_mode = diffnet::BnMode::RunningStats;
    return make_gan_sampler(g, x, seg, sc);
  }
  if (mode == "gan-encoder") {
    if (!enc) throw std::runtime_error("mode gan-encoder requires a trained encoder");
    sc.bn_mode = cfg.bn_mode == "running-stats" ? diffnet::BnMode::RunningStats
                                                : diffnet::BnMode::BatchStats;
    return make_encoder_seeded_sampler(g, x, seg, sc, *enc);
  }
  throw std::runtime_error("unknown benchmark mode: " + mode);
}

}  // namespace

BenchmarkReport run_benchmark(const RunConfig& cfg, const LabeledDataset& ds,
                              const Classifier& f, const Generator& g,
                              const DiverseEncoder* enc, int trials,
                              const std::vector<std::string>& modes) {
  if (trials < 1) throw std::invalid_argument("run_benchmark: trials must be >= 1");
  if (ds.images.empty()) throw std::invalid_argument("run_benchmark: empty dataset");

  // One representative instance per class: the first occurrence in the dataset.
  std::vector<int> instances;
  for (int c = 0; c < ds.classes; ++c)
    for (size_t i = 0; i < ds.labels.size(); ++i)
      if (ds.labels[i] == c) {
        instances.push_back(static_cast<int>(i));
        break;
      }

  BenchmarkReport report;
  for (int idx : instances) {
    const Image& x = ds.images[static_cast<size_t>(idx)];
    auto search = find_max_dist_for_count(x, cfg.segment_target, 2.0);
    SegmentMap seg = quickshift(x, 2.0, search.max_dist);
    for (size_t mi = 0; mi < modes.size(); ++mi) {
      for (int trial = 0; trial < trials; ++trial) {
        BenchmarkRow row;
        row.instance = idx;
        row.label = ds.labels[static_cast<size_t>(idx)];
        row.mode = modes[mi];
        row.trial = trial;
        std::mt19937_64 rng(cfg.seed * 1000003ull +
                            static_cast<unsigned long>(idx) * 7919ull + mi * 101ull +
                            static_cast<unsigned long>(trial));
        try {
          BatchSampleFn sampler =
              build_sampler(modes[mi], cfg, g, x, seg, ds.images, enc);
          AnchorResult r = explain(x, f, seg, sampler, cfg.explain_config(), rng);
          row.wall_s = r.wall_time_s;
          row.anchor_size = static_cast<int>(r.anchor.size());
          row.precision = r.precision;
          row.lower_bound = r.lower_bound;
          row.coverage = r.coverage;
          row.samples = r.samples_drawn;
          row.best_effort = r.best_effort;
        } catch (const std::exception& e) {
          row.failed = true;
          row.error = e.what();
        }
        report.rows.push_back(std::move(row));
      }
    }
  }
  report.aggregates = aggregate_rows(report.rows);
  return report;
}

std::vector<ModeAggregate> aggregate_rows(const std::vector<BenchmarkRow>& rows) {
  std::map<std::string, ModeAggregate> by_mode;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (r.failed) continue;
    auto it = by_mode.find(r.mode);
    if (it == by_mode.end()) {
      order.push_back(r.mode);
      it = by_mode.emplace(r.mode, ModeAggregate{r.mode}).first;
    }
    auto& a = it->second;
    ++a.rows;
    a.mean_wall_s += r.wall_s;
    a.mean_anchor_size += r.anchor_size;
    a.mean_precision += r.precision;
    a.mean_lower_bound += r.lower_bound;
  }
  std::vector<ModeAggregate> out;
  for (const auto& mode : order) {
    ModeAggregate a = by_mode.at(mode);
    a.mean_wall_s /= a.rows;
    a.mean_anchor_size /= a.rows;
    a.mean_precision /= a.rows;
    a.mean_lower_bound /= a.rows;
    out.push_back(std::move(a));
  }
  return out;
}

json benchmark_to_json(const BenchmarkReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"instance", row.instance},
                    {"label", row.label},
                    {"mode", row.mode},
                    {"trial", row.trial},
                    {"wall_s", row.wall_s},
                    {"anchor_size", row.anchor_size},
                    {"precision", row.precision},
                    {"lower_bound", row.lower_bound},
                    {"coverage", row.coverage},
                    {"samples", row.samples},
                    {"best_effort", row.best_effort},
                    {"failed", row.failed},
                    {"error", row.error}});
  }
  json aggs = json::array();
  for (const auto& a : r.aggregates) {
    aggs.push_back({{"mode", a.mode},
                    {"rows", a.rows},
                    {"mean_wall_s", a.mean_wall_s},
                    {"mean_anchor_size", a.mean_anchor_size},
                    {"mean_precision", a.mean_precision},
                    {"mean_lower_bound", a.mean_lower_bound}});
  }
  return json{{"rows", rows}, {"aggregates", aggs}};
}

std::string benchmark_to_csv(const BenchmarkReport& r) {
  std::ostringstream out;
  out << "instance,label,mode,trial,wall_s,anchor_size,precision,lower_bound,"
         "coverage,samples,best_effort,failed\n";
  for (const auto& row : r.rows) {
    out << row.instance << ',' << row.label << ',' << row.mode << ',' << row.trial
        << ',' << row.wall_s << ',' << row.anchor_size << ',' << row.precision << ','
        << row.lower_bound << ',' << row.coverage << ',' << row.samples << ','
        << (row.best_effort ? 1 : 0) << ',' << (row.failed ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace ganchors
