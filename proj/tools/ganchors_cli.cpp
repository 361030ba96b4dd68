// Command-line surface: dataset generation, segmentation, perturbation
// sampling, anchor explanation, model training, and the benchmark harness.
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ganchors/anchors.hpp"
#include "ganchors/benchmark.hpp"
#include "ganchors/config.hpp"
#include "ganchors/dataio.hpp"
#include "ganchors/encoder.hpp"
#include "ganchors/generators.hpp"
#include "ganchors/perturb.hpp"
#include "ganchors/segmentation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ganchors;

namespace {

fs::path prepare_out_dir(const std::string& out_dir) {
  fs::path p(out_dir);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out << j.dump(1) << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out << text;
}

Generator load_generator_arg(const std::string& arg) {
  if (arg == "analytic") return Generator::analytic(AnalyticBlobParams{});
  return load_generator(arg);
}

std::vector<int> parse_anchor(const std::string& spec, int segment_count) {
  std::vector<int> out;
  std::string token;
  std::istringstream in(spec);
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    out.push_back(std::stoi(token));
  }
  return normalize_anchor(out, segment_count);
}

SegmentMap segment_for_target(const Image& img, int target, double kernel) {
  auto search = find_max_dist_for_count(img, target, kernel);
  return quickshift(img, kernel, search.max_dist);
}

json anchor_result_json(const AnchorResult& r) {
  return json{{"anchor", r.anchor},
              {"precision", r.precision},
              {"lower_bound", r.lower_bound},
              {"coverage", r.coverage},
              {"samples_drawn", r.samples_drawn},
              {"wall_time_s", r.wall_time_s},
              {"tau", r.tau},
              {"delta", r.delta},
              {"best_effort", r.best_effort}};
}

// ---- gen-dataset -----------------------------------------------------------

struct GenDatasetOpts {
  int n = 200;
  unsigned long seed = 0;
  std::string out_dir;
};

int cmd_gen_dataset(const GenDatasetOpts& o) {
  fs::path out = prepare_out_dir(o.out_dir);
  LabeledDataset ds = gen_blob_world(o.n, static_cast<unsigned>(o.seed));
  save_idx(ds, (out / "images.idx").string(), (out / "labels.idx").string());
  std::vector<long> per_class(static_cast<size_t>(ds.classes), 0);
  for (int l : ds.labels) ++per_class[static_cast<size_t>(l)];
  write_json(out / "dataset.json", json{{"n", o.n},
                                        {"seed", o.seed},
                                        {"classes", ds.classes},
                                        {"per_class", per_class},
                                        {"height", ds.images[0].h},
                                        {"width", ds.images[0].w}});
  for (int i = 0; i < std::min(4, o.n); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%02d.pgm", i);
    save_pgm(ds.images[static_cast<size_t>(i)], (out / name).string());
  }
  return 0;
}

// ---- segment ---------------------------------------------------------------

struct SegmentOpts {
  std::string image;
  std::string algo = "quickshift";
  int segments = 15;
  double kernel = 2.0;
  double compactness = 10.0;
  std::string out_dir;
};

int cmd_segment(const SegmentOpts& o) {
  fs::path out = prepare_out_dir(o.out_dir);
  Image img = load_pgm(o.image);
  SegmentMap seg;
  json extra;
  if (o.algo == "quickshift") {
    auto search = find_max_dist_for_count(img, o.segments, o.kernel);
    seg = quickshift(img, o.kernel, search.max_dist);
    extra = {{"max_dist", search.max_dist}, {"exact", search.exact}};
  } else if (o.algo == "slic") {
    seg = slic(img, o.segments, o.compactness);
    extra = {{"compactness", o.compactness}};
  } else {
    throw CLI::ValidationError("--algo must be quickshift or slic");
  }
  Image labels(seg.h, seg.w);
  double denom = seg.count > 1 ? seg.count - 1.0 : 1.0;
  for (size_t k = 0; k < labels.pix.size(); ++k) labels.pix[k] = seg.labels[k] / denom;
  save_pgm(labels, (out / "labels.pgm").string());
  json report{{"segments", seg.count}, {"algo", o.algo}};
  report.update(extra);
  write_json(out / "segments.json", report);
  std::cout << "segments: " << seg.count << "\n";
  return 0;
}

// ---- sample ----------------------------------------------------------------

struct SampleOpts {
  std::string image;
  int segments = 15;
  std::string anchor;
  double xi = 0.05;
  int n = 8;
  std::string mode = "gan";
  std::string generator = "analytic";
  std::string dataset;  // images.idx for stitch mode
  unsigned long seed = 0;
  std::string out_dir;
};

int cmd_sample(const SampleOpts& o) {
  fs::path out = prepare_out_dir(o.out_dir);
  Image x = load_pgm(o.image);
  SegmentMap seg = segment_for_target(x, o.segments, 2.0);
  AnchorSet anchor;
  try {
    anchor = parse_anchor(o.anchor, seg.count);
  } catch (const std::exception& e) {
    throw CLI::ValidationError(std::string("--anchor: ") + e.what());
  }
  std::mt19937_64 rng(o.seed);
  auto t0 = std::chrono::steady_clock::now();
  json manifest;
  manifest["mode"] = o.mode;
  manifest["anchor"] = anchor;
  manifest["segments"] = seg.count;
  json rows = json::array();
  std::vector<Image> images;
  if (o.mode == "gan") {
    Generator g = load_generator_arg(o.generator);
    BinaryMask a = mask_from_anchor(seg, anchor);
    Image x_hat(x.h, x.w);
    for (size_t k = 0; k < x.pix.size(); ++k) x_hat.pix[k] = a.pix[k] * x.pix[k];
    SamplerConfig cfg;
    cfg.xi = o.xi;
    std::vector<double> thresholds(static_cast<size_t>(o.n));
    for (auto& t : thresholds) t = sample_threshold(o.xi, rng);
    auto samples = sample_batch(g, thresholds, a, x_hat, cfg, rng);
    for (const auto& s : samples) {
      rows.push_back({{"mse", s.mse}, {"threshold", s.threshold}, {"iterations", s.iterations}});
      images.push_back(s.y);
    }
  } else if (o.mode == "stitch") {
    if (o.dataset.empty())
      throw CLI::ValidationError("--mode stitch requires --dataset (an IDX image file)");
    std::vector<Image> pool = load_idx_images(o.dataset);
    BinaryMask a = mask_from_anchor(seg, anchor);
    for (int i = 0; i < o.n; ++i) {
      images.push_back(stitch_sample(x, a, pool, rng));
      rows.push_back({{"mse", 0.0}, {"threshold", 0.0}, {"iterations", 0}});
    }
  } else {
    throw CLI::ValidationError("--mode must be gan or stitch");
  }
  for (size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%03zu.pgm", i);
    save_pgm(images[i], (out / name).string());
  }
  manifest["samples"] = rows;
  manifest["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(out / "manifest.json", manifest);
  return 0;
}

// ---- explain ---------------------------------------------------------------

struct ExplainOpts {
  std::string image;
  std::string classifier;
  std::string generator = "analytic";
  std::string dataset;
  std::string encoder;
  std::string config;
  std::string out_dir;
  RunConfig cfg;
  CLI::App* sub = nullptr;
};

int cmd_explain(ExplainOpts& o) {
  fs::path out = prepare_out_dir(o.out_dir);
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  // Flags override config-file values.
  auto overridden = [&](const std::string& flag) { return o.sub->count(flag) > 0; };
  if (overridden("--tau")) cfg.tau = o.cfg.tau;
  if (overridden("--delta")) cfg.delta = o.cfg.delta;
  if (overridden("--epsilon")) cfg.epsilon = o.cfg.epsilon;
  if (overridden("--beam")) cfg.beam = o.cfg.beam;
  if (overridden("--xi")) cfg.xi = o.cfg.xi;
  if (overridden("--sampler")) cfg.sampler = o.cfg.sampler;
  if (overridden("--bn-mode")) cfg.bn_mode = o.cfg.bn_mode;
  if (overridden("--segments")) cfg.segment_target = o.cfg.segment_target;
  if (overridden("--max-samples")) cfg.max_samples = o.cfg.max_samples;
  if (overridden("--seed")) cfg.seed = o.cfg.seed;
  validate_config(cfg);

  Image x = load_pgm(o.image);
  NetClassifier clf = load_classifier(o.classifier);
  Classifier f = [&clf](const Image& img) { return clf.predict(img); };
  SegmentMap seg = segment_for_target(x, cfg.segment_target, 2.0);

  BatchSampleFn sampler;
  Generator g = Generator::analytic(AnalyticBlobParams{});
  std::vector<Image> stitch_pool;
  if (cfg.sampler == "gan") {
    g = load_generator_arg(o.generator);
    if (!o.encoder.empty()) {
      DiverseEncoder enc = load_encoder(o.encoder);
      static DiverseEncoder enc_store;  // keep alive for the sampler closure
      enc_store = enc;
      sampler = make_encoder_seeded_sampler(g, x, seg, cfg.sampler_config(), enc_store);
    } else {
      sampler = make_gan_sampler(g, x, seg, cfg.sampler_config());
    }
  } else if (cfg.sampler == "stitch") {
    if (o.dataset.empty())
      throw CLI::ValidationError("--sampler stitch requires --dataset (an IDX image file)");
    stitch_pool = load_idx_images(o.dataset);
    sampler = make_stitch_sampler(x, seg, stitch_pool);
  } else {
    throw CLI::ValidationError("sampler must be gan or stitch");
  }

  std::mt19937_64 rng(cfg.seed);
  AnchorResult r = explain(x, f, seg, sampler, cfg.explain_config(), rng);

  json report = anchor_result_json(r);
  report["label"] = f(x);
  report["segments"] = seg.count;
  report["config"] = config_to_json(cfg);
  write_json(out / "explain.json", report);

  // Overlay: anchor pixels kept, everything else dimmed.
  BinaryMask a = mask_from_anchor(seg, r.anchor);
  Image overlay(x.h, x.w);
  for (size_t k = 0; k < x.pix.size(); ++k)
    overlay.pix[k] = a.pix[k] > 0.5 ? x.pix[k] : 0.3 * x.pix[k];
  save_pgm(overlay, (out / "overlay.pgm").string());

  std::cout << "anchor:";
  for (int s : r.anchor) std::cout << ' ' << s;
  std::cout << "  precision=" << r.precision << "  lb=" << r.lower_bound
            << (r.best_effort ? "  (best effort)" : "") << "\n";
  return 0;
}

// ---- train-classifier ------------------------------------------------------

struct TrainClassifierOpts {
  std::string images, labels;
  std::vector<int> hidden{32};
  int epochs = 20;
  unsigned long seed = 0;
  std::string out_dir;
};

int cmd_train_classifier(const TrainClassifierOpts& o) {
  fs::path out = prepare_out_dir(o.out_dir);
  LabeledDataset ds = load_idx(o.images, o.labels);
  std::mt19937_64 rng(o.seed);
  ClassifierTrainReport rep;
  NetClassifier clf = train_classifier(ds, o.hidden, o.epochs, rng, &rep);
  save_classifier(clf, (out / "classifier.json").string());
  write_json(out / "train_report.json", json{{"train_accuracy", rep.train_accuracy},
                                             {"val_accuracy", rep.val_accuracy},
                                             {"epoch_losses", rep.epoch_losses},
                                             {"epochs", o.epochs},
                                             {"hidden", o.hidden},
                                             {"seed", o.seed}});
  std::cout << "val accuracy: " << rep.val_accuracy << "\n";
  return 0;
}

// ---- train-encoder ---------------------------------------------------------

struct TrainEncoderOpts {
  std::string generator = "analytic";
  std::string images;
  int n_encodings = 3;
  double lambda = 1.0;
  double t = 10.0;
  double rho = 0.0;
  int epochs = 1;
  int segments = 15;
  std::vector<int> hidden{64};
  unsigned long seed = 0;
  std::string out_dir;
};

int cmd_train_encoder(const TrainEncoderOpts& o) {
  fs::path out = prepare_out_dir(o.out_dir);
  Generator g = load_generator_arg(o.generator);
  std::vector<Image> images = load_idx_images(o.images);
  std::mt19937_64 rng(o.seed);
  DiverseEncoder enc = make_encoder(g.height() * g.width(), o.hidden, g.latent_dim(),
                                    o.n_encodings, rng);
  enc.lambda = o.lambda;
  enc.t = o.t;
  enc.rho = o.rho;
  std::vector<SegmentMap> segmaps;
  segmaps.reserve(images.size());
  for (const auto& img : images)
    segmaps.push_back(segment_for_target(img, o.segments, 2.0));
  EncoderTrainConfig cfg;
  cfg.epochs = o.epochs;
  auto t0 = std::chrono::steady_clock::now();
  EncoderTrainTrace trace = train_encoder(enc, g, images, segmaps, cfg, rng);
  double train_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_encoder(enc, (out / "encoder.json").string());
  write_json(out / "encoder_report.json",
             json{{"steps", trace.steps},
                  {"final_batch_loss",
                   trace.batch_losses.empty() ? 0.0 : trace.batch_losses.back()},
                  {"training_time_s", train_s},
                  {"n_encodings", o.n_encodings},
                  {"lambda", o.lambda},
                  {"t", o.t},
                  {"epochs", o.epochs},
                  {"seed", o.seed}});
  return 0;
}

// ---- benchmark -------------------------------------------------------------

struct BenchmarkOpts {
  std::string images, labels;
  std::string classifier;
  std::string generator = "analytic";
  std::string encoder;
  std::string config;
  int trials = 3;
  std::vector<std::string> modes;
  unsigned long seed = 0;
  std::string out_dir;
  CLI::App* sub = nullptr;
};

int cmd_benchmark(const BenchmarkOpts& o) {
  fs::path out = prepare_out_dir(o.out_dir);
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.sub->count("--seed")) cfg.seed = o.seed;
  validate_config(cfg);
  LabeledDataset ds = load_idx(o.images, o.labels);
  NetClassifier clf = load_classifier(o.classifier);
  Classifier f = [&clf](const Image& img) { return clf.predict(img); };
  Generator g = load_generator_arg(o.generator);
  DiverseEncoder enc;
  bool have_enc = !o.encoder.empty();
  if (have_enc) enc = load_encoder(o.encoder);
  std::vector<std::string> modes = o.modes.empty() ? kBenchmarkModes : o.modes;
  if (!have_enc)
    std::erase(modes, std::string("gan-encoder"));
  BenchmarkReport report =
      run_benchmark(cfg, ds, f, g, have_enc ? &enc : nullptr, o.trials, modes);
  write_json(out / "benchmark.json", benchmark_to_json(report));
  write_text(out / "benchmark.csv", benchmark_to_csv(report));
  for (const auto& a : report.aggregates)
    std::cout << a.mode << ": mean wall " << a.mean_wall_s << " s, mean size "
              << a.mean_anchor_size << ", mean precision " << a.mean_precision << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchor explanations via generator latent-space sampling"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  GenDatasetOpts gd;
  auto* s_gd = app.add_subcommand("gen-dataset", "Generate the procedural blob-world dataset");
  s_gd->add_option("--n", gd.n, "Number of images")->check(CLI::PositiveNumber);
  s_gd->add_option("--seed", gd.seed, "RNG seed");
  s_gd->add_option("--out-dir", gd.out_dir, "Output directory")->required();

  SegmentOpts sg;
  auto* s_sg = app.add_subcommand("segment", "Superpixel segmentation of a PGM image");
  s_sg->add_option("--image", sg.image, "Input PGM")->required();
  s_sg->add_option("--algo", sg.algo, "quickshift | slic");
  s_sg->add_option("--segments", sg.segments, "Target segment count")->check(CLI::PositiveNumber);
  s_sg->add_option("--kernel-size", sg.kernel, "Quickshift density bandwidth");
  s_sg->add_option("--compactness", sg.compactness, "SLIC compactness");
  s_sg->add_option("--out-dir", sg.out_dir, "Output directory")->required();

  SampleOpts sp;
  auto* s_sp = app.add_subcommand("sample", "Draw perturbation samples for an anchor");
  s_sp->add_option("--image", sp.image, "Input PGM")->required();
  s_sp->add_option("--segments", sp.segments, "Target segment count")->check(CLI::PositiveNumber);
  s_sp->add_option("--anchor", sp.anchor, "Comma-separated segment ids, e.g. 1,4,7")->required();
  s_sp->add_option("--xi", sp.xi, "Acceptance threshold")->check(CLI::PositiveNumber);
  s_sp->add_option("--n", sp.n, "Number of samples")->check(CLI::PositiveNumber);
  s_sp->add_option("--mode", sp.mode, "gan | stitch");
  s_sp->add_option("--generator", sp.generator, "Generator weights JSON, or 'analytic'");
  s_sp->add_option("--dataset", sp.dataset, "IDX image file (stitch mode)");
  s_sp->add_option("--seed", sp.seed, "RNG seed");
  s_sp->add_option("--out-dir", sp.out_dir, "Output directory")->required();

  ExplainOpts ex;
  auto* s_ex = app.add_subcommand("explain", "Compute an anchor explanation");
  s_ex->add_option("--image", ex.image, "Input PGM")->required();
  s_ex->add_option("--classifier", ex.classifier, "Classifier weights JSON")->required();
  s_ex->add_option("--generator", ex.generator, "Generator weights JSON, or 'analytic'");
  s_ex->add_option("--dataset", ex.dataset, "IDX image file (stitch sampler)");
  s_ex->add_option("--encoder", ex.encoder, "Encoder weights JSON (seeded init)");
  s_ex->add_option("--config", ex.config, "RunConfig JSON; flags override");
  s_ex->add_option("--tau", ex.cfg.tau, "Precision target");
  s_ex->add_option("--delta", ex.cfg.delta, "Failure probability");
  s_ex->add_option("--epsilon", ex.cfg.epsilon, "Bandit slack");
  s_ex->add_option("--beam", ex.cfg.beam, "Beam width");
  s_ex->add_option("--xi", ex.cfg.xi, "Sampler acceptance threshold");
  s_ex->add_option("--sampler", ex.cfg.sampler, "gan | stitch");
  s_ex->add_option("--bn-mode", ex.cfg.bn_mode, "batch-stats | running-stats");
  s_ex->add_option("--segments", ex.cfg.segment_target, "Target segment count");
  s_ex->add_option("--max-samples", ex.cfg.max_samples, "Sampling budget cap");
  s_ex->add_option("--seed", ex.cfg.seed, "RNG seed");
  s_ex->add_option("--out-dir", ex.out_dir, "Output directory")->required();
  ex.sub = s_ex;

  TrainClassifierOpts tc;
  auto* s_tc = app.add_subcommand("train-classifier", "Train the dense softmax classifier");
  s_tc->add_option("--images", tc.images, "IDX image file")->required();
  s_tc->add_option("--labels", tc.labels, "IDX label file")->required();
  s_tc->add_option("--hidden", tc.hidden, "Hidden layer widths");
  s_tc->add_option("--epochs", tc.epochs, "Training epochs")->check(CLI::PositiveNumber);
  s_tc->add_option("--seed", tc.seed, "RNG seed");
  s_tc->add_option("--out-dir", tc.out_dir, "Output directory")->required();

  TrainEncoderOpts te;
  auto* s_te = app.add_subcommand("train-encoder", "Train the diverse latent encoder");
  s_te->add_option("--generator", te.generator, "Generator weights JSON, or 'analytic'");
  s_te->add_option("--images", te.images, "IDX image file")->required();
  s_te->add_option("--n-encodings", te.n_encodings, "Latents per image")->check(CLI::PositiveNumber);
  s_te->add_option("--lambda", te.lambda, "Diversity weight");
  s_te->add_option("--t", te.t, "Target pairwise encoding distance");
  s_te->add_option("--rho", te.rho, "L2 weight on encodings");
  s_te->add_option("--epochs", te.epochs, "Training epochs")->check(CLI::PositiveNumber);
  s_te->add_option("--segments", te.segments, "Target segment count");
  s_te->add_option("--hidden", te.hidden, "Hidden layer widths");
  s_te->add_option("--seed", te.seed, "RNG seed");
  s_te->add_option("--out-dir", te.out_dir, "Output directory")->required();

  BenchmarkOpts bm;
  auto* s_bm = app.add_subcommand("benchmark", "Compare sampler modes on class representatives");
  s_bm->add_option("--images", bm.images, "IDX image file")->required();
  s_bm->add_option("--labels", bm.labels, "IDX label file")->required();
  s_bm->add_option("--classifier", bm.classifier, "Classifier weights JSON")->required();
  s_bm->add_option("--generator", bm.generator, "Generator weights JSON, or 'analytic'");
  s_bm->add_option("--encoder", bm.encoder, "Encoder weights JSON");
  s_bm->add_option("--config", bm.config, "RunConfig JSON; flags override");
  s_bm->add_option("--trials", bm.trials, "Trials per mode")->check(CLI::PositiveNumber);
  s_bm->add_option("--modes", bm.modes, "Subset of sampler modes");
  s_bm->add_option("--seed", bm.seed, "RNG seed");
  s_bm->add_option("--out-dir", bm.out_dir, "Output directory")->required();
  bm.sub = s_bm;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help text, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (s_gd->parsed()) return cmd_gen_dataset(gd);
    if (s_sg->parsed()) return cmd_segment(sg);
    if (s_sp->parsed()) return cmd_sample(sp);
    if (s_ex->parsed()) return cmd_explain(ex);
    if (s_tc->parsed()) return cmd_train_classifier(tc);
    if (s_te->parsed()) return cmd_train_encoder(te);
    if (s_bm->parsed()) return cmd_benchmark(bm);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
