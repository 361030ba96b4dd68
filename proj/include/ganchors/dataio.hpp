#pragma once

// Datasets (procedural blob-world, IDX files), image file IO, and classifier
// training/persistence.

#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ganchors/diffnet.hpp"
#include "ganchors/generators.hpp"
#include "ganchors/image.hpp"

namespace ganchors {

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int classes = 0;
  std::string source;
  unsigned seed = 0;
};

// Procedural dataset on the analytic-blob manifold: images are generate(z)
// for z ~ N(0,1)^d, labeled by the quadrant of the dominant blob center
// (C = 4). Boundary centers go to the lower-index quadrant.
LabeledDataset gen_blob_world(int n, unsigned seed, const AnalyticBlobParams& params = {});
int blob_world_label(const AnalyticBlobParams& params, const Vector& z);

// Big-endian IDX pair (magic 0x00000803 images / 0x00000801 labels), pixels
// scaled to [0,1] by /255.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);
std::vector<Image> load_idx_images(const std::string& images_path);
void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path);

struct NetClassifier {
  diffnet::Network net;  // ends in C logits
  int predict(const Image& img) const;
  int classes() const { return net.output_dim(); }
};

struct ClassifierTrainReport {
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> epoch_losses;
};

// Softmax cross-entropy with Adam; the last 20% of the dataset is held out
// for validation accuracy.
NetClassifier train_classifier(const LabeledDataset& ds, const std::vector<int>& hidden,
                               int epochs, std::mt19937_64& rng,
                               ClassifierTrainReport* report = nullptr);

void save_classifier(const NetClassifier& c, const std::string& path);
NetClassifier load_classifier(const std::string& path);

// Binary PGM (P5, maxval 255); round half up, so round-trip error <= 1/510.
void save_pgm(const Image& img, const std::string& path);
Image load_pgm(const std::string& path);

}  // namespace ganchors
