#pragma once

// Differentiable generators G: R^d -> Image. Two variants:
//  - analytic-blob: a closed-form renderer with a known manifold, used for
//    exact recoverability tests;
//  - mlp: a sequential dense/batchnorm/activation stack loaded from a weight
//    file, with a fixed sigmoid output so pixels stay in [0,1].

#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ganchors/diffnet.hpp"
#include "ganchors/image.hpp"

namespace ganchors {

using diffnet::BnMode;
using diffnet::Matrix;
using diffnet::Vector;

struct AnalyticBlobParams {
  int h = 16;
  int w = 16;
  int blobs = 2;        // latent dim is 4 per blob
  double sharpness = 4.0;
};

class Generator {
 public:
  static Generator analytic(const AnalyticBlobParams& p);
  static Generator mlp(diffnet::Network net);

  int latent_dim() const;
  int height() const;
  int width() const;
  bool is_analytic() const { return std::holds_alternative<AnalyticBlobParams>(model_); }
  bool has_batchnorm() const;

  // Deterministic and total on finite z; output pixels in [0,1].
  Image generate(const Vector& z, BnMode mode = BnMode::RunningStats) const;

  // In running-stats mode row i equals generate(z_i); in batch-stats mode the
  // outputs are coupled through the batch statistics of the MLP's batch-norm
  // layers (expected behavior during sampling).
  std::vector<Image> generate_batch(const Matrix& zs, BnMode mode) const;

  // Exact gradient of sum_pixels upstream(i,j) * generate(z)(i,j) w.r.t. z.
  Vector grad_wrt_latent(const Vector& z, const Image& upstream,
                         BnMode mode = BnMode::RunningStats) const;

  // Batch version; row i is the gradient for latent i. In batch-stats mode the
  // cross-latent coupling through batch statistics is included.
  Matrix grad_wrt_latent_batch(const Matrix& zs, const std::vector<Image>& upstreams,
                               BnMode mode) const;

  // Batched images and latent gradients from one shared forward pass.
  std::pair<std::vector<Image>, Matrix> batch_images_and_grads(
      const Matrix& zs, const std::vector<Image>& upstreams, BnMode mode) const;

  nlohmann::json to_json() const;
  static Generator from_json(const nlohmann::json& j);

  const diffnet::Network& network() const;
  diffnet::Network& network();

 private:
  Generator() = default;
  std::variant<AnalyticBlobParams, diffnet::Network> model_;
};

void save_generator(const Generator& g, const std::string& path);
Generator load_generator(const std::string& path);

// Render parameters of each blob as smooth functions of the latent; shared by
// the renderer and the blob-world labeling rule.
struct BlobDescriptor {
  double cx = 0.0, cy = 0.0, r = 0.0, intensity = 0.0;
};
std::vector<BlobDescriptor> analytic_blob_descriptors(const AnalyticBlobParams& p,
                                                      const Vector& z);

}  // namespace ganchors
