#include "ganchors/encoder.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ganchors {

using nlohmann::json;

DiverseEncoder make_encoder(int input_dim, const std::vector<int>& hidden, int latent_dim,
                            int n_encodings, std::mt19937_64& rng) {
  if (input_dim < 1 || latent_dim < 1 || n_encodings < 1)
    throw std::invalid_argument("make_encoder: bad dimensions");
  DiverseEncoder enc;
  enc.n_encodings = n_encodings;
  enc.latent_dim = latent_dim;
  enc.net.input_dim = input_dim;
  enc.net.output_shape = {1, n_encodings * latent_dim};

  int cur = input_dim;
  std::vector<int> dims = hidden;
  dims.push_back(n_encodings * latent_dim);
  for (size_t l = 0; l < dims.size(); ++l) {
    diffnet::DenseParams d;
    const double bound = std::sqrt(6.0 / (cur + dims[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    d.w = Matrix::NullaryExpr(dims[l], cur, [&]() { return u(rng); });
    d.b = Vector::Zero(dims[l]);
    enc.net.layers.emplace_back(std::move(d));
    if (l + 1 < dims.size())
      enc.net.layers.emplace_back(diffnet::ActivationLayer{diffnet::ActKind::Tanh});
    cur = dims[l];
  }
  return enc;
}

namespace {

Matrix image_row(const Image& img) {
  return Eigen::Map<const Eigen::RowVectorXd>(img.pix.data(), img.pix.size());
}

std::vector<Vector> split_latents(const DiverseEncoder& enc, const Matrix& out_row) {
  std::vector<Vector> zs(enc.n_encodings);
  for (int i = 0; i < enc.n_encodings; ++i)
    zs[i] = out_row.row(0).segment(i * enc.latent_dim, enc.latent_dim).transpose();
  return zs;
}

Image masked(const Image& x, const BinaryMask& a) {
  Image m(x.h, x.w);
  for (size_t k = 0; k < x.pix.size(); ++k) m.pix[k] = a.pix[k] * x.pix[k];
  return m;
}

}  // namespace

std::vector<Vector> encode(const DiverseEncoder& enc, const Image& x_masked) {
  if (static_cast<int>(x_masked.size()) != enc.net.input_dim)
    throw std::invalid_argument("encode: image size does not match encoder input");
  auto tr = diffnet::network_forward(enc.net, image_row(x_masked), BnMode::RunningStats);
  return split_latents(enc, tr.output);
}

DiverseLossResult diverse_loss(const DiverseEncoder& enc, const Generator& g, const Image& x,
                               const BinaryMask& a, double lambda, double t, double rho) {
  if (t <= 0.0) throw std::invalid_argument("diverse_loss: t must be positive");
  require_same_shape(x, a, "diverse_loss");
  const int n = enc.n_encodings, d = enc.latent_dim;
  if (g.latent_dim() != d)
    throw std::invalid_argument("diverse_loss: generator latent dim mismatch");

  const Image x_hat = masked(x, a);
  auto tr = diffnet::network_forward(enc.net, image_row(x_hat), BnMode::RunningStats);
  std::vector<Vector> zs = split_latents(enc, tr.output);

  long anchor_px = 0;
  for (double v : a.pix)
    if (v != 0.0) ++anchor_px;

  DiverseLossResult res;
  Matrix out_grad = Matrix::Zero(1, n * d);

  // masked reconstruction terms, gradients through the frozen generator
  for (int i = 0; i < n; ++i) {
    Image y = g.generate(zs[i], BnMode::RunningStats);
    double term = 0.0;
    Image up(x.h, x.w, 0.0);
    if (anchor_px > 0) {
      for (size_t k = 0; k < a.pix.size(); ++k) {
        if (a.pix[k] == 0.0) continue;
        const double diff = x_hat.pix[k] - y.pix[k];
        term += diff * diff;
        up.pix[k] = 2.0 * (y.pix[k] - x_hat.pix[k]) / anchor_px;
      }
      term /= anchor_px;
    }
    res.recon_term += term;
    Vector gz = anchor_px > 0 ? g.grad_wrt_latent(zs[i], up, BnMode::RunningStats)
                              : Vector::Zero(d);
    out_grad.row(0).segment(i * d, d) += gz.transpose();
  }

  // bounded pairwise-diversity penalty over ordered pairs i != j
  constexpr double kDistEps = 1e-12;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      Vector diff = zs[i] - zs[j];
      const double dist = std::sqrt(diff.squaredNorm() + kDistEps);
      const double dev = (dist - t) / t;
      res.penalty_term += 2.0 * dev * dev;  // (i,j) and (j,i)
      Vector gpair = lambda * 2.0 * (2.0 * dev / t) * diff / dist;
      out_grad.row(0).segment(i * d, d) += gpair.transpose();
      out_grad.row(0).segment(j * d, d) -= gpair.transpose();
    }
  }

  double l2 = 0.0;
  if (rho > 0.0) {
    for (int i = 0; i < n; ++i) {
      l2 += zs[i].squaredNorm();
      out_grad.row(0).segment(i * d, d) += (2.0 * rho * zs[i]).transpose();
    }
  }

  res.loss = res.recon_term + lambda * res.penalty_term + rho * l2;
  auto back = diffnet::network_backward(enc.net, tr, out_grad, /*want_param_grads=*/true);
  res.grads = std::move(back.layer_grads);
  return res;
}

EncoderTrainTrace train_encoder(DiverseEncoder& enc, const Generator& g,
                                const std::vector<Image>& dataset,
                                const std::vector<SegmentMap>& segmaps,
                                const EncoderTrainConfig& cfg, std::mt19937_64& rng) {
  if (cfg.epochs < 1) throw std::invalid_argument("train_encoder: epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train_encoder: batch_size must be >= 1");
  if (dataset.size() != segmaps.size())
    throw std::invalid_argument("train_encoder: dataset/segmap count mismatch");
  if (dataset.empty()) throw std::invalid_argument("train_encoder: empty dataset");

  Vector params = diffnet::pack_params(enc.net);
  diffnet::AdamState adam(params.size(), cfg.alpha);
  EncoderTrainTrace trace;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t start = 0; start < dataset.size(); start += cfg.batch_size) {
      const size_t end = std::min(dataset.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      Vector grad = Vector::Zero(params.size());
      double batch_loss = 0.0;
      for (size_t i = start; i < end; ++i) {
        auto [anchor, mask] = random_segment_mask(segmaps[i], cfg.mask_p, rng);
        auto lr = diverse_loss(enc, g, dataset[i], mask, enc.lambda, enc.t, enc.rho);
        batch_loss += lr.loss * inv;
        grad += diffnet::pack_grads(enc.net, lr.grads) * inv;
      }
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train_encoder: non-finite loss at batch " +
                                 std::to_string(trace.steps));
      diffnet::adam_step(adam, params, grad, "encoder");
      diffnet::unpack_params(enc.net, params);
      trace.batch_losses.push_back(batch_loss);
      ++trace.steps;
    }
  }
  return trace;
}

std::vector<Vector> seeded_init(const DiverseEncoder& enc, const Image& x_masked,
                                double sigma, int count, std::mt19937_64& rng) {
  if (count < 1) throw std::invalid_argument("seeded_init: count must be >= 1");
  if (sigma < 0.0) throw std::invalid_argument("seeded_init: sigma must be >= 0");
  std::vector<Vector> base = encode(enc, x_masked);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    Vector z = base[k % base.size()];
    if (sigma > 0.0)
      for (long i = 0; i < z.size(); ++i) z(i) += sigma * noise(rng);
    out.push_back(std::move(z));
  }
  return out;
}

BatchSampleFn make_encoder_seeded_sampler(const Generator& g, const Image& x,
                                          const SegmentMap& seg, SamplerConfig cfg,
                                          const DiverseEncoder& enc) {
  return [&g, x, seg, cfg, &enc](const AnchorSet& anchor, int n, std::mt19937_64& rng) {
    BinaryMask a = mask_from_anchor(seg, anchor);
    Image x_hat(x.h, x.w);
    for (size_t k = 0; k < x.pix.size(); ++k) x_hat.pix[k] = a.pix[k] * x.pix[k];
    std::vector<Vector> base = encode(enc, x_hat);
    SamplerConfig local = cfg;
    // Shared counter so restart redraws keep cycling the encoder candidates.
    auto next = std::make_shared<int>(0);
    double sigma = cfg.init_noise;
    local.init_draw = [base, next, sigma](std::mt19937_64& r) {
      Vector z = base[static_cast<size_t>((*next)++) % base.size()];
      if (sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, 1.0);
        for (long i = 0; i < z.size(); ++i) z(i) += sigma * noise(r);
      }
      return z;
    };
    std::vector<double> thresholds(n);
    for (int i = 0; i < n; ++i)
      thresholds[i] = cfg.threshold_sampling ? sample_threshold(cfg.xi, rng) : cfg.xi;
    auto samples = sample_batch(g, thresholds, a, x_hat, local, rng);
    std::vector<Image> imgs;
    imgs.reserve(samples.size());
    for (auto& s : samples) imgs.push_back(std::move(s.y));
    return imgs;
  };
}

void save_encoder(const DiverseEncoder& enc, const std::string& path) {
  json j = diffnet::network_to_json(enc.net);
  j["n_encodings"] = enc.n_encodings;
  j["latent_dim"] = enc.latent_dim;
  j["lambda"] = enc.lambda;
  j["t"] = enc.t;
  j["rho"] = enc.rho;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << j.dump(1) << "\n";
}

DiverseEncoder load_encoder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed encoder file " + path + ": " + e.what());
  }
  DiverseEncoder enc;
  enc.net = diffnet::network_from_json(j);
  enc.n_encodings = j.at("n_encodings").get<int>();
  enc.latent_dim = j.at("latent_dim").get<int>();
  enc.lambda = j.value("lambda", 1.0);
  enc.t = j.value("t", 10.0);
  enc.rho = j.value("rho", 0.0);
  if (enc.net.output_dim() != enc.n_encodings * enc.latent_dim)
    throw std::runtime_error("encoder file: output dim != n_encodings * latent_dim");
  return enc;
}

}  // namespace ganchors
