#include "ganchors/generators.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ganchors {

using nlohmann::json;

namespace {

constexpr double kDistEps = 1e-12;  // keeps dist smooth at the blob center

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-blob render parameters as smooth functions of 4 latent coordinates.
struct BlobParams {
  double cx, cy, r, a;
  // derivatives of the above w.r.t. their own latent coordinate
  double dcx, dcy, dr, da;
};

BlobParams blob_params(const AnalyticBlobParams& p, const Vector& z, int k) {
  const int base = 4 * k;
  const double r_min = 1.0;
  // Quarter of the short side keeps two blobs mostly non-overlapping, so the
  // dominant blob stays identifiable from pixels.
  const double r_max = 0.25 * std::min(p.h, p.w);
  BlobParams bp;
  const double t0 = std::tanh(z(base + 0));
  const double t1 = std::tanh(z(base + 1));
  const double t2 = std::tanh(z(base + 2));
  bp.cx = 0.5 * p.w * (1.0 + t0);
  bp.cy = 0.5 * p.h * (1.0 + t1);
  bp.r = r_min + 0.5 * (r_max - r_min) * (1.0 + t2);
  // The factor 3 widens the intensity spread so one blob usually dominates
  // clearly; near-ties would make blob-world labels nearly unlearnable.
  bp.a = sigmoid(3.0 * z(base + 3));
  bp.dcx = 0.5 * p.w * (1.0 - t0 * t0);
  bp.dcy = 0.5 * p.h * (1.0 - t1 * t1);
  bp.dr = 0.5 * (r_max - r_min) * (1.0 - t2 * t2);
  bp.da = 3.0 * bp.a * (1.0 - bp.a);
  return bp;
}

void check_latent(int expect, const Vector& z) {
  if (z.size() != expect)
    throw std::invalid_argument("generator: latent dim " + std::to_string(z.size()) +
                                " != expected " + std::to_string(expect));
  if (!z.allFinite()) throw std::invalid_argument("generator: non-finite latent");
}

Image analytic_generate(const AnalyticBlobParams& p, const Vector& z) {
  check_latent(4 * p.blobs, z);
  std::vector<BlobParams> bps;
  bps.reserve(p.blobs);
  for (int k = 0; k < p.blobs; ++k) bps.push_back(blob_params(p, z, k));

  Image img(p.h, p.w);
  for (int i = 0; i < p.h; ++i) {
    for (int j = 0; j < p.w; ++j) {
      const double x = j + 0.5, y = i + 0.5;
      // saturating blend keeps the pixel in [0,1) for any blob count
      double keep = 1.0;
      for (const BlobParams& b : bps) {
        const double dx = x - b.cx, dy = y - b.cy;
        const double dist = std::sqrt(dx * dx + dy * dy + kDistEps);
        const double v = b.a * sigmoid(p.sharpness * (b.r - dist));
        keep *= 1.0 - v;
      }
      img.at(i, j) = 1.0 - keep;
    }
  }
  return img;
}

Vector analytic_grad(const AnalyticBlobParams& p, const Vector& z, const Image& upstream) {
  check_latent(4 * p.blobs, z);
  if (upstream.h != p.h || upstream.w != p.w)
    throw std::invalid_argument("grad_wrt_latent: upstream shape mismatch");
  std::vector<BlobParams> bps;
  bps.reserve(p.blobs);
  for (int k = 0; k < p.blobs; ++k) bps.push_back(blob_params(p, z, k));

  Vector grad = Vector::Zero(4 * p.blobs);
  std::vector<double> v(p.blobs), sblob(p.blobs), dist(p.blobs), dx(p.blobs), dy(p.blobs);
  for (int i = 0; i < p.h; ++i) {
    for (int j = 0; j < p.w; ++j) {
      const double u = upstream.at(i, j);
      if (u == 0.0) continue;
      const double x = j + 0.5, y = i + 0.5;
      for (int k = 0; k < p.blobs; ++k) {
        const BlobParams& b = bps[k];
        dx[k] = x - b.cx;
        dy[k] = y - b.cy;
        dist[k] = std::sqrt(dx[k] * dx[k] + dy[k] * dy[k] + kDistEps);
        sblob[k] = sigmoid(p.sharpness * (b.r - dist[k]));
        v[k] = b.a * sblob[k];
      }
      for (int k = 0; k < p.blobs; ++k) {
        // d pixel / d v_k = prod_{l != k} (1 - v_l)
        double dpdv = 1.0;
        for (int l = 0; l < p.blobs; ++l)
          if (l != k) dpdv *= 1.0 - v[l];
        const BlobParams& b = bps[k];
        const double w = u * dpdv;
        const double dv_darg = b.a * sblob[k] * (1.0 - sblob[k]);  // arg = s*(r-dist)
        const double dv_dr = dv_darg * p.sharpness;
        const double dv_ddist = -dv_darg * p.sharpness;
        const double ddist_dcx = -dx[k] / dist[k];
        const double ddist_dcy = -dy[k] / dist[k];
        grad(4 * k + 0) += w * dv_ddist * ddist_dcx * b.dcx;
        grad(4 * k + 1) += w * dv_ddist * ddist_dcy * b.dcy;
        grad(4 * k + 2) += w * dv_dr * b.dr;
        grad(4 * k + 3) += w * sblob[k] * b.da;
      }
    }
  }
  return grad;
}

Image row_to_image(const Eigen::RowVectorXd& row, int h, int w) {
  Image img(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) img.at(i, j) = row(i * w + j);
  return img;
}

}  // namespace

std::vector<BlobDescriptor> analytic_blob_descriptors(const AnalyticBlobParams& p,
                                                      const Vector& z) {
  check_latent(4 * p.blobs, z);
  std::vector<BlobDescriptor> out;
  out.reserve(p.blobs);
  for (int k = 0; k < p.blobs; ++k) {
    const BlobParams b = blob_params(p, z, k);
    out.push_back({b.cx, b.cy, b.r, b.a});
  }
  return out;
}

Generator Generator::analytic(const AnalyticBlobParams& p) {
  if (p.h < 1 || p.w < 1 || p.blobs < 1 || p.sharpness <= 0.0)
    throw std::invalid_argument("analytic generator: bad parameters");
  Generator g;
  g.model_ = p;
  return g;
}

Generator Generator::mlp(diffnet::Network net) {
  if (net.output_shape[0] < 1 || net.output_shape[1] < 1)
    throw std::invalid_argument("mlp generator: network must declare an HxW output shape");
  Generator g;
  g.model_ = std::move(net);
  return g;
}

int Generator::latent_dim() const {
  if (const auto* p = std::get_if<AnalyticBlobParams>(&model_)) return 4 * p->blobs;
  return std::get<diffnet::Network>(model_).input_dim;
}

int Generator::height() const {
  if (const auto* p = std::get_if<AnalyticBlobParams>(&model_)) return p->h;
  return std::get<diffnet::Network>(model_).output_shape[0];
}

int Generator::width() const {
  if (const auto* p = std::get_if<AnalyticBlobParams>(&model_)) return p->w;
  return std::get<diffnet::Network>(model_).output_shape[1];
}

bool Generator::has_batchnorm() const {
  if (is_analytic()) return false;
  for (const auto& l : std::get<diffnet::Network>(model_).layers)
    if (std::holds_alternative<diffnet::BatchNormState>(l)) return true;
  return false;
}

const diffnet::Network& Generator::network() const {
  if (is_analytic()) throw std::logic_error("analytic generator has no network");
  return std::get<diffnet::Network>(model_);
}

diffnet::Network& Generator::network() {
  if (is_analytic()) throw std::logic_error("analytic generator has no network");
  return std::get<diffnet::Network>(model_);
}

Image Generator::generate(const Vector& z, BnMode mode) const {
  if (const auto* p = std::get_if<AnalyticBlobParams>(&model_)) return analytic_generate(*p, z);
  const auto& net = std::get<diffnet::Network>(model_);
  check_latent(net.input_dim, z);
  auto tr = diffnet::network_forward(net, z.transpose(), mode);
  Matrix out = diffnet::activation_forward(diffnet::ActKind::Sigmoid, tr.output);
  return row_to_image(out.row(0), height(), width());
}

std::vector<Image> Generator::generate_batch(const Matrix& zs, BnMode mode) const {
  if (const auto* p = std::get_if<AnalyticBlobParams>(&model_)) {
    std::vector<Image> out;
    out.reserve(zs.rows());
    for (long i = 0; i < zs.rows(); ++i)
      out.push_back(analytic_generate(*p, zs.row(i).transpose()));
    return out;
  }
  const auto& net = std::get<diffnet::Network>(model_);
  if (zs.cols() != net.input_dim)
    throw std::invalid_argument("generate_batch: latent dim mismatch");
  auto tr = diffnet::network_forward(net, zs, mode);
  Matrix out = diffnet::activation_forward(diffnet::ActKind::Sigmoid, tr.output);
  std::vector<Image> imgs;
  imgs.reserve(zs.rows());
  for (long i = 0; i < zs.rows(); ++i) imgs.push_back(row_to_image(out.row(i), height(), width()));
  return imgs;
}

Vector Generator::grad_wrt_latent(const Vector& z, const Image& upstream, BnMode mode) const {
  if (const auto* p = std::get_if<AnalyticBlobParams>(&model_))
    return analytic_grad(*p, z, upstream);
  std::vector<Image> ups{upstream};
  return grad_wrt_latent_batch(z.transpose(), ups, mode).row(0).transpose();
}

Matrix Generator::grad_wrt_latent_batch(const Matrix& zs, const std::vector<Image>& upstreams,
                                        BnMode mode) const {
  return batch_images_and_grads(zs, upstreams, mode).second;
}

std::pair<std::vector<Image>, Matrix> Generator::batch_images_and_grads(
    const Matrix& zs, const std::vector<Image>& upstreams, BnMode mode) const {
  if (static_cast<long>(upstreams.size()) != zs.rows())
    throw std::invalid_argument("batch_images_and_grads: batch size mismatch");

  if (const auto* p = std::get_if<AnalyticBlobParams>(&model_)) {
    std::vector<Image> imgs;
    imgs.reserve(zs.rows());
    Matrix grads(zs.rows(), 4 * p->blobs);
    for (long i = 0; i < zs.rows(); ++i) {
      Vector z = zs.row(i).transpose();
      imgs.push_back(analytic_generate(*p, z));
      grads.row(i) = analytic_grad(*p, z, upstreams[i]).transpose();
    }
    return {std::move(imgs), std::move(grads)};
  }

  const auto& net = std::get<diffnet::Network>(model_);
  if (zs.cols() != net.input_dim)
    throw std::invalid_argument("batch_images_and_grads: latent dim mismatch");
  const int hw = height() * width();
  auto tr = diffnet::network_forward(net, zs, mode);
  Matrix sig = diffnet::activation_forward(diffnet::ActKind::Sigmoid, tr.output);

  Matrix up(zs.rows(), hw);
  for (long i = 0; i < zs.rows(); ++i) {
    const Image& u = upstreams[i];
    if (u.h != height() || u.w != width())
      throw std::invalid_argument("batch_images_and_grads: upstream shape mismatch");
    for (int k = 0; k < hw; ++k) up(i, k) = u.pix[k];
  }
  // chain through the fixed sigmoid output
  up.array() *= sig.array() * (1.0 - sig.array());
  auto back = diffnet::network_backward(net, tr, up, /*want_param_grads=*/false);

  std::vector<Image> imgs;
  imgs.reserve(zs.rows());
  for (long i = 0; i < zs.rows(); ++i) imgs.push_back(row_to_image(sig.row(i), height(), width()));
  return {std::move(imgs), std::move(back.grad_input)};
}

json Generator::to_json() const {
  if (const auto* p = std::get_if<AnalyticBlobParams>(&model_)) {
    return json{{"variant", "analytic-blob"},
                {"blobs", p->blobs},
                {"sharpness", p->sharpness},
                {"shape", {p->h, p->w}},
                {"latent_dim", 4 * p->blobs}};
  }
  json j = diffnet::network_to_json(std::get<diffnet::Network>(model_));
  j["variant"] = "mlp";
  return j;
}

Generator Generator::from_json(const json& j) {
  const std::string variant = j.value("variant", "mlp");
  if (variant == "analytic-blob") {
    AnalyticBlobParams p;
    p.blobs = j.at("blobs").get<int>();
    p.sharpness = j.at("sharpness").get<double>();
    p.h = j.at("shape").at(0).get<int>();
    p.w = j.at("shape").at(1).get<int>();
    if (j.contains("latent_dim") && j["latent_dim"].get<int>() != 4 * p.blobs)
      throw std::runtime_error("analytic-blob: latent_dim must be 4*blobs");
    return analytic(p);
  }
  if (variant == "mlp") return mlp(diffnet::network_from_json(j));
  throw std::runtime_error("unknown generator variant '" + variant + "'");
}

void save_generator(const Generator& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << g.to_json().dump(1) << "\n";
}

Generator load_generator(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed generator file " + path + ": " + e.what());
  }
  return Generator::from_json(j);
}

}  // namespace ganchors
