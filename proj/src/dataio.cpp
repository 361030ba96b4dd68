#include "ganchors/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ganchors {

int blob_world_label(const AnalyticBlobParams& params, const Vector& z) {
  auto blobs = analytic_blob_descriptors(params, z);
  // dominant blob: highest intensity, ties to the lower blob index
  size_t dom = 0;
  for (size_t k = 1; k < blobs.size(); ++k)
    if (blobs[k].intensity > blobs[dom].intensity) dom = k;
  // boundary centers go to the lower-index quadrant
  const int qx = blobs[dom].cx <= 0.5 * params.w ? 0 : 1;
  const int qy = blobs[dom].cy <= 0.5 * params.h ? 0 : 1;
  return 2 * qy + qx;
}

LabeledDataset gen_blob_world(int n, unsigned seed, const AnalyticBlobParams& params) {
  if (n < 1) throw std::invalid_argument("gen_blob_world: n must be >= 1");
  Generator g = Generator::analytic(params);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  LabeledDataset ds;
  ds.classes = 4;
  ds.source = "blob-world";
  ds.seed = seed;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  const int d = g.latent_dim();
  for (int i = 0; i < n; ++i) {
    Vector z(d);
    for (int k = 0; k < d; ++k) z(k) = normal(rng);
    ds.images.push_back(g.generate(z));
    ds.labels.push_back(blob_world_label(params, z));
  }
  return ds;
}

// ---- IDX ----

namespace {

uint32_t read_be32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string("idx: truncated while reading ") + what);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | b[3];
}

void write_be32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("idx: cannot open " + images_path);
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("idx: cannot open " + labels_path);

  const uint32_t im = read_be32(imgs, "images magic");
  if (im != kImagesMagic)
    throw std::runtime_error("idx: unexpected magic 0x" + [&] {
      char buf[16];
      snprintf(buf, sizeof buf, "%08x", im);
      return std::string(buf);
    }() + " in " + images_path);
  const uint32_t n_img = read_be32(imgs, "image count");
  const uint32_t h = read_be32(imgs, "rows");
  const uint32_t w = read_be32(imgs, "cols");

  const uint32_t lm = read_be32(labs, "labels magic");
  if (lm != kLabelsMagic)
    throw std::runtime_error("idx: unexpected magic in " + labels_path);
  const uint32_t n_lab = read_be32(labs, "label count");
  if (n_img != n_lab)
    throw std::runtime_error("idx: image count " + std::to_string(n_img) +
                             " != label count " + std::to_string(n_lab));
  if (h == 0 || w == 0) throw std::runtime_error("idx: zero image dimensions");

  LabeledDataset ds;
  ds.source = images_path;
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w);
  for (uint32_t i = 0; i < n_img; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), buf.size()))
      throw std::runtime_error("idx: truncated image payload at image " + std::to_string(i));
    Image img(static_cast<int>(h), static_cast<int>(w));
    for (size_t k = 0; k < buf.size(); ++k) img.pix[k] = buf[k] / 255.0;
    ds.images.push_back(std::move(img));
    int lab = labs.get();
    if (lab == EOF)
      throw std::runtime_error("idx: truncated label payload at label " + std::to_string(i));
    ds.labels.push_back(lab);
  }
  if (imgs.peek() != EOF)
    throw std::runtime_error("idx: trailing bytes after image payload in " + images_path);
  if (labs.peek() != EOF)
    throw std::runtime_error("idx: trailing bytes after label payload in " + labels_path);
  ds.classes = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.classes = std::max(ds.classes, 2);
  return ds;
}

std::vector<Image> load_idx_images(const std::string& images_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("idx: cannot open " + images_path);
  const uint32_t im = read_be32(imgs, "images magic");
  if (im != kImagesMagic)
    throw std::runtime_error("idx: unexpected magic in " + images_path);
  const uint32_t n_img = read_be32(imgs, "image count");
  const uint32_t h = read_be32(imgs, "rows");
  const uint32_t w = read_be32(imgs, "cols");
  if (h == 0 || w == 0) throw std::runtime_error("idx: zero image dimensions");
  std::vector<Image> out;
  std::vector<unsigned char> buf(static_cast<size_t>(h) * w);
  for (uint32_t i = 0; i < n_img; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), buf.size()))
      throw std::runtime_error("idx: truncated image payload at image " + std::to_string(i));
    Image img(static_cast<int>(h), static_cast<int>(w));
    for (size_t k = 0; k < buf.size(); ++k) img.pix[k] = buf[k] / 255.0;
    out.push_back(std::move(img));
  }
  if (imgs.peek() != EOF)
    throw std::runtime_error("idx: trailing bytes after image payload in " + images_path);
  return out;
}

void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path) {
  if (ds.images.empty()) throw std::invalid_argument("save_idx: empty dataset");
  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("idx: cannot open for write " + images_path);
  std::ofstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("idx: cannot open for write " + labels_path);

  const int h = ds.images[0].h, w = ds.images[0].w;
  write_be32(imgs, kImagesMagic);
  write_be32(imgs, static_cast<uint32_t>(ds.images.size()));
  write_be32(imgs, static_cast<uint32_t>(h));
  write_be32(imgs, static_cast<uint32_t>(w));
  for (const Image& img : ds.images) {
    if (img.h != h || img.w != w) throw std::invalid_argument("save_idx: ragged image shapes");
    for (double v : img.pix) {
      const int byte = std::clamp(static_cast<int>(std::floor(v * 255.0 + 0.5)), 0, 255);
      imgs.put(static_cast<char>(byte));
    }
  }
  write_be32(labs, kLabelsMagic);
  write_be32(labs, static_cast<uint32_t>(ds.labels.size()));
  for (int l : ds.labels) labs.put(static_cast<char>(l));
}

// ---- classifier ----

int NetClassifier::predict(const Image& img) const {
  if (static_cast<int>(img.size()) != net.input_dim)
    throw std::invalid_argument("predict: image size does not match classifier input");
  Eigen::Map<const Eigen::RowVectorXd> row(img.pix.data(), img.pix.size());
  auto tr = diffnet::network_forward(net, row, diffnet::BnMode::RunningStats);
  int best = 0;
  for (long c = 1; c < tr.output.cols(); ++c)
    if (tr.output(0, c) > tr.output(0, best)) best = static_cast<int>(c);
  return best;
}

namespace {

Matrix dataset_matrix(const LabeledDataset& ds, size_t begin, size_t end) {
  Matrix m(end - begin, ds.images[0].size());
  for (size_t i = begin; i < end; ++i)
    for (size_t k = 0; k < ds.images[i].pix.size(); ++k)
      m(static_cast<long>(i - begin), static_cast<long>(k)) = ds.images[i].pix[k];
  return m;
}

double accuracy(const NetClassifier& c, const LabeledDataset& ds, size_t begin, size_t end) {
  if (begin >= end) return 0.0;
  long ok = 0;
  for (size_t i = begin; i < end; ++i)
    if (c.predict(ds.images[i]) == ds.labels[i]) ++ok;
  return static_cast<double>(ok) / static_cast<double>(end - begin);
}

}  // namespace

NetClassifier train_classifier(const LabeledDataset& ds, const std::vector<int>& hidden,
                               int epochs, std::mt19937_64& rng,
                               ClassifierTrainReport* report) {
  if (epochs < 0) throw std::invalid_argument("train_classifier: negative epochs");
  if (ds.images.empty()) throw std::invalid_argument("train_classifier: empty dataset");
  const int input_dim = static_cast<int>(ds.images[0].size());
  const int classes = ds.classes;

  NetClassifier clf;
  clf.net.input_dim = input_dim;
  clf.net.output_shape = {1, classes};
  int cur = input_dim;
  std::vector<int> dims = hidden;
  dims.push_back(classes);
  for (size_t l = 0; l < dims.size(); ++l) {
    diffnet::DenseParams d;
    const double bound = std::sqrt(6.0 / (cur + dims[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    d.w = Matrix::NullaryExpr(dims[l], cur, [&]() { return u(rng); });
    d.b = Vector::Zero(dims[l]);
    clf.net.layers.emplace_back(std::move(d));
    if (l + 1 < dims.size())
      clf.net.layers.emplace_back(diffnet::ActivationLayer{diffnet::ActKind::Tanh});
    cur = dims[l];
  }

  const size_t n = ds.images.size();
  const size_t n_train = std::max<size_t>(1, n - n / 5);  // last 20% held out
  const int batch = 32;

  Vector params = diffnet::pack_params(clf.net);
  diffnet::AdamState adam(params.size(), 5e-3);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    double epoch_loss = 0.0;
    long batches = 0;
    for (size_t start = 0; start < n_train; start += batch) {
      const size_t end = std::min(n_train, start + batch);
      Matrix x = dataset_matrix(ds, start, end);
      auto tr = diffnet::network_forward(clf.net, x, diffnet::BnMode::BatchStats);
      // stable softmax + cross-entropy
      Matrix logits = tr.output;
      Vector rowmax = logits.rowwise().maxCoeff();
      Matrix ex = (logits.colwise() - rowmax).array().exp();
      Vector denom = ex.rowwise().sum();
      Matrix prob = ex.array().colwise() / denom.array();
      double loss = 0.0;
      Matrix up = prob;
      const double inv = 1.0 / static_cast<double>(end - start);
      for (size_t i = start; i < end; ++i) {
        const long r = static_cast<long>(i - start);
        loss -= std::log(std::max(prob(r, ds.labels[i]), 1e-300)) * inv;
        up(r, ds.labels[i]) -= 1.0;
      }
      up *= inv;
      auto back = diffnet::network_backward(clf.net, tr, up);
      Vector grad = diffnet::pack_grads(clf.net, back.layer_grads);
      diffnet::adam_step(adam, params, grad, "classifier");
      diffnet::unpack_params(clf.net, params);
      epoch_loss += loss;
      ++batches;
    }
    if (report) report->epoch_losses.push_back(epoch_loss / std::max(1L, batches));
  }

  if (report) {
    report->train_accuracy = accuracy(clf, ds, 0, n_train);
    report->val_accuracy = n_train < n ? accuracy(clf, ds, n_train, n) : 0.0;
  }
  return clf;
}

void save_classifier(const NetClassifier& c, const std::string& path) {
  diffnet::save_network(c.net, path);
}

NetClassifier load_classifier(const std::string& path) {
  return NetClassifier{diffnet::load_network(path)};
}

// ---- PGM ----

void save_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot open for write " + path);
  out << "P5\n" << img.w << " " << img.h << "\n255\n";
  for (double v : img.pix) {
    const int byte = std::clamp(static_cast<int>(std::floor(v * 255.0 + 0.5)), 0, 255);
    out.put(static_cast<char>(byte));
  }
}

Image load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("pgm: not a binary P5 file: " + path);
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w <= 0 || h <= 0) throw std::runtime_error("pgm: bad header in " + path);
  if (maxval != 255) throw std::runtime_error("pgm: only maxval 255 supported");
  in.get();  // single whitespace after header
  Image img(h, w);
  std::vector<unsigned char> buf(img.size());
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size()))
    throw std::runtime_error("pgm: truncated payload in " + path);
  for (size_t k = 0; k < buf.size(); ++k) img.pix[k] = buf[k] / 255.0;
  return img;
}

}  // namespace ganchors
