#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ganchors::testsup {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double folded_cdf(double y, double xi) {
  if (y <= 0.0) return 0.0;
  if (y >= xi) return 1.0;
  const double s = xi / 6.0;
  auto phi = [&](double t) { return normal_cdf((t - xi) / s); };
  const double z = phi(2.0 * xi) - phi(0.0);  // mass kept by rejection
  return (phi(y) - phi(0.0) + phi(2.0 * xi) - phi(2.0 * xi - y)) / z;
}

DistillResult distill_generator(const AnalyticBlobParams& p, const DistillOptions& opt,
                                std::mt19937_64& rng) {
  namespace dn = ganchors::diffnet;
  const int d = 4 * p.blobs;
  const int out = p.h * p.w;
  Generator teacher = Generator::analytic(p);

  std::normal_distribution<double> stdn(0.0, 1.0);
  auto draw_z = [&]() {
    Vector z(d);
    for (int i = 0; i < d; ++i) z(i) = stdn(rng);
    return z;
  };

  dn::Network net;
  net.input_dim = d;
  net.output_shape = {p.h, p.w};
  auto xavier = [&](int rows, int cols) {
    dn::Matrix m(rows, cols);
    const double scale = std::sqrt(2.0 / (rows + cols));
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = scale * stdn(rng);
    return m;
  };
  int prev = d;
  for (int h : opt.hidden) {
    net.layers.emplace_back(dn::DenseParams{xavier(h, prev), Vector::Zero(h)});
    dn::BatchNormState bn;
    bn.gamma = Vector::Ones(h);
    bn.beta = Vector::Zero(h);
    bn.running_mean = Vector::Zero(h);
    bn.running_var = Vector::Ones(h);
    net.layers.emplace_back(bn);
    net.layers.emplace_back(dn::ActivationLayer{dn::ActKind::Tanh});
    prev = h;
  }
  // no trailing activation: the mlp generator applies a fixed sigmoid itself
  net.layers.emplace_back(dn::DenseParams{xavier(out, prev), Vector::Zero(out)});

  // fixed training set of (z, teacher(z)) pairs
  dn::Matrix zs(opt.n_train, d);
  dn::Matrix targets(opt.n_train, out);
  for (int i = 0; i < opt.n_train; ++i) {
    Vector z = draw_z();
    zs.row(i) = z.transpose();
    Image img = teacher.generate(z);
    for (int k = 0; k < out; ++k) targets(i, k) = img.pix[static_cast<size_t>(k)];
  }

  dn::AdamState adam(dn::param_count(net), opt.alpha);
  std::vector<int> order(static_cast<size_t>(opt.n_train));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const bool update_stats = epoch < opt.stale_after_epoch;
    for (int start = 0; start < opt.n_train; start += opt.batch) {
      const int b = std::min(opt.batch, opt.n_train - start);
      dn::Matrix xb(b, d), tb(b, out);
      for (int r = 0; r < b; ++r) {
        xb.row(r) = zs.row(order[static_cast<size_t>(start + r)]);
        tb.row(r) = targets.row(order[static_cast<size_t>(start + r)]);
      }
      dn::ForwardTrace trace =
          update_stats ? dn::network_forward_update(net, xb, dn::BnMode::BatchStats)
                       : dn::network_forward(net, xb, dn::BnMode::BatchStats);
      dn::Matrix sig = dn::activation_forward(dn::ActKind::Sigmoid, trace.output);
      dn::Matrix diff = sig - tb;
      // chain the MSE gradient through the generator's output sigmoid
      dn::Matrix dsig = (sig.array() * (1.0 - sig.array())).matrix();
      dn::Matrix upstream = (2.0 * diff / (b * out)).cwiseProduct(dsig);
      dn::BackwardResult back = dn::network_backward(net, trace, upstream);
      Vector theta = dn::pack_params(net);
      dn::adam_step(adam, theta, dn::pack_grads(net, back.layer_grads));
      dn::unpack_params(net, theta);
    }
  }

  DistillResult res{Generator::mlp(net), 0.0, 0.0};
  const int n_eval = 200;
  dn::Matrix eval_z(n_eval, d);
  std::vector<Image> wants;
  for (int i = 0; i < n_eval; ++i) {
    Vector z = draw_z();
    eval_z.row(i) = z.transpose();
    wants.push_back(teacher.generate(z));
  }
  auto mse_of = [&](dn::BnMode mode) {
    auto got = res.g.generate_batch(eval_z, mode);
    double mse = 0.0;
    for (int i = 0; i < n_eval; ++i)
      for (int k = 0; k < out; ++k) {
        const double e = got[static_cast<size_t>(i)].pix[static_cast<size_t>(k)] -
                         wants[static_cast<size_t>(i)].pix[static_cast<size_t>(k)];
        mse += e * e;
      }
    return mse / (n_eval * out);
  };
  res.running_mse = mse_of(dn::BnMode::RunningStats);
  res.batch_mse = mse_of(dn::BnMode::BatchStats);
  return res;
}

}  // namespace ganchors::testsup
