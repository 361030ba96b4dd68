#include "ganchors/diffnet.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ganchors::diffnet {

using nlohmann::json;

ActKind act_from_name(const std::string& name) {
  if (name == "tanh") return ActKind::Tanh;
  if (name == "sigmoid") return ActKind::Sigmoid;
  if (name == "relu") return ActKind::Relu;
  if (name == "identity") return ActKind::Identity;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string act_name(ActKind k) {
  switch (k) {
    case ActKind::Tanh: return "tanh";
    case ActKind::Sigmoid: return "sigmoid";
    case ActKind::Relu: return "relu";
    case ActKind::Identity: return "identity";
  }
  throw std::logic_error("bad ActKind");
}

Matrix dense_forward(const DenseParams& p, const Matrix& x) {
  if (x.cols() != p.w.cols())
    throw std::invalid_argument("dense_forward: input has " + std::to_string(x.cols()) +
                                " features, layer expects " + std::to_string(p.w.cols()));
  return (x * p.w.transpose()).rowwise() + p.b.transpose();
}

DenseGrads dense_backward(const DenseParams& p, const Matrix& x, const Matrix& upstream) {
  if (x.cols() != p.w.cols() || upstream.cols() != p.w.rows() || upstream.rows() != x.rows())
    throw std::invalid_argument("dense_backward: shape mismatch");
  DenseGrads g;
  g.grad_x = upstream * p.w;
  g.grad_w = upstream.transpose() * x;
  g.grad_b = upstream.colwise().sum().transpose();
  return g;
}

Matrix batchnorm_forward(const BatchNormState& s, const Matrix& x, BnMode mode,
                         BnCache* cache) {
  if (x.rows() < 1) throw std::invalid_argument("batchnorm_forward: empty batch");
  if (x.cols() != s.dim())
    throw std::invalid_argument("batchnorm_forward: feature dim mismatch");

  Vector mean, var;
  if (mode == BnMode::BatchStats) {
    const double n = static_cast<double>(x.rows());
    mean = x.colwise().mean().transpose();
    var = ((x.rowwise() - mean.transpose()).array().square().colwise().sum() / n)
              .transpose();
  } else {
    mean = s.running_mean;
    var = s.running_var;
  }
  if (cache) {
    cache->mean = mean;
    cache->var = var;
    cache->mode = mode;
    cache->batch = static_cast<int>(x.rows());
  }
  const Vector inv_std = (var.array() + s.eps).sqrt().inverse();
  Matrix xhat = (x.rowwise() - mean.transpose()).array().rowwise() *
                inv_std.transpose().array();
  return (xhat.array().rowwise() * s.gamma.transpose().array()).rowwise() +
         s.beta.transpose().array();
}

void batchnorm_update_running(BatchNormState& s, const BnCache& cache) {
  if (cache.mode != BnMode::BatchStats)
    throw std::logic_error("batchnorm_update_running: cache is not from a batch-stats forward");
  const double m = s.momentum;
  s.running_mean = (1.0 - m) * s.running_mean + m * cache.mean;
  s.running_var = (1.0 - m) * s.running_var + m * cache.var;
}

BnGrads batchnorm_backward(const BatchNormState& s, const Matrix& x, const BnCache& cache,
                           const Matrix& upstream) {
  if (x.rows() != upstream.rows() || x.cols() != upstream.cols())
    throw std::invalid_argument("batchnorm_backward: shape mismatch");
  if (cache.batch != static_cast<int>(x.rows()))
    throw std::logic_error("batchnorm_backward: cache does not match this batch");

  const Vector inv_std = (cache.var.array() + s.eps).sqrt().inverse();
  Matrix xc = x.rowwise() - cache.mean.transpose();
  Matrix xhat = xc.array().rowwise() * inv_std.transpose().array();

  BnGrads g;
  g.grad_gamma = (upstream.array() * xhat.array()).colwise().sum().transpose();
  g.grad_beta = upstream.colwise().sum().transpose();

  Matrix dxhat = upstream.array().rowwise() * s.gamma.transpose().array();

  if (cache.mode == BnMode::RunningStats) {
    // mean/var are constants here
    g.grad_x = dxhat.array().rowwise() * inv_std.transpose().array();
    return g;
  }

  const double n = static_cast<double>(x.rows());
  Vector inv_std3 = inv_std.array().cube();
  Vector dvar = -0.5 * ((dxhat.array() * xc.array()).colwise().sum().transpose().array() *
                        inv_std3.array());
  Vector dmean = -(dxhat.colwise().sum().transpose().array() * inv_std.array()) +
                 dvar.array() * (-2.0 / n) * xc.colwise().sum().transpose().array();
  g.grad_x = (dxhat.array().rowwise() * inv_std.transpose().array()) +
             (xc.array().rowwise() * dvar.transpose().array()) * (2.0 / n);
  g.grad_x.array().rowwise() += dmean.transpose().array() / n;
  return g;
}

Matrix activation_forward(ActKind k, const Matrix& x) {
  switch (k) {
    case ActKind::Tanh: return x.array().tanh();
    case ActKind::Sigmoid: return ((-x.array()).exp() + 1.0).inverse();
    case ActKind::Relu: return x.array().max(0.0);
    case ActKind::Identity: return x;
  }
  throw std::logic_error("bad ActKind");
}

Matrix activation_backward(ActKind k, const Matrix& x, const Matrix& upstream) {
  switch (k) {
    case ActKind::Tanh: {
      Matrix t = x.array().tanh();
      return upstream.array() * (1.0 - t.array().square());
    }
    case ActKind::Sigmoid: {
      Matrix s = ((-x.array()).exp() + 1.0).inverse();
      return upstream.array() * s.array() * (1.0 - s.array());
    }
    case ActKind::Relu:
      return (x.array() > 0.0).select(upstream, Matrix::Zero(x.rows(), x.cols()));
    case ActKind::Identity: return upstream;
  }
  throw std::logic_error("bad ActKind");
}

namespace {

ForwardTrace forward_impl(const Network& net, const Matrix& x, BnMode mode,
                          Network* mutable_net) {
  ForwardTrace tr;
  tr.mode = mode;
  tr.inputs.reserve(net.layers.size());
  tr.bn.resize(net.layers.size());
  if (net.input_dim > 0 && x.cols() != net.input_dim)
    throw std::invalid_argument("network_forward: input dim " + std::to_string(x.cols()) +
                                " != declared " + std::to_string(net.input_dim));
  Matrix cur = x;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    tr.inputs.push_back(cur);
    const Layer& layer = net.layers[i];
    if (const auto* d = std::get_if<DenseParams>(&layer)) {
      cur = dense_forward(*d, cur);
    } else if (const auto* bn = std::get_if<BatchNormState>(&layer)) {
      cur = batchnorm_forward(*bn, cur, mode, &tr.bn[i]);
      if (mutable_net && mode == BnMode::BatchStats)
        batchnorm_update_running(std::get<BatchNormState>(mutable_net->layers[i]), tr.bn[i]);
    } else {
      cur = activation_forward(std::get<ActivationLayer>(layer).kind, cur);
    }
  }
  tr.output = cur;
  return tr;
}

}  // namespace

ForwardTrace network_forward(const Network& net, const Matrix& x, BnMode mode) {
  return forward_impl(net, x, mode, nullptr);
}

ForwardTrace network_forward_update(Network& net, const Matrix& x, BnMode mode) {
  return forward_impl(net, x, mode, &net);
}

BackwardResult network_backward(const Network& net, const ForwardTrace& trace,
                                const Matrix& upstream, bool want_param_grads) {
  if (trace.inputs.size() != net.layers.size())
    throw std::logic_error("network_backward: trace does not match network");
  BackwardResult res;
  res.layer_grads.resize(net.layers.size());
  Matrix up = upstream;
  for (size_t k = net.layers.size(); k-- > 0;) {
    const Layer& layer = net.layers[k];
    const Matrix& in = trace.inputs[k];
    if (const auto* d = std::get_if<DenseParams>(&layer)) {
      DenseGrads g = dense_backward(*d, in, up);
      up = std::move(g.grad_x);
      if (want_param_grads) {
        res.layer_grads[k].grad_w = std::move(g.grad_w);
        res.layer_grads[k].grad_b = std::move(g.grad_b);
      }
    } else if (const auto* bn = std::get_if<BatchNormState>(&layer)) {
      if (trace.bn[k].mode != trace.mode)
        throw std::logic_error("network_backward: batch-norm cache mode mismatch");
      BnGrads g = batchnorm_backward(*bn, in, trace.bn[k], up);
      up = std::move(g.grad_x);
      if (want_param_grads) {
        res.layer_grads[k].grad_gamma = std::move(g.grad_gamma);
        res.layer_grads[k].grad_beta = std::move(g.grad_beta);
      }
    } else {
      up = activation_backward(std::get<ActivationLayer>(layer).kind, in, up);
    }
  }
  res.grad_input = std::move(up);
  return res;
}

long param_count(const Network& net) {
  long n = 0;
  for (const Layer& layer : net.layers) {
    if (const auto* d = std::get_if<DenseParams>(&layer))
      n += d->w.size() + d->b.size();
    else if (const auto* bn = std::get_if<BatchNormState>(&layer))
      n += 2 * bn->dim();
  }
  return n;
}

Vector pack_params(const Network& net) {
  Vector out(param_count(net));
  long at = 0;
  for (const Layer& layer : net.layers) {
    if (const auto* d = std::get_if<DenseParams>(&layer)) {
      out.segment(at, d->w.size()) = Eigen::Map<const Vector>(d->w.data(), d->w.size());
      at += d->w.size();
      out.segment(at, d->b.size()) = d->b;
      at += d->b.size();
    } else if (const auto* bn = std::get_if<BatchNormState>(&layer)) {
      out.segment(at, bn->dim()) = bn->gamma;
      at += bn->dim();
      out.segment(at, bn->dim()) = bn->beta;
      at += bn->dim();
    }
  }
  return out;
}

void unpack_params(Network& net, const Vector& flat) {
  if (flat.size() != param_count(net))
    throw std::invalid_argument("unpack_params: size mismatch");
  long at = 0;
  for (Layer& layer : net.layers) {
    if (auto* d = std::get_if<DenseParams>(&layer)) {
      Eigen::Map<Vector>(d->w.data(), d->w.size()) = flat.segment(at, d->w.size());
      at += d->w.size();
      d->b = flat.segment(at, d->b.size());
      at += d->b.size();
    } else if (auto* bn = std::get_if<BatchNormState>(&layer)) {
      bn->gamma = flat.segment(at, bn->dim());
      at += bn->dim();
      bn->beta = flat.segment(at, bn->dim());
      at += bn->dim();
    }
  }
}

Vector pack_grads(const Network& net, const std::vector<LayerGrads>& grads) {
  if (grads.size() != net.layers.size())
    throw std::invalid_argument("pack_grads: grads do not match network");
  Vector out(param_count(net));
  long at = 0;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    if (const auto* d = std::get_if<DenseParams>(&layer)) {
      const Matrix& gw = grads[i].grad_w;
      out.segment(at, d->w.size()) = Eigen::Map<const Vector>(gw.data(), gw.size());
      at += d->w.size();
      out.segment(at, d->b.size()) = grads[i].grad_b;
      at += d->b.size();
    } else if (const auto* bn = std::get_if<BatchNormState>(&layer)) {
      out.segment(at, bn->dim()) = grads[i].grad_gamma;
      at += bn->dim();
      out.segment(at, bn->dim()) = grads[i].grad_beta;
      at += bn->dim();
    }
  }
  return out;
}

void adam_step(AdamState& s, Vector& params, const Vector& grads, const std::string& name) {
  if (params.size() != grads.size() || s.m.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch on " + name);
  if (!grads.allFinite())
    throw std::runtime_error("adam_step: non-finite gradient in " + name);
  s.t += 1;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v.array() + (1.0 - s.beta2) * grads.array().square();
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  params.array() -=
      s.alpha * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + s.eps);
}

// ---- JSON ----

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (long i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (long i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw std::runtime_error("expected array for " + what);
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<long>(i)) = j[i].get<double>();
  return v;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw std::runtime_error("expected matrix for " + what);
  const size_t cols = j[0].size();
  Matrix m(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != cols)
      throw std::runtime_error("ragged matrix rows in " + what);
    for (size_t c = 0; c < cols; ++c) m(static_cast<long>(i), static_cast<long>(c)) = j[i][c].get<double>();
  }
  return m;
}

}  // namespace

json network_to_json(const Network& net) {
  json layers = json::array();
  for (const Layer& layer : net.layers) {
    json l;
    if (const auto* d = std::get_if<DenseParams>(&layer)) {
      l["kind"] = "dense";
      l["w"] = matrix_to_json(d->w);
      l["b"] = vector_to_json(d->b);
    } else if (const auto* bn = std::get_if<BatchNormState>(&layer)) {
      l["kind"] = "batchnorm";
      l["gamma"] = vector_to_json(bn->gamma);
      l["beta"] = vector_to_json(bn->beta);
      l["running_mean"] = vector_to_json(bn->running_mean);
      l["running_var"] = vector_to_json(bn->running_var);
      l["eps"] = bn->eps;
      l["momentum"] = bn->momentum;
    } else {
      l["kind"] = "activation";
      l["name"] = act_name(std::get<ActivationLayer>(layer).kind);
    }
    layers.push_back(std::move(l));
  }
  return json{{"layers", std::move(layers)},
              {"input_dim", net.input_dim},
              {"output_shape", {net.output_shape[0], net.output_shape[1]}}};
}

Network network_from_json(const json& j) {
  Network net;
  net.input_dim = j.at("input_dim").get<int>();
  const auto& os = j.at("output_shape");
  net.output_shape = {os.at(0).get<int>(), os.at(1).get<int>()};

  int cur_dim = net.input_dim;
  int idx = 0;
  for (const auto& l : j.at("layers")) {
    const std::string kind = l.at("kind").get<std::string>();
    if (kind == "dense") {
      DenseParams d;
      d.w = matrix_from_json(l.at("w"), "layer " + std::to_string(idx) + " w");
      d.b = vector_from_json(l.at("b"), "layer " + std::to_string(idx) + " b");
      if (d.b.size() != d.w.rows())
        throw std::runtime_error("layer " + std::to_string(idx) + ": bias/weight dim mismatch");
      if (d.in_dim() != cur_dim)
        throw std::runtime_error("layer " + std::to_string(idx) + ": expects " +
                                 std::to_string(d.in_dim()) + " inputs, got " +
                                 std::to_string(cur_dim));
      cur_dim = d.out_dim();
      net.layers.emplace_back(std::move(d));
    } else if (kind == "batchnorm") {
      BatchNormState bn;
      bn.gamma = vector_from_json(l.at("gamma"), "gamma");
      bn.beta = vector_from_json(l.at("beta"), "beta");
      bn.running_mean = vector_from_json(l.at("running_mean"), "running_mean");
      bn.running_var = vector_from_json(l.at("running_var"), "running_var");
      bn.eps = l.value("eps", 1e-5);
      bn.momentum = l.value("momentum", 0.1);
      if (bn.beta.size() != bn.dim() || bn.running_mean.size() != bn.dim() ||
          bn.running_var.size() != bn.dim())
        throw std::runtime_error("layer " + std::to_string(idx) + ": batchnorm dim mismatch");
      if (bn.dim() != cur_dim)
        throw std::runtime_error("layer " + std::to_string(idx) + ": batchnorm expects " +
                                 std::to_string(bn.dim()) + " features, got " +
                                 std::to_string(cur_dim));
      if ((bn.running_var.array() < 0.0).any())
        throw std::runtime_error("layer " + std::to_string(idx) + ": negative running variance");
      net.layers.emplace_back(std::move(bn));
    } else if (kind == "activation") {
      net.layers.emplace_back(ActivationLayer{act_from_name(l.at("name").get<std::string>())});
    } else {
      throw std::runtime_error("layer " + std::to_string(idx) + ": unknown kind '" + kind + "'");
    }
    ++idx;
  }
  if (net.output_dim() > 0 && cur_dim != net.output_dim())
    throw std::runtime_error("network output dim " + std::to_string(cur_dim) +
                             " != declared " + std::to_string(net.output_dim()));
  return net;
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << network_to_json(net).dump(1) << "\n";
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed weight file " + path + ": " + e.what());
  }
  return network_from_json(j);
}

}  // namespace ganchors::diffnet
