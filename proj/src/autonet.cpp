#include "topo/autonet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace topo {

DenseNet init_net(const std::vector<int>& widths, uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("init_net: need at least two layer widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("init_net: layer widths must be positive");
  DenseNet net;
  net.widths = widths;
  net.init_seed = seed;
  Rng rng(seed);
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const int fan_in = widths[i];
    const int fan_out = widths[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_in, fan_out);
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    std::vector<double> b(static_cast<size_t>(fan_out));
    for (double& v : b) v = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

ActivationStats forward(const DenseNet& net, const Matrix& x) {
  if (x.cols != net.widths.front())
    throw std::invalid_argument("forward: input width mismatch");
  ActivationStats st;
  st.activations.reserve(net.widths.size());
  st.activations.push_back(x);
  const int last = net.num_weight_layers() - 1;
  for (int i = 0; i <= last; ++i) {
    Matrix z;
    gemm_nn(st.activations.back(), net.weights[static_cast<size_t>(i)], z);
    const auto& b = net.biases[static_cast<size_t>(i)];
    for (int r = 0; r < z.rows; ++r) {
      double* zr = z.row(r);
      for (int c = 0; c < z.cols; ++c) zr[c] += b[static_cast<size_t>(c)];
    }
    if (i != last) {
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;
    }
    st.activations.push_back(std::move(z));
  }
  st.mu.resize(st.activations.size());
  st.sigma.resize(st.activations.size());
  for (size_t l = 0; l < st.activations.size(); ++l) {
    const Matrix& h = st.activations[l];
    auto& mu = st.mu[l];
    auto& sg = st.sigma[l];
    mu.assign(static_cast<size_t>(h.cols), 0.0);
    sg.assign(static_cast<size_t>(h.cols), 0.0);
    const double n = static_cast<double>(h.rows);
    for (int r = 0; r < h.rows; ++r) {
      const double* hr = h.row(r);
      for (int c = 0; c < h.cols; ++c) mu[static_cast<size_t>(c)] += hr[c];
    }
    for (double& v : mu) v /= n;
    for (int r = 0; r < h.rows; ++r) {
      const double* hr = h.row(r);
      for (int c = 0; c < h.cols; ++c) {
        const double d = hr[c] - mu[static_cast<size_t>(c)];
        sg[static_cast<size_t>(c)] += d * d;
      }
    }
    for (double& v : sg) v = std::sqrt(v / n);
  }
  return st;
}

double covariance(const ActivationStats& stats, NodeRef a, NodeRef b) {
  const auto layer_ok = [&](NodeRef r) {
    return r.layer >= 0 && static_cast<size_t>(r.layer) < stats.activations.size() && r.node >= 0 &&
           r.node < stats.activations[static_cast<size_t>(r.layer)].cols;
  };
  if (!layer_ok(a) || !layer_ok(b)) throw std::invalid_argument("covariance: node out of range");
  const Matrix& ha = stats.activations[static_cast<size_t>(a.layer)];
  const Matrix& hb = stats.activations[static_cast<size_t>(b.layer)];
  const int n = ha.rows;
  if (n < 2) throw std::invalid_argument("covariance: need at least two samples");
  const double ma = stats.mu[static_cast<size_t>(a.layer)][static_cast<size_t>(a.node)];
  const double mb = stats.mu[static_cast<size_t>(b.layer)][static_cast<size_t>(b.node)];
  double s = 0.0;
  for (int r = 0; r < n; ++r) s += (ha(r, a.node) - ma) * (hb(r, b.node) - mb);
  return s / static_cast<double>(n);
}

CrossEntropy cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<size_t>(logits.rows) != labels.size())
    throw std::invalid_argument("cross_entropy: label count mismatch");
  const int classes = logits.cols;
  for (int y : labels)
    if (y < 0 || y >= classes) throw std::invalid_argument("cross_entropy: label out of range");
  CrossEntropy ce;
  ce.grad = Matrix(logits.rows, classes);
  const double n = static_cast<double>(logits.rows);
  double loss = 0.0;
  for (int r = 0; r < logits.rows; ++r) {
    const double* lr = logits.row(r);
    double mx = lr[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, lr[c]);
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(lr[c] - mx);
    const int y = labels[static_cast<size_t>(r)];
    loss += -(lr[y] - mx - std::log(denom));
    double* gr = ce.grad.row(r);
    for (int c = 0; c < classes; ++c) gr[c] = std::exp(lr[c] - mx) / denom / n;
    gr[y] -= 1.0 / n;
  }
  ce.loss = loss / n;
  return ce;
}

Gradients zero_gradients(const DenseNet& net) {
  Gradients g;
  for (int i = 0; i < net.num_weight_layers(); ++i) {
    g.weights.emplace_back(net.widths[static_cast<size_t>(i)], net.widths[static_cast<size_t>(i) + 1]);
    g.biases.emplace_back(static_cast<size_t>(net.widths[static_cast<size_t>(i) + 1]), 0.0);
  }
  return g;
}

void axpy_gradients(double a, const Gradients& x, Gradients& y) {
  for (size_t i = 0; i < x.weights.size(); ++i) {
    for (size_t k = 0; k < x.weights[i].data.size(); ++k) y.weights[i].data[k] += a * x.weights[i].data[k];
    for (size_t k = 0; k < x.biases[i].size(); ++k) y.biases[i][k] += a * x.biases[i][k];
  }
}

namespace {

// Reverse pass shared by the loss and the activation-statistics routes.
// `delta` enters as d(loss)/d(logits); `injected` optionally adds gradients
// directly on each layer's post-activation values.
Gradients reverse_pass(const DenseNet& net, const ActivationStats& cache, Matrix delta,
                       const std::vector<Matrix>* injected) {
  Gradients g = zero_gradients(net);
  const int last = net.num_weight_layers() - 1;
  for (int i = last; i >= 0; --i) {
    const Matrix& h_in = cache.activations[static_cast<size_t>(i)];
    // delta currently holds d(loss)/d(layer i+1 activations); the logits
    // layer has no ReLU, hidden layers mask by h > 0.
    if (i != last) {
      const Matrix& h_out = cache.activations[static_cast<size_t>(i) + 1];
      for (size_t k = 0; k < delta.data.size(); ++k)
        if (!(h_out.data[k] > 0.0)) delta.data[k] = 0.0;
    }
    gemm_tn(h_in, delta, g.weights[static_cast<size_t>(i)]);
    auto& gb = g.biases[static_cast<size_t>(i)];
    for (int r = 0; r < delta.rows; ++r) {
      const double* dr = delta.row(r);
      for (int c = 0; c < delta.cols; ++c) gb[static_cast<size_t>(c)] += dr[c];
    }
    if (i > 0) {
      Matrix next;
      gemm_nt(delta, net.weights[static_cast<size_t>(i)], next);
      if (injected) {
        const Matrix& add = (*injected)[static_cast<size_t>(i)];
        for (size_t k = 0; k < next.data.size(); ++k) next.data[k] += add.data[k];
      }
      delta = std::move(next);
    }
  }
  return g;
}

}  // namespace

Gradients backward_cached(const DenseNet& net, const ActivationStats& cache,
                          const std::vector<int>& labels, const Gradients* extra) {
  CrossEntropy ce = cross_entropy(cache.logits(), labels);
  Gradients g = reverse_pass(net, cache, std::move(ce.grad), nullptr);
  if (extra) axpy_gradients(1.0, *extra, g);
  return g;
}

Gradients backward(const DenseNet& net, const Matrix& x, const std::vector<int>& labels,
                   const Gradients* extra) {
  const ActivationStats cache = forward(net, x);
  return backward_cached(net, cache, labels, extra);
}

Gradients stats_param_backward(const DenseNet& net, const ActivationStats& cache,
                               const std::vector<std::vector<double>>& mu_grad,
                               const std::vector<std::vector<double>>& sigma_grad) {
  const size_t layers = cache.activations.size();
  if (mu_grad.size() != layers || sigma_grad.size() != layers)
    throw std::invalid_argument("stats_param_backward: per-layer gradient count mismatch");
  const double n = static_cast<double>(cache.samples());
  // Convert mean/std gradients to gradients on the activations themselves:
  // d mu_j / d h_j^(s) = 1/n,  d sigma_j / d h_j^(s) = (h - mu)/(n sigma).
  std::vector<Matrix> injected(layers);
  for (size_t l = 0; l < layers; ++l) {
    const Matrix& h = cache.activations[l];
    injected[l] = Matrix(h.rows, h.cols);
    for (int c = 0; c < h.cols; ++c) {
      const double gm = mu_grad[l][static_cast<size_t>(c)];
      const double gs = sigma_grad[l][static_cast<size_t>(c)];
      const double mu = cache.mu[l][static_cast<size_t>(c)];
      const double sg = cache.sigma[l][static_cast<size_t>(c)];
      if (gm == 0.0 && (gs == 0.0 || sg == 0.0)) continue;
      for (int r = 0; r < h.rows; ++r) {
        double v = gm / n;
        if (sg > 0.0) v += gs * (h(r, c) - mu) / (n * sg);
        injected[l](r, c) = v;
      }
    }
  }
  Matrix delta = injected.back();  // gradient entering at the logits layer
  return reverse_pass(net, cache, std::move(delta), &injected);
}

AdamState init_adam(const DenseNet& net) {
  AdamState st;
  for (int i = 0; i < net.num_weight_layers(); ++i) {
    st.m_w.emplace_back(net.widths[static_cast<size_t>(i)], net.widths[static_cast<size_t>(i) + 1]);
    st.v_w.emplace_back(net.widths[static_cast<size_t>(i)], net.widths[static_cast<size_t>(i) + 1]);
    st.m_b.emplace_back(static_cast<size_t>(net.widths[static_cast<size_t>(i) + 1]), 0.0);
    st.v_b.emplace_back(static_cast<size_t>(net.widths[static_cast<size_t>(i) + 1]), 0.0);
  }
  return st;
}

namespace {

void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, const TrainConfig& cfg, double bc1, double bc2) {
  for (size_t k = 0; k < w.size(); ++k) {
    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
    const double mhat = m[k] / bc1;
    const double vhat = v[k] / bc2;
    w[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

}  // namespace

void adam_step(DenseNet& net, const Gradients& grads, AdamState& state, const TrainConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < net.weights.size(); ++i) {
    adam_update(net.weights[i].data, grads.weights[i].data, state.m_w[i].data, state.v_w[i].data,
                cfg, bc1, bc2);
    adam_update(net.biases[i], grads.biases[i], state.m_b[i], state.v_b[i], cfg, bc1, bc2);
  }
}

namespace {

Matrix gather_rows(const Matrix& x, std::span<const int> idx) {
  Matrix out(static_cast<int>(idx.size()), x.cols);
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(x.row(idx[r]), x.row(idx[r]) + x.cols, out.row(static_cast<int>(r)));
  return out;
}

}  // namespace

void train(DenseNet& net, const Matrix& x, const std::vector<int>& y, const TrainConfig& cfg) {
  if (cfg.epochs > 0 && cfg.steps > 0)
    throw std::invalid_argument("train: set epochs or steps, not both");
  if (cfg.learning_rate <= 0.0 || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
      cfg.beta2 >= 1.0)
    throw std::invalid_argument("train: invalid optimizer configuration");
  AdamState state = init_adam(net);
  if (cfg.batch_size == 0 || cfg.batch_size >= x.rows) {
    const int steps = cfg.steps > 0 ? cfg.steps : cfg.epochs;
    for (int s = 0; s < steps; ++s) {
      const ActivationStats cache = forward(net, x);
      const CrossEntropy ce = cross_entropy(cache.logits(), y);
      if (!std::isfinite(ce.loss)) throw std::runtime_error("train: non-finite loss");
      Gradients g = reverse_pass(net, cache, Matrix(ce.grad), nullptr);
      adam_step(net, g, state, cfg);
    }
    return;
  }
  Rng rng(cfg.seed);
  std::vector<int> order(static_cast<size_t>(x.rows));
  for (int i = 0; i < x.rows; ++i) order[static_cast<size_t>(i)] = i;
  // With a step budget, keep cycling (reshuffled) epochs until it runs out.
  const int total_epochs = cfg.epochs > 0 ? cfg.epochs : std::numeric_limits<int>::max();
  int remaining_steps = cfg.steps;
  for (int e = 0; e < total_epochs; ++e) {
    rng.shuffle(order);
    for (int start = 0; start < x.rows; start += cfg.batch_size) {
      if (cfg.steps > 0 && remaining_steps-- <= 0) return;
      const int len = std::min(cfg.batch_size, x.rows - start);
      std::span<const int> idx(order.data() + start, static_cast<size_t>(len));
      Matrix bx = gather_rows(x, idx);
      std::vector<int> by(static_cast<size_t>(len));
      for (int k = 0; k < len; ++k) by[static_cast<size_t>(k)] = y[static_cast<size_t>(idx[static_cast<size_t>(k)])];
      const ActivationStats cache = forward(net, bx);
      const CrossEntropy ce = cross_entropy(cache.logits(), by);
      if (!std::isfinite(ce.loss)) throw std::runtime_error("train: non-finite loss");
      Gradients g = reverse_pass(net, cache, Matrix(ce.grad), nullptr);
      adam_step(net, g, state, cfg);
    }
  }
}

double accuracy(const DenseNet& net, const Matrix& x, const std::vector<int>& y) {
  const ActivationStats st = forward(net, x);
  const Matrix& logits = st.logits();
  int hits = 0;
  for (int r = 0; r < logits.rows; ++r) {
    const double* lr = logits.row(r);
    int best = 0;
    for (int c = 1; c < logits.cols; ++c)
      if (lr[c] > lr[best]) best = c;
    if (best == y[static_cast<size_t>(r)]) ++hits;
  }
  return logits.rows == 0 ? 0.0 : static_cast<double>(hits) / logits.rows;
}

void save_checkpoint(const DenseNet& net, const std::string& path) {
  nlohmann::json j;
  j["format"] = "densenet-checkpoint";
  j["version"] = 1;
  j["widths"] = net.widths;
  j["init_seed"] = net.init_seed;
  nlohmann::json layers = nlohmann::json::array();
  for (size_t i = 0; i < net.weights.size(); ++i) {
    nlohmann::json layer;
    layer["weights"] = net.weights[i].data;  // row-major, widths[i] x widths[i+1]
    layer["bias"] = net.biases[i];
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump() << "\n";
}

DenseNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "densenet-checkpoint" || j.value("version", 0) != 1)
    throw std::runtime_error("load_checkpoint: unsupported checkpoint format");
  DenseNet net;
  net.widths = j.at("widths").get<std::vector<int>>();
  net.init_seed = j.at("init_seed").get<uint64_t>();
  for (const auto& layer : j.at("layers")) {
    const size_t i = net.weights.size();
    Matrix w(net.widths[i], net.widths[i + 1]);
    w.data = layer.at("weights").get<std::vector<double>>();
    if (w.data.size() != static_cast<size_t>(w.rows) * static_cast<size_t>(w.cols))
      throw std::runtime_error("load_checkpoint: weight payload size mismatch");
    net.weights.push_back(std::move(w));
    net.biases.push_back(layer.at("bias").get<std::vector<double>>());
  }
  if (net.weights.size() + 1 != net.widths.size())
    throw std::runtime_error("load_checkpoint: layer count mismatch");
  return net;
}

}  // namespace topo
