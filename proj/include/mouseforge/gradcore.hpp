#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mouseforge/rng.hpp"

// Minimal differentiable compute core: GRU cells and stacks, 1-D convolution,
// dense layers, elementwise activations, the losses used across the toolkit,
// Adam with a step-decay schedule, and a central-difference gradient checker.
// Forward passes fill explicit caches; backward passes consume them and
// accumulate into per-parameter gradient buffers.
//
// Batch convention: activations are (batch x features) matrices. A sequence
// is a vector of such matrices, one per timestep. Conv inputs are
// (channels x time) per sample.

namespace mouseforge::grad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct GradError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Param {
  std::string name;
  Matrix w;
  Matrix g;

  void init_uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    w.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-bound, bound);
    g = Matrix::Zero(rows, cols);
  }
  void init_zero(Eigen::Index rows, Eigen::Index cols) {
    w = Matrix::Zero(rows, cols);
    g = Matrix::Zero(rows, cols);
  }
  void zero_grad() { g.setZero(); }
};

inline void zero_grads(const std::vector<Param*>& ps) {
  for (Param* p : ps) p->zero_grad();
}

inline double grad_norm(const std::vector<Param*>& ps) {
  double sq = 0.0;
  for (const Param* p : ps) sq += p->g.squaredNorm();
  return std::sqrt(sq);
}

inline void clip_grad_norm(const std::vector<Param*>& ps, double max_norm) {
  const double n = grad_norm(ps);
  if (n > max_norm && n > 0.0) {
    const double s = max_norm / n;
    for (Param* p : ps) p->g *= s;
  }
}

// ---------------------------------------------------------------------------
// Activations

inline Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline Matrix tanh_m(const Matrix& x) {
  return x.unaryExpr([](double v) { return std::tanh(v); });
}

enum class Act { None, Relu, Elu, Tanh, Sigmoid };

inline Matrix act_forward(Act a, const Matrix& x) {
  switch (a) {
    case Act::None: return x;
    case Act::Relu: return x.cwiseMax(0.0);
    case Act::Elu:
      return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    case Act::Tanh: return tanh_m(x);
    case Act::Sigmoid: return sigmoid(x);
  }
  throw GradError("act_forward: bad activation");
}

// dx from dy and the forward *output* y (all listed activations allow this).
inline Matrix act_backward(Act a, const Matrix& y, const Matrix& dy) {
  switch (a) {
    case Act::None: return dy;
    case Act::Relu:
      return dy.cwiseProduct(y.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
    case Act::Elu:
      return dy.cwiseProduct(y.unaryExpr([](double v) { return v > 0.0 ? 1.0 : v + 1.0; }));
    case Act::Tanh:
      return dy.cwiseProduct(y.unaryExpr([](double v) { return 1.0 - v * v; }));
    case Act::Sigmoid:
      return dy.cwiseProduct(y.unaryExpr([](double v) { return v * (1.0 - v); }));
  }
  throw GradError("act_backward: bad activation");
}

// ---------------------------------------------------------------------------
// Dense layer: y = x W^T + 1 b^T, optionally followed by an activation.

struct Dense {
  Param W;  // out x in
  Param b;  // out x 1
  Act act = Act::None;

  void init(Eigen::Index in, Eigen::Index out, Rng& rng, Act a = Act::None) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    W.name = "W";
    W.init_uniform(out, in, bound, rng);
    b.name = "b";
    b.init_zero(out, 1);
    act = a;
  }
  std::vector<Param*> params() { return {&W, &b}; }

  struct Cache {
    Matrix x;  // batch x in
    Matrix y;  // batch x out (post-activation)
  };

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    if (x.cols() != W.w.cols()) throw GradError("Dense::forward: dim mismatch");
    Matrix y = x * W.w.transpose();
    y.rowwise() += b.w.col(0).transpose();
    y = act_forward(act, y);
    if (cache) {
      cache->x = x;
      cache->y = y;
    }
    return y;
  }

  // Accumulates into W.g / b.g, returns dx.
  Matrix backward(const Cache& cache, const Matrix& dy) {
    const Matrix dz = act_backward(act, cache.y, dy);
    W.g += dz.transpose() * cache.x;
    b.g += dz.colwise().sum().transpose();
    return dz * W.w;
  }
};

// ---------------------------------------------------------------------------
// GRU cell
//
//   r = sigmoid(x Wir^T + bir + h Whr^T + bhr)
//   z = sigmoid(x Wiz^T + biz + h Whz^T + bhz)
//   n = tanh(x Win^T + bin + r .* (h Whn^T + bhn))
//   h' = (1 - z) .* n + z .* h

struct GruCellParams {
  Param Wir, Wiz, Win;             // hidden x input
  Param Whr, Whz, Whn;             // hidden x hidden
  Param bir, biz, bin, bhr, bhz, bhn;  // hidden x 1
  Eigen::Index input_dim = 0, hidden_dim = 0;

  void init(Eigen::Index in, Eigen::Index hid, Rng& rng) {
    input_dim = in;
    hidden_dim = hid;
    const double bi = 1.0 / std::sqrt(static_cast<double>(in));
    const double bh = 1.0 / std::sqrt(static_cast<double>(hid));
    auto mk = [&](Param& p, const char* n, Eigen::Index r, Eigen::Index c, double bound) {
      p.name = n;
      p.init_uniform(r, c, bound, rng);
    };
    mk(Wir, "Wir", hid, in, bi);
    mk(Wiz, "Wiz", hid, in, bi);
    mk(Win, "Win", hid, in, bi);
    mk(Whr, "Whr", hid, hid, bh);
    mk(Whz, "Whz", hid, hid, bh);
    mk(Whn, "Whn", hid, hid, bh);
    for (auto* p : {&bir, &biz, &bin, &bhr, &bhz, &bhn}) p->init_zero(hid, 1);
    bir.name = "bir"; biz.name = "biz"; bin.name = "bin";
    bhr.name = "bhr"; bhz.name = "bhz"; bhn.name = "bhn";
  }

  std::vector<Param*> params() {
    return {&Wir, &Wiz, &Win, &Whr, &Whz, &Whn, &bir, &biz, &bin, &bhr, &bhz, &bhn};
  }
};

struct GruCellCache {
  Matrix x, h_prev;      // batch x in, batch x hidden
  Matrix r, z, n, hcand;  // batch x hidden; hcand = h_prev Whn^T + bhn
};

inline Matrix gru_cell_step(const GruCellParams& p, const Matrix& x, const Matrix& h_prev,
                            GruCellCache* cache = nullptr) {
  if (x.cols() != p.input_dim || h_prev.cols() != p.hidden_dim || x.rows() != h_prev.rows())
    throw GradError("gru_cell_step: dim mismatch");
  auto affine = [](const Matrix& a, const Param& W, const Param& b) {
    Matrix y = a * W.w.transpose();
    y.rowwise() += b.w.col(0).transpose();
    return y;
  };
  const Matrix r = sigmoid(affine(x, p.Wir, p.bir) + affine(h_prev, p.Whr, p.bhr));
  const Matrix z = sigmoid(affine(x, p.Wiz, p.biz) + affine(h_prev, p.Whz, p.bhz));
  const Matrix hcand = affine(h_prev, p.Whn, p.bhn);
  const Matrix n = tanh_m(affine(x, p.Win, p.bin) + r.cwiseProduct(hcand));
  Matrix h = (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h_prev);
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->r = r;
    cache->z = z;
    cache->n = n;
    cache->hcand = hcand;
  }
  return h;
}

// Accumulates parameter grads; returns (dx, dh_prev).
inline std::pair<Matrix, Matrix> gru_cell_backward(GruCellParams& p, const GruCellCache& c,
                                                   const Matrix& dh) {
  const Matrix dn = dh.cwiseProduct((1.0 - c.z.array()).matrix());
  const Matrix dz = dh.cwiseProduct(c.h_prev - c.n);
  Matrix dh_prev = dh.cwiseProduct(c.z);

  const Matrix da_n = dn.cwiseProduct((1.0 - c.n.array().square()).matrix());
  const Matrix dr = da_n.cwiseProduct(c.hcand);
  const Matrix dhcand = da_n.cwiseProduct(c.r);
  const Matrix da_z = dz.cwiseProduct(c.z.cwiseProduct((1.0 - c.z.array()).matrix()));
  const Matrix da_r = dr.cwiseProduct(c.r.cwiseProduct((1.0 - c.r.array()).matrix()));

  p.Wir.g += da_r.transpose() * c.x;
  p.Whr.g += da_r.transpose() * c.h_prev;
  p.bir.g += da_r.colwise().sum().transpose();
  p.bhr.g += da_r.colwise().sum().transpose();

  p.Wiz.g += da_z.transpose() * c.x;
  p.Whz.g += da_z.transpose() * c.h_prev;
  p.biz.g += da_z.colwise().sum().transpose();
  p.bhz.g += da_z.colwise().sum().transpose();

  p.Win.g += da_n.transpose() * c.x;
  p.bin.g += da_n.colwise().sum().transpose();
  p.Whn.g += dhcand.transpose() * c.h_prev;
  p.bhn.g += dhcand.colwise().sum().transpose();

  Matrix dx = da_r * p.Wir.w + da_z * p.Wiz.w + da_n * p.Win.w;
  dh_prev += da_r * p.Whr.w + da_z * p.Whz.w + dhcand * p.Whn.w;
  return {std::move(dx), std::move(dh_prev)};
}

// ---------------------------------------------------------------------------
// Stacked GRU over a sequence. Layer l consumes layer l-1's per-step outputs.

struct GruStack {
  std::vector<GruCellParams> layers;

  void init(Eigen::Index input, Eigen::Index hidden, int n_layers, Rng& rng) {
    layers.resize(static_cast<std::size_t>(n_layers));
    for (int l = 0; l < n_layers; ++l) {
      layers[static_cast<std::size_t>(l)].init(l == 0 ? input : hidden, hidden, rng);
    }
  }
  Eigen::Index hidden_dim() const { return layers.empty() ? 0 : layers[0].hidden_dim; }
  std::vector<Param*> params() {
    std::vector<Param*> ps;
    for (auto& l : layers)
      for (Param* p : l.params()) ps.push_back(p);
    return ps;
  }

  struct Cache {
    // steps[t][l]
    std::vector<std::vector<GruCellCache>> steps;
    Eigen::Index batch = 0;
  };

  // h holds one (batch x hidden) state per layer and is advanced in place.
  std::vector<Matrix> forward(const std::vector<Matrix>& xs, std::vector<Matrix>& h,
                              Cache* cache = nullptr) const {
    if (layers.empty()) throw GradError("GruStack: no layers");
    const std::size_t T = xs.size();
    std::vector<Matrix> top;
    top.reserve(T);
    if (cache) {
      cache->steps.assign(T, {});
      cache->batch = T ? xs[0].rows() : 0;
    }
    for (std::size_t t = 0; t < T; ++t) {
      const Matrix* in = &xs[t];
      if (cache) cache->steps[t].resize(layers.size());
      for (std::size_t l = 0; l < layers.size(); ++l) {
        GruCellCache* cc = cache ? &cache->steps[t][l] : nullptr;
        h[l] = gru_cell_step(layers[l], *in, h[l], cc);
        in = &h[l];
      }
      top.push_back(h.back());
    }
    return top;
  }

  std::vector<Matrix> forward(const std::vector<Matrix>& xs, Cache* cache = nullptr) const {
    std::vector<Matrix> h = zero_state(xs.empty() ? 0 : xs[0].rows());
    return forward(xs, h, cache);
  }

  std::vector<Matrix> zero_state(Eigen::Index batch) const {
    std::vector<Matrix> h;
    h.reserve(layers.size());
    for (const auto& l : layers) h.push_back(Matrix::Zero(batch, l.hidden_dim));
    return h;
  }

  // dtop[t] is the gradient wrt the top-layer output at step t (may be empty
  // for steps without loss). Accumulates parameter grads; returns per-step
  // input gradients.
  std::vector<Matrix> backward(Cache& cache, const std::vector<Matrix>& dtop) {
    const std::size_t T = cache.steps.size();
    const std::size_t L = layers.size();
    std::vector<Matrix> dxs(T);
    std::vector<Matrix> dh(L);
    for (std::size_t l = 0; l < L; ++l)
      dh[l] = Matrix::Zero(cache.batch, layers[l].hidden_dim);
    for (std::size_t t = T; t-- > 0;) {
      if (dtop[t].size() > 0) dh[L - 1] += dtop[t];
      for (std::size_t l = L; l-- > 0;) {
        auto [dx, dh_prev] = gru_cell_backward(layers[l], cache.steps[t][l], dh[l]);
        dh[l] = std::move(dh_prev);
        if (l == 0) {
          dxs[t] = std::move(dx);
        } else {
          dh[l - 1] += dx;  // layer input is the lower layer's same-step output
        }
      }
    }
    return dxs;
  }
};

// ---------------------------------------------------------------------------
// 1-D convolution (valid, no padding) along the time axis.
// x: in_ch x T, y: out_ch x T' with T' = floor((T - k)/stride) + 1.

struct Conv1d {
  Param W;  // out_ch x (in_ch * k), kernel-major within a channel block
  Param b;  // out_ch x 1
  int in_ch = 0, out_ch = 0, k = 0, stride = 1;
  Act act = Act::None;

  void init(int in_channels, int out_channels, int kernel, int stride_, Rng& rng,
            Act a = Act::None) {
    in_ch = in_channels;
    out_ch = out_channels;
    k = kernel;
    stride = stride_;
    act = a;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * k));
    W.name = "convW";
    W.init_uniform(out_ch, static_cast<Eigen::Index>(in_ch) * k, bound, rng);
    b.name = "convb";
    b.init_zero(out_ch, 1);
  }
  std::vector<Param*> params() { return {&W, &b}; }

  Eigen::Index out_len(Eigen::Index T) const {
    if (T < k) throw GradError("Conv1d: input shorter than kernel");
    return (T - k) / stride + 1;
  }

  struct Cache {
    Matrix cols;  // (in_ch*k) x T'
    Matrix y;     // out_ch x T' (post-activation)
    Eigen::Index T = 0;
  };

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    if (x.rows() != in_ch) throw GradError("Conv1d::forward: channel mismatch");
    const Eigen::Index To = out_len(x.cols());
    Matrix cols(static_cast<Eigen::Index>(in_ch) * k, To);
    for (Eigen::Index t = 0; t < To; ++t) {
      for (int c = 0; c < in_ch; ++c)
        for (int j = 0; j < k; ++j)
          cols(static_cast<Eigen::Index>(c) * k + j, t) = x(c, t * stride + j);
    }
    Matrix y = W.w * cols;
    y.colwise() += b.w.col(0);
    y = act_forward(act, y);
    if (cache) {
      cache->cols = cols;
      cache->y = y;
      cache->T = x.cols();
    }
    return y;
  }

  // Accumulates W.g / b.g; returns dx (in_ch x T).
  Matrix backward(const Cache& cache, const Matrix& dy) {
    const Matrix dz = act_backward(act, cache.y, dy);
    W.g += dz * cache.cols.transpose();
    b.g += dz.rowwise().sum();
    const Matrix dcols = W.w.transpose() * dz;  // (in_ch*k) x T'
    Matrix dx = Matrix::Zero(in_ch, cache.T);
    for (Eigen::Index t = 0; t < dcols.cols(); ++t) {
      for (int c = 0; c < in_ch; ++c)
        for (int j = 0; j < k; ++j)
          dx(c, t * stride + j) += dcols(static_cast<Eigen::Index>(c) * k + j, t);
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Losses. Each returns the scalar loss and its gradient wrt the prediction.

enum class LossKind { Mse, BceWithLogit, CrossEntropy2, Hinge };

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

// Mean squared error over all coefficients.
inline LossGrad mse_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw GradError("mse_loss: shape mismatch");
  LossGrad out;
  const Matrix diff = pred - target;
  const double n = static_cast<double>(pred.size());
  out.loss = diff.squaredNorm() / n;
  out.grad = diff * (2.0 / n);
  return out;
}

// Binary cross-entropy on a logit column; labels in {0,1}. Mean over rows.
inline LossGrad bce_with_logit(const Matrix& logit, const Matrix& label01) {
  if (logit.cols() != 1 || label01.rows() != logit.rows())
    throw GradError("bce_with_logit: shape mismatch");
  LossGrad out;
  const double n = static_cast<double>(logit.rows());
  out.grad.resize(logit.rows(), 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logit.rows(); ++i) {
    const double s = logit(i, 0);
    const double y = label01(i, 0);
    if (y != 0.0 && y != 1.0) throw GradError("bce_with_logit: label not in {0,1}");
    total += std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
    const double p = 1.0 / (1.0 + std::exp(-s));
    out.grad(i, 0) = (p - y) / n;
  }
  out.loss = total / n;
  return out;
}

// Two-logit cross-entropy; classes in {0,1}. Mean over rows.
inline LossGrad cross_entropy2(const Matrix& logits, const std::vector<int>& cls) {
  if (logits.cols() != 2 || logits.rows() != static_cast<Eigen::Index>(cls.size()))
    throw GradError("cross_entropy2: shape mismatch");
  LossGrad out;
  const double n = static_cast<double>(logits.rows());
  out.grad = Matrix::Zero(logits.rows(), 2);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int c = cls[static_cast<std::size_t>(i)];
    if (c != 0 && c != 1) throw GradError("cross_entropy2: class label must be 0 or 1");
    const double m = std::max(logits(i, 0), logits(i, 1));
    const double lse = m + std::log(std::exp(logits(i, 0) - m) + std::exp(logits(i, 1) - m));
    total += lse - logits(i, c);
    for (int j = 0; j < 2; ++j) {
      const double p = std::exp(logits(i, j) - lse);
      out.grad(i, j) = (p - (j == c ? 1.0 : 0.0)) / n;
    }
  }
  out.loss = total / n;
  return out;
}

// Hinge on a score column; labels in {-1,+1}, margin 1. Mean over rows.
inline LossGrad hinge_loss(const Matrix& score, const Matrix& label_pm1) {
  if (score.cols() != 1 || label_pm1.rows() != score.rows())
    throw GradError("hinge_loss: shape mismatch");
  LossGrad out;
  const double n = static_cast<double>(score.rows());
  out.grad = Matrix::Zero(score.rows(), 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < score.rows(); ++i) {
    const double y = label_pm1(i, 0);
    if (y != 1.0 && y != -1.0) throw GradError("hinge_loss: label not in {-1,+1}");
    const double margin = 1.0 - y * score(i, 0);
    if (margin > 0.0) {
      total += margin;
      out.grad(i, 0) = -y / n;
    }
  }
  out.loss = total / n;
  return out;
}

// target encoding: Mse -> same shape; BceWithLogit -> {0,1} column;
// CrossEntropy2 -> one class id per row in a column; Hinge -> {-1,+1} column.
inline LossGrad loss_eval(LossKind kind, const Matrix& pred, const Matrix& target) {
  switch (kind) {
    case LossKind::Mse: return mse_loss(pred, target);
    case LossKind::BceWithLogit: return bce_with_logit(pred, target);
    case LossKind::CrossEntropy2: {
      std::vector<int> cls(static_cast<std::size_t>(target.rows()));
      for (Eigen::Index i = 0; i < target.rows(); ++i) {
        const double v = target(i, 0);
        if (v != 0.0 && v != 1.0) throw GradError("loss_eval: class label must be 0 or 1");
        cls[static_cast<std::size_t>(i)] = static_cast<int>(v);
      }
      return cross_entropy2(pred, cls);
    }
    case LossKind::Hinge: return hinge_loss(pred, target);
  }
  throw GradError("loss_eval: bad kind");
}

// ---------------------------------------------------------------------------
// Adam with step decay.

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int decay_every = 15;      // epochs
  double decay_factor = 0.5;
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  int epoch = 0;
  std::vector<Matrix> m, v;

  void attach(const std::vector<Param*>& ps) {
    m.clear();
    v.clear();
    for (const Param* p : ps) {
      m.push_back(Matrix::Zero(p->w.rows(), p->w.cols()));
      v.push_back(Matrix::Zero(p->w.rows(), p->w.cols()));
    }
    step = 0;
    epoch = 0;
  }

  double current_lr() const {
    const int d = cfg.decay_every > 0 ? epoch / cfg.decay_every : 0;
    return cfg.lr * std::pow(cfg.decay_factor, d);
  }

  void step_params(const std::vector<Param*>& ps) {
    if (ps.size() != m.size()) throw GradError("AdamState: attach() params first");
    ++step;
    const double lr = current_lr();
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Param& p = *ps[i];
      if (!p.g.allFinite())
        throw GradError("adam_step: non-finite gradient in parameter '" + p.name + "'");
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * p.g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * p.g.cwiseAbs2();
      const Matrix mhat = m[i] / bc1;
      const Matrix vhat = v[i] / bc2;
      p.w -= lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg.eps).matrix());
    }
  }
};

// ---------------------------------------------------------------------------
// Central-difference gradient checking.

struct GradCheckCoord {
  double* x;
  double analytic;
};

// f() must recompute the scalar objective from current parameter values.
// denom_floor guards coordinates whose true gradient is (near) zero: the
// central-difference estimate there is pure cancellation noise of order
// |f| * eps / h, so callers checking large-valued objectives pass a floor
// above that noise level.
inline double grad_check_max_rel_error(const std::function<double()>& f,
                                       const std::vector<GradCheckCoord>& coords,
                                       double h = 1e-5, double denom_floor = 1e-6) {
  double worst = 0.0;
  for (const auto& c : coords) {
    const double saved = *c.x;
    *c.x = saved + h;
    const double fp = f();
    *c.x = saved - h;
    const double fm = f();
    *c.x = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(c.analytic), denom_floor});
    worst = std::max(worst, std::abs(numeric - c.analytic) / denom);
  }
  return worst;
}

// Convenience: sample up to `max_coords` coordinates of each param.
inline std::vector<GradCheckCoord> sample_coords(const std::vector<Param*>& ps,
                                                 int max_coords_per_param, Rng& rng) {
  std::vector<GradCheckCoord> out;
  for (Param* p : ps) {
    const Eigen::Index n = p->w.size();
    if (max_coords_per_param <= 0 || n <= max_coords_per_param) {
      for (Eigen::Index i = 0; i < n; ++i)
        out.push_back({p->w.data() + i, p->g.data()[i]});
    } else {
      for (int s = 0; s < max_coords_per_param; ++s) {
        const Eigen::Index i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
        out.push_back({p->w.data() + i, p->g.data()[i]});
      }
    }
  }
  return out;
}

}  // namespace mouseforge::grad
