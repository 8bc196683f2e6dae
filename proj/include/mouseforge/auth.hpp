#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mouseforge/featkit.hpp"
#include "mouseforge/gradcore.hpp"
#include "mouseforge/ingest.hpp"
#include "mouseforge/rng.hpp"

namespace mouseforge::auth {

using ingest::RepKind;
using ingest::RepSeq;
using ingest::Trajectory;

struct AuthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// ROC / AUC / EER

struct RocPoint {
  double fpr = 0, tpr = 0, threshold = 0;
};

struct RocResult {
  double auc = 0;
  double eer = 0;
  double threshold_at_eer = 0;
  std::vector<RocPoint> roc_points;
};

namespace detail {

// Exact pair-counting AUC: P(pos > neg) + 0.5 P(tie).
inline double auc_pair_count(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos) {
    for (double q : neg) {
      if (p > q) wins += 1.0;
      else if (p == q) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Rank-based AUC (average ranks over ties); equals pair counting exactly.
inline double auc_rank(const std::vector<double>& pos, const std::vector<double>& neg) {
  struct S {
    double v;
    bool is_pos;
  };
  std::vector<S> all;
  all.reserve(pos.size() + neg.size());
  for (double p : pos) all.push_back({p, true});
  for (double q : neg) all.push_back({q, false});
  std::sort(all.begin(), all.end(), [](const S& a, const S& b) { return a.v < b.v; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (all[k].is_pos) rank_sum_pos += avg_rank;
    i = j;
  }
  const double P = static_cast<double>(pos.size());
  const double N = static_cast<double>(neg.size());
  return (rank_sum_pos - P * (P + 1.0) / 2.0) / (P * N);
}

}  // namespace detail

// Decision rule is score >= threshold. The ROC sweep emits one point per
// distinct score; EER uses linear interpolation between the bracketing points.
inline RocResult roc_eval(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) throw AuthError("roc_eval: both score sets must be non-empty");
  for (double s : pos)
    if (!std::isfinite(s)) throw AuthError("roc_eval: non-finite score");
  for (double s : neg)
    if (!std::isfinite(s)) throw AuthError("roc_eval: non-finite score");

  RocResult out;
  const double P = static_cast<double>(pos.size());
  const double N = static_cast<double>(neg.size());
  out.auc = (P * N <= 1e4) ? detail::auc_pair_count(pos, neg) : detail::auc_rank(pos, neg);

  struct S {
    double v;
    bool is_pos;
  };
  std::vector<S> all;
  all.reserve(pos.size() + neg.size());
  for (double p : pos) all.push_back({p, true});
  for (double q : neg) all.push_back({q, false});
  std::sort(all.begin(), all.end(), [](const S& a, const S& b) { return a.v > b.v; });

  const double hi_sentinel =
      std::max(all.front().v, all.front().v + 1.0);  // accepts nothing
  out.roc_points.push_back({0.0, 0.0, hi_sentinel});
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) {
      if (all[j].is_pos) tp += 1;
      else fp += 1;
      ++j;
    }
    out.roc_points.push_back({fp / N, tp / P, all[i].v});
    i = j;
  }

  // EER: fpr - fnr crosses zero exactly once along the sweep.
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < out.roc_points.size(); ++k) {
    const auto& a = out.roc_points[k];
    const auto& b = out.roc_points[k + 1];
    const double da = a.fpr - (1.0 - a.tpr);
    const double db = b.fpr - (1.0 - b.tpr);
    if (da <= 0.0 && db >= 0.0) {
      const double t = (db - da) > 0.0 ? -da / (db - da) : 0.0;
      out.eer = a.fpr + t * (b.fpr - a.fpr);
      // halfway correction: at the crossing fpr == fnr up to the grid
      const double fnr = (1.0 - a.tpr) + t * ((1.0 - b.tpr) - (1.0 - a.tpr));
      out.eer = 0.5 * (out.eer + fnr);
      out.threshold_at_eer = a.threshold + t * (b.threshold - a.threshold);
      best_gap = 0.0;
      break;
    }
  }
  if (best_gap != 0.0) {
    // fall back to the point minimizing |fpr - fnr|
    for (const auto& p : out.roc_points) {
      const double gap = std::abs(p.fpr - (1.0 - p.tpr));
      if (gap < best_gap) {
        best_gap = gap;
        out.eer = 0.5 * (p.fpr + (1.0 - p.tpr));
        out.threshold_at_eer = p.threshold;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear SVM over the 64 engineered features (primal hinge + L2, Adam).

struct SvmModel {
  Eigen::VectorXd w;
  double b = 0.0;
  feat::Standardizer standardizer;
  double threshold = 0.0;
  bool calibrated = false;
  double clean_alert_rate = 0.0;

  double score_standardized(const Eigen::VectorXd& xs) const { return w.dot(xs) + b; }
  double score(const feat::FeatureVector& f) const {
    return score_standardized(feat::standardize_apply(standardizer, f.values));
  }
  double score(const Trajectory& window) const { return score(feat::extract_features(window)); }
};

struct SvmHyper {
  double C = 1.0;
  int epochs = 300;
  double lr = 0.05;
};

struct SvmTrainReport {
  std::vector<double> objective_history;
  double train_accuracy = 0.0;
};

inline SvmModel train_svm(const std::vector<feat::FeatureVector>& pos,
                          const std::vector<feat::FeatureVector>& neg,
                          const SvmHyper& hyper = {}, std::uint64_t seed = 0,
                          SvmTrainReport* report = nullptr) {
  (void)seed;  // full-batch descent from zero init; kept for interface symmetry
  if (pos.empty() || neg.empty()) throw AuthError("train_svm: both classes must be non-empty");
  std::vector<feat::FeatureVector> all = pos;
  all.insert(all.end(), neg.begin(), neg.end());
  feat::Standardizer st = standardize_fit(all);

  const Eigen::Index d = all[0].values.size();
  const Eigen::Index n = static_cast<Eigen::Index>(all.size());
  grad::Matrix X(n, d);
  grad::Matrix y(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) = feat::standardize_apply(st, all[static_cast<std::size_t>(i)].values).transpose();
    y(i, 0) = i < static_cast<Eigen::Index>(pos.size()) ? 1.0 : -1.0;
  }

  grad::Param w, b;
  w.name = "svm_w";
  w.init_zero(d, 1);
  b.name = "svm_b";
  b.init_zero(1, 1);
  std::vector<grad::Param*> params{&w, &b};
  grad::AdamState adam;
  adam.cfg.lr = hyper.lr;
  adam.cfg.decay_every = 0;  // no decay
  adam.attach(params);

  const double reg = 1.0 / (2.0 * hyper.C * static_cast<double>(n));
  auto objective = [&](const grad::Matrix& scores) {
    double hinge = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      hinge += std::max(0.0, 1.0 - y(i, 0) * scores(i, 0));
    return hinge / static_cast<double>(n) + reg * w.w.squaredNorm();
  };

  std::vector<double> history;
  for (int epoch = 0; epoch <= hyper.epochs; ++epoch) {
    grad::Matrix scores = X * w.w;
    scores.array() += b.w(0, 0);
    history.push_back(objective(scores));
    if (epoch == hyper.epochs) break;
    grad::zero_grads(params);
    const auto lg = grad::hinge_loss(scores, y);
    w.g += X.transpose() * lg.grad;
    b.g(0, 0) += lg.grad.sum();
    w.g += (2.0 * reg) * w.w;
    adam.step_params(params);
  }

  SvmModel m;
  m.w = w.w.col(0);
  m.b = b.w(0, 0);
  m.standardizer = std::move(st);
  if (report) {
    report->objective_history = history;
    grad::Matrix scores = X * w.w;
    scores.array() += b.w(0, 0);
    int correct = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if ((scores(i, 0) >= 0.0 ? 1.0 : -1.0) == y(i, 0)) ++correct;
    report->train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  }
  return m;
}

// ---------------------------------------------------------------------------
// 1DCNN over velocity sequences. Two first-layer branches read the input at
// different time scales; a shared second convolution processes both; global
// average pooling feeds a dense head that emits one score.

struct CnnModel {
  grad::Conv1d convA;  // kernel 5, stride 1, 2 -> 16
  grad::Conv1d convB;  // kernel 10, stride 2, 2 -> 16
  grad::Conv1d conv2;  // kernel 3, stride 1, 16 -> 32 (shared across branches)
  grad::Dense head;    // 32 -> 1
  int seqlen = 50;
  double threshold = 0.0;
  bool calibrated = false;
  double clean_alert_rate = 0.0;

  std::vector<grad::Param*> params() {
    std::vector<grad::Param*> ps;
    for (auto* p : convA.params()) ps.push_back(p);
    for (auto* p : convB.params()) ps.push_back(p);
    for (auto* p : conv2.params()) ps.push_back(p);
    for (auto* p : head.params()) ps.push_back(p);
    return ps;
  }

  struct Cache {
    grad::Conv1d::Cache a, b, c1, c2;
    grad::Dense::Cache h;
    Eigen::Index ta = 0, tb = 0;
  };

  double forward(const Eigen::Matrix2Xd& vel, Cache* cache = nullptr) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    const grad::Matrix x = vel;
    const grad::Matrix a = convA.forward(x, &c.a);
    const grad::Matrix b = convB.forward(x, &c.b);
    const grad::Matrix p1 = conv2.forward(a, &c.c1);
    const grad::Matrix p2 = conv2.forward(b, &c.c2);
    c.ta = p1.cols();
    c.tb = p2.cols();
    grad::Matrix pooled = 0.5 * (p1.rowwise().mean() + p2.rowwise().mean());
    const grad::Matrix s = head.forward(pooled.transpose(), &c.h);
    return s(0, 0);
  }

  double score(const Eigen::Matrix2Xd& vel) const { return forward(vel); }
  double score(const RepSeq& r) const {
    if (r.kind != RepKind::Vel) throw AuthError("CnnModel::score: expects a VEL sequence");
    if (r.length() != seqlen) throw AuthError("CnnModel::score: sequence length mismatch");
    return forward(r.points);
  }

  // Backward from d(score) = ds; accumulates parameter grads, returns d(input).
  Eigen::Matrix2Xd backward(Cache& c, double ds) {
    grad::Matrix dsm(1, 1);
    dsm(0, 0) = ds;
    const grad::Matrix dpooled_row = head.backward(c.h, dsm);  // 1 x 32
    const grad::Matrix dpooled = dpooled_row.transpose();      // 32 x 1
    grad::Matrix dp1 = (0.5 / static_cast<double>(c.ta)) * dpooled.replicate(1, c.ta);
    grad::Matrix dp2 = (0.5 / static_cast<double>(c.tb)) * dpooled.replicate(1, c.tb);
    const grad::Matrix da = conv2.backward(c.c1, dp1);
    const grad::Matrix db = conv2.backward(c.c2, dp2);
    const grad::Matrix dx = convA.backward(c.a, da) + convB.backward(c.b, db);
    return dx;
  }
};

inline CnnModel make_cnn(int seqlen, std::uint64_t seed) {
  // branchB (k10 s2) then conv2 (k3) needs (seqlen-10)/2+1 >= 3
  if (seqlen < 14) throw AuthError("make_cnn: seqlen must be >= 14");
  CnnModel m;
  m.seqlen = seqlen;
  Rng rng(splitmix64(seed ^ 0xc22au));
  m.convA.init(2, 16, 5, 1, rng, grad::Act::Elu);
  m.convB.init(2, 16, 10, 2, rng, grad::Act::Elu);
  m.conv2.init(16, 32, 3, 1, rng, grad::Act::Elu);
  m.head.init(32, 1, rng, grad::Act::None);
  return m;
}

struct CnnHyper {
  int epochs = 60;
  double lr = 1e-3;
  int decay_every = 15;
  double decay_factor = 0.5;
  int batch = 64;
  double clip = 5.0;
  std::size_t max_pos = 800;   // subsample cap on the positive class
  double neg_ratio = 3.0;      // negatives downsampled to this multiple of pos
};

struct CnnTrainReport {
  std::vector<double> loss_history;
  std::size_t n_pos = 0, n_neg = 0;
};

// Binary cross-entropy on the sigmoid of the scalar score; labels: user = 1.
inline CnnModel train_cnn(const std::vector<RepSeq>& pos, const std::vector<RepSeq>& neg,
                          const CnnHyper& hyper = {}, std::uint64_t seed = 0,
                          CnnTrainReport* report = nullptr) {
  if (pos.empty() || neg.empty()) throw AuthError("train_cnn: both classes must be non-empty");
  const Eigen::Index L = pos[0].length();
  for (const auto& r : pos)
    if (r.length() != L) throw AuthError("train_cnn: mixed sequence lengths");
  for (const auto& r : neg)
    if (r.length() != L) throw AuthError("train_cnn: mixed sequence lengths");

  Rng rng(splitmix64(seed ^ 0x7a11u));
  auto subsample = [&](const std::vector<RepSeq>& v, std::size_t cap) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::vector<const RepSeq*> out;
    for (std::size_t i = 0; i < std::min(cap, v.size()); ++i) out.push_back(&v[idx[i]]);
    return out;
  };
  const auto ps = subsample(pos, hyper.max_pos);
  const auto ns = subsample(
      neg, static_cast<std::size_t>(hyper.neg_ratio * static_cast<double>(ps.size())));

  struct Item {
    const RepSeq* r;
    double label;
  };
  std::vector<Item> data;
  for (auto* r : ps) data.push_back({r, 1.0});
  for (auto* r : ns) data.push_back({r, 0.0});

  CnnModel m = make_cnn(static_cast<int>(L), seed);
  auto params = m.params();
  grad::AdamState adam;
  adam.cfg.lr = hyper.lr;
  adam.cfg.decay_every = hyper.decay_every;
  adam.cfg.decay_factor = hyper.decay_factor;
  adam.attach(params);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> loss_hist;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    adam.epoch = epoch;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t nb = 0;
    for (std::size_t base = 0; base < order.size(); base += static_cast<std::size_t>(hyper.batch)) {
      const std::size_t B = std::min(order.size() - base, static_cast<std::size_t>(hyper.batch));
      std::vector<CnnModel::Cache> caches(B);
      grad::Matrix logit(static_cast<Eigen::Index>(B), 1), label(static_cast<Eigen::Index>(B), 1);
      for (std::size_t i = 0; i < B; ++i) {
        const Item& it = data[order[base + i]];
        logit(static_cast<Eigen::Index>(i), 0) = m.forward(it.r->points, &caches[i]);
        label(static_cast<Eigen::Index>(i), 0) = it.label;
      }
      const auto lg = grad::bce_with_logit(logit, label);
      grad::zero_grads(params);
      for (std::size_t i = 0; i < B; ++i)
        m.backward(caches[i], lg.grad(static_cast<Eigen::Index>(i), 0));
      grad::clip_grad_norm(params, hyper.clip);
      adam.step_params(params);
      epoch_loss += lg.loss;
      ++nb;
    }
    loss_hist.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, nb)));
  }
  if (report) {
    report->loss_history = loss_hist;
    report->n_pos = ps.size();
    report->n_neg = ns.size();
  }
  return m;
}

// ---------------------------------------------------------------------------
// A calibrated scoring model: higher score = more legitimate; the binary
// decision is score >= threshold with the threshold set at the EER point of
// a validation ROC.

struct Scorer {
  virtual ~Scorer() = default;
  virtual double score_window(const Trajectory& window) const = 0;
  virtual double threshold() const = 0;
  virtual bool calibrated() const = 0;
  virtual double clean_alert_rate() const = 0;
  virtual std::string name() const = 0;
  bool decide(const Trajectory& window) const { return score_window(window) >= threshold(); }
};

struct SvmScorer final : Scorer {
  SvmModel model;
  explicit SvmScorer(SvmModel m) : model(std::move(m)) {}
  double score_window(const Trajectory& w) const override { return model.score(w); }
  double threshold() const override { return model.threshold; }
  bool calibrated() const override { return model.calibrated; }
  double clean_alert_rate() const override { return model.clean_alert_rate; }
  std::string name() const override { return "svm"; }
};

struct CnnScorer final : Scorer {
  CnnModel model;
  explicit CnnScorer(CnnModel m) : model(std::move(m)) {}
  double score_window(const Trajectory& w) const override {
    auto reps = ingest::to_rep(w, RepKind::Vel, model.seqlen);
    if (reps.empty())
      throw AuthError("CnnScorer: window does not yield a full VEL sequence");
    return model.score(reps.front());
  }
  double threshold() const override { return model.threshold; }
  bool calibrated() const override { return model.calibrated; }
  double clean_alert_rate() const override { return model.clean_alert_rate; }
  std::string name() const override { return "1dcnn"; }
};

// Sets the decision threshold at the validation EER point and records the
// clean alert rate (fraction of validation positives rejected there).
template <typename Model>
RocResult calibrate_threshold(Model& m, const std::vector<double>& val_pos,
                              const std::vector<double>& val_neg) {
  if (val_pos.empty() || val_neg.empty())
    throw AuthError("calibrate_threshold: validation sets must be non-empty");
  const RocResult roc = roc_eval(val_pos, val_neg);
  m.threshold = roc.threshold_at_eer;
  m.calibrated = true;
  int rejected = 0;
  for (double s : val_pos)
    if (s < m.threshold) ++rejected;
  m.clean_alert_rate = static_cast<double>(rejected) / static_cast<double>(val_pos.size());
  return roc;
}

}  // namespace mouseforge::auth
