#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mouseforge/auth.hpp"
#include "mouseforge/featkit.hpp"
#include "mouseforge/gradcore.hpp"
#include "mouseforge/ingest.hpp"
#include "mouseforge/rng.hpp"

namespace mouseforge::attack {

using ingest::RepKind;
using ingest::RepSeq;
using ingest::Trajectory;

struct AttackError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Statistics-based attack: histogram of position-difference vectors, histogram
// of starting points, and the median inter-event interval. Sequences are built
// by weighted bin sampling (uniform within the chosen bin) and cumulative
// summation from a sampled start point.

struct Hist2d {
  Eigen::Vector2d lo = Eigen::Vector2d::Zero();
  Eigen::Vector2d hi = Eigen::Vector2d::Ones();
  int nx = 64, ny = 64;
  Eigen::VectorXd counts;  // nx * ny, row-major over (ix, iy)
  double total = 0.0;

  void init(int nx_, int ny_) {
    nx = nx_;
    ny = ny_;
    counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nx) * ny);
    total = 0.0;
  }

  // Bin edges cover the observed range exactly; near-degenerate ranges get a
  // small symmetric pad so rounding noise stays inside one bin.
  void fit_range(const std::vector<Eigen::Vector2d>& pts) {
    lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
    hi = -lo;
    for (const auto& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    for (int d = 0; d < 2; ++d) {
      if (hi[d] - lo[d] < 1e-12) {
        // pad and offset by half a bin so the point mass sits mid-bin
        const double mid = 0.5 * (lo[d] + hi[d]);
        const double half = 1e-9;
        const double n = d == 0 ? nx : ny;
        lo[d] = mid - half - half / n;
        hi[d] = mid + half - half / n;
      }
    }
  }

  int clamp_ix(double v, double l, double h, int n) const {
    const int i = static_cast<int>((v - l) / (h - l) * n);
    return std::clamp(i, 0, n - 1);
  }

  void add(const Eigen::Vector2d& p) {
    const int ix = clamp_ix(p.x(), lo.x(), hi.x(), nx);
    const int iy = clamp_ix(p.y(), lo.y(), hi.y(), ny);
    counts[static_cast<Eigen::Index>(ix) * ny + iy] += 1.0;
    total += 1.0;
  }

  int bin_index(const Eigen::Vector2d& p) const {
    return clamp_ix(p.x(), lo.x(), hi.x(), nx) * ny + clamp_ix(p.y(), lo.y(), hi.y(), ny);
  }

  // Weighted bin selection, then uniform within the bin bounds.
  Eigen::Vector2d sample(Rng& rng) const {
    if (total <= 0.0) throw AttackError("Hist2d::sample: empty histogram");
    double r = rng.uniform() * total;
    Eigen::Index chosen = counts.size() - 1;
    for (Eigen::Index i = 0; i < counts.size(); ++i) {
      r -= counts[i];
      if (r <= 0.0) {
        chosen = i;
        break;
      }
    }
    const int ix = static_cast<int>(chosen / ny);
    const int iy = static_cast<int>(chosen % ny);
    const double wx = (hi.x() - lo.x()) / nx;
    const double wy = (hi.y() - lo.y()) / ny;
    return {lo.x() + (ix + rng.uniform()) * wx, lo.y() + (iy + rng.uniform()) * wy};
  }
};

struct StatsProfile {
  Hist2d dv_hist;
  Hist2d start_hist;
  double median_dt = 0.0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw AttackError("median_of: empty");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline StatsProfile build_stats_profile(const std::vector<Trajectory>& ts, int dv_bins = 64,
                                        int start_bins = 32) {
  std::vector<Eigen::Vector2d> dvs, starts;
  std::vector<double> dts;
  for (const auto& t : ts) {
    if (t.empty()) continue;
    starts.emplace_back(t.events.front().x, t.events.front().y);
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      const auto& a = t.events[i];
      const auto& b = t.events[i + 1];
      dvs.emplace_back(b.x - a.x, b.y - a.y);
      dts.push_back(b.ts - a.ts);
    }
  }
  if (dvs.empty()) throw AttackError("build_stats_profile: no movement data");
  StatsProfile p;
  p.dv_hist.init(dv_bins, dv_bins);
  p.dv_hist.fit_range(dvs);
  for (const auto& d : dvs) p.dv_hist.add(d);
  p.start_hist.init(start_bins, start_bins);
  p.start_hist.fit_range(starts);
  for (const auto& s : starts) p.start_hist.add(s);
  p.median_dt = median_of(dts);
  return p;
}

inline Eigen::Vector2d sample_delta(const StatsProfile& p, Rng& rng) {
  return p.dv_hist.sample(rng);
}

inline Trajectory sample_stats_sequence(const StatsProfile& p, int len, std::uint64_t seed) {
  if (len < 1) throw AttackError("sample_stats_sequence: len must be >= 1");
  Rng rng(seed);
  Trajectory t;
  t.user_id = "stats";
  t.session_id = "gen";
  Eigen::Vector2d pos = p.start_hist.sample(rng);
  pos.x() = std::clamp(pos.x(), 0.0, 1.0);
  pos.y() = std::clamp(pos.y(), 0.0, 1.0);
  t.events.push_back({0.0, pos.x(), pos.y()});
  for (int i = 1; i < len; ++i) {
    pos += sample_delta(p, rng);
    pos.x() = std::clamp(pos.x(), 0.0, 1.0);
    pos.y() = std::clamp(pos.y(), 0.0, 1.0);
    t.events.push_back({i * p.median_dt, pos.x(), pos.y()});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Imitation-based attack: a 2-layer GRU (hidden 128) generator trained with
// teacher forcing to predict the next point of the chosen representation,
// optionally regularized toward user-level statistics.

enum class RegKind { No, Derivative, Cluster };

inline const char* reg_name(RegKind k) {
  switch (k) {
    case RegKind::No: return "no";
    case RegKind::Derivative: return "derivative";
    case RegKind::Cluster: return "cluster";
  }
  return "?";
}

inline RegKind reg_from_name(const std::string& s) {
  if (s == "no" || s == "none") return RegKind::No;
  if (s == "derivative") return RegKind::Derivative;
  if (s == "cluster") return RegKind::Cluster;
  throw AttackError("unknown regularizer: " + s);
}

struct GenSettings {
  RepKind rep = RepKind::Dv;
  RegKind reg = RegKind::No;
  int seqlen = 50;
  double lambda = 0.1;
};

struct GenHyper {
  double lr = 1e-3;
  int epochs = 60;
  int decay_every = 15;
  double decay_factor = 0.5;
  int batch = 64;
  double clip = 5.0;
  std::size_t max_seqs = 256;
};

struct GeneratorModel {
  grad::GruStack rnn;  // 2 layers, input 2, hidden 128
  grad::Dense head;    // 128 -> 2
  GenSettings settings;
  double median_dt = 0.008;
  Eigen::Vector2d derivative_target = Eigen::Vector2d::Zero();
  std::optional<feat::KMeansModel> kmeans;
  std::vector<double> loss_history;

  std::vector<grad::Param*> params() {
    auto ps = rnn.params();
    for (auto* p : head.params()) ps.push_back(p);
    return ps;
  }
};

namespace detail {

// Velocities implied by a block of consecutive rep-space points (one sample),
// plus the gradient mapping back onto those points. dt is the constant step
// used during training-time regularization.
struct RegGrad {
  double value = 0.0;
  Eigen::Matrix2Xd dpoints;  // same shape as the prediction block
};

inline Eigen::Matrix2Xd rep_block_velocities(RepKind rep, const Eigen::Matrix2Xd& pts,
                                             double dt) {
  switch (rep) {
    case RepKind::Vel:
      return pts;
    case RepKind::Dv:
      return pts / dt;
    case RepKind::Abs: {
      const Eigen::Index n = pts.cols() - 1;
      Eigen::Matrix2Xd v(2, std::max<Eigen::Index>(n, 0));
      for (Eigen::Index i = 0; i < n; ++i) v.col(i) = (pts.col(i + 1) - pts.col(i)) / dt;
      return v;
    }
  }
  throw AttackError("rep_block_velocities: bad kind");
}

// Scatter a velocity-space gradient back onto the prediction block.
inline void add_vel_grad(RepKind rep, const Eigen::Matrix2Xd& dv, double dt,
                         Eigen::Matrix2Xd& dpoints) {
  switch (rep) {
    case RepKind::Vel:
      dpoints += dv;
      return;
    case RepKind::Dv:
      dpoints += dv / dt;
      return;
    case RepKind::Abs:
      for (Eigen::Index i = 0; i < dv.cols(); ++i) {
        dpoints.col(i + 1) += dv.col(i) / dt;
        dpoints.col(i) -= dv.col(i) / dt;
      }
      return;
  }
  throw AttackError("add_vel_grad: bad kind");
}

// ||mean derivative - target||^2. "Derivative" is the velocity for ABS/DV
// generators and the acceleration for VEL generators.
inline RegGrad derivative_reg(RepKind rep, const Eigen::Matrix2Xd& preds, double dt,
                              const Eigen::Vector2d& target) {
  RegGrad out;
  out.dpoints = Eigen::Matrix2Xd::Zero(2, preds.cols());
  Eigen::Matrix2Xd deriv;
  if (rep == RepKind::Vel) {
    // acceleration between consecutive predicted velocities
    const Eigen::Index n = preds.cols() - 1;
    if (n < 1) return out;
    deriv.resize(2, n);
    for (Eigen::Index i = 0; i < n; ++i) deriv.col(i) = (preds.col(i + 1) - preds.col(i)) / dt;
  } else {
    deriv = rep_block_velocities(rep, preds, dt);
    if (deriv.cols() < 1) return out;
  }
  const Eigen::Vector2d mean = deriv.rowwise().mean();
  const Eigen::Vector2d r = mean - target;
  out.value = r.squaredNorm();
  const double inv_n = 1.0 / static_cast<double>(deriv.cols());
  Eigen::Matrix2Xd ddv = Eigen::Matrix2Xd::Zero(2, deriv.cols());
  for (Eigen::Index i = 0; i < deriv.cols(); ++i) ddv.col(i) = 2.0 * r * inv_n;
  if (rep == RepKind::Vel) {
    for (Eigen::Index i = 0; i < ddv.cols(); ++i) {
      out.dpoints.col(i + 1) += ddv.col(i) / dt;
      out.dpoints.col(i) -= ddv.col(i) / dt;
    }
  } else {
    add_vel_grad(rep, ddv, dt, out.dpoints);
  }
  return out;
}

// Euclidean distance from the predicted sequence's 10 cluster features to the
// nearest centroid of a fitted k-means model, differentiated by hand through
// the mean/std/atan2 chain.
inline RegGrad cluster_reg(RepKind rep, const Eigen::Matrix2Xd& preds, double dt,
                           const feat::KMeansModel& km) {
  RegGrad out;
  out.dpoints = Eigen::Matrix2Xd::Zero(2, preds.cols());
  const Eigen::Matrix2Xd v = rep_block_velocities(rep, preds, dt);
  const Eigen::Index nv = v.cols();
  if (nv < 3) return out;
  const Eigen::Index na = nv - 1;
  Eigen::Matrix2Xd a(2, na);
  for (Eigen::Index i = 0; i < na; ++i) a.col(i) = (v.col(i + 1) - v.col(i)) / dt;
  Eigen::VectorXd ang(nv);
  for (Eigen::Index i = 0; i < nv; ++i) ang[i] = std::atan2(v.col(i).y(), v.col(i).x());

  auto mean_std = [](const Eigen::VectorXd& u) {
    const double m = u.mean();
    const double s = std::sqrt((u.array() - m).square().mean());
    return std::pair<double, double>(m, s);
  };
  Eigen::VectorXd f(10);
  const Eigen::VectorXd vx = v.row(0).transpose(), vy = v.row(1).transpose();
  const Eigen::VectorXd ax = a.row(0).transpose(), ay = a.row(1).transpose();
  const auto [mvx, svx] = mean_std(vx);
  const auto [mvy, svy] = mean_std(vy);
  const auto [max_, sax] = mean_std(ax);
  const auto [may_, say] = mean_std(ay);
  const auto [mag, sag] = mean_std(ang);
  f << mvx, svx, mvy, svy, max_, sax, may_, say, mag, sag;

  Eigen::Index best = 0;
  double bestd = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < km.centroids.rows(); ++j) {
    const double d = (f.transpose() - km.centroids.row(j)).norm();
    if (d < bestd) {
      bestd = d;
      best = j;
    }
  }
  out.value = bestd;
  if (bestd < 1e-12) return out;
  const Eigen::VectorXd df = (f - km.centroids.row(best).transpose()) / bestd;

  // d mean(u)/du_i = 1/n ; d std(u)/du_i = (u_i - mean)/(n*std)
  auto stat_grad = [](const Eigen::VectorXd& u, double m, double s, double dmean,
                      double dstd) {
    Eigen::VectorXd g = Eigen::VectorXd::Constant(u.size(), dmean / static_cast<double>(u.size()));
    if (s > 1e-12) g += dstd * (u.array() - m).matrix() / (static_cast<double>(u.size()) * s);
    return g;
  };
  Eigen::Matrix2Xd dv = Eigen::Matrix2Xd::Zero(2, nv);
  dv.row(0) += stat_grad(vx, mvx, svx, df[0], df[1]).transpose();
  dv.row(1) += stat_grad(vy, mvy, svy, df[2], df[3]).transpose();
  Eigen::Matrix2Xd da = Eigen::Matrix2Xd::Zero(2, na);
  da.row(0) += stat_grad(ax, max_, sax, df[4], df[5]).transpose();
  da.row(1) += stat_grad(ay, may_, say, df[6], df[7]).transpose();
  const Eigen::VectorXd dang = stat_grad(ang, mag, sag, df[8], df[9]);

  for (Eigen::Index i = 0; i < na; ++i) {
    dv.col(i + 1) += da.col(i) / dt;
    dv.col(i) -= da.col(i) / dt;
  }
  for (Eigen::Index i = 0; i < nv; ++i) {
    const double n2 = v.col(i).squaredNorm();
    if (n2 > 1e-12) {
      dv(0, i) += dang[i] * (-v.col(i).y() / n2);
      dv(1, i) += dang[i] * (v.col(i).x() / n2);
    }
  }
  add_vel_grad(rep, dv, dt, out.dpoints);
  return out;
}

inline RegGrad eval_reg(const GeneratorModel& g, const Eigen::Matrix2Xd& preds) {
  switch (g.settings.reg) {
    case RegKind::No: {
      RegGrad out;
      out.dpoints = Eigen::Matrix2Xd::Zero(2, preds.cols());
      return out;
    }
    case RegKind::Derivative:
      return derivative_reg(g.settings.rep, preds, g.median_dt, g.derivative_target);
    case RegKind::Cluster:
      if (!g.kmeans) throw AttackError("cluster regularizer requires a fitted k-means model");
      return cluster_reg(g.settings.rep, preds, g.median_dt, *g.kmeans);
  }
  throw AttackError("eval_reg: bad kind");
}

}  // namespace detail

// Mean velocity of the training windows for ABS/DV, mean acceleration for VEL.
inline Eigen::Vector2d derivative_target_of(const std::vector<RepSeq>& seqs, RepKind rep) {
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  long n = 0;
  for (const auto& r : seqs) {
    const Eigen::Matrix2Xd v = feat::detail::rep_velocities(r);
    if (rep == RepKind::Vel) {
      for (Eigen::Index i = 0; i + 1 < v.cols(); ++i) {
        acc += (v.col(i + 1) - v.col(i)) / r.dts[i + 1];
        ++n;
      }
    } else {
      for (Eigen::Index i = 0; i < v.cols(); ++i) {
        acc += v.col(i);
        ++n;
      }
    }
  }
  if (n == 0) throw AttackError("derivative_target_of: no data");
  return acc / static_cast<double>(n);
}

inline double median_dt_of(const std::vector<RepSeq>& seqs) {
  std::vector<double> dts;
  for (const auto& r : seqs)
    for (Eigen::Index i = 0; i < r.dts.size(); ++i) dts.push_back(r.dts[i]);
  return median_of(std::move(dts));
}

inline GeneratorModel train_generator(const std::vector<RepSeq>& user_seqs,
                                      const GenSettings& settings, const GenHyper& hyper = {},
                                      std::uint64_t seed = 0,
                                      const feat::KMeansModel* kmeans = nullptr) {
  if (user_seqs.empty()) throw AttackError("train_generator: no training sequences");
  const Eigen::Index L = user_seqs[0].length();
  if (L != settings.seqlen)
    throw AttackError("train_generator: sequences do not match settings.seqlen");
  for (const auto& r : user_seqs) {
    if (r.length() != L) throw AttackError("train_generator: mixed sequence lengths");
    if (r.kind != settings.rep) throw AttackError("train_generator: wrong representation");
  }
  if (settings.reg == RegKind::Cluster && kmeans == nullptr)
    throw AttackError("train_generator: cluster regularizer requires kmeans");

  GeneratorModel g;
  g.settings = settings;
  g.median_dt = median_dt_of(user_seqs);
  g.derivative_target = derivative_target_of(user_seqs, settings.rep);
  if (kmeans) g.kmeans = *kmeans;

  Rng rng(splitmix64(seed ^ 0x6e47u));
  g.rnn.init(2, 128, 2, rng);
  g.head.init(128, 2, rng, grad::Act::None);
  auto params = g.params();
  grad::AdamState adam;
  adam.cfg.lr = hyper.lr;
  adam.cfg.decay_every = hyper.decay_every;
  adam.cfg.decay_factor = hyper.decay_factor;
  adam.attach(params);

  std::vector<std::size_t> pool(user_seqs.size());
  std::iota(pool.begin(), pool.end(), 0);
  rng.shuffle(pool);
  pool.resize(std::min(pool.size(), hyper.max_seqs));

  const Eigen::Index T = L - 1;  // teacher-forced steps
  std::vector<std::size_t> order = pool;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    adam.epoch = epoch;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t nb = 0;
    for (std::size_t base = 0; base < order.size(); base += static_cast<std::size_t>(hyper.batch)) {
      const Eigen::Index B =
          static_cast<Eigen::Index>(std::min(order.size() - base,
                                             static_cast<std::size_t>(hyper.batch)));
      std::vector<grad::Matrix> xs(static_cast<std::size_t>(T));
      for (Eigen::Index t = 0; t < T; ++t) {
        grad::Matrix x(B, 2);
        for (Eigen::Index b = 0; b < B; ++b)
          x.row(b) = user_seqs[order[base + static_cast<std::size_t>(b)]].points.col(t).transpose();
        xs[static_cast<std::size_t>(t)] = std::move(x);
      }
      grad::GruStack::Cache cache;
      const auto top = g.rnn.forward(xs, &cache);
      std::vector<grad::Dense::Cache> hcaches(static_cast<std::size_t>(T));
      std::vector<grad::Matrix> preds(static_cast<std::size_t>(T));
      for (Eigen::Index t = 0; t < T; ++t)
        preds[static_cast<std::size_t>(t)] =
            g.head.forward(top[static_cast<std::size_t>(t)], &hcaches[static_cast<std::size_t>(t)]);

      // teacher-forced MSE
      const double inv = 1.0 / static_cast<double>(B * T * 2);
      double loss = 0.0;
      std::vector<grad::Matrix> dpred(static_cast<std::size_t>(T));
      for (Eigen::Index t = 0; t < T; ++t) {
        grad::Matrix target(B, 2);
        for (Eigen::Index b = 0; b < B; ++b)
          target.row(b) =
              user_seqs[order[base + static_cast<std::size_t>(b)]].points.col(t + 1).transpose();
        const grad::Matrix diff = preds[static_cast<std::size_t>(t)] - target;
        loss += diff.squaredNorm() * inv;
        dpred[static_cast<std::size_t>(t)] = diff * (2.0 * inv);
      }

      // per-sequence regularizer on the teacher-forced predictions
      if (settings.reg != RegKind::No && settings.lambda != 0.0) {
        const double wb = settings.lambda / static_cast<double>(B);
        for (Eigen::Index b = 0; b < B; ++b) {
          Eigen::Matrix2Xd block(2, T);
          for (Eigen::Index t = 0; t < T; ++t)
            block.col(t) = preds[static_cast<std::size_t>(t)].row(b).transpose();
          const auto rg = detail::eval_reg(g, block);
          loss += wb * rg.value;
          for (Eigen::Index t = 0; t < T; ++t)
            dpred[static_cast<std::size_t>(t)].row(b) += wb * rg.dpoints.col(t).transpose();
        }
      }

      grad::zero_grads(params);
      std::vector<grad::Matrix> dtop(static_cast<std::size_t>(T));
      for (Eigen::Index t = 0; t < T; ++t)
        dtop[static_cast<std::size_t>(t)] =
            g.head.backward(hcaches[static_cast<std::size_t>(t)], dpred[static_cast<std::size_t>(t)]);
      g.rnn.backward(cache, dtop);
      grad::clip_grad_norm(params, hyper.clip);
      adam.step_params(params);
      epoch_loss += loss;
      ++nb;
    }
    g.loss_history.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, nb)));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Generation. Start-point rollout seeds the recurrence with a single
// rep-space value; start-sequence rollout warms the hidden state up on a full
// window first, then continues closed-loop.

struct StartPoint {
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();  // absolute anchor
  Eigen::Vector2d rep0 = Eigen::Vector2d::Zero();    // first rep-space input
};

inline StartPoint start_point_of(const RepSeq& r) {
  StartPoint s;
  s.origin = r.origin;
  s.rep0 = r.kind == RepKind::Abs ? Eigen::Vector2d(r.origin) : Eigen::Vector2d(r.points.col(0));
  return s;
}

namespace detail {

inline Eigen::Vector2d step_model(const GeneratorModel& g, const Eigen::Vector2d& x,
                                  std::vector<grad::Matrix>& h) {
  grad::Matrix xr(1, 2);
  xr << x.x(), x.y();
  const grad::Matrix* in = &xr;
  grad::Matrix cur;
  for (std::size_t l = 0; l < g.rnn.layers.size(); ++l) {
    cur = grad::gru_cell_step(g.rnn.layers[l], *in, h[l]);
    h[l] = cur;
    in = &h[l];
  }
  const grad::Matrix y = g.head.forward(h.back());
  return {y(0, 0), y(0, 1)};
}

}  // namespace detail

// Closed-loop rollout from a single start value; returns a trajectory of
// exactly `len` events beginning at the absolute origin.
inline Trajectory generate_start_point(const GeneratorModel& g, const StartPoint& start,
                                       int len, double median_dt) {
  if (len < 1) throw AttackError("generate_start_point: len must be >= 1");
  RepSeq r;
  r.kind = g.settings.rep;
  r.origin = start.origin;
  r.t0 = 0.0;
  const int n_points = len - 1;
  r.points.resize(2, n_points);
  r.dts = Eigen::VectorXd::Constant(n_points, median_dt);
  if (n_points > 0) {
    auto h = g.rnn.zero_state(1);
    Eigen::Vector2d x = start.rep0;
    if (g.settings.rep == RepKind::Abs) {
      // first input is the origin itself; first emitted point is a prediction
      for (int i = 0; i < n_points; ++i) {
        x = detail::step_model(g, x, h);
        r.points.col(i) = x;
      }
    } else {
      // the seed delta/velocity is the first emitted point
      r.points.col(0) = x;
      for (int i = 1; i < n_points; ++i) {
        x = detail::step_model(g, x, h);
        r.points.col(i) = x;
      }
    }
  }
  Trajectory t = ingest::from_rep(r);
  t.user_id = "imitate";
  t.session_id = "gen";
  return t;
}

// Warm up on a full seed window, then continue for `len` closed-loop steps.
// Returns only the continuation (empty for len == 0).
inline Trajectory generate_start_sequence(const GeneratorModel& g, const RepSeq& seed_seq,
                                          int len) {
  if (seed_seq.length() != g.settings.seqlen)
    throw AttackError("generate_start_sequence: seed length mismatch");
  if (seed_seq.kind != g.settings.rep)
    throw AttackError("generate_start_sequence: seed representation mismatch");
  auto h = g.rnn.zero_state(1);
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  for (Eigen::Index i = 0; i < seed_seq.length(); ++i)
    x = detail::step_model(g, seed_seq.points.col(i), h);

  const Trajectory seed_abs = ingest::from_rep(seed_seq);
  RepSeq cont;
  cont.kind = g.settings.rep;
  cont.origin = Eigen::Vector2d(seed_abs.events.back().x, seed_abs.events.back().y);
  cont.t0 = seed_abs.events.back().ts;
  cont.points.resize(2, len);
  cont.dts = Eigen::VectorXd::Constant(len, g.median_dt);
  for (int i = 0; i < len; ++i) {
    cont.points.col(i) = x;
    x = detail::step_model(g, x, h);
  }
  Trajectory t = ingest::from_rep(cont);
  t.events.erase(t.events.begin());  // drop the anchor; continuation only
  t.user_id = "imitate";
  t.session_id = "cont";
  return t;
}

// ---------------------------------------------------------------------------
// Surrogate-based attack.

enum class SurrogateArch { GruRnn, Fc, SvmLike, CnnLike };

inline const char* surrogate_name(SurrogateArch a) {
  switch (a) {
    case SurrogateArch::GruRnn: return "gru-rnn";
    case SurrogateArch::Fc: return "fc";
    case SurrogateArch::SvmLike: return "svm";
    case SurrogateArch::CnnLike: return "1dcnn";
  }
  return "?";
}

inline SurrogateArch surrogate_from_name(const std::string& s) {
  if (s == "gru-rnn" || s == "gru") return SurrogateArch::GruRnn;
  if (s == "fc") return SurrogateArch::Fc;
  if (s == "svm") return SurrogateArch::SvmLike;
  if (s == "1dcnn" || s == "cnn") return SurrogateArch::CnnLike;
  throw AttackError("unknown surrogate architecture: " + s);
}

// Consumes VEL sequences. Class 1 is the legitimate user. The SVM-like
// variant scores engineered features of the reconstructed trajectory and its
// input gradient is estimated with central finite differences.
struct SurrogateModel {
  SurrogateArch arch = SurrogateArch::Fc;
  int seqlen = 50;
  // GruRnn: 3 GRU layers (hidden 100) -> fc1 (ReLU) -> fc2 -> 2 logits
  grad::GruStack rnn;
  grad::Dense fc1, fc2;
  // Fc: flattened interleaved x/y input -> fcA (ELU) -> fcB -> 2 logits
  grad::Dense fcA, fcB;
  // matched-architecture variants
  auth::SvmModel svm;
  auth::CnnModel cnn;
  double held_out_accuracy = 0.0;
  double fd_step = 1e-4;

  Eigen::Vector2d logits(const Eigen::Matrix2Xd& vel) const {
    switch (arch) {
      case SurrogateArch::GruRnn: {
        std::vector<grad::Matrix> xs(static_cast<std::size_t>(vel.cols()));
        for (Eigen::Index t = 0; t < vel.cols(); ++t) {
          grad::Matrix x(1, 2);
          x << vel(0, t), vel(1, t);
          xs[static_cast<std::size_t>(t)] = std::move(x);
        }
        const auto top = rnn.forward(xs);
        const grad::Matrix z2 = fc2.forward(fc1.forward(top.back()));
        return {z2(0, 0), z2(0, 1)};
      }
      case SurrogateArch::Fc: {
        const grad::Matrix z2 = fcB.forward(fcA.forward(flatten(vel)));
        return {z2(0, 0), z2(0, 1)};
      }
      case SurrogateArch::CnnLike: {
        const double s = cnn.score(Eigen::Matrix2Xd(vel));
        return {0.0, s};  // sigmoid-equivalent two-logit form
      }
      case SurrogateArch::SvmLike: {
        const double s = svm_score(vel, nullptr);
        return {0.0, s};
      }
    }
    throw AttackError("SurrogateModel::logits: bad arch");
  }

  // log p(legitimate) for a VEL window.
  double log_p_legit(const RepSeq& z) const {
    check_input(z);
    const Eigen::Vector2d l = logits(z.points);
    const double m = std::max(l[0], l[1]);
    const double lse = m + std::log(std::exp(l[0] - m) + std::exp(l[1] - m));
    return l[1] - lse;
  }

  bool self_decide(const RepSeq& z) const {
    check_input(z);
    const Eigen::Vector2d l = logits(z.points);
    return l[1] >= l[0];
  }

  // Gradient of log p(legitimate) wrt the sequence coordinates.
  Eigen::Matrix2Xd grad_log_p(const RepSeq& z) const {
    check_input(z);
    switch (arch) {
      case SurrogateArch::GruRnn: return grad_gru(z.points);
      case SurrogateArch::Fc: return grad_fc(z.points);
      case SurrogateArch::CnnLike: return grad_cnn(z.points);
      case SurrogateArch::SvmLike: return grad_svm_fd(z);
    }
    throw AttackError("grad_log_p: bad arch");
  }

  static grad::Matrix flatten(const Eigen::Matrix2Xd& vel) {
    grad::Matrix x(1, 2 * vel.cols());
    for (Eigen::Index t = 0; t < vel.cols(); ++t) {
      x(0, 2 * t) = vel(0, t);      // odd-numbered nodes take x
      x(0, 2 * t + 1) = vel(1, t);  // even-numbered nodes take y
    }
    return x;
  }

  // SVM-like path: rebuild a trajectory from the velocities (keeping the
  // window's own dts) and score its engineered features.
  double svm_score(const Eigen::Matrix2Xd& vel, const RepSeq* proto) const {
    RepSeq r;
    r.kind = RepKind::Vel;
    r.points = vel;
    if (proto) {
      r.dts = proto->dts;
      r.origin = proto->origin;
      r.t0 = proto->t0;
    } else {
      r.dts = Eigen::VectorXd::Constant(vel.cols(), 0.008);
      r.origin = Eigen::Vector2d(0.5, 0.5);
    }
    return svm.score(feat::extract_features(ingest::from_rep(r)));
  }

private:
  void check_input(const RepSeq& z) const {
    if (z.kind != RepKind::Vel) throw AttackError("surrogate expects VEL sequences");
    if (z.length() != seqlen) throw AttackError("surrogate: sequence length mismatch");
  }

  // d(log p1)/dlogits = (-p0, 1 - p1) simplifies to p0 * d(l1 - l0).
  static Eigen::Vector2d dlogits_of_logp(const Eigen::Vector2d& l) {
    const double m = std::max(l[0], l[1]);
    const double e0 = std::exp(l[0] - m), e1 = std::exp(l[1] - m);
    const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
    return {-p0, 1.0 - p1};
  }

  Eigen::Matrix2Xd grad_gru(const Eigen::Matrix2Xd& vel) const {
    auto& self = *const_cast<SurrogateModel*>(this);
    std::vector<grad::Matrix> xs(static_cast<std::size_t>(vel.cols()));
    for (Eigen::Index t = 0; t < vel.cols(); ++t) {
      grad::Matrix x(1, 2);
      x << vel(0, t), vel(1, t);
      xs[static_cast<std::size_t>(t)] = std::move(x);
    }
    grad::GruStack::Cache cache;
    const auto top = self.rnn.forward(xs, &cache);
    grad::Dense::Cache c1, c2;
    const grad::Matrix z1 = self.fc1.forward(top.back(), &c1);
    const grad::Matrix z2 = self.fc2.forward(z1, &c2);
    const Eigen::Vector2d dl = dlogits_of_logp({z2(0, 0), z2(0, 1)});
    grad::Matrix dz2(1, 2);
    dz2 << dl[0], dl[1];
    // parameter grads accumulate but are discarded; only dx matters here
    for (auto* p : self.rnn.params()) p->zero_grad();
    for (auto* p : self.fc1.params()) p->zero_grad();
    for (auto* p : self.fc2.params()) p->zero_grad();
    const grad::Matrix dz1 = self.fc2.backward(c2, dz2);
    const grad::Matrix dtop_last = self.fc1.backward(c1, dz1);
    std::vector<grad::Matrix> dtop(xs.size());
    dtop.back() = dtop_last;
    const auto dxs = self.rnn.backward(cache, dtop);
    Eigen::Matrix2Xd g(2, vel.cols());
    for (Eigen::Index t = 0; t < vel.cols(); ++t)
      g.col(t) = dxs[static_cast<std::size_t>(t)].row(0).transpose();
    return g;
  }

  Eigen::Matrix2Xd grad_fc(const Eigen::Matrix2Xd& vel) const {
    auto& self = *const_cast<SurrogateModel*>(this);
    grad::Dense::Cache cA, cB;
    const grad::Matrix z1 = self.fcA.forward(flatten(vel), &cA);
    const grad::Matrix z2 = self.fcB.forward(z1, &cB);
    const Eigen::Vector2d dl = dlogits_of_logp({z2(0, 0), z2(0, 1)});
    grad::Matrix dz2(1, 2);
    dz2 << dl[0], dl[1];
    for (auto* p : self.fcA.params()) p->zero_grad();
    for (auto* p : self.fcB.params()) p->zero_grad();
    const grad::Matrix dflat = self.fcA.backward(cA, self.fcB.backward(cB, dz2));
    Eigen::Matrix2Xd g(2, vel.cols());
    for (Eigen::Index t = 0; t < vel.cols(); ++t) {
      g(0, t) = dflat(0, 2 * t);
      g(1, t) = dflat(0, 2 * t + 1);
    }
    return g;
  }

  Eigen::Matrix2Xd grad_cnn(const Eigen::Matrix2Xd& vel) const {
    auto& self = *const_cast<SurrogateModel*>(this);
    auth::CnnModel::Cache cache;
    const double s = self.cnn.forward(vel, &cache);
    const double p = 1.0 / (1.0 + std::exp(-s));
    for (auto* prm : self.cnn.params()) prm->zero_grad();
    // d log sigmoid(s) / ds = 1 - p
    return self.cnn.backward(cache, 1.0 - p);
  }

  Eigen::Matrix2Xd grad_svm_fd(const RepSeq& z) const {
    Eigen::Matrix2Xd g(2, z.length());
    Eigen::Matrix2Xd pts = z.points;
    for (Eigen::Index t = 0; t < pts.cols(); ++t) {
      for (int d = 0; d < 2; ++d) {
        const double saved = pts(d, t);
        pts(d, t) = saved + fd_step;
        const double fp = svm_score(pts, &z);
        pts(d, t) = saved - fd_step;
        const double fm = svm_score(pts, &z);
        pts(d, t) = saved;
        g(d, t) = (fp - fm) / (2.0 * fd_step);
      }
    }
    // chain through log sigmoid: positive factor, kept for trace consistency
    const double s = svm_score(z.points, &z);
    const double p = 1.0 / (1.0 + std::exp(-s));
    return (1.0 - p) * g;
  }
};

struct SurrogateHyper {
  double lr = 5e-4;
  int epochs = 60;
  int decay_every = 10;
  double decay_factor = 0.5;
  int batch = 64;
  double clip = 5.0;
  std::size_t max_per_class = 600;
  double held_out_frac = 0.1;
  int fc_hidden = 128;
};

inline SurrogateModel train_surrogate(const std::vector<RepSeq>& pos,
                                      const std::vector<RepSeq>& neg, SurrogateArch arch,
                                      const SurrogateHyper& hyper = {}, std::uint64_t seed = 0) {
  if (pos.empty() || neg.empty())
    throw AttackError("train_surrogate: both classes must be non-empty");
  const Eigen::Index L = pos[0].length();
  for (const auto* side : {&pos, &neg})
    for (const auto& r : *side) {
      if (r.length() != L) throw AttackError("train_surrogate: mixed sequence lengths");
      if (r.kind != RepKind::Vel) throw AttackError("train_surrogate: expects VEL sequences");
    }

  SurrogateModel m;
  m.arch = arch;
  m.seqlen = static_cast<int>(L);
  Rng rng(splitmix64(seed ^ 0x5a6bu));

  auto pick = [&](const std::vector<RepSeq>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    idx.resize(std::min(idx.size(), hyper.max_per_class));
    std::vector<const RepSeq*> out;
    for (auto i : idx) out.push_back(&v[i]);
    return out;
  };
  const auto ps = pick(pos);
  const auto ns = pick(neg);

  struct Item {
    const RepSeq* r;
    int cls;  // 1 = legitimate user
  };
  std::vector<Item> items;
  for (auto* r : ps) items.push_back({r, 1});
  for (auto* r : ns) items.push_back({r, 0});
  rng.shuffle(items);
  const std::size_t n_hold = std::max<std::size_t>(
      1, static_cast<std::size_t>(hyper.held_out_frac * static_cast<double>(items.size())));
  std::vector<Item> hold(items.end() - static_cast<std::ptrdiff_t>(n_hold), items.end());
  items.resize(items.size() - n_hold);
  if (items.empty()) throw AttackError("train_surrogate: not enough data");

  auto eval_holdout = [&](auto&& classify) {
    int ok = 0;
    for (const auto& it : hold)
      if (classify(*it.r) == (it.cls == 1)) ++ok;
    return static_cast<double>(ok) / static_cast<double>(hold.size());
  };

  if (arch == SurrogateArch::SvmLike) {
    std::vector<feat::FeatureVector> fpos, fneg;
    for (const auto& it : items) {
      auto f = feat::extract_features(ingest::from_rep(*it.r));
      (it.cls == 1 ? fpos : fneg).push_back(std::move(f));
    }
    if (fpos.empty() || fneg.empty())
      throw AttackError("train_surrogate: degenerate class split");
    m.svm = auth::train_svm(fpos, fneg, {}, seed);
    m.held_out_accuracy =
        eval_holdout([&](const RepSeq& r) { return m.svm_score(r.points, &r) >= 0.0; });
    return m;
  }
  if (arch == SurrogateArch::CnnLike) {
    std::vector<RepSeq> cpos, cneg;
    for (const auto& it : items) (it.cls == 1 ? cpos : cneg).push_back(*it.r);
    if (cpos.empty() || cneg.empty())
      throw AttackError("train_surrogate: degenerate class split");
    auth::CnnHyper ch;
    ch.epochs = hyper.epochs;
    ch.lr = hyper.lr;
    ch.decay_every = hyper.decay_every;
    ch.decay_factor = hyper.decay_factor;
    ch.batch = hyper.batch;
    ch.clip = hyper.clip;
    ch.max_pos = hyper.max_per_class;
    ch.neg_ratio = 1e9;  // keep whatever was picked above
    m.cnn = auth::train_cnn(cpos, cneg, ch, seed);
    m.held_out_accuracy =
        eval_holdout([&](const RepSeq& r) { return m.cnn.score(r.points) >= 0.0; });
    return m;
  }

  // neural two-logit surrogates
  if (arch == SurrogateArch::GruRnn) {
    m.rnn.init(2, 100, 3, rng);
    m.fc1.init(100, 100, rng, grad::Act::Relu);
    m.fc2.init(100, 2, rng, grad::Act::None);
  } else {
    m.fcA.init(2 * L, hyper.fc_hidden, rng, grad::Act::Elu);
    m.fcB.init(hyper.fc_hidden, 2, rng, grad::Act::None);
  }
  std::vector<grad::Param*> params;
  if (arch == SurrogateArch::GruRnn) {
    params = m.rnn.params();
    for (auto* p : m.fc1.params()) params.push_back(p);
    for (auto* p : m.fc2.params()) params.push_back(p);
  } else {
    params = m.fcA.params();
    for (auto* p : m.fcB.params()) params.push_back(p);
  }
  grad::AdamState adam;
  adam.cfg.lr = hyper.lr;
  adam.cfg.decay_every = hyper.decay_every;
  adam.cfg.decay_factor = hyper.decay_factor;
  adam.attach(params);

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    adam.epoch = epoch;
    rng.shuffle(order);
    for (std::size_t base = 0; base < order.size(); base += static_cast<std::size_t>(hyper.batch)) {
      const Eigen::Index B = static_cast<Eigen::Index>(
          std::min(order.size() - base, static_cast<std::size_t>(hyper.batch)));
      std::vector<int> cls(static_cast<std::size_t>(B));
      grad::Matrix logits(B, 2);
      grad::zero_grads(params);

      if (arch == SurrogateArch::GruRnn) {
        std::vector<grad::Matrix> xs(static_cast<std::size_t>(L));
        for (Eigen::Index t = 0; t < L; ++t) {
          grad::Matrix x(B, 2);
          for (Eigen::Index b = 0; b < B; ++b)
            x.row(b) = items[order[base + static_cast<std::size_t>(b)]].r->points.col(t).transpose();
          xs[static_cast<std::size_t>(t)] = std::move(x);
        }
        grad::GruStack::Cache cache;
        const auto top = m.rnn.forward(xs, &cache);
        grad::Dense::Cache c1, c2;
        const grad::Matrix z1 = m.fc1.forward(top.back(), &c1);
        logits = m.fc2.forward(z1, &c2);
        for (Eigen::Index b = 0; b < B; ++b)
          cls[static_cast<std::size_t>(b)] = items[order[base + static_cast<std::size_t>(b)]].cls;
        const auto lg = grad::cross_entropy2(logits, cls);
        std::vector<grad::Matrix> dtop(static_cast<std::size_t>(L));
        dtop.back() = m.fc1.backward(c1, m.fc2.backward(c2, lg.grad));
        m.rnn.backward(cache, dtop);
      } else {
        grad::Matrix xflat(B, 2 * L);
        for (Eigen::Index b = 0; b < B; ++b) {
          const auto& r = *items[order[base + static_cast<std::size_t>(b)]].r;
          xflat.row(b) = SurrogateModel::flatten(r.points).row(0);
          cls[static_cast<std::size_t>(b)] = items[order[base + static_cast<std::size_t>(b)]].cls;
        }
        grad::Dense::Cache cA, cB;
        const grad::Matrix z1 = m.fcA.forward(xflat, &cA);
        logits = m.fcB.forward(z1, &cB);
        const auto lg = grad::cross_entropy2(logits, cls);
        m.fcA.backward(cA, m.fcB.backward(cB, lg.grad));
      }
      grad::clip_grad_norm(params, hyper.clip);
      adam.step_params(params);
    }
  }
  m.held_out_accuracy = eval_holdout([&](const RepSeq& r) { return m.self_decide(r); });
  return m;
}

// ---------------------------------------------------------------------------
// Iterated FGSM on the surrogate's log p(legitimate). sign(0) is 0, so a zero
// gradient leaves the sequence untouched.

struct FgsmConfig {
  double epsilon = 0.001;
  int iterations = 100;
  Eigen::Vector2d clamp_lo = Eigen::Vector2d::Constant(-std::numeric_limits<double>::infinity());
  Eigen::Vector2d clamp_hi = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
};

// Per-channel velocity bounds observed in the attacker's data.
inline void fit_clamp_bounds(FgsmConfig& cfg, const std::vector<RepSeq>& seqs) {
  cfg.clamp_lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  cfg.clamp_hi = -cfg.clamp_lo;
  for (const auto& r : seqs) {
    cfg.clamp_lo = cfg.clamp_lo.cwiseMin(r.points.rowwise().minCoeff());
    cfg.clamp_hi = cfg.clamp_hi.cwiseMax(r.points.rowwise().maxCoeff());
  }
}

struct FgsmTrace {
  std::vector<double> log_p;    // iterations + 1 entries, index 0 = before
  std::vector<int> clamped;     // clamped coordinates per iteration
};

inline RepSeq fgsm_attack(const SurrogateModel& s, const RepSeq& z0, const FgsmConfig& cfg,
                          FgsmTrace* trace = nullptr) {
  if (cfg.epsilon <= 0.0) throw AttackError("fgsm_attack: epsilon must be positive");
  if (cfg.iterations < 1) throw AttackError("fgsm_attack: iterations must be >= 1");
  RepSeq z = z0;
  if (trace) {
    trace->log_p.clear();
    trace->clamped.clear();
    trace->log_p.push_back(s.log_p_legit(z));
  }
  for (int it = 0; it < cfg.iterations; ++it) {
    const Eigen::Matrix2Xd g = s.grad_log_p(z);
    if (!g.allFinite())
      throw AttackError("fgsm_attack: non-finite input gradient at iteration " +
                        std::to_string(it));
    int clamped = 0;
    for (Eigen::Index t = 0; t < z.points.cols(); ++t) {
      for (int d = 0; d < 2; ++d) {
        const double gv = g(d, t);
        const double step = gv > 0.0 ? cfg.epsilon : (gv < 0.0 ? -cfg.epsilon : 0.0);
        double v = z.points(d, t) + step;
        const double lo = cfg.clamp_lo[d], hi = cfg.clamp_hi[d];
        if (v < lo || v > hi) {
          v = std::clamp(v, lo, hi);
          ++clamped;
        }
        z.points(d, t) = v;
      }
    }
    if (trace) {
      trace->log_p.push_back(s.log_p_legit(z));
      trace->clamped.push_back(clamped);
    }
  }
  return z;
}

// ---------------------------------------------------------------------------
// Matched-architecture extension: train a surrogate with the target's own
// architecture on the attacker-side split, then transfer FGSM perturbations.

enum class TargetArch { Svm, Cnn };

struct MatchedAttackInput {
  std::vector<RepSeq> pos_train;       // target user's attacker-split windows
  std::vector<RepSeq> neg_train;       // other users' attacker-split windows
  std::vector<RepSeq> seeds;           // windows to perturb
};

struct AttackRun {
  SurrogateModel surrogate;
  std::vector<RepSeq> adversarial;
  double self_asr = 0.0;  // fraction the surrogate itself accepts after attack
};

inline AttackRun run_fgsm_over(const SurrogateModel& s, const std::vector<RepSeq>& seeds,
                               const FgsmConfig& cfg) {
  AttackRun run;
  run.surrogate = s;
  int accepted = 0;
  for (const auto& seed_seq : seeds) {
    RepSeq adv = fgsm_attack(s, seed_seq, cfg);
    if (s.self_decide(adv)) ++accepted;
    run.adversarial.push_back(std::move(adv));
  }
  run.self_asr = seeds.empty() ? 0.0 : static_cast<double>(accepted) /
                                           static_cast<double>(seeds.size());
  return run;
}

inline AttackRun matched_surrogate_attack(TargetArch target, const MatchedAttackInput& in,
                                          FgsmConfig cfg, const SurrogateHyper& hyper = {},
                                          std::uint64_t seed = 0) {
  const SurrogateArch arch =
      target == TargetArch::Svm ? SurrogateArch::SvmLike : SurrogateArch::CnnLike;
  SurrogateModel s = train_surrogate(in.pos_train, in.neg_train, arch, hyper, seed);
  if (!std::isfinite(cfg.clamp_lo[0]) || !std::isfinite(cfg.clamp_hi[0]))
    fit_clamp_bounds(cfg, in.pos_train);
  AttackRun run = run_fgsm_over(s, in.seeds, cfg);
  return run;
}

}  // namespace mouseforge::attack
