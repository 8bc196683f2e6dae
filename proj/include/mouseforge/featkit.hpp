#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mouseforge/ingest.hpp"
#include "mouseforge/rng.hpp"

namespace mouseforge::feat {

using ingest::RepKind;
using ingest::RepSeq;
using ingest::Trajectory;

struct FeatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Engineered per-trajectory statistics. The layout is fixed and documented in
// docs/feature_schema.md: five summary stats for each of ten kinematic
// channels, six whole-trajectory scalars, and an eight-bin direction
// histogram. 50 + 6 + 8 = 64.
struct FeatureVector {
  static constexpr int kDim = 64;
  Eigen::VectorXd values;
  bool has_undefined = false;  // true when 0 was substituted for an empty stat
  std::string schema_version = "mf-feat-1";
};

inline const std::array<std::string, FeatureVector::kDim>& feature_names() {
  static const auto kNames = [] {
    std::array<std::string, FeatureVector::kDim> n;
    const char* chan[10] = {"vel_x", "vel_y",  "speed",   "acc_x",   "acc_y",
                            "acc_tan", "jerk", "angle", "ang_vel", "curvature"};
    const char* stat[5] = {"mean", "std", "min", "max", "median"};
    int i = 0;
    for (int c = 0; c < 10; ++c)
      for (int s = 0; s < 5; ++s) n[i++] = std::string(chan[c]) + "_" + stat[s];
    n[i++] = "duration";
    n[i++] = "path_length";
    n[i++] = "net_displacement";
    n[i++] = "straightness";
    n[i++] = "dt_mean";
    n[i++] = "dt_std";
    for (int b = 0; b < 8; ++b) n[i++] = "octant_" + std::to_string(b);
    return n;
  }();
  return kNames;
}

namespace detail {

struct Summary {
  double mean = 0, std_ = 0, min = 0, max = 0, median = 0;
  bool defined = false;
};

inline Summary summarize(std::vector<double> v) {
  Summary s;
  if (v.empty()) return s;
  s.defined = true;
  const double n = static_cast<double>(v.size());
  double sum = 0, sq = 0;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / n;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.std_ = std::sqrt(sq / n);
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  s.median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  return s;
}

inline double wrap_angle(double a) {
  while (a > 3.14159265358979323846) a -= 2 * 3.14159265358979323846;
  while (a <= -3.14159265358979323846) a += 2 * 3.14159265358979323846;
  return a;
}

}  // namespace detail

// The schema is translation-invariant by construction: every entry derives
// from time deltas and coordinate differences, never absolute positions.
inline FeatureVector extract_features(const Trajectory& t) {
  const std::size_t n = t.size();
  if (n < 3) throw FeatError("extract_features: trajectory too short (need >= 3 events)");

  std::vector<double> dt(n - 1), vx(n - 1), vy(n - 1), speed(n - 1), angle(n - 1);
  double path = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto& a = t.events[i];
    const auto& b = t.events[i + 1];
    dt[i] = b.ts - a.ts;
    if (dt[i] <= 0.0) throw FeatError("extract_features: non-increasing timestamps (clean first)");
    const double dx = b.x - a.x, dy = b.y - a.y;
    vx[i] = dx / dt[i];
    vy[i] = dy / dt[i];
    const double step = std::hypot(dx, dy);
    path += step;
    speed[i] = step / dt[i];
    angle[i] = std::atan2(dy, dx);  // atan2(0,0) == 0 for zero-motion steps
  }

  const std::size_t nv = n - 1;
  std::vector<double> ax(nv - 1), ay(nv - 1), atan_(nv - 1), angv(nv - 1), curv(nv - 1);
  for (std::size_t i = 0; i + 1 < nv; ++i) {
    const double h = dt[i + 1];
    ax[i] = (vx[i + 1] - vx[i]) / h;
    ay[i] = (vy[i + 1] - vy[i]) / h;
    atan_[i] = (speed[i + 1] - speed[i]) / h;
    angv[i] = detail::wrap_angle(angle[i + 1] - angle[i]) / h;
    const double s3 = std::max(speed[i] * speed[i] * speed[i], 1e-12);
    curv[i] = std::abs(vx[i] * ay[i] - vy[i] * ax[i]) / s3;
  }
  std::vector<double> jerk(nv >= 3 ? nv - 2 : 0);
  for (std::size_t i = 0; i + 2 < nv; ++i) {
    jerk[i] = std::hypot(ax[i + 1] - ax[i], ay[i + 1] - ay[i]) / dt[i + 2];
  }

  FeatureVector f;
  f.values.resize(FeatureVector::kDim);
  int k = 0;
  auto put = [&](const detail::Summary& s) {
    if (!s.defined) f.has_undefined = true;
    f.values[k++] = s.mean;
    f.values[k++] = s.std_;
    f.values[k++] = s.min;
    f.values[k++] = s.max;
    f.values[k++] = s.median;
  };
  put(detail::summarize(vx));
  put(detail::summarize(vy));
  put(detail::summarize(speed));
  put(detail::summarize(ax));
  put(detail::summarize(ay));
  put(detail::summarize(atan_));
  put(detail::summarize(jerk));
  put(detail::summarize(angle));
  put(detail::summarize(angv));
  put(detail::summarize(curv));

  const double duration = t.events.back().ts - t.events.front().ts;
  const double net = std::hypot(t.events.back().x - t.events.front().x,
                                t.events.back().y - t.events.front().y);
  const auto dts = detail::summarize(dt);
  f.values[k++] = duration;
  f.values[k++] = path;
  f.values[k++] = net;
  if (path > 0.0) {
    f.values[k++] = net / path;
  } else {
    f.values[k++] = 0.0;
    f.has_undefined = true;
  }
  f.values[k++] = dts.mean;
  f.values[k++] = dts.std_;

  // Direction octants as fractions of steps, so the entry is length-invariant.
  std::array<double, 8> oct{};
  for (double a : angle) {
    int b = static_cast<int>(std::floor((a + 3.14159265358979323846) / 0.7853981633974483));
    b = std::clamp(b, 0, 7);
    oct[static_cast<std::size_t>(b)] += 1.0;
  }
  for (int b = 0; b < 8; ++b) f.values[k++] = oct[static_cast<std::size_t>(b)] / static_cast<double>(nv);

  for (int i = 0; i < FeatureVector::kDim; ++i) {
    if (!std::isfinite(f.values[i])) {
      f.values[i] = 0.0;
      f.has_undefined = true;
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Standardization (zero mean, unit variance; zero-variance dims map to 0)

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // per-dimension std, floored at 1e-12
};

inline Standardizer standardize_fit(const std::vector<FeatureVector>& vs) {
  if (vs.size() < 2) throw FeatError("standardize_fit: need at least 2 vectors");
  const Eigen::Index d = vs[0].values.size();
  Standardizer s;
  s.mean = Eigen::VectorXd::Zero(d);
  for (const auto& v : vs) s.mean += v.values;
  s.mean /= static_cast<double>(vs.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (const auto& v : vs) var += (v.values - s.mean).cwiseAbs2();
  var /= static_cast<double>(vs.size());
  s.scale = var.cwiseSqrt().cwiseMax(1e-12);
  return s;
}

inline FeatureVector standardize_apply(const Standardizer& s, const FeatureVector& v) {
  FeatureVector out = v;
  out.values = (v.values - s.mean).cwiseQuotient(s.scale);
  return out;
}

inline Eigen::VectorXd standardize_apply(const Standardizer& s, const Eigen::VectorXd& v) {
  return (v - s.mean).cwiseQuotient(s.scale);
}

// ---------------------------------------------------------------------------
// Ten cluster features: mean and std of velocity-x/y, acceleration-x/y, and
// movement angle, computed from a RepSeq of any representation.

struct ClusterFeatures {
  static constexpr int kDim = 10;
  Eigen::Matrix<double, 10, 1> values;
  bool degenerate = false;  // a zero-motion step contributed angle 0
};

namespace detail {

// Velocities implied by a RepSeq, as a 2 x L' matrix.
inline Eigen::Matrix2Xd rep_velocities(const RepSeq& r) {
  const Eigen::Index L = r.length();
  switch (r.kind) {
    case RepKind::Vel:
      return r.points;
    case RepKind::Dv: {
      Eigen::Matrix2Xd v(2, L);
      for (Eigen::Index i = 0; i < L; ++i) v.col(i) = r.points.col(i) / r.dts[i];
      return v;
    }
    case RepKind::Abs: {
      Eigen::Matrix2Xd v(2, L);
      Eigen::Vector2d prev = r.origin;
      for (Eigen::Index i = 0; i < L; ++i) {
        v.col(i) = (r.points.col(i) - prev) / r.dts[i];
        prev = r.points.col(i);
      }
      return v;
    }
  }
  throw FeatError("rep_velocities: bad kind");
}

inline std::pair<double, double> mean_std(const Eigen::VectorXd& v) {
  const double m = v.mean();
  const double var = (v.array() - m).square().mean();
  return {m, std::sqrt(var)};
}

}  // namespace detail

inline ClusterFeatures cluster_features(const RepSeq& r) {
  const Eigen::Index L = r.length();
  if (L < 3) throw FeatError("cluster_features: sequence too short (need >= 3 points)");
  const Eigen::Matrix2Xd v = detail::rep_velocities(r);
  Eigen::Matrix2Xd a(2, L - 1);
  for (Eigen::Index i = 0; i + 1 < L; ++i) a.col(i) = (v.col(i + 1) - v.col(i)) / r.dts[i + 1];

  ClusterFeatures f;
  Eigen::VectorXd ang(L);
  for (Eigen::Index i = 0; i < L; ++i) {
    if (v.col(i).squaredNorm() == 0.0) f.degenerate = true;
    ang[i] = std::atan2(v.col(i).y(), v.col(i).x());
  }
  int k = 0;
  auto put = [&](const Eigen::VectorXd& u) {
    auto [m, s] = detail::mean_std(u);
    f.values[k++] = m;
    f.values[k++] = s;
  };
  put(v.row(0).transpose());
  put(v.row(1).transpose());
  put(a.row(0).transpose());
  put(a.row(1).transpose());
  put(ang);
  return f;
}

// ---------------------------------------------------------------------------
// k-means (k-means++ seeding, Lloyd iterations), deterministic given seed

struct KMeansModel {
  Eigen::MatrixXd centroids;  // k x dim
  double inertia = 0.0;
  std::vector<double> inertia_history;
  bool degenerate = false;  // fewer distinct points than k
};

inline KMeansModel kmeans_fit(const std::vector<ClusterFeatures>& xs, int k = 5,
                              std::uint64_t seed = 0, double tol = 1e-6,
                              int max_iter = 100) {
  if (static_cast<int>(xs.size()) < k) throw FeatError("kmeans_fit: fewer points than clusters");
  const int n = static_cast<int>(xs.size());
  const int d = ClusterFeatures::kDim;
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i) X.row(i) = xs[static_cast<std::size_t>(i)].values.transpose();

  KMeansModel m;
  m.centroids.resize(k, d);
  Rng rng(seed);

  // k-means++ seeding
  std::vector<double> d2(static_cast<std::size_t>(n), 0.0);
  m.centroids.row(0) = X.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j)
        best = std::min(best, (X.row(i) - m.centroids.row(j)).squaredNorm());
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    if (total <= 0.0) {
      // all remaining points coincide with chosen centroids
      m.degenerate = true;
      m.centroids.row(c) = X.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
      continue;
    }
    double r = rng.uniform() * total;
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      r -= d2[static_cast<std::size_t>(i)];
      if (r <= 0.0) {
        pick = i;
        break;
      }
    }
    m.centroids.row(c) = X.row(pick);
  }

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int bj = 0;
      for (int j = 0; j < k; ++j) {
        const double dist = (X.row(i) - m.centroids.row(j)).squaredNorm();
        if (dist < best) {
          best = dist;
          bj = j;
        }
      }
      assign[static_cast<std::size_t>(i)] = bj;
      inertia += best;
    }
    m.inertia = inertia;
    m.inertia_history.push_back(inertia);

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, d);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += X.row(i);
      counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]++;
    }
    double shift = 0.0;
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] == 0) continue;  // empty cluster keeps its centroid
      const Eigen::RowVectorXd nc = sums.row(j) / counts[static_cast<std::size_t>(j)];
      shift = std::max(shift, (nc - m.centroids.row(j)).norm());
      m.centroids.row(j) = nc;
    }
    if (shift < tol) break;
  }
  return m;
}

inline double nearest_centroid_distance(const KMeansModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.centroids.cols()) throw FeatError("nearest_centroid_distance: dim mismatch");
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < m.centroids.rows(); ++j)
    best = std::min(best, (x.transpose() - m.centroids.row(j)).norm());
  return best;
}

inline double nearest_centroid_distance(const KMeansModel& m, const ClusterFeatures& x) {
  return nearest_centroid_distance(m, Eigen::VectorXd(x.values));
}

}  // namespace mouseforge::feat
