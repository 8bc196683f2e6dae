#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mouseforge/featkit.hpp"
#include "mouseforge/ingest.hpp"

using namespace mouseforge;
using namespace mouseforge::feat;
using ingest::RepKind;
using ingest::RepSeq;
using ingest::Trajectory;

namespace {

Trajectory make_traj(std::vector<std::array<double, 3>> rows) {
  Trajectory t{"u", "s", {}};
  for (auto& r : rows) t.events.push_back({r[0], r[1], r[2]});
  return t;
}

// Spreadsheet-style reference computation of the 64 features, written
// independently of the implementation (plain loops, explicit formulas).
std::vector<double> reference_features(const Trajectory& t) {
  const std::size_t n = t.size();
  const auto& ev = t.events;
  std::vector<double> dt, vx, vy, sp, ang;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double h = ev[i + 1].ts - ev[i].ts;
    dt.push_back(h);
    const double dx = ev[i + 1].x - ev[i].x, dy = ev[i + 1].y - ev[i].y;
    vx.push_back(dx / h);
    vy.push_back(dy / h);
    sp.push_back(std::sqrt(dx * dx + dy * dy) / h);
    ang.push_back(std::atan2(dy, dx));
  }
  std::vector<double> axv, ayv, atv, avv, cvv, jkv;
  for (std::size_t i = 0; i + 1 < vx.size(); ++i) {
    const double h = dt[i + 1];
    axv.push_back((vx[i + 1] - vx[i]) / h);
    ayv.push_back((vy[i + 1] - vy[i]) / h);
    atv.push_back((sp[i + 1] - sp[i]) / h);
    double da = ang[i + 1] - ang[i];
    while (da > M_PI) da -= 2 * M_PI;
    while (da <= -M_PI) da += 2 * M_PI;
    avv.push_back(da / h);
    const double denom = std::max(sp[i] * sp[i] * sp[i], 1e-12);
    cvv.push_back(std::fabs(vx[i] * ayv[i] - vy[i] * axv[i]) / denom);
  }
  for (std::size_t i = 0; i + 1 < axv.size(); ++i) {
    const double h = dt[i + 2];
    jkv.push_back(std::sqrt(std::pow(axv[i + 1] - axv[i], 2) +
                            std::pow(ayv[i + 1] - ayv[i], 2)) /
                  h);
  }
  auto five = [](std::vector<double> v) {
    std::vector<double> out(5, 0.0);
    if (v.empty()) return out;
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    const std::size_t m = s.size() / 2;
    out[0] = mean;
    out[1] = std::sqrt(var);
    out[2] = s.front();
    out[3] = s.back();
    out[4] = s.size() % 2 ? s[m] : 0.5 * (s[m - 1] + s[m]);
    return out;
  };
  std::vector<double> f;
  for (auto* v : {&vx, &vy, &sp, &axv, &ayv, &atv, &jkv, &ang, &avv, &cvv})
    for (double x : five(*v)) f.push_back(x);
  f.push_back(ev.back().ts - ev.front().ts);
  double path = 0;
  for (std::size_t i = 0; i + 1 < n; ++i)
    path += std::hypot(ev[i + 1].x - ev[i].x, ev[i + 1].y - ev[i].y);
  f.push_back(path);
  const double net = std::hypot(ev.back().x - ev.front().x, ev.back().y - ev.front().y);
  f.push_back(net);
  f.push_back(path > 0 ? net / path : 0.0);
  auto dts = five(dt);
  f.push_back(dts[0]);
  f.push_back(dts[1]);
  std::vector<double> oct(8, 0.0);
  for (double a : ang) {
    int b = static_cast<int>(std::floor((a + M_PI) / (M_PI / 4)));
    if (b < 0) b = 0;
    if (b > 7) b = 7;
    oct[static_cast<std::size_t>(b)] += 1.0;
  }
  for (double c : oct) f.push_back(c / static_cast<double>(ang.size()));
  return f;
}

}  // namespace

TEST_CASE("extract_features analytic cases") {
  SECTION("uniform straight line: zero speed std, straightness one") {
    Trajectory t{"u", "s", {}};
    for (int i = 0; i <= 20; ++i) t.events.push_back({i * 0.01, 0.01 * i, 0.02 * i});
    auto f = extract_features(t);
    const auto& names = feature_names();
    auto at = [&](const std::string& want) {
      for (int i = 0; i < FeatureVector::kDim; ++i)
        if (names[static_cast<std::size_t>(i)] == want) return f.values[i];
      FAIL("missing feature " + want);
      return 0.0;
    };
    CHECK(at("speed_std") == Catch::Approx(0.0).margin(1e-9));
    CHECK(at("straightness") == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("right-angle 3-point path: mean velocity components") {
    auto t = make_traj({{0, 0, 0}, {1, 1, 0}, {2, 1, 1}});
    auto f = extract_features(t);
    CHECK(f.values[0] == Catch::Approx(0.5));  // vel_x_mean
    CHECK(f.values[5] == Catch::Approx(0.5));  // vel_y_mean
    CHECK(f.has_undefined);                    // jerk needs a 4th point
  }
  SECTION("too-short trajectory errors") {
    CHECK_THROWS_AS(extract_features(make_traj({{0, 0, 0}, {1, 1, 1}})), FeatError);
  }
  SECTION("matches the independent reference within 1e-9") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      Trajectory t{"u", "s", {}};
      double ts = 0;
      const int n = 30 + static_cast<int>(rng.index(40));
      for (int i = 0; i < n; ++i) {
        ts += rng.uniform(0.004, 0.02);
        t.events.push_back({ts, rng.uniform(), rng.uniform()});
      }
      auto f = extract_features(t);
      auto ref = reference_features(t);
      REQUIRE(ref.size() == 64);
      for (int i = 0; i < 64; ++i) {
        const double r = ref[static_cast<std::size_t>(i)];
        REQUIRE(std::abs(f.values[i] - r) < 1e-9 * std::max(1.0, std::abs(r)));
      }
    }
  }
  SECTION("translation invariance") {
    Rng rng(19);
    Trajectory t{"u", "s", {}};
    double ts = 0;
    for (int i = 0; i < 40; ++i) {
      ts += 0.01;
      t.events.push_back({ts, rng.uniform(0, 0.4), rng.uniform(0, 0.4)});
    }
    Trajectory shifted = t;
    for (auto& e : shifted.events) {
      e.x += 0.37;
      e.y += 0.21;
    }
    auto f0 = extract_features(t);
    auto f1 = extract_features(shifted);
    for (int i = 0; i < 64; ++i) CHECK(std::abs(f0.values[i] - f1.values[i]) < 1e-9);
  }
}

TEST_CASE("standardize") {
  auto mk = [](std::vector<double> vals) {
    FeatureVector f;
    f.values = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    return f;
  };
  SECTION("constant column maps to zero") {
    std::vector<FeatureVector> vs = {mk({3.0, 1.0}), mk({3.0, 2.0}), mk({3.0, 3.0})};
    auto s = standardize_fit(vs);
    for (const auto& v : vs) CHECK(standardize_apply(s, v).values[0] == 0.0);
  }
  SECTION("already unit variance stays put") {
    std::vector<FeatureVector> vs = {mk({-1.0}), mk({1.0})};
    auto s = standardize_fit(vs);
    CHECK(standardize_apply(s, vs[0]).values[0] == Catch::Approx(-1.0));
    CHECK(standardize_apply(s, vs[1]).values[0] == Catch::Approx(1.0));
  }
  SECTION("random matrix: brute-force column stats after standardization") {
    Rng rng(5);
    std::vector<FeatureVector> vs;
    for (int i = 0; i < 40; ++i) {
      std::vector<double> row;
      for (int j = 0; j < 6; ++j) row.push_back(rng.uniform(-3, 9) * (j + 1));
      vs.push_back(mk(row));
    }
    auto s = standardize_fit(vs);
    for (int j = 0; j < 6; ++j) {
      double mean = 0, var = 0;
      for (const auto& v : vs) mean += standardize_apply(s, v).values[j];
      mean /= static_cast<double>(vs.size());
      for (const auto& v : vs) {
        const double d = standardize_apply(s, v).values[j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(vs.size());
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("cluster_features") {
  auto vel_seq = [](std::vector<std::array<double, 2>> vels, double dt = 0.01) {
    RepSeq r;
    r.kind = RepKind::Vel;
    r.points.resize(2, static_cast<Eigen::Index>(vels.size()));
    r.dts = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(vels.size()), dt);
    for (std::size_t i = 0; i < vels.size(); ++i) {
      r.points(0, static_cast<Eigen::Index>(i)) = vels[i][0];
      r.points(1, static_cast<Eigen::Index>(i)) = vels[i][1];
    }
    return r;
  };
  SECTION("constant velocity: all four std entries zero") {
    auto f = cluster_features(vel_seq({{1, 2}, {1, 2}, {1, 2}, {1, 2}}));
    CHECK(f.values[1] == 0.0);  // vx std
    CHECK(f.values[3] == 0.0);  // vy std
    CHECK(f.values[5] == 0.0);  // ax std
    CHECK(f.values[7] == 0.0);  // ay std
    CHECK(f.values[4] == 0.0);  // ax mean
  }
  SECTION("pure +x motion: angle mean and std zero") {
    auto f = cluster_features(vel_seq({{1, 0}, {2, 0}, {3, 0}}));
    CHECK(f.values[8] == 0.0);
    CHECK(f.values[9] == 0.0);
  }
  SECTION("matches an independent recomputation") {
    Rng rng(3);
    std::vector<std::array<double, 2>> vels;
    for (int i = 0; i < 20; ++i) vels.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2)});
    const double dt = 0.008;
    auto f = cluster_features(vel_seq(vels, dt));
    auto ms = [](const std::vector<double>& v) {
      double m = 0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      double s = 0;
      for (double x : v) s += (x - m) * (x - m);
      return std::pair<double, double>(m, std::sqrt(s / static_cast<double>(v.size())));
    };
    std::vector<double> vx, vy, ax, ay, ang;
    for (auto& v : vels) {
      vx.push_back(v[0]);
      vy.push_back(v[1]);
      ang.push_back(std::atan2(v[1], v[0]));
    }
    for (std::size_t i = 0; i + 1 < vels.size(); ++i) {
      ax.push_back((vels[i + 1][0] - vels[i][0]) / dt);
      ay.push_back((vels[i + 1][1] - vels[i][1]) / dt);
    }
    const auto [mvx, svx] = ms(vx);
    const auto [mvy, svy] = ms(vy);
    const auto [maxv, sax] = ms(ax);
    const auto [mayv, say] = ms(ay);
    const auto [mang, sang] = ms(ang);
    const double want[10] = {mvx, svx, mvy, svy, maxv, sax, mayv, say, mang, sang};
    for (int i = 0; i < 10; ++i) REQUIRE(std::abs(f.values[i] - want[i]) < 1e-9);
  }
}

TEST_CASE("kmeans") {
  Rng rng(29);
  SECTION("five well-separated clouds recover their centers") {
    std::vector<ClusterFeatures> xs;
    std::vector<Eigen::VectorXd> centers;
    for (int c = 0; c < 5; ++c) {
      Eigen::VectorXd mu(10);
      for (int d = 0; d < 10; ++d) mu[d] = 20.0 * c + d;
      centers.push_back(mu);
      for (int i = 0; i < 30; ++i) {
        ClusterFeatures f;
        for (int d = 0; d < 10; ++d) f.values[d] = mu[d] + 0.2 * rng.normal();
        xs.push_back(f);
      }
    }
    auto m = kmeans_fit(xs, 5, 1);
    // exhaustive check: every centroid lands on a true center
    for (Eigen::Index j = 0; j < 5; ++j) {
      double best = 1e18;
      for (const auto& mu : centers)
        best = std::min(best, (m.centroids.row(j).transpose() - mu).norm());
      CHECK(best < 1.0);
    }
    for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
      CHECK(m.inertia_history[i] <= m.inertia_history[i - 1] + 1e-9);
  }
  SECTION("k distinct points: zero inertia, centroids equal points") {
    std::vector<ClusterFeatures> xs;
    for (int i = 0; i < 5; ++i) {
      ClusterFeatures f;
      for (int d = 0; d < 10; ++d) f.values[d] = i * 3.0 + d * 0.1;
      xs.push_back(f);
    }
    auto m = kmeans_fit(xs, 5, 9);
    CHECK(m.inertia == Catch::Approx(0.0).margin(1e-18));
    for (const auto& x : xs) CHECK(nearest_centroid_distance(m, x) < 1e-12);
  }
  SECTION("determinism") {
    std::vector<ClusterFeatures> xs;
    for (int i = 0; i < 40; ++i) {
      ClusterFeatures f;
      for (int d = 0; d < 10; ++d) f.values[d] = rng.uniform(-5, 5);
      xs.push_back(f);
    }
    auto a = kmeans_fit(xs, 5, 123);
    auto b = kmeans_fit(xs, 5, 123);
    CHECK((a.centroids - b.centroids).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("nearest_centroid_distance") {
  KMeansModel m;
  m.centroids = Eigen::MatrixXd::Zero(2, 10);
  m.centroids.row(1).setConstant(10.0);
  ClusterFeatures x;
  x.values.setZero();
  CHECK(nearest_centroid_distance(m, x) == 0.0);
  x.values[0] = 1.0;
  CHECK(nearest_centroid_distance(m, x) == Catch::Approx(1.0));

  SECTION("equals brute force over all centroids") {
    Rng rng(41);
    KMeansModel km;
    km.centroids = Eigen::MatrixXd::Random(5, 10) * 4.0;
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd v(10);
      for (int d = 0; d < 10; ++d) v[d] = rng.uniform(-6, 6);
      double brute = 1e18;
      for (int j = 0; j < 5; ++j)
        brute = std::min(brute, (v.transpose() - km.centroids.row(j)).norm());
      CHECK(nearest_centroid_distance(km, v) == Catch::Approx(brute));
    }
  }
  SECTION("never exceeds the distance to any centroid") {
    Rng rng(43);
    KMeansModel km;
    km.centroids = Eigen::MatrixXd::Random(5, 10);
    for (int t = 0; t < 50; ++t) {
      Eigen::VectorXd v(10);
      for (int d = 0; d < 10; ++d) v[d] = rng.normal();
      const double nd = nearest_centroid_distance(km, v);
      for (int j = 0; j < 5; ++j)
        CHECK(nd <= (v.transpose() - km.centroids.row(j)).norm() + 1e-15);
    }
  }
}
