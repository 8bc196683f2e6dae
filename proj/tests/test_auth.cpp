#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mouseforge/auth.hpp"

using namespace mouseforge;
using namespace mouseforge::auth;

namespace {

feat::FeatureVector fv(std::vector<double> vals) {
  feat::FeatureVector f;
  f.values = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return f;
}

ingest::RepSeq vel_seq(double vx, double vy, int len, double dt = 0.01) {
  ingest::RepSeq r;
  r.kind = ingest::RepKind::Vel;
  r.points.resize(2, len);
  r.points.row(0).setConstant(vx);
  r.points.row(1).setConstant(vy);
  r.dts = Eigen::VectorXd::Constant(len, dt);
  return r;
}

}  // namespace

TEST_CASE("roc_eval analytic cases") {
  SECTION("perfect separation") {
    auto r = roc_eval({0.9, 0.8, 0.7}, {0.3, 0.2});
    CHECK(r.auc == 1.0);
    CHECK(r.eer == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("identical lists give 0.5") {
    auto r = roc_eval({0.1, 0.5, 0.9}, {0.1, 0.5, 0.9});
    CHECK(r.auc == Catch::Approx(0.5));
  }
  SECTION("pair-counting example") {
    auto r = roc_eval({0.9, 0.8}, {0.1, 0.85});
    CHECK(r.auc == Catch::Approx(0.75));
  }
}

TEST_CASE("roc_eval properties") {
  Rng rng(1);
  SECTION("sweep equals brute-force pair counting, with ties") {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> pos, neg;
      const int np = 1 + static_cast<int>(rng.index(200));
      const int nn = 1 + static_cast<int>(rng.index(200));
      // coarse grid scores force plenty of ties
      for (int i = 0; i < np; ++i) pos.push_back(std::round(rng.uniform(0, 10)) / 10.0 + 0.3);
      for (int i = 0; i < nn; ++i) neg.push_back(std::round(rng.uniform(0, 10)) / 10.0);
      const double sweep = auth::detail::auc_rank(pos, neg);
      const double brute = auth::detail::auc_pair_count(pos, neg);
      REQUIRE(sweep == Catch::Approx(brute).margin(1e-12));
    }
  }
  SECTION("AUC(pos,neg) + AUC(neg,pos) == 1 for tie-free inputs") {
    std::vector<double> pos, neg;
    for (int i = 0; i < 50; ++i) {
      pos.push_back(rng.uniform() + 0.001 * i);
      neg.push_back(rng.uniform() + 0.0013 * i + 1e-7);
    }
    CHECK(roc_eval(pos, neg).auc + roc_eval(neg, pos).auc == Catch::Approx(1.0));
  }
  SECTION("AUC is consistent with the trapezoid rule over roc_points") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> pos, neg;
      for (int i = 0; i < 40; ++i) pos.push_back(std::round(rng.uniform(0, 20)));
      for (int i = 0; i < 50; ++i) neg.push_back(std::round(rng.uniform(0, 20)) - 2.0);
      auto r = roc_eval(pos, neg);
      double area = 0;
      for (std::size_t i = 0; i + 1 < r.roc_points.size(); ++i) {
        const auto& a = r.roc_points[i];
        const auto& b = r.roc_points[i + 1];
        area += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
      }
      REQUIRE(std::abs(area - r.auc) < 1e-9);
    }
  }
  SECTION("monotone transform leaves AUC and decisions unchanged") {
    std::vector<double> pos, neg;
    for (int i = 0; i < 60; ++i) {
      pos.push_back(rng.normal(1.0, 1.0));
      neg.push_back(rng.normal(-1.0, 1.0));
    }
    auto r0 = roc_eval(pos, neg);
    auto mono = [](double v) { return std::exp(0.7 * v) + 3.0; };
    std::vector<double> tp, tn;
    for (double v : pos) tp.push_back(mono(v));
    for (double v : neg) tn.push_back(mono(v));
    auto r1 = roc_eval(tp, tn);
    CHECK(r1.auc == Catch::Approx(r0.auc).margin(1e-12));
    CHECK(r1.eer == Catch::Approx(r0.eer).margin(1e-9));
    // thresholds are interpolated between adjacent scores, so compare the
    // induced decisions rather than the raw threshold values
    int flips = 0;
    for (double v : pos)
      if ((v >= r0.threshold_at_eer) != (mono(v) >= r1.threshold_at_eer)) ++flips;
    for (double v : neg)
      if ((v >= r0.threshold_at_eer) != (mono(v) >= r1.threshold_at_eer)) ++flips;
    CHECK(flips <= 1);
  }
}

TEST_CASE("train_svm") {
  SECTION("separable toy set reaches training accuracy 1") {
    std::vector<feat::FeatureVector> pos = {fv({2.0, 1.0}), fv({2.5, 0.5})};
    std::vector<feat::FeatureVector> neg = {fv({-2.0, -1.0}), fv({-2.5, -0.5})};
    SvmTrainReport rep;
    auto m = train_svm(pos, neg, {}, 3, &rep);
    CHECK(rep.train_accuracy == 1.0);
    CHECK(rep.objective_history.back() < rep.objective_history.front());
  }
  SECTION("label-flipped duplicates drive w toward zero") {
    Rng rng(5);
    std::vector<feat::FeatureVector> pos, neg;
    for (int i = 0; i < 20; ++i) {
      auto v = fv({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
      pos.push_back(v);
      neg.push_back(v);  // same point, flipped label
    }
    SvmTrainReport rep;
    auto m = train_svm(pos, neg, {}, 7, &rep);
    CHECK(m.w.norm() < 0.3);
    CHECK(rep.train_accuracy == Catch::Approx(0.5).margin(0.01));
  }
  SECTION("single class errors") {
    CHECK_THROWS_AS(train_svm({fv({1.0})}, {}, {}, 0), AuthError);
  }
}

TEST_CASE("train_cnn") {
  const int L = 20;
  SECTION("rightward vs leftward motion separates perfectly") {
    std::vector<ingest::RepSeq> pos, neg;
    Rng rng(11);
    for (int i = 0; i < 24; ++i) {
      pos.push_back(vel_seq(1.0 + 0.1 * rng.normal(), 0.05 * rng.normal(), L));
      neg.push_back(vel_seq(-1.0 + 0.1 * rng.normal(), 0.05 * rng.normal(), L));
    }
    CnnHyper h;
    h.epochs = 15;
    auto m = train_cnn(pos, neg, h, 1);
    int correct = 0;
    for (int i = 0; i < 8; ++i) {
      if (m.score(vel_seq(1.0 + 0.05 * i, 0.0, L).points) > 0) ++correct;
      if (m.score(vel_seq(-1.0 - 0.05 * i, 0.0, L).points) < 0) ++correct;
    }
    CHECK(correct == 16);
  }
  SECTION("shuffled labels stay near chance") {
    Rng rng(13);
    int in_band = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::vector<ingest::RepSeq> pos, neg;
      for (int i = 0; i < 30; ++i) {
        // same distribution for both classes = random labels
        (i % 2 ? pos : neg).push_back(vel_seq(rng.uniform(-1, 1), rng.uniform(-1, 1), 14));
        (i % 2 ? neg : pos).push_back(vel_seq(rng.uniform(-1, 1), rng.uniform(-1, 1), 14));
      }
      CnnHyper h;
      h.epochs = 10;
      auto m = train_cnn(pos, neg, h, seed);
      std::vector<double> sp, sn;
      for (int i = 0; i < 40; ++i) {
        sp.push_back(m.score(vel_seq(rng.uniform(-1, 1), rng.uniform(-1, 1), 14).points));
        sn.push_back(m.score(vel_seq(rng.uniform(-1, 1), rng.uniform(-1, 1), 14).points));
      }
      const double auc = roc_eval(sp, sn).auc;
      if (auc >= 0.35 && auc <= 0.65) ++in_band;
    }
    CHECK(in_band >= 4);
  }
  SECTION("mixed sequence lengths error") {
    std::vector<ingest::RepSeq> pos = {vel_seq(1, 0, 15), vel_seq(1, 0, 17)};
    std::vector<ingest::RepSeq> neg = {vel_seq(-1, 0, 15)};
    CHECK_THROWS_AS(train_cnn(pos, neg, {}, 0), AuthError);
  }
  SECTION("training loss decreases and same seed reproduces weights") {
    Rng rng(17);
    std::vector<ingest::RepSeq> pos, neg;
    for (int i = 0; i < 16; ++i) {
      pos.push_back(vel_seq(0.5 + 0.3 * rng.normal(), 0.1, 15));
      neg.push_back(vel_seq(-0.5 + 0.3 * rng.normal(), -0.1, 15));
    }
    CnnHyper h;
    h.epochs = 8;
    CnnTrainReport r1, r2;
    auto a = train_cnn(pos, neg, h, 99, &r1);
    auto b = train_cnn(pos, neg, h, 99, &r2);
    CHECK(r1.loss_history.back() < r1.loss_history.front());
    CHECK((a.head.W.w - b.head.W.w).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.convA.W.w - b.convA.W.w).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("cnn input gradient passes finite differences") {
  Rng rng(19);
  auto m = make_cnn(15, 4);
  Eigen::Matrix2Xd x(2, 15);
  for (int t = 0; t < 15; ++t) {
    x(0, t) = rng.uniform(-1, 1);
    x(1, t) = rng.uniform(-1, 1);
  }
  CnnModel::Cache cache;
  m.forward(x, &cache);
  for (auto* p : m.params()) p->zero_grad();
  Eigen::Matrix2Xd dx = m.backward(cache, 1.0);

  std::vector<grad::GradCheckCoord> coords;
  for (Eigen::Index i = 0; i < x.size(); ++i) coords.push_back({x.data() + i, dx.data()[i]});
  for (auto* p : m.params())
    for (Eigen::Index i = 0; i < p->w.size(); ++i)
      coords.push_back({p->w.data() + i, p->g.data()[i]});
  const double err = grad::grad_check_max_rel_error([&] { return m.forward(x); }, coords);
  CHECK(err < 1e-4);
}

TEST_CASE("score determinism and simple scorers") {
  auto m = make_cnn(14, 7);
  auto r = vel_seq(0.3, -0.2, 14);
  CHECK(m.score(r.points) == m.score(r.points));

  SECTION("zeroed head gives zero score") {
    m.head.W.w.setZero();
    m.head.b.w.setZero();
    CHECK(m.score(r.points) == 0.0);
  }
  SECTION("svm unit weight reads the standardized feature") {
    SvmModel s;
    s.w = Eigen::VectorXd::Zero(3);
    s.w[0] = 1.0;
    s.b = 0.0;
    s.standardizer.mean = Eigen::VectorXd::Zero(3);
    s.standardizer.scale = Eigen::VectorXd::Ones(3);
    feat::FeatureVector f = fv({2.0, 5.0, -1.0});
    CHECK(s.score(f) == Catch::Approx(2.0));
  }
}

TEST_CASE("calibrate_threshold") {
  SECTION("perfect separation classifies validation perfectly") {
    SvmModel m;
    std::vector<double> pos = {2.0, 3.0, 4.0}, neg = {-1.0, 0.0, 0.5};
    calibrate_threshold(m, pos, neg);
    CHECK(m.calibrated);
    for (double s : pos) CHECK(s >= m.threshold);
    for (double s : neg) CHECK(s < m.threshold);
    CHECK(m.clean_alert_rate == 0.0);
  }
  SECTION("overlapping symmetric gaussians balance FPR and FNR") {
    Rng rng(29);
    std::vector<double> pos, neg;
    for (int i = 0; i < 10000; ++i) {
      pos.push_back(rng.normal(1.0, 1.0));
      neg.push_back(rng.normal(-1.0, 1.0));
    }
    SvmModel m;
    calibrate_threshold(m, pos, neg);
    int fn = 0, fp = 0;
    for (double s : pos)
      if (s < m.threshold) ++fn;
    for (double s : neg)
      if (s >= m.threshold) ++fp;
    const double fnr = fn / 10000.0, fpr = fp / 10000.0;
    CHECK(std::abs(fpr - fnr) < 0.05);
  }
  SECTION("re-calibration on identical data is idempotent") {
    SvmModel m;
    std::vector<double> pos = {0.2, 0.9, 1.4, 0.8}, neg = {-0.6, 0.1, 0.35};
    calibrate_threshold(m, pos, neg);
    const double t1 = m.threshold;
    calibrate_threshold(m, pos, neg);
    CHECK(m.threshold == t1);
  }
}
