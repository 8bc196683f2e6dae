#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "mouseforge/ingest.hpp"
#include "mouseforge/synth.hpp"

using namespace mouseforge;
using namespace mouseforge::ingest;

namespace {

Trajectory make_traj(std::vector<std::array<double, 3>> rows, std::string user = "u",
                     std::string session = "s") {
  Trajectory t{std::move(user), std::move(session), {}};
  for (auto& r : rows) t.events.push_back({r[0], r[1], r[2]});
  return t;
}

Trajectory random_traj(Rng& rng, int n, double dt = 0.01) {
  Trajectory t{"u", "s", {}};
  double ts = 0.0;
  for (int i = 0; i < n; ++i) {
    ts += dt * (0.5 + rng.uniform());
    t.events.push_back({ts, rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)});
  }
  return t;
}

}  // namespace

TEST_CASE("parse_session canonical") {
  std::istringstream in("ts,x,y\n0.0,10,10\n0.008,12,11\n");
  auto res = parse_session(in, SessionFormat::Canonical, "u0", "s0");
  REQUIRE(res.traj.size() == 2);
  CHECK(res.traj.events[0].ts == 0.0);
  CHECK(res.traj.events[1].x == 12);
  CHECK(res.skipped == 0);
}

TEST_CASE("parse_session skips malformed lines") {
  std::istringstream in("ts,x,y\n0.0,abc,10\n0.008,12,11\n");
  auto res = parse_session(in, SessionFormat::Canonical);
  CHECK(res.traj.size() == 1);
  CHECK(res.skipped == 1);
}

TEST_CASE("parse_session balabit adapter keeps only Move states") {
  // independent oracle: a line filter over the same fixture
  std::vector<std::string> lines = {
      "0.00,NoButton,Move,100,100", "0.01,Left,Pressed,101,100",
      "0.02,Left,Released,101,101", "0.03,NoButton,Move,102,101",
      "0.04,NoButton,Move,103,103", "0.05,ScrollDown,Scroll,103,104",
  };
  std::string text = "timestamp,button,state,x,y\n";
  int oracle = 0;
  for (const auto& l : lines) {
    text += l + "\n";
    if (l.find(",Move,") != std::string::npos) ++oracle;
  }
  std::istringstream in(text);
  auto res = parse_session(in, SessionFormat::Balabit);
  CHECK(static_cast<int>(res.traj.size()) == oracle);
  CHECK(res.filtered == static_cast<int>(lines.size()) - oracle);
}

TEST_CASE("parse_session empty session errors") {
  std::istringstream in("ts,x,y\n");
  CHECK_THROWS_AS(parse_session(in, SessionFormat::Canonical), IngestError);
}

TEST_CASE("clean removes duplicates and non-increasing timestamps") {
  auto t = make_traj({{0, 5, 5}, {0, 5, 5}, {1, 6, 6}});
  auto c = clean(t);
  REQUIRE(c.size() == 2);
  CHECK(c.events[0].ts == 0);
  CHECK(c.events[1].ts == 1);
}

TEST_CASE("clean is idempotent") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto t = random_traj(rng, 100);
    // inject disorder and repeats
    for (int i = 0; i < 10; ++i) {
      auto e = t.events[rng.index(t.events.size())];
      t.events.push_back(e);
    }
    auto once = clean(t);
    auto twice = clean(once);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(once.events[i].ts == twice.events[i].ts);
      CHECK(once.events[i].x == twice.events[i].x);
    }
  }
}

TEST_CASE("clean drops exactly the duplicated events") {
  Rng rng(13);
  auto t = random_traj(rng, 200);
  const std::size_t base = t.size();
  // duplicate k events in place (same ts -> dropped by the strict-increase rule)
  const int k = 17;
  for (int i = 0; i < k; ++i) {
    const std::size_t at = rng.index(t.events.size());
    t.events.insert(t.events.begin() + static_cast<std::ptrdiff_t>(at), t.events[at]);
  }
  // brute-force oracle: count events with strictly increasing ts after sort
  auto sorted = t.events;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const MouseEvent& a, const MouseEvent& b) { return a.ts < b.ts; });
  int keep = 0;
  double last = -1e300;
  for (const auto& e : sorted) {
    if (e.ts > last) {
      ++keep;
      last = e.ts;
    }
  }
  auto c = clean(t);
  CHECK(c.size() == static_cast<std::size_t>(keep));
  CHECK(c.size() == base);  // duplicates removed exactly
}

TEST_CASE("segment splits at gaps and keeps order") {
  auto t = make_traj({{0, 1, 1}, {0.5, 2, 2}, {10.5, 3, 3}, {11, 4, 4}});
  SECTION("no gaps -> single segment") {
    auto segs = segment(make_traj({{0, 1, 1}, {0.5, 2, 2}, {0.9, 3, 3}}), 1.0, 1);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].size() == 3);
  }
  SECTION("one 10s gap with 1s threshold -> two segments") {
    auto segs = segment(t, 1.0, 1);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].size() == 2);
    CHECK(segs[1].size() == 2);
  }
  SECTION("boundaries match an independent linear scan") {
    Rng rng(3);
    Trajectory r{"u", "s", {}};
    double ts = 0;
    for (int i = 0; i < 300; ++i) {
      ts += rng.uniform() < 0.05 ? rng.uniform(1.5, 3.0) : rng.uniform(0.001, 0.5);
      r.events.push_back({ts, rng.uniform(), rng.uniform()});
    }
    auto pieces = split_at_gaps(r, 1.0);
    // oracle scan
    std::vector<std::size_t> lens;
    std::size_t cur = 1;
    for (std::size_t i = 1; i < r.size(); ++i) {
      if (r.events[i].ts - r.events[i - 1].ts > 1.0) {
        lens.push_back(cur);
        cur = 0;
      }
      ++cur;
    }
    lens.push_back(cur);
    REQUIRE(pieces.size() == lens.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      CHECK(pieces[i].size() == lens[i]);
      total += pieces[i].size();
    }
    CHECK(total == r.size());  // concatenation reproduces the input
  }
}

TEST_CASE("estimate_resolution picks the smallest covering candidate") {
  auto t1 = make_traj({{0, 1900, 1060}, {1, 10, 10}});
  CHECK(estimate_resolution({t1}).width == 1920);
  CHECK(estimate_resolution({t1}).height == 1080);

  auto t2 = make_traj({{0, 640, 480}});
  auto r2 = estimate_resolution({t2});
  CHECK(r2.width == 640);
  CHECK(r2.height == 480);

  // exhaustive candidate-scan oracle
  auto t3 = make_traj({{0, 2100, 1200}});
  auto r3 = estimate_resolution({t3});
  long best_area = -1;
  Resolution best{};
  for (const auto& c : default_resolutions()) {
    if (c.width >= 2100 && c.height >= 1200) {
      const long area = static_cast<long>(c.width) * c.height;
      if (best_area < 0 || area < best_area) {
        best_area = area;
        best = c;
      }
    }
  }
  CHECK(r3.width == best.width);
  CHECK(r3.height == best.height);
  CHECK(r3.width == 2560);
  CHECK(r3.height == 1440);

  CHECK_THROWS_AS(estimate_resolution(std::vector<Trajectory>{}), IngestError);

  // nothing covers -> round up to multiples of 8
  auto t4 = make_traj({{0, 9000, 5000}});
  auto r4 = estimate_resolution({t4});
  CHECK(r4.width == 9000);  // already a multiple of 8
  CHECK(r4.height == 5000);
  auto r5 = estimate_resolution({make_traj({{0, 9001, 5003}})});
  CHECK(r5.width == 9008);
  CHECK(r5.height == 5008);
}

TEST_CASE("normalize and denormalize") {
  auto t = make_traj({{0, 960, 540}, {1, 0, 0}});
  auto n = normalize(t, {1920, 1080});
  CHECK(n.events[0].x == Catch::Approx(0.5));
  CHECK(n.events[0].y == Catch::Approx(0.5));
  CHECK(n.events[1].x == 0.0);

  Rng rng(11);
  auto r = random_traj(rng, 50);
  for (auto& e : r.events) {
    e.x = std::round(e.x * 1919);
    e.y = std::round(e.y * 1079);
  }
  auto rn = normalize(r, {1920, 1080});
  auto back = denormalize(rn, {1920, 1080});
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(back.events[i].x == Catch::Approx(r.events[i].x).margin(1e-9));
    CHECK(back.events[i].y == Catch::Approx(r.events[i].y).margin(1e-9));
  }
  CHECK(rn.events[0].ts == r.events[0].ts);

  auto bad = make_traj({{0, 2000, 500}});
  CHECK_THROWS_AS(normalize(bad, {1920, 1080}), IngestError);
}

TEST_CASE("reshuffle_split honors 80/20 within each half") {
  std::vector<Trajectory> sessions;
  for (int s = 0; s < 10; ++s) {
    Trajectory t{"alice", "s" + std::to_string(s), {}};
    for (int i = 0; i < 20; ++i) t.events.push_back({i * 0.01, 0.1 * i, 0.1});
    sessions.push_back(t);
  }
  auto split = reshuffle_split(sessions, 42);
  CHECK(split.auth_train.size() == 4);
  CHECK(split.auth_test.size() == 1);
  CHECK(split.attacker_train.size() == 4);
  CHECK(split.attacker_test.size() == 1);

  SECTION("determinism") {
    auto again = reshuffle_split(sessions, 42);
    REQUIRE(again.auth_train.size() == split.auth_train.size());
    for (std::size_t i = 0; i < split.auth_train.size(); ++i)
      CHECK(again.auth_train[i].session_id == split.auth_train[i].session_id);
  }

  SECTION("disjointness oracle over session ids") {
    auto ids = [](const std::vector<Trajectory>& v) {
      std::set<std::string> s;
      for (const auto& t : v) s.insert(t.user_id + "/" + t.session_id);
      return s;
    };
    auto a = ids(split.auth_train), b = ids(split.auth_test), c = ids(split.attacker_train),
         d = ids(split.attacker_test);
    std::set<std::string> all;
    std::size_t total = 0;
    for (auto* s : {&a, &b, &c, &d}) {
      total += s->size();
      all.insert(s->begin(), s->end());
    }
    CHECK(all.size() == total);        // pairwise disjoint
    CHECK(all.size() == sessions.size());  // covers all input sessions
  }
}

TEST_CASE("reshuffle_split excludes users with too few sessions") {
  std::vector<Trajectory> sessions;
  Trajectory only{"bob", "s0", {}};
  only.events.push_back({0.0, 1, 1});
  only.events.push_back({0.5, 2, 2});
  sessions.push_back(only);
  auto split = reshuffle_split(sessions, 1);
  REQUIRE(split.excluded_users.size() == 1);
  CHECK(split.excluded_users[0] == "bob");
}

TEST_CASE("augment rotates about the centroid") {
  SECTION("zero degrees -> identical copies") {
    auto t = make_traj({{0, 0.1, 0.1}, {1, 0.4, 0.5}, {2, 0.2, 0.9}});
    auto res = augment(t, 10, 0.0, 5);
    REQUIRE(res.copies.size() == 10);
    for (const auto& c : res.copies)
      for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(c.events[i].x == Catch::Approx(t.events[i].x).margin(1e-12));
        CHECK(c.events[i].y == Catch::Approx(t.events[i].y).margin(1e-12));
        CHECK(c.events[i].ts == t.events[i].ts);
      }
  }
  SECTION("+90 degrees about (0.5, 0)") {
    auto t = make_traj({{0, 0.0, 0.0}, {1, 1.0, 0.0}});
    int clamped = 0;
    auto r = rotate_about(t, {0.5, 0.0}, 90.0, &clamped);
    // pre-clamp targets are (0.5,-0.5) and (0.5,0.5); the first clamps to y=0
    CHECK(r.events[0].x == Catch::Approx(0.5).margin(1e-12));
    CHECK(r.events[0].y == 0.0);
    CHECK(clamped == 1);
    CHECK(r.events[1].x == Catch::Approx(0.5).margin(1e-12));
    CHECK(r.events[1].y == Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("per-step speed profile preserved (isometry, no clamping)") {
    Rng rng(23);
    auto t = random_traj(rng, 80);
    auto res = augment(t, 10, 5.0, 99);
    CHECK(res.clamped_points == 0);
    for (const auto& c : res.copies) {
      for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        const double s0 = std::hypot(t.events[i + 1].x - t.events[i].x,
                                     t.events[i + 1].y - t.events[i].y);
        const double s1 = std::hypot(c.events[i + 1].x - c.events[i].x,
                                     c.events[i + 1].y - c.events[i].y);
        REQUIRE(std::abs(s0 - s1) < 1e-9);
      }
    }
  }
}

TEST_CASE("to_rep definitions") {
  SECTION("DV from absolute coordinates") {
    auto t = make_traj({{0, 0.0, 0.0}, {1, 0.1, 0.2}, {2, 0.3, 0.3}});
    auto reps = to_rep(t, RepKind::Dv, 2);
    REQUIRE(reps.size() == 1);
    CHECK(reps[0].points(0, 0) == Catch::Approx(0.1));
    CHECK(reps[0].points(1, 0) == Catch::Approx(0.2));
    CHECK(reps[0].points(0, 1) == Catch::Approx(0.2));
    CHECK(reps[0].points(1, 1) == Catch::Approx(0.1));
  }
  SECTION("VEL divides DV by dt") {
    auto t = make_traj({{0, 0.0, 0.0}, {0.5, 1.0, 2.0}});
    auto reps = to_rep(t, RepKind::Vel, 1);
    REQUIRE(reps.size() == 1);
    CHECK(reps[0].points(0, 0) == Catch::Approx(2.0));
    CHECK(reps[0].points(1, 0) == Catch::Approx(4.0));
  }
  SECTION("round trip reconstructs the source window within 1e-9") {
    Rng rng(31);
    auto t = random_traj(rng, 102);
    for (auto kind : {RepKind::Abs, RepKind::Dv, RepKind::Vel}) {
      auto reps = to_rep(t, kind, 50);
      REQUIRE(reps.size() == 2);
      std::size_t base = 0;
      for (const auto& r : reps) {
        auto back = from_rep(r);
        REQUIRE(back.size() == 51);
        for (std::size_t i = 0; i < back.size(); ++i) {
          REQUIRE(std::abs(back.events[i].x - t.events[base + i].x) < 1e-9);
          REQUIRE(std::abs(back.events[i].y - t.events[base + i].y) < 1e-9);
          REQUIRE(std::abs(back.events[i].ts - t.events[base + i].ts) < 1e-9);
        }
        base += 51;
      }
    }
  }
  SECTION("windows with non-positive dt are discarded") {
    auto t = make_traj({{0, 0.0, 0.0}, {0.0, 0.1, 0.1}, {0.1, 0.2, 0.2}});
    CHECK(to_rep(t, RepKind::Vel, 2).empty());
  }
}

TEST_CASE("synth_users determinism and statistics") {
  auto a = synth_users(3, 2, 77);
  auto b = synth_users(3, 2, 77);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].size() == b[i].size());
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      CHECK(a[i].events[j].ts == b[i].events[j].ts);
      CHECK(a[i].events[j].x == b[i].events[j].x);
      CHECK(a[i].events[j].y == b[i].events[j].y);
    }
  }

  SECTION("generated sessions pass clean unchanged") {
    for (const auto& s : a) {
      auto c = clean(s);
      CHECK(c.size() == s.size());
    }
  }

  SECTION("adjacent users differ in mean speed by >= 3 pooled standard errors") {
    ingest::SynthConfig cfg;
    cfg.n_users = 5;
    cfg.sessions_per_user = 2;
    cfg.seed = 5;
    auto sessions = synth_users(cfg);
    auto mean_speeds = [&](const std::string& user) {
      std::vector<double> speeds;
      for (const auto& s : sessions) {
        if (s.user_id != user) continue;
        auto n = normalize(clean(s), {1920, 1080});
        for (auto& w : abs_windows(segment(n, 1.0, 51), 50)) {
          double sp = 0;
          for (std::size_t i = 0; i + 1 < w.size(); ++i) {
            sp += std::hypot(w.events[i + 1].x - w.events[i].x,
                             w.events[i + 1].y - w.events[i].y) /
                  (w.events[i + 1].ts - w.events[i].ts);
          }
          speeds.push_back(sp / static_cast<double>(w.size() - 1));
          if (speeds.size() >= 100) return speeds;
        }
      }
      return speeds;
    };
    auto s0 = mean_speeds("u00");
    auto s1 = mean_speeds("u01");
    REQUIRE(s0.size() >= 30);
    REQUIRE(s1.size() >= 30);
    auto stats = [](const std::vector<double>& v) {
      double m = 0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      double var = 0;
      for (double x : v) var += (x - m) * (x - m);
      var /= static_cast<double>(v.size() - 1);
      return std::pair<double, double>(m, var);
    };
    auto [m0, v0] = stats(s0);
    auto [m1, v1] = stats(s1);
    const double se = std::sqrt(v0 / static_cast<double>(s0.size()) +
                                v1 / static_cast<double>(s1.size()));
    CHECK(std::abs(m0 - m1) >= 3.0 * se);
  }
}
