#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mouseforge/rng.hpp"

namespace mouseforge::ingest {

struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MouseEvent {
  double ts = 0.0;  // seconds
  double x = 0.0;   // pixels before normalization, [0,1] after
  double y = 0.0;
};

struct Trajectory {
  std::string user_id;
  std::string session_id;
  std::vector<MouseEvent> events;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
};

struct Resolution {
  int width = 0;
  int height = 0;
};

enum class RepKind { Abs, Dv, Vel };

inline const char* rep_name(RepKind k) {
  switch (k) {
    case RepKind::Abs: return "ABS";
    case RepKind::Dv: return "DV";
    case RepKind::Vel: return "VEL";
  }
  return "?";
}

inline RepKind rep_from_name(const std::string& s) {
  if (s == "ABS" || s == "abs") return RepKind::Abs;
  if (s == "DV" || s == "dv") return RepKind::Dv;
  if (s == "VEL" || s == "vel") return RepKind::Vel;
  throw IngestError("unknown representation: " + s);
}

// A fixed-length window in one of the three representations, with enough
// metadata (origin, dts, t0) to invert back to absolute coordinates.
struct RepSeq {
  RepKind kind = RepKind::Vel;
  Eigen::Matrix2Xd points;  // 2 x L
  Eigen::VectorXd dts;      // L, strictly positive
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  double t0 = 0.0;

  Eigen::Index length() const { return points.cols(); }
};

struct DatasetSplit {
  std::vector<Trajectory> auth_train, auth_test, attacker_train, attacker_test;
  std::vector<std::string> excluded_users;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Session parsing

enum class SessionFormat { Canonical, Balabit, Twos };

// Column-name based field mapping; adapters for non-canonical formats are
// best-effort remaps, not bit-exact replicas of any particular dataset dump.
struct FieldMapping {
  std::string ts_field = "ts";
  std::string x_field = "x";
  std::string y_field = "y";
  std::string state_field;  // empty: no event-type filtering
  std::string keep_state;   // kept verbatim match, e.g. "Move"
  char delimiter = ',';
  double ts_scale = 1.0;  // multiply parsed timestamps into seconds
};

inline FieldMapping mapping_for(SessionFormat f) {
  FieldMapping m;
  switch (f) {
    case SessionFormat::Canonical:
      break;
    case SessionFormat::Balabit:
      m.ts_field = "timestamp";
      m.state_field = "state";
      m.keep_state = "Move";
      break;
    case SessionFormat::Twos:
      m.ts_field = "timestamp";
      m.state_field = "event";
      m.keep_state = "Move";
      break;
  }
  return m;
}

struct ParseResult {
  Trajectory traj;
  int skipped = 0;   // malformed records
  int filtered = 0;  // non-movement records (clicks/scrolls/drags)
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

}  // namespace detail

inline ParseResult parse_session(std::istream& in, const FieldMapping& map,
                                 std::string user_id = "", std::string session_id = "") {
  ParseResult res;
  res.traj.user_id = std::move(user_id);
  res.traj.session_id = std::move(session_id);

  std::string header;
  if (!std::getline(in, header)) throw IngestError("empty session stream");
  const auto cols = detail::split_line(detail::trim(header), map.delimiter);
  int c_ts = -1, c_x = -1, c_y = -1, c_state = -1;
  for (int i = 0; i < static_cast<int>(cols.size()); ++i) {
    const std::string name = detail::trim(cols[i]);
    if (name == map.ts_field) c_ts = i;
    if (name == map.x_field) c_x = i;
    if (name == map.y_field) c_y = i;
    if (!map.state_field.empty() && name == map.state_field) c_state = i;
  }
  if (c_ts < 0 || c_x < 0 || c_y < 0)
    throw IngestError("header is missing required fields (" + map.ts_field + "," +
                      map.x_field + "," + map.y_field + "): " + header);

  std::string line;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto f = detail::split_line(line, map.delimiter);
    const int needed = std::max({c_ts, c_x, c_y, c_state});
    if (static_cast<int>(f.size()) <= needed) {
      ++res.skipped;
      continue;
    }
    if (c_state >= 0 && detail::trim(f[c_state]) != map.keep_state) {
      ++res.filtered;
      continue;
    }
    MouseEvent e;
    if (!detail::parse_double(f[c_ts], e.ts) || !detail::parse_double(f[c_x], e.x) ||
        !detail::parse_double(f[c_y], e.y) || e.x < 0.0 || e.y < 0.0) {
      ++res.skipped;
      continue;
    }
    e.ts *= map.ts_scale;
    res.traj.events.push_back(e);
  }
  if (res.traj.events.empty()) throw IngestError("session has no usable movement events");
  return res;
}

inline ParseResult parse_session(std::istream& in, SessionFormat fmt,
                                 std::string user_id = "", std::string session_id = "") {
  return parse_session(in, mapping_for(fmt), std::move(user_id), std::move(session_id));
}

// ---------------------------------------------------------------------------
// Cleaning and segmentation

// Stable-sorts by timestamp, then keeps only strictly increasing timestamps.
// This removes both exact repeats of (ts, x, y) and any non-increasing ts.
inline Trajectory clean(Trajectory t) {
  std::stable_sort(t.events.begin(), t.events.end(),
                   [](const MouseEvent& a, const MouseEvent& b) { return a.ts < b.ts; });
  std::vector<MouseEvent> kept;
  kept.reserve(t.events.size());
  for (const auto& e : t.events) {
    if (kept.empty() || e.ts > kept.back().ts) kept.push_back(e);
  }
  t.events = std::move(kept);
  return t;
}

// All gap-delimited pieces, in order; concatenating them reproduces the input.
inline std::vector<Trajectory> split_at_gaps(const Trajectory& t, double gap_threshold) {
  std::vector<Trajectory> out;
  if (t.empty()) return out;
  Trajectory cur{t.user_id, t.session_id, {}};
  int piece = 0;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    if (!cur.events.empty() && t.events[i].ts - cur.events.back().ts > gap_threshold) {
      cur.session_id = t.session_id + "#" + std::to_string(piece++);
      out.push_back(std::move(cur));
      cur = Trajectory{t.user_id, t.session_id, {}};
    }
    cur.events.push_back(t.events[i]);
  }
  cur.session_id = t.session_id + "#" + std::to_string(piece);
  out.push_back(std::move(cur));
  if (out.size() == 1) out[0].session_id = t.session_id;  // unsplit keeps its id
  return out;
}

inline std::vector<Trajectory> segment(const Trajectory& t, double gap_threshold,
                                       std::size_t min_len) {
  std::vector<Trajectory> kept;
  for (auto& s : split_at_gaps(t, gap_threshold)) {
    if (s.size() >= min_len) kept.push_back(std::move(s));
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Resolution estimation and coordinate normalization

inline const std::vector<Resolution>& default_resolutions() {
  static const std::vector<Resolution> kSet = {
      {640, 480},   {800, 600},   {1024, 768},  {1280, 720},  {1280, 1024}, {1366, 768},
      {1440, 900},  {1600, 900},  {1680, 1050}, {1920, 1080}, {2560, 1440}, {3840, 2160}};
  return kSet;
}

inline Resolution estimate_resolution(const std::vector<Trajectory>& ts,
                                      const std::vector<Resolution>& candidates =
                                          default_resolutions()) {
  double max_x = -1.0, max_y = -1.0;
  for (const auto& t : ts) {
    for (const auto& e : t.events) {
      max_x = std::max(max_x, e.x);
      max_y = std::max(max_y, e.y);
    }
  }
  if (max_x < 0.0) throw IngestError("estimate_resolution: no events");

  std::optional<Resolution> best;
  for (const auto& c : candidates) {
    if (c.width >= max_x && c.height >= max_y) {
      if (!best || static_cast<long>(c.width) * c.height <
                       static_cast<long>(best->width) * best->height ||
          (static_cast<long>(c.width) * c.height ==
               static_cast<long>(best->width) * best->height &&
           c.width < best->width)) {
        best = c;
      }
    }
  }
  if (best) return *best;
  auto up8 = [](double v) {
    return static_cast<int>(std::ceil(std::ceil(v) / 8.0) * 8.0);
  };
  return Resolution{up8(max_x), up8(max_y)};
}

inline Trajectory normalize(Trajectory t, Resolution r) {
  for (auto& e : t.events) {
    if (e.x > r.width || e.y > r.height)
      throw IngestError("normalize: coordinate (" + std::to_string(e.x) + "," +
                        std::to_string(e.y) + ") exceeds resolution " +
                        std::to_string(r.width) + "x" + std::to_string(r.height));
    e.x /= r.width;
    e.y /= r.height;
  }
  return t;
}

inline Trajectory denormalize(Trajectory t, Resolution r) {
  for (auto& e : t.events) {
    e.x *= r.width;
    e.y *= r.height;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Reshuffle split (auth/attacker halves, 80/20 train/test within each half)

namespace detail {

// TWOS-style long sessions are broken at >= 2h idle gaps, but only for users
// that would otherwise have too few sessions to split.
inline std::vector<Trajectory> mini_sessions(const std::vector<Trajectory>& sessions,
                                             double gap_seconds = 7200.0) {
  std::vector<Trajectory> out;
  for (const auto& s : sessions) {
    for (auto& m : split_at_gaps(s, gap_seconds)) out.push_back(std::move(m));
  }
  return out;
}

struct HalfSplit {
  std::vector<Trajectory> train, test;
};

inline HalfSplit split_80_20(std::vector<Trajectory> half) {
  HalfSplit out;
  const std::size_t n = half.size();
  if (n == 0) return out;
  std::size_t n_train = static_cast<std::size_t>(std::lround(0.8 * static_cast<double>(n)));
  if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  else n_train = 1;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? out.train : out.test).push_back(std::move(half[i]));
  }
  return out;
}

}  // namespace detail

inline DatasetSplit reshuffle_split(const std::vector<Trajectory>& sessions,
                                    std::uint64_t seed) {
  std::map<std::string, std::vector<Trajectory>> by_user;
  for (const auto& s : sessions) by_user[s.user_id].push_back(s);

  DatasetSplit out;
  Rng root(seed);
  for (auto& [user, sess] : by_user) {
    std::vector<Trajectory> pool = sess;
    if (pool.size() < 4) {
      pool = detail::mini_sessions(pool);
      if (pool.size() > sess.size())
        out.warnings.push_back(user + ": sessions divided into " +
                               std::to_string(pool.size()) + " mini-sessions");
    }
    if (pool.size() < 2) {
      out.excluded_users.push_back(user);
      out.warnings.push_back(user + ": excluded, fewer than 2 sessions");
      continue;
    }
    Rng rng = root.fork(user);
    rng.shuffle(pool);
    const std::size_t n_auth = (pool.size() + 1) / 2;
    std::vector<Trajectory> auth_half(pool.begin(), pool.begin() + n_auth);
    std::vector<Trajectory> att_half(pool.begin() + n_auth, pool.end());

    auto a = detail::split_80_20(std::move(auth_half));
    auto b = detail::split_80_20(std::move(att_half));
    if (a.test.empty() || b.test.empty())
      out.warnings.push_back(user + ": a test subset is empty (too few sessions)");
    auto move_into = [](std::vector<Trajectory>& dst, std::vector<Trajectory>& src) {
      for (auto& t : src) dst.push_back(std::move(t));
    };
    move_into(out.auth_train, a.train);
    move_into(out.auth_test, a.test);
    move_into(out.attacker_train, b.train);
    move_into(out.attacker_test, b.test);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rotation augmentation

struct AugmentResult {
  std::vector<Trajectory> copies;
  int clamped_points = 0;
};

inline Eigen::Vector2d centroid_of(const Trajectory& t) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& e : t.events) c += Eigen::Vector2d(e.x, e.y);
  return c / static_cast<double>(t.size());
}

// Rotates every event about `center` by `deg` degrees (ccw), clamping into
// [0,1]^2 and counting clamped points. Timestamps are untouched.
inline Trajectory rotate_about(const Trajectory& t, Eigen::Vector2d center, double deg,
                               int* clamped = nullptr) {
  const double rad = deg * 0.017453292519943295;
  const double c = std::cos(rad), s = std::sin(rad);
  Trajectory out = t;
  for (auto& e : out.events) {
    const double dx = e.x - center.x(), dy = e.y - center.y();
    double nx = center.x() + c * dx - s * dy;
    double ny = center.y() + s * dx + c * dy;
    if (nx < 0.0 || nx > 1.0 || ny < 0.0 || ny > 1.0) {
      if (clamped) ++*clamped;
      nx = std::clamp(nx, 0.0, 1.0);
      ny = std::clamp(ny, 0.0, 1.0);
    }
    e.x = nx;
    e.y = ny;
  }
  return out;
}

inline AugmentResult augment(const Trajectory& t, int n = 10, double max_deg = 5.0,
                             std::uint64_t seed = 0) {
  AugmentResult res;
  Rng rng(seed);
  const Eigen::Vector2d c = centroid_of(t);
  for (int i = 0; i < n; ++i) {
    const double deg = max_deg == 0.0 ? 0.0 : rng.uniform(-max_deg, max_deg);
    Trajectory r = rotate_about(t, c, deg, &res.clamped_points);
    r.session_id = t.session_id + "~rot" + std::to_string(i);
    res.copies.push_back(std::move(r));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Representation conversion

// Non-overlapping windows of seqlen+1 events; the tail that does not fill a
// window is dropped. VEL windows containing a non-positive dt are discarded.
inline std::vector<RepSeq> to_rep(const Trajectory& t, RepKind kind, int seqlen) {
  std::vector<RepSeq> out;
  if (seqlen < 1) throw IngestError("to_rep: seqlen must be >= 1");
  const std::size_t W = static_cast<std::size_t>(seqlen) + 1;
  for (std::size_t base = 0; base + W <= t.size(); base += W) {
    RepSeq r;
    r.kind = kind;
    r.points.resize(2, seqlen);
    r.dts.resize(seqlen);
    r.origin = Eigen::Vector2d(t.events[base].x, t.events[base].y);
    r.t0 = t.events[base].ts;
    bool ok = true;
    for (int i = 0; i < seqlen; ++i) {
      const auto& a = t.events[base + i];
      const auto& b = t.events[base + i + 1];
      const double dt = b.ts - a.ts;
      if (dt <= 0.0) {
        ok = false;
        break;
      }
      r.dts[i] = dt;
      const Eigen::Vector2d dv(b.x - a.x, b.y - a.y);
      switch (kind) {
        case RepKind::Abs: r.points.col(i) = Eigen::Vector2d(b.x, b.y); break;
        case RepKind::Dv: r.points.col(i) = dv; break;
        case RepKind::Vel: r.points.col(i) = dv / dt; break;
      }
    }
    if (ok) out.push_back(std::move(r));
  }
  return out;
}

// Cumulative reconstruction from origin; inverse of to_rep on each window.
inline Trajectory from_rep(const RepSeq& r) {
  Trajectory t;
  t.events.reserve(static_cast<std::size_t>(r.length()) + 1);
  double ts = r.t0;
  Eigen::Vector2d p = r.origin;
  t.events.push_back({ts, p.x(), p.y()});
  for (Eigen::Index i = 0; i < r.length(); ++i) {
    const double dt = r.dts[i];
    ts += dt;
    switch (r.kind) {
      case RepKind::Abs: p = r.points.col(i); break;
      case RepKind::Dv: p += r.points.col(i); break;
      case RepKind::Vel: p += r.points.col(i) * dt; break;
    }
    t.events.push_back({ts, p.x(), p.y()});
  }
  return t;
}

// Velocity-window view of a whole collection of segments.
inline std::vector<RepSeq> rep_windows(const std::vector<Trajectory>& segments,
                                       RepKind kind, int seqlen) {
  std::vector<RepSeq> out;
  for (const auto& s : segments) {
    for (auto& r : to_rep(s, kind, seqlen)) out.push_back(std::move(r));
  }
  return out;
}

// Absolute (seqlen+1)-event windows of a collection of segments.
inline std::vector<Trajectory> abs_windows(const std::vector<Trajectory>& segments,
                                           int seqlen) {
  std::vector<Trajectory> out;
  for (const auto& s : segments) {
    const std::size_t W = static_cast<std::size_t>(seqlen) + 1;
    std::size_t k = 0;
    for (std::size_t base = 0; base + W <= s.size(); base += W, ++k) {
      Trajectory w{s.user_id, s.session_id + "@" + std::to_string(k), {}};
      w.events.assign(s.events.begin() + base, s.events.begin() + base + W);
      out.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace mouseforge::ingest
