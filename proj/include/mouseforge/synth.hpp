#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mouseforge/ingest.hpp"
#include "mouseforge/rng.hpp"

namespace mouseforge::ingest {

// Latent style of one synthetic user. Values are stratified across the user
// index so any two users differ in several of them at once; everything is a
// pure function of (seed, user index).
struct SynthUserParams {
  double speed_scale;     // peak cursor speed, normalized units / s
  double curvature_bias;  // signed bow of each point-to-point arc
  double noise_sigma;     // coloured-noise amplitude, normalized units
  double noise_rho;       // AR(1) smoothness of the noise (hand tremor texture)
  double pause_rate;      // probability of a short pause after an arc
  double dt_mean;         // mean inter-event interval, seconds (~8 ms)
  double dir_angle;       // preferred movement axis
  double dir_aniso;       // anisotropy of target placement along that axis
};

struct SynthConfig {
  int n_users = 5;
  int sessions_per_user = 20;
  int arcs_per_session = 24;
  std::uint64_t seed = 0;
  int width = 1920;
  int height = 1080;
  std::string user_prefix = "u";
};

namespace detail {

inline double lerp(double a, double b, double t) { return a + (b - a) * t; }

// Deterministic scramble of the user index so different latents are not all
// ordered the same way across users.
inline double scramble01(int u, int n, std::uint64_t salt) {
  if (n <= 1) return 0.5;
  const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(u) * 0x9e37u + salt);
  const int r = static_cast<int>(h % static_cast<std::uint64_t>(n));
  return static_cast<double>(r) / static_cast<double>(n - 1);
}

}  // namespace detail

inline SynthUserParams synth_user_params(int u, const SynthConfig& cfg) {
  Rng rng = Rng(cfg.seed).fork(0x5e7a11u + static_cast<std::uint64_t>(u));
  const int n = cfg.n_users;
  const double rank = n > 1 ? static_cast<double>(u) / (n - 1) : 0.5;
  SynthUserParams p;
  // Speed is strictly stratified by user index; the rest use scrambled ranks.
  // Direction anisotropy is strong so that movement orientation carries a
  // large share of the user identity (and large rotations are conspicuous).
  p.speed_scale = 0.6 * std::pow(3.0, rank) * (1.0 + 0.04 * rng.uniform(-1, 1));
  p.curvature_bias = detail::lerp(-0.35, 0.35, detail::scramble01(u, n, 11)) +
                     0.03 * rng.uniform(-1, 1);
  p.noise_sigma = detail::lerp(0.0005, 0.0016, detail::scramble01(u, n, 23));
  p.noise_rho = detail::lerp(0.75, 0.95, detail::scramble01(u, n, 89));
  p.pause_rate = detail::lerp(0.05, 0.30, detail::scramble01(u, n, 37));
  p.dt_mean = detail::lerp(0.0068, 0.0105, detail::scramble01(u, n, 53)) *
              (1.0 + 0.05 * rng.uniform(-1, 1));
  p.dir_angle = 3.14159265358979 * u / std::max(1, n) + 0.15 * rng.uniform(-1, 1);
  p.dir_aniso = detail::lerp(2.5, 4.5, detail::scramble01(u, n, 71));
  return p;
}

namespace detail {

inline Eigen::Vector2d clamp_box(Eigen::Vector2d p, double lo, double hi) {
  p.x() = std::clamp(p.x(), lo, hi);
  p.y() = std::clamp(p.y(), lo, hi);
  return p;
}

inline Trajectory synth_session(const SynthUserParams& base, const SynthConfig& cfg,
                                const std::string& user_id, int session_index) {
  Rng rng = Rng(cfg.seed).fork(hash_str(user_id) ^ (0xabcdu + session_index));
  // day-to-day drift: each session perturbs the user's style slightly
  SynthUserParams q = base;
  q.speed_scale *= 1.0 + 0.10 * rng.uniform(-1, 1);
  q.dt_mean *= 1.0 + 0.08 * rng.uniform(-1, 1);
  q.noise_sigma *= 1.0 + 0.15 * rng.uniform(-1, 1);
  q.dir_angle += 0.08 * rng.uniform(-1, 1);
  Trajectory t;
  t.user_id = user_id;
  t.session_id = "s" + std::string(session_index < 10 ? "00" : session_index < 100 ? "0" : "") +
                 std::to_string(session_index);

  const double ca = std::cos(q.dir_angle), sa = std::sin(q.dir_angle);
  Eigen::Vector2d pos(rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85));
  double now = 0.0;
  Eigen::Vector2d noise = Eigen::Vector2d::Zero();

  for (int arc = 0; arc < cfg.arcs_per_session; ++arc) {
    // Anisotropic target placement around the user's preferred axis.
    Eigen::Vector2d target;
    for (int attempt = 0;; ++attempt) {
      const double major = 0.22 * q.dir_aniso * rng.normal();
      const double minor = 0.22 * rng.normal();
      Eigen::Vector2d off(ca * major - sa * minor, sa * major + ca * minor);
      target = clamp_box(pos + off, 0.05, 0.95);
      if ((target - pos).norm() > 0.05 || attempt >= 4) break;
    }
    const Eigen::Vector2d delta = target - pos;
    const double dist = delta.norm();
    if (dist < 1e-6) continue;
    const double v_peak = q.speed_scale * (1.0 + 0.3 * rng.normal());
    // Peak speed of a minimum-jerk profile is 1.875 * d / T.
    const double T = std::max(0.15, 1.875 * dist / std::max(0.05, v_peak));
    const Eigen::Vector2d perp(-delta.y() / dist, delta.x() / dist);

    double rel = 0.0;
    while (rel < T) {
      const double dt = std::max(0.001, q.dt_mean * (1.0 + 0.25 * rng.uniform(-1, 1)));
      rel += dt;
      now += dt;
      const double tau = std::min(1.0, rel / T);
      const double s = tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
      // AR(1) tremor with stationary std = noise_sigma
      noise = q.noise_rho * noise +
              (q.noise_sigma * std::sqrt(1.0 - q.noise_rho * q.noise_rho)) *
                  Eigen::Vector2d(rng.normal(), rng.normal());
      Eigen::Vector2d p = pos + delta * s +
                          perp * (q.curvature_bias * dist * std::sin(3.14159265358979 * tau)) +
                          noise;
      p = clamp_box(p, 0.002, 0.998);
      t.events.push_back({now, std::round(p.x() * (cfg.width - 1)),
                          std::round(p.y() * (cfg.height - 1))});
    }
    pos = target;
    const double u = rng.uniform();
    if (u < 0.04) {
      now += rng.uniform(1.5, 4.0);  // long idle, splits at segmentation
    } else if (u < 0.04 + q.pause_rate) {
      now += rng.uniform(0.15, 0.85);
    }
  }
  return t;
}

}  // namespace detail

inline std::vector<Trajectory> synth_users(const SynthConfig& cfg) {
  std::vector<Trajectory> out;
  if (cfg.n_users < 2) throw IngestError("synth_users: need at least 2 users");
  for (int u = 0; u < cfg.n_users; ++u) {
    const std::string uid =
        cfg.user_prefix + (u < 10 ? "0" : "") + std::to_string(u);
    const SynthUserParams q = synth_user_params(u, cfg);
    for (int s = 0; s < cfg.sessions_per_user; ++s) {
      out.push_back(detail::synth_session(q, cfg, uid, s));
    }
  }
  return out;
}

inline std::vector<Trajectory> synth_users(int n_users, int sessions_per_user,
                                           std::uint64_t params_seed) {
  SynthConfig cfg;
  cfg.n_users = n_users;
  cfg.sessions_per_user = sessions_per_user;
  cfg.seed = params_seed;
  return synth_users(cfg);
}

}  // namespace mouseforge::ingest
