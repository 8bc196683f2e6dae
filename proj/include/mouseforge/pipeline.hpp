#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "mouseforge/attacks.hpp"
#include "mouseforge/auth.hpp"
#include "mouseforge/evalrig.hpp"
#include "mouseforge/featkit.hpp"
#include "mouseforge/ingest.hpp"
#include "mouseforge/io.hpp"
#include "mouseforge/synth.hpp"

// End-to-end wiring shared by the CLI and the acceptance suite: data prep
// (clean / normalize / split / segment / augment), per-user authenticator
// training with EER calibration, and the three attack families producing
// scoreable windows.

namespace mouseforge::pipe {

using ingest::RepKind;
using ingest::RepSeq;
using ingest::Trajectory;
using json = nlohmann::json;

struct PipeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PrepConfig {
  double gap_threshold = 1.0;  // seconds of idle that split a session
  std::size_t min_len = 51;    // shortest kept segment, supports seqlen 50
  int seqlen = 50;
  int augment_n = 10;
  double max_deg = 5.0;
  std::uint64_t seed = 0;
};

struct UserData {
  ingest::Resolution res;
  std::vector<Trajectory> auth_train, auth_test, att_train, att_test;  // segments
  std::vector<Trajectory> auth_train_aug, att_train_aug;  // originals + rotations
  int sessions_auth_train = 0, sessions_auth_test = 0;
  int sessions_att_train = 0, sessions_att_test = 0;
  int clamped_points = 0;
};

struct Prepped {
  PrepConfig cfg;
  std::map<std::string, UserData> users;
  std::vector<std::string> warnings;
};

inline Prepped prep(const std::vector<Trajectory>& raw_sessions, const PrepConfig& cfg) {
  Prepped P;
  P.cfg = cfg;

  std::map<std::string, std::vector<Trajectory>> by_user;
  for (const auto& s : raw_sessions) by_user[s.user_id].push_back(ingest::clean(s));

  std::vector<Trajectory> normalized;
  std::map<std::string, ingest::Resolution> res_by_user;
  for (auto& [user, sessions] : by_user) {
    const auto res = ingest::estimate_resolution(sessions);
    res_by_user[user] = res;
    for (auto& s : sessions) normalized.push_back(ingest::normalize(s, res));
  }

  const auto split = ingest::reshuffle_split(normalized, cfg.seed);
  P.warnings = split.warnings;

  auto place = [&](const std::vector<Trajectory>& sessions, auto member_segments,
                   auto member_count) {
    for (const auto& s : sessions) {
      UserData& u = P.users[s.user_id];
      (u.*member_count)++;
      for (auto& seg : ingest::segment(s, cfg.gap_threshold, cfg.min_len))
        (u.*member_segments).push_back(std::move(seg));
    }
  };
  place(split.auth_train, &UserData::auth_train, &UserData::sessions_auth_train);
  place(split.auth_test, &UserData::auth_test, &UserData::sessions_auth_test);
  place(split.attacker_train, &UserData::att_train, &UserData::sessions_att_train);
  place(split.attacker_test, &UserData::att_test, &UserData::sessions_att_test);

  for (auto& [user, u] : P.users) {
    u.res = res_by_user[user];
    Rng rng = Rng(cfg.seed).fork(hash_str(user) ^ 0xa26eu);
    auto expand = [&](const std::vector<Trajectory>& segs, std::vector<Trajectory>& out) {
      for (const auto& seg : segs) {
        out.push_back(seg);
        auto res = ingest::augment(seg, cfg.augment_n, cfg.max_deg, rng.u64());
        u.clamped_points += res.clamped_points;
        for (auto& c : res.copies) out.push_back(std::move(c));
      }
    };
    expand(u.auth_train, u.auth_train_aug);
    expand(u.att_train, u.att_train_aug);
  }
  return P;
}

inline json manifest_of(const Prepped& P) {
  json users = json::object();
  for (const auto& [name, u] : P.users) {
    users[name] = {
        {"resolution", {u.res.width, u.res.height}},
        {"sessions",
         {{"auth_train", u.sessions_auth_train},
          {"auth_test", u.sessions_auth_test},
          {"attacker_train", u.sessions_att_train},
          {"attacker_test", u.sessions_att_test}}},
        {"segments",
         {{"auth_train", u.auth_train.size()},
          {"auth_test", u.auth_test.size()},
          {"attacker_train", u.att_train.size()},
          {"attacker_test", u.att_test.size()}}},
        {"augmented",
         {{"auth_train", u.auth_train_aug.size()}, {"attacker_train", u.att_train_aug.size()}}},
        {"clamped_points", u.clamped_points}};
  }
  return json{{"seed", P.cfg.seed},
              {"config",
               {{"gap_threshold", P.cfg.gap_threshold},
                {"min_len", P.cfg.min_len},
                {"seqlen", P.cfg.seqlen},
                {"augment_n", P.cfg.augment_n},
                {"max_deg", P.cfg.max_deg}}},
              {"users", users},
              {"warnings", P.warnings}};
}

// ---------------------------------------------------------------------------
// Window/feature views

inline std::vector<feat::FeatureVector> features_of(const std::vector<Trajectory>& windows) {
  std::vector<feat::FeatureVector> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(feat::extract_features(w));
  return out;
}

// Windows of every other user's matching split, for negative classes.
template <typename Member>
inline std::vector<Trajectory> other_users_windows(const Prepped& P, const std::string& user,
                                                   Member member, int seqlen) {
  std::vector<Trajectory> out;
  for (const auto& [name, u] : P.users) {
    if (name == user) continue;
    for (auto& w : ingest::abs_windows(u.*member, seqlen)) out.push_back(std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Authenticator training + EER calibration

struct TrainedAuth {
  auth::SvmModel svm;
  auth::CnnModel cnn;
  auth::RocResult svm_val_roc, cnn_val_roc;
  std::size_t n_train_pos = 0, n_train_neg = 0, n_val_pos = 0, n_val_neg = 0;
};

inline std::vector<Trajectory> sample_to(const std::vector<Trajectory>& v, std::size_t n,
                                         Rng& rng) {
  if (v.size() <= n) return v;
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(v[idx[i]]);
  return out;
}

inline TrainedAuth train_auth_user(const Prepped& P, const std::string& user,
                                   const auth::CnnHyper& cnn_hyper = {},
                                   const auth::SvmHyper& svm_hyper = {},
                                   std::uint64_t seed = 0) {
  const auto it = P.users.find(user);
  if (it == P.users.end()) throw PipeError("unknown user: " + user);
  const UserData& u = it->second;
  const int seqlen = P.cfg.seqlen;

  Rng rng = Rng(seed).fork(hash_str(user) ^ 0x42a1u);
  const auto pos_train = ingest::abs_windows(u.auth_train_aug, seqlen);
  auto neg_train = other_users_windows(P, user, &UserData::auth_train_aug, seqlen);
  if (pos_train.empty() || neg_train.empty())
    throw PipeError("train_auth_user: empty class for user " + user);
  // per-user class balance: negatives capped at neg_ratio x positives
  neg_train = sample_to(neg_train,
                        static_cast<std::size_t>(cnn_hyper.neg_ratio *
                                                 static_cast<double>(std::min(
                                                     pos_train.size(), cnn_hyper.max_pos))),
                        rng);

  const auto pos_val = ingest::abs_windows(u.auth_test, seqlen);
  const auto neg_val = other_users_windows(P, user, &UserData::auth_test, seqlen);
  if (pos_val.empty() || neg_val.empty())
    throw PipeError("train_auth_user: empty validation set for user " + user);

  TrainedAuth T;
  T.n_train_pos = pos_train.size();
  T.n_train_neg = neg_train.size();
  T.n_val_pos = pos_val.size();
  T.n_val_neg = neg_val.size();

  // SVM on engineered features
  T.svm = auth::train_svm(features_of(pos_train), features_of(neg_train), svm_hyper,
                          rng.u64());
  {
    std::vector<double> sp, sn;
    for (const auto& w : pos_val) sp.push_back(T.svm.score(w));
    for (const auto& w : neg_val) sn.push_back(T.svm.score(w));
    T.svm_val_roc = auth::calibrate_threshold(T.svm, sp, sn);
  }

  // 1DCNN on velocity sequences
  auto vel_of = [&](const std::vector<Trajectory>& ws) {
    std::vector<RepSeq> out;
    for (const auto& w : ws)
      for (auto& r : ingest::to_rep(w, RepKind::Vel, seqlen)) out.push_back(std::move(r));
    return out;
  };
  T.cnn = auth::train_cnn(vel_of(pos_train), vel_of(neg_train), cnn_hyper, rng.u64());
  {
    std::vector<double> sp, sn;
    for (const auto& w : pos_val) sp.push_back(T.cnn.score(vel_of({w}).front()));
    for (const auto& w : neg_val) sn.push_back(T.cnn.score(vel_of({w}).front()));
    T.cnn_val_roc = auth::calibrate_threshold(T.cnn, sp, sn);
  }
  return T;
}

// ---------------------------------------------------------------------------
// Attacks producing scoreable (seqlen+1)-event windows

struct AttackOutput {
  std::vector<Trajectory> samples;
  json sidecar;
};

inline AttackOutput stats_attack(const Prepped& P, const std::string& user, int n = 1000,
                                 int dv_bins = 64, int start_bins = 32,
                                 std::uint64_t seed = 0) {
  const UserData& u = P.users.at(user);
  const auto profile = attack::build_stats_profile(u.att_train, dv_bins, start_bins);
  AttackOutput out;
  Rng rng(seed);
  const int len = P.cfg.seqlen + 1;
  for (int i = 0; i < n; ++i) {
    auto t = attack::sample_stats_sequence(profile, len, rng.u64());
    t.user_id = user;
    t.session_id = "stats" + std::to_string(i);
    out.samples.push_back(std::move(t));
  }
  out.sidecar = {{"attack", "stats"},
                 {"user", user},
                 {"n", n},
                 {"dv_bins", dv_bins},
                 {"start_bins", start_bins},
                 {"median_dt", profile.median_dt},
                 {"seed", seed}};
  return out;
}

enum class GenMethod { StartPoint, StartSequence };

inline const char* gen_method_name(GenMethod m) {
  return m == GenMethod::StartPoint ? "start_point" : "start_sequence";
}

struct ImitationResult {
  AttackOutput output;
  attack::GeneratorModel generator;
};

inline ImitationResult imitation_attack(const Prepped& P, const std::string& user,
                                        attack::GenSettings settings,
                                        const attack::GenHyper& hyper = {},
                                        GenMethod method = GenMethod::StartPoint,
                                        int n = 1000, std::uint64_t seed = 0) {
  const UserData& u = P.users.at(user);
  settings.seqlen = P.cfg.seqlen;
  const auto train_seqs = ingest::rep_windows(u.att_train_aug, settings.rep, settings.seqlen);
  if (train_seqs.empty()) throw PipeError("imitation_attack: no training windows");

  std::optional<feat::KMeansModel> km;
  if (settings.reg == attack::RegKind::Cluster) {
    std::vector<feat::ClusterFeatures> cf;
    for (const auto& r : train_seqs) cf.push_back(feat::cluster_features(r));
    km = feat::kmeans_fit(cf, 5, splitmix64(seed ^ 0x5eedu));
  }
  const auto g = attack::train_generator(train_seqs, settings, hyper, seed,
                                         km ? &*km : nullptr);

  // start values come from the attacker split, never from authenticator data
  auto seeds_src = ingest::rep_windows(u.att_test.empty() ? u.att_train : u.att_test,
                                       settings.rep, settings.seqlen);
  if (seeds_src.empty()) throw PipeError("imitation_attack: no seed windows");

  ImitationResult res;
  Rng rng(splitmix64(seed ^ 0x9e11u));
  const int len = settings.seqlen + 1;
  for (int i = 0; i < n; ++i) {
    const auto& src = seeds_src[rng.index(seeds_src.size())];
    Trajectory t = method == GenMethod::StartPoint
                       ? attack::generate_start_point(g, attack::start_point_of(src), len,
                                                      g.median_dt)
                       : attack::generate_start_sequence(g, src, len);
    t.user_id = user;
    t.session_id = "imitate" + std::to_string(i);
    res.output.samples.push_back(std::move(t));
  }
  res.output.sidecar = {{"attack", "imitate"},
                        {"user", user},
                        {"rep", ingest::rep_name(settings.rep)},
                        {"reg", attack::reg_name(settings.reg)},
                        {"seqlen", settings.seqlen},
                        {"lambda", settings.lambda},
                        {"method", gen_method_name(method)},
                        {"n", n},
                        {"seed", seed},
                        {"final_loss", g.loss_history.empty() ? 0.0 : g.loss_history.back()}};
  res.generator = std::move(g);
  return res;
}

// A disjoint synthetic population standing in for a "different dataset" to
// draw surrogate negatives from when only one dataset is available.
inline std::vector<RepSeq> foreign_vel_windows(const Prepped& P, std::uint64_t seed,
                                               int n_users = 4, int sessions = 3) {
  ingest::SynthConfig cfg;
  cfg.n_users = n_users;
  cfg.sessions_per_user = sessions;
  cfg.seed = splitmix64(seed ^ 0xf02e16u);
  cfg.user_prefix = "x";
  std::vector<RepSeq> out;
  for (auto& session : ingest::synth_users(cfg)) {
    auto cleaned = ingest::clean(session);
    static const ingest::Resolution res{1920, 1080};
    auto norm = ingest::normalize(cleaned, res);
    for (const auto& seg : ingest::segment(norm, P.cfg.gap_threshold, P.cfg.min_len))
      for (auto& r : ingest::to_rep(seg, RepKind::Vel, P.cfg.seqlen))
        out.push_back(std::move(r));
  }
  if (out.empty()) throw PipeError("foreign_vel_windows: synthesis produced no windows");
  return out;
}

struct SurrogateResult {
  AttackOutput output;
  attack::SurrogateModel surrogate;
  double self_asr = 0.0;
};

// neg_source: "foreign" (cross-dataset style) or "pool" (same user pool,
// matched-architecture extension).
inline SurrogateResult surrogate_attack(const Prepped& P, const std::string& user,
                                        attack::SurrogateArch arch,
                                        const std::string& neg_source = "foreign",
                                        attack::FgsmConfig fgsm = {},
                                        const attack::SurrogateHyper& hyper = {}, int n = 1000,
                                        std::uint64_t seed = 0) {
  const UserData& u = P.users.at(user);
  const int seqlen = P.cfg.seqlen;
  const auto pos = ingest::rep_windows(u.att_train_aug, RepKind::Vel, seqlen);
  std::vector<RepSeq> neg;
  if (neg_source == "pool") {
    for (const auto& [name, other] : P.users) {
      if (name == user) continue;
      for (auto& r : ingest::rep_windows(other.att_train_aug, RepKind::Vel, seqlen))
        neg.push_back(std::move(r));
    }
  } else {
    neg = foreign_vel_windows(P, seed);
  }
  if (pos.empty() || neg.empty()) throw PipeError("surrogate_attack: empty class");

  auto s = attack::train_surrogate(pos, neg, arch, hyper, seed);
  if (!std::isfinite(fgsm.clamp_lo[0]) || !std::isfinite(fgsm.clamp_hi[0]))
    attack::fit_clamp_bounds(fgsm, pos);

  auto seeds_src = ingest::rep_windows(u.att_test.empty() ? u.att_train : u.att_test,
                                       RepKind::Vel, seqlen);
  if (seeds_src.empty()) throw PipeError("surrogate_attack: no seed windows");
  Rng rng(splitmix64(seed ^ 0x4a7fu));
  std::vector<RepSeq> seeds;
  for (int i = 0; i < n; ++i) seeds.push_back(seeds_src[rng.index(seeds_src.size())]);

  auto run = attack::run_fgsm_over(s, seeds, fgsm);
  SurrogateResult res;
  res.self_asr = run.self_asr;
  res.surrogate = std::move(run.surrogate);
  int i = 0;
  for (const auto& adv : run.adversarial) {
    Trajectory t = ingest::from_rep(adv);
    t.user_id = user;
    t.session_id = "surrogate" + std::to_string(i++);
    res.output.samples.push_back(std::move(t));
  }
  res.output.sidecar = {{"attack", "surrogate"},
                        {"user", user},
                        {"surrogate_arch", attack::surrogate_name(arch)},
                        {"neg_source", neg_source},
                        {"epsilon", fgsm.epsilon},
                        {"iterations", fgsm.iterations},
                        {"n", n},
                        {"seed", seed},
                        {"held_out_accuracy", s.held_out_accuracy},
                        {"self_asr", res.self_asr}};
  return res;
}

// Convenience: synthetic dataset on which the whole pipeline can run.
inline Prepped prep_synth(int n_users = 5, int sessions = 10, std::uint64_t seed = 0,
                          PrepConfig cfg = {}) {
  cfg.seed = seed;
  return prep(ingest::synth_users(n_users, sessions, seed), cfg);
}

// ---------------------------------------------------------------------------
// On-disk prep layout: <dir>/manifest.json plus one CSV tree per split (and
// per augmented train split). Session CSVs round-trip exactly, so a reloaded
// Prepped trains identically to the in-memory one.

inline void save_prepped(const std::filesystem::path& dir, const Prepped& P) {
  namespace fs = std::filesystem;
  auto dump = [&](const std::vector<Trajectory>& segs, const std::string& split) {
    // zero-padded index prefix keeps the lexicographic reload order equal to
    // the in-memory order, so training from disk is bit-identical
    int k = 0;
    for (const auto& s : segs) {
      const fs::path d = dir / split / s.user_id;
      fs::create_directories(d);
      char prefix[16];
      std::snprintf(prefix, sizeof prefix, "%05d_", k++);
      io::write_session_csv(d / (prefix + s.session_id + ".csv"), s);
    }
  };
  for (const auto& [user, u] : P.users) {
    (void)user;
    dump(u.auth_train, "auth_train");
    dump(u.auth_test, "auth_test");
    dump(u.att_train, "attacker_train");
    dump(u.att_test, "attacker_test");
    dump(u.auth_train_aug, "auth_train_aug");
    dump(u.att_train_aug, "attacker_train_aug");
  }
  io::save_json(dir / "manifest.json", manifest_of(P));
}

inline Prepped load_prepped(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const json m = io::load_json(dir / "manifest.json");
  Prepped P;
  P.cfg.seed = m.at("seed").get<std::uint64_t>();
  P.cfg.gap_threshold = m.at("config").at("gap_threshold").get<double>();
  P.cfg.min_len = m.at("config").at("min_len").get<std::size_t>();
  P.cfg.seqlen = m.at("config").at("seqlen").get<int>();
  P.cfg.augment_n = m.at("config").at("augment_n").get<int>();
  P.cfg.max_deg = m.at("config").at("max_deg").get<double>();

  auto load_split = [&](const std::string& split, auto member) {
    const fs::path root = dir / split;
    if (!fs::is_directory(root)) return;
    for (auto& t : io::load_dataset(root)) {
      if (t.session_id.size() > 6 && t.session_id[5] == '_')
        t.session_id = t.session_id.substr(6);  // drop the order prefix
      (P.users[t.user_id].*member).push_back(std::move(t));
    }
  };
  load_split("auth_train", &UserData::auth_train);
  load_split("auth_test", &UserData::auth_test);
  load_split("attacker_train", &UserData::att_train);
  load_split("attacker_test", &UserData::att_test);
  load_split("auth_train_aug", &UserData::auth_train_aug);
  load_split("attacker_train_aug", &UserData::att_train_aug);
  for (auto& [user, u] : P.users) {
    if (m.at("users").contains(user)) {
      const auto& ju = m.at("users").at(user);
      u.res.width = ju.at("resolution").at(0).get<int>();
      u.res.height = ju.at("resolution").at(1).get<int>();
      u.sessions_auth_train = ju.at("sessions").at("auth_train").get<int>();
      u.sessions_auth_test = ju.at("sessions").at("auth_test").get<int>();
      u.sessions_att_train = ju.at("sessions").at("attacker_train").get<int>();
      u.sessions_att_test = ju.at("sessions").at("attacker_test").get<int>();
    }
  }
  return P;
}

}  // namespace mouseforge::pipe
