#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mouseforge/auth.hpp"
#include "mouseforge/ingest.hpp"
#include "mouseforge/rng.hpp"

namespace mouseforge::eval {

using ingest::Trajectory;

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Adversarial success rate: fraction of samples the calibrated model accepts.

struct AsrResult {
  int n_samples = 0;
  int n_accepted = 0;
  double asr = 0.0;
  std::string setting;
};

inline AsrResult asr(const auth::Scorer& model, const std::vector<Trajectory>& samples,
                     int n = 1000, std::uint64_t seed = 0, std::string setting = "") {
  if (!model.calibrated()) throw EvalError("asr: model is not calibrated");
  if (samples.empty()) throw EvalError("asr: no samples");
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(n), idx.size());
  AsrResult out;
  out.setting = std::move(setting);
  out.n_samples = static_cast<int>(take);
  for (std::size_t i = 0; i < take; ++i) {
    if (model.decide(samples[idx[i]])) ++out.n_accepted;
  }
  out.asr = static_cast<double>(out.n_accepted) / static_cast<double>(out.n_samples);
  return out;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test, normal approximation:
//   z = (W+ - n(n+1)/4) / sqrt(n(n+1)(2n+1)/24)
// Zero differences are dropped; tied |differences| get average ranks. The
// normal approximation is unreliable below ~10 pairs, so small inputs are
// flagged rather than refused (the statistic itself is always well defined).

struct WilcoxonResult {
  int n_pairs = 0;      // after zero-difference removal
  double w_plus = 0.0;
  double w_minus = 0.0;
  double z = 0.0;
  bool significant = false;  // |z| > 1.96, two-tailed 5%
  bool small_sample = false; // n < 10: normal approximation unreliable
};

inline WilcoxonResult wilcoxon(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<double> diffs;
  for (const auto& [a, b] : pairs) {
    const double d = a - b;
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw EvalError("wilcoxon: no nonzero differences");

  std::vector<std::size_t> idx(diffs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
    return std::abs(diffs[i]) < std::abs(diffs[j]);
  });
  std::vector<double> rank(diffs.size(), 0.0);
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && std::abs(diffs[idx[j]]) == std::abs(diffs[idx[i]])) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) rank[idx[k]] = avg;
    i = j;
  }

  WilcoxonResult out;
  out.n_pairs = static_cast<int>(diffs.size());
  for (std::size_t k = 0; k < diffs.size(); ++k) {
    (diffs[k] > 0.0 ? out.w_plus : out.w_minus) += rank[k];
  }
  const double n = static_cast<double>(out.n_pairs);
  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
  out.z = (out.w_plus - mean) / std::sqrt(var);
  out.significant = std::abs(out.z) > 1.96;
  out.small_sample = out.n_pairs < 10;
  return out;
}

// ---------------------------------------------------------------------------
// Variability study: repeat a seeded attack evaluation, report median and IQR.

struct VariabilityResult {
  std::vector<AsrResult> runs;
  double median = 0.0;
  double iqr = 0.0;
  double q1 = 0.0, q3 = 0.0;
};

// Linear-interpolation quantile (R-7 convention).
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw EvalError("quantile: empty");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline VariabilityResult variability_study(
    const std::function<AsrResult(std::uint64_t)>& run_setting,
    const std::vector<std::uint64_t>& seeds) {
  VariabilityResult out;
  std::vector<double> values;
  for (auto s : seeds) {
    out.runs.push_back(run_setting(s));
    values.push_back(out.runs.back().asr);
  }
  out.median = quantile(values, 0.5);
  out.q1 = quantile(values, 0.25);
  out.q3 = quantile(values, 0.75);
  out.iqr = out.q3 - out.q1;
  return out;
}

// ---------------------------------------------------------------------------
// Covariate-shift simulation: large independent rotations of each trajectory.

inline std::vector<Trajectory> covariate_shift(const std::vector<Trajectory>& ts,
                                               double deg_lo = 45.0, double deg_hi = 90.0,
                                               std::uint64_t seed = 0,
                                               std::vector<double>* angles_out = nullptr,
                                               int* clamped_out = nullptr) {
  Rng rng(seed);
  std::vector<Trajectory> out;
  out.reserve(ts.size());
  int clamped = 0;
  for (const auto& t : ts) {
    const double deg = deg_lo == deg_hi ? deg_lo : rng.uniform(deg_lo, deg_hi);
    if (angles_out) angles_out->push_back(deg);
    out.push_back(ingest::rotate_about(t, ingest::centroid_of(t), deg, &clamped));
  }
  if (clamped_out) *clamped_out = clamped;
  return out;
}

// ---------------------------------------------------------------------------
// Randomized-ensemble detection: each incoming sample is scored by one model
// chosen uniformly at random. A surrogate-based attack tuned to one model
// shows up as that model's alert rate dropping while the others' rise; a
// covariate shift raises every model's alert rate.

enum class Verdict { Clean, CovariateShift, SurrogateAttackSuspected };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Clean: return "clean";
    case Verdict::CovariateShift: return "covariate_shift";
    case Verdict::SurrogateAttackSuspected: return "surrogate_attack_suspected";
  }
  return "?";
}

struct DetectionReport {
  std::vector<std::string> model_names;
  std::vector<double> alert_rates;
  std::vector<double> clean_baselines;
  std::vector<int> n_assigned;
  Verdict verdict = Verdict::Clean;
  int suspected_model = -1;
  bool low_confidence = false;
  double margin = 0.2;
};

// margin (delta) separates the suspect's rate from its peers'; elevated_eps
// is the small allowance over the clean baseline that counts as "elevated"
// (shift elevations can be a few percent, so this stays well below margin).
inline DetectionReport detection_run(const std::vector<const auth::Scorer*>& models,
                                     const std::vector<Trajectory>& stream,
                                     std::uint64_t seed = 0, double margin = 0.2,
                                     double elevated_eps = 0.04) {
  if (models.size() < 2) throw EvalError("detection_run: need at least 2 models");
  for (const auto* m : models)
    if (!m->calibrated()) throw EvalError("detection_run: model '" + m->name() + "' not calibrated");

  DetectionReport rep;
  rep.margin = margin;
  const std::size_t M = models.size();
  std::vector<int> alerts(M, 0);
  rep.n_assigned.assign(M, 0);
  Rng rng(seed);
  for (const auto& w : stream) {
    const std::size_t m = rng.index(M);
    rep.n_assigned[m]++;
    if (!models[m]->decide(w)) alerts[m]++;
  }
  rep.alert_rates.resize(M);
  rep.clean_baselines.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    rep.model_names.push_back(models[m]->name());
    rep.clean_baselines[m] = models[m]->clean_alert_rate();
    rep.alert_rates[m] = rep.n_assigned[m] > 0
                             ? static_cast<double>(alerts[m]) / rep.n_assigned[m]
                             : 0.0;
    if (rep.n_assigned[m] < 20) rep.low_confidence = true;
  }

  // Suspect a model whose alert rate is exceptionally low -- far below its
  // elevated peers and no higher than its own clean baseline (a covariate
  // shift elevates everyone; a transferred surrogate attack spares its
  // target).
  int best = -1;
  double best_gap = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    double peer_rate = 0.0, peer_base = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      if (j == m) continue;
      peer_rate += rep.alert_rates[j];
      peer_base += rep.clean_baselines[j];
    }
    peer_rate /= static_cast<double>(M - 1);
    peer_base /= static_cast<double>(M - 1);
    const bool low_here = rep.alert_rates[m] < peer_rate - margin &&
                          rep.alert_rates[m] <= rep.clean_baselines[m];
    const bool peers_elevated = peer_rate > peer_base + margin / 2.0;
    if (low_here && peers_elevated) {
      const double gap = peer_rate - rep.alert_rates[m];
      if (gap > best_gap) {
        best_gap = gap;
        best = static_cast<int>(m);
      }
    }
  }
  if (best >= 0) {
    rep.verdict = Verdict::SurrogateAttackSuspected;
    rep.suspected_model = best;
    return rep;
  }
  bool all_elevated = true;
  for (std::size_t m = 0; m < M; ++m) {
    if (rep.alert_rates[m] <= rep.clean_baselines[m] + elevated_eps) {
      all_elevated = false;
      break;
    }
  }
  rep.verdict = all_elevated ? Verdict::CovariateShift : Verdict::Clean;
  return rep;
}

}  // namespace mouseforge::eval
