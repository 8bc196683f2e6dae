// mouseforge command-line interface: data prep, synthesis, authenticator
// training, the three attack families, and the evaluation commands. Every
// command is deterministic given its inputs and --seed; effective settings
// are echoed into a JSON sidecar next to each output.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mouseforge/io.hpp"
#include "mouseforge/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mouseforge;

namespace {

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%FT%TZ", std::gmtime(&t));
  return buf;
}

// flags override config-file values override defaults
struct ConfigFile {
  json j = json::object();
  void load(const std::string& path) {
    if (!path.empty()) j = io::load_json(path);
  }
  template <typename T>
  void fill(const CLI::Option* opt, T& value, const std::string& key) const {
    if (opt->count() > 0) return;  // explicit flag wins
    if (j.contains(key)) value = j.at(key).get<T>();
  }
};

io::EvalReport make_report(std::string user, std::string model, std::string attack,
                           json settings, std::string metric, double value,
                           std::uint64_t seed) {
  io::EvalReport r;
  r.dataset = "local";
  r.user = std::move(user);
  r.model = std::move(model);
  r.attack = std::move(attack);
  r.settings = std::move(settings);
  r.metric = std::move(metric);
  r.value = value;
  r.seed = seed;
  r.timestamp = now_iso8601();
  return r;
}

struct LoadedModel {
  std::string arch;  // "svm" or "1dcnn"
  auth::SvmModel svm;
  auth::CnnModel cnn;
  std::unique_ptr<auth::Scorer> scorer() const {
    if (arch == "svm") return std::make_unique<auth::SvmScorer>(svm);
    return std::make_unique<auth::CnnScorer>(cnn);
  }
};

LoadedModel load_model(const std::string& path) {
  const json j = io::load_json(path);
  LoadedModel m;
  m.arch = j.at("arch").get<std::string>();
  if (m.arch == "svm") {
    m.svm = io::svm_from_json(j);
  } else if (m.arch == "1dcnn") {
    m.cnn = io::cnn_from_json(j);
  } else {
    throw io::IoError("not an authenticator checkpoint: " + path);
  }
  return m;
}

std::vector<ingest::Trajectory> load_attack_samples(const fs::path& dir) {
  const fs::path samples = dir / "samples";
  return io::load_dataset(fs::is_directory(samples) ? samples : dir);
}

void write_attack_output(const fs::path& dir, const pipe::AttackOutput& out) {
  for (const auto& t : out.samples) {
    const fs::path d = dir / "samples" / t.user_id;
    fs::create_directories(d);
    io::write_session_csv(d / (t.session_id + ".csv"), t);
  }
  io::save_json(dir / "sidecar.json", out.sidecar);
}

int dispatch(int argc, char** argv) {
  CLI::App app{"mouse-dynamics authentication attack toolkit"};
  app.require_subcommand(1);
  auto add_sub = [&app](const char* name, const char* desc) {
    CLI::App* s = app.add_subcommand(name, desc);
    s->fallthrough();  // lets --seed/--out/--config appear after the subcommand
    return s;
  };

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "JSON config file")->configurable(false);
  auto* seed_opt = app.add_option("--seed", seed, "master RNG seed");
  auto* out_opt = app.add_option("--out", out_dir, "output directory");
  ConfigFile cfg;

  // ---- synth
  auto* synth = add_sub("synth", "generate a synthetic dataset");
  int n_users = 5, n_sessions = 10, n_arcs = 24;
  auto* users_opt = synth->add_option("--users", n_users, "number of users");
  auto* sess_opt = synth->add_option("--sessions", n_sessions, "sessions per user");
  auto* arcs_opt = synth->add_option("--arcs", n_arcs, "movements per session");

  // ---- prep
  auto* prep = add_sub("prep", "clean/normalize/split/segment/augment");
  std::string root, format = "canonical";
  double gap = 1.0, max_deg = 5.0;
  std::size_t min_len = 51;
  int seqlen = 50, augment_n = 10;
  auto* root_opt = prep->add_option("--root", root, "dataset root")->required();
  auto* fmt_opt = prep->add_option("--format", format, "canonical|balabit|twos");
  auto* gap_opt = prep->add_option("--gap", gap, "segmentation gap threshold, s");
  auto* minlen_opt = prep->add_option("--min-len", min_len, "min segment length");
  auto* seqlen_opt = prep->add_option("--seqlen", seqlen, "model sequence length");
  auto* aug_opt = prep->add_option("--augment", augment_n, "rotated copies per segment");
  auto* deg_opt = prep->add_option("--max-deg", max_deg, "max rotation, degrees");

  // ---- train-auth
  auto* train = add_sub("train-auth", "train and calibrate authenticators");
  std::string prep_dir, user, model_kind = "both";
  int epochs = 60;
  double lr = 1e-3;
  auto* tr_prep = train->add_option("--prep", prep_dir, "prep directory")->required();
  auto* tr_user = train->add_option("--user", user, "user id (default: all)");
  auto* tr_model = train->add_option("--model", model_kind, "svm|cnn|both");
  auto* tr_epochs = train->add_option("--epochs", epochs, "cnn training epochs");
  auto* tr_lr = train->add_option("--lr", lr, "cnn learning rate");
  bool dump_features = false;
  train->add_flag("--dump-features", dump_features,
                  "also write each user's training feature matrix as CSV");

  // ---- eval-auth
  auto* evalauth = add_sub("eval-auth", "validation ROC/AUC/EER of a checkpoint");
  std::string model_path;
  auto* ev_prep = evalauth->add_option("--prep", prep_dir, "prep directory")->required();
  auto* ev_model = evalauth->add_option("--model", model_path, "checkpoint path")->required();
  auto* ev_user = evalauth->add_option("--user", user, "user id")->required();

  // ---- attack-stats
  auto* astats = add_sub("attack-stats", "statistics-based sequence sampling");
  int n_samples = 1000, dv_bins = 64, start_bins = 32;
  auto* as_prep = astats->add_option("--prep", prep_dir, "prep directory")->required();
  auto* as_user = astats->add_option("--user", user, "user id")->required();
  auto* as_n = astats->add_option("--n", n_samples, "samples to generate");
  auto* as_dv = astats->add_option("--dv-bins", dv_bins, "delta histogram bins per axis");
  auto* as_st = astats->add_option("--start-bins", start_bins, "start histogram bins");

  // ---- attack-imitate
  auto* aimit = add_sub("attack-imitate", "GRU generator imitation attack");
  std::string rep = "DV", reg = "no", method = "start_point";
  double lambda = 0.1;
  int gen_epochs = 60;
  auto* ai_prep = aimit->add_option("--prep", prep_dir, "prep directory")->required();
  auto* ai_user = aimit->add_option("--user", user, "user id")->required();
  auto* ai_rep = aimit->add_option("--rep", rep, "ABS|DV|VEL");
  auto* ai_reg = aimit->add_option("--reg", reg, "no|derivative|cluster");
  auto* ai_lambda = aimit->add_option("--lambda", lambda, "regularizer weight");
  auto* ai_method = aimit->add_option("--method", method, "start_point|start_sequence");
  auto* ai_n = aimit->add_option("--n", n_samples, "samples to generate");
  auto* ai_epochs = aimit->add_option("--epochs", gen_epochs, "generator epochs");

  // ---- attack-surrogate
  auto* asur = add_sub("attack-surrogate", "surrogate + iterated FGSM attack");
  std::string arch = "fc", neg_source = "foreign";
  double epsilon = 0.001;
  int iterations = 100, sur_epochs = 60;
  auto* su_prep = asur->add_option("--prep", prep_dir, "prep directory")->required();
  auto* su_user = asur->add_option("--user", user, "user id")->required();
  auto* su_arch = asur->add_option("--arch", arch, "gru-rnn|fc|svm|1dcnn");
  auto* su_neg = asur->add_option("--neg", neg_source, "foreign|pool");
  auto* su_eps = asur->add_option("--epsilon", epsilon, "FGSM step size");
  auto* su_iter = asur->add_option("--iterations", iterations, "FGSM iterations");
  auto* su_n = asur->add_option("--n", n_samples, "sequences to perturb");
  auto* su_epochs = asur->add_option("--epochs", sur_epochs, "surrogate epochs");

  // ---- asr
  auto* asr_cmd = add_sub("asr", "adversarial success rate of an attack dir");
  std::string attack_dir;
  int asr_n = 1000;
  auto* asr_model = asr_cmd->add_option("--model", model_path, "checkpoint path")->required();
  auto* asr_dir = asr_cmd->add_option("--attack-dir", attack_dir, "attack output dir")->required();
  auto* asr_nopt = asr_cmd->add_option("--n", asr_n, "samples to evaluate");

  // ---- wilcoxon
  auto* wil = add_sub("wilcoxon", "signed-rank test over paired report values");
  std::string results_path, compare_field, value_a, value_b;
  auto* w_res = wil->add_option("--results", results_path, "reports JSON array")->required();
  auto* w_field =
      wil->add_option("--field", compare_field, "settings field to compare")->required();
  auto* w_a = wil->add_option("--a", value_a, "first field value")->required();
  auto* w_b = wil->add_option("--b", value_b, "second field value")->required();

  // ---- detect
  auto* det = add_sub("detect", "randomized-ensemble alert-rate detection");
  std::vector<std::string> model_paths;
  std::string stream_kind = "clean";
  double margin = 0.2;
  auto* d_prep = det->add_option("--prep", prep_dir, "prep directory")->required();
  auto* d_user = det->add_option("--user", user, "user id")->required();
  auto* d_models =
      det->add_option("--models", model_paths, "two or more checkpoints")->required();
  auto* d_stream =
      det->add_option("--stream", stream_kind, "clean|shift|<attack output dir>");
  auto* d_margin = det->add_option("--margin", margin, "detection margin delta");

  // ---- report
  auto* repc = add_sub("report", "aggregate report JSONs into CSV tables");
  std::string in_dir;
  auto* r_in = repc->add_option("--in", in_dir, "directory of report JSONs")->required();

  CLI11_PARSE(app, argc, argv);
  cfg.load(config_path);
  cfg.fill(seed_opt, seed, "seed");
  cfg.fill(out_opt, out_dir, "out");

  const fs::path out(out_dir);

  if (*synth) {
    cfg.fill(users_opt, n_users, "users");
    cfg.fill(sess_opt, n_sessions, "sessions");
    cfg.fill(arcs_opt, n_arcs, "arcs");
    ingest::SynthConfig sc;
    sc.n_users = n_users;
    sc.sessions_per_user = n_sessions;
    sc.arcs_per_session = n_arcs;
    sc.seed = seed;
    io::write_dataset(out, ingest::synth_users(sc));
    io::save_json(out / "synth_config.json",
                  json{{"users", n_users}, {"sessions", n_sessions}, {"arcs", n_arcs},
                       {"seed", seed}});
    std::cout << "wrote " << n_users * n_sessions << " sessions under " << out << "\n";
    return 0;
  }

  if (*prep) {
    cfg.fill(fmt_opt, format, "format");
    cfg.fill(gap_opt, gap, "gap");
    cfg.fill(minlen_opt, min_len, "min_len");
    cfg.fill(seqlen_opt, seqlen, "seqlen");
    cfg.fill(aug_opt, augment_n, "augment");
    cfg.fill(deg_opt, max_deg, "max_deg");
    (void)root_opt;
    ingest::FieldMapping map = ingest::mapping_for(
        format == "balabit" ? ingest::SessionFormat::Balabit


        : format == "twos"  ? ingest::SessionFormat::Twos
                            : ingest::SessionFormat::Canonical);
    pipe::PrepConfig pc;
    pc.gap_threshold = gap;
    pc.min_len = min_len;
    pc.seqlen = seqlen;
    pc.augment_n = augment_n;
    pc.max_deg = max_deg;
    pc.seed = seed;
    auto P = pipe::prep(io::load_dataset(root, map), pc);
    pipe::save_prepped(out, P);
    for (const auto& w : P.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "prepared " << P.users.size() << " users under " << out << "\n";
    return 0;
  }

  if (*train) {
    cfg.fill(tr_model, model_kind, "model");
    cfg.fill(tr_epochs, epochs, "epochs");
    cfg.fill(tr_lr, lr, "lr");
    auto P = pipe::load_prepped(prep_dir);
    (void)tr_prep;
    std::vector<std::string> users;
    if (tr_user->count() || cfg.j.contains("user")) {
      cfg.fill(tr_user, user, "user");
      users.push_back(user);
    } else {
      for (const auto& [name, _] : P.users) users.push_back(name);
    }
    auth::CnnHyper ch;
    ch.epochs = epochs;
    ch.lr = lr;
    std::vector<io::EvalReport> reports;
    for (const auto& u : users) {
      auto T = pipe::train_auth_user(P, u, ch, {}, seed);
      fs::create_directories(out);
      if (dump_features) {
        const auto windows = ingest::abs_windows(P.users.at(u).auth_train, P.cfg.seqlen);
        io::write_features_csv(out / (u + "_features.csv"), pipe::features_of(windows));
      }
      if (model_kind != "cnn") {
        io::save_json(out / (u + "_svm.json"), io::to_json(T.svm));
        reports.push_back(make_report(u, "svm", "none", json::object(), "auc",
                                      T.svm_val_roc.auc, seed));
        reports.push_back(make_report(u, "svm", "none", json::object(), "eer",
                                      T.svm_val_roc.eer, seed));
      }
      if (model_kind != "svm") {
        io::save_json(out / (u + "_cnn.json"), io::to_json(T.cnn));
        reports.push_back(make_report(u, "1dcnn", "none", json::object(), "auc",
                                      T.cnn_val_roc.auc, seed));
        reports.push_back(make_report(u, "1dcnn", "none", json::object(), "eer",
                                      T.cnn_val_roc.eer, seed));
      }
      std::cout << u << ": svm auc=" << T.svm_val_roc.auc << " eer=" << T.svm_val_roc.eer
                << " | cnn auc=" << T.cnn_val_roc.auc << " eer=" << T.cnn_val_roc.eer
                << "\n";
    }
    io::write_reports_json(out / "auth_metrics.json", reports);
    io::write_reports_csv(out / "auth_metrics.csv", reports);
    return 0;
  }

  if (*evalauth) {
    (void)ev_prep;
    cfg.fill(ev_user, user, "user");
    auto P = pipe::load_prepped(prep_dir);
    auto M = load_model(model_path);
    (void)ev_model;
    auto scorer = M.scorer();
    const auto& U = P.users.at(user);
    std::vector<double> sp, sn;
    for (const auto& w : ingest::abs_windows(U.auth_test, P.cfg.seqlen))
      sp.push_back(scorer->score_window(w));
    for (const auto& w :
         pipe::other_users_windows(P, user, &pipe::UserData::auth_test, P.cfg.seqlen))
      sn.push_back(scorer->score_window(w));
    const auto roc = auth::roc_eval(sp, sn);
    fs::create_directories(out);
    io::write_roc_csv(out / (user + "_" + M.arch + "_roc.csv"), roc);
    std::vector<io::EvalReport> reports = {
        make_report(user, M.arch, "none", json::object(), "auc", roc.auc, seed),
        make_report(user, M.arch, "none", json::object(), "eer", roc.eer, seed)};
    io::write_reports_json(out / (user + "_" + M.arch + "_metrics.json"), reports);
    std::cout << user << " " << M.arch << ": auc=" << roc.auc << " eer=" << roc.eer << "\n";
    return 0;
  }

  if (*astats) {
    (void)as_prep;
    (void)as_user;
    cfg.fill(as_n, n_samples, "n");
    cfg.fill(as_dv, dv_bins, "dv_bins");
    cfg.fill(as_st, start_bins, "start_bins");
    auto P = pipe::load_prepped(prep_dir);
    auto res = pipe::stats_attack(P, user, n_samples, dv_bins, start_bins, seed);
    write_attack_output(out, res);
    std::cout << "wrote " << res.samples.size() << " stats sequences under " << out << "\n";
    return 0;
  }

  if (*aimit) {
    (void)ai_prep;
    (void)ai_user;
    cfg.fill(ai_rep, rep, "rep");
    cfg.fill(ai_reg, reg, "reg");
    cfg.fill(ai_lambda, lambda, "lambda");
    cfg.fill(ai_method, method, "method");
    cfg.fill(ai_n, n_samples, "n");
    cfg.fill(ai_epochs, gen_epochs, "epochs");
    auto P = pipe::load_prepped(prep_dir);
    attack::GenSettings st;
    st.rep = ingest::rep_from_name(rep);
    st.reg = attack::reg_from_name(reg);
    st.lambda = lambda;
    attack::GenHyper hy;
    hy.epochs = gen_epochs;
    auto res = pipe::imitation_attack(P, user, st, hy,
                                      method == "start_sequence"
                                          ? pipe::GenMethod::StartSequence
                                          : pipe::GenMethod::StartPoint,
                                      n_samples, seed);
    write_attack_output(out, res.output);
    io::save_json(out / "generator.json", io::to_json(res.generator));
    std::cout << "wrote " << res.output.samples.size() << " imitation sequences under "
              << out << "\n";
    return 0;
  }

  if (*asur) {
    (void)su_prep;
    (void)su_user;
    cfg.fill(su_arch, arch, "arch");
    cfg.fill(su_neg, neg_source, "neg");
    cfg.fill(su_eps, epsilon, "epsilon");
    cfg.fill(su_iter, iterations, "iterations");
    cfg.fill(su_n, n_samples, "n");
    cfg.fill(su_epochs, sur_epochs, "epochs");
    auto P = pipe::load_prepped(prep_dir);
    attack::FgsmConfig fc;
    fc.epsilon = epsilon;
    fc.iterations = iterations;
    attack::SurrogateHyper hy;
    hy.epochs = sur_epochs;
    auto res = pipe::surrogate_attack(P, user, attack::surrogate_from_name(arch), neg_source,
                                      fc, hy, n_samples, seed);
    write_attack_output(out, res.output);
    io::save_json(out / "surrogate.json", io::to_json(res.surrogate));
    std::vector<io::EvalReport> reports = {make_report(
        user, arch, "surrogate-self", res.output.sidecar, "self_asr", res.self_asr, seed)};
    io::write_reports_json(out / "self_asr.json", reports);
    io::write_reports_csv(out / "self_asr.csv", reports);
    std::cout << "self_asr=" << res.self_asr << ", wrote " << res.output.samples.size()
              << " perturbed sequences under " << out << "\n";
    return 0;
  }

  if (*asr_cmd) {
    cfg.fill(asr_nopt, asr_n, "n");
    auto M = load_model(model_path);
    (void)asr_model;
    auto scorer = M.scorer();
    auto samples = load_attack_samples(attack_dir);
    (void)asr_dir;
    json sidecar = json::object();
    if (fs::exists(fs::path(attack_dir) / "sidecar.json"))
      sidecar = io::load_json(fs::path(attack_dir) / "sidecar.json");
    const auto r = eval::asr(*scorer, samples, asr_n, seed, sidecar.dump());
    const std::string attack_name =
        sidecar.contains("attack") ? sidecar.at("attack").get<std::string>() : "unknown";
    const std::string user_name =
        sidecar.contains("user") ? sidecar.at("user").get<std::string>() : "unknown";
    std::vector<io::EvalReport> reports = {
        make_report(user_name, M.arch, attack_name, sidecar, "asr", r.asr, seed)};
    fs::create_directories(out);
    io::write_reports_json(out / "asr.json", reports);
    io::write_reports_csv(out / "asr.csv", reports);
    std::cout << "asr=" << r.asr << " (" << r.n_accepted << "/" << r.n_samples << ")\n";
    return 0;
  }

  if (*wil) {
    (void)w_res;
    (void)w_field;
    (void)w_a;
    (void)w_b;
    const json arr = io::load_json(results_path);
    // pair reports that differ only in settings[field]; key = everything else
    std::map<std::string, std::pair<double, double>> by_key;
    std::map<std::string, int> seen;
    for (const auto& r : arr) {
      if (!r.contains("settings") || !r.at("settings").contains(compare_field)) continue;
      json s = r.at("settings");
      const std::string v = s.at(compare_field).is_string()
                                ? s.at(compare_field).get<std::string>()
                                : s.at(compare_field).dump();
      if (v != value_a && v != value_b) continue;
      s.erase(compare_field);
      s.erase("seed");
      const std::string key = r.at("user").get<std::string>() + "|" +
                              r.at("model").get<std::string>() + "|" +
                              r.at("metric").get<std::string>() + "|" + s.dump();
      if (v == value_a) {
        by_key[key].first = r.at("value").get<double>();
        seen[key] |= 1;
      } else {
        by_key[key].second = r.at("value").get<double>();
        seen[key] |= 2;
      }
    }
    std::vector<std::pair<double, double>> pairs;
    for (const auto& [key, flags] : seen)
      if (flags == 3) pairs.push_back(by_key[key]);
    if (pairs.empty()) throw eval::EvalError("wilcoxon: no complete pairs found");
    const auto r = eval::wilcoxon(pairs);
    json out_j = {{"field", compare_field}, {"a", value_a},   {"b", value_b},
                  {"n_pairs", r.n_pairs},   {"w_plus", r.w_plus}, {"w_minus", r.w_minus},
                  {"z", r.z},               {"significant", r.significant},
                  {"small_sample", r.small_sample}};
    fs::create_directories(out);
    io::save_json(out / ("wilcoxon_" + compare_field + ".json"), out_j);
    std::cout << "n=" << r.n_pairs << " z=" << r.z
              << (r.significant ? " significant" : " not significant")
              << (r.small_sample ? " (small sample)" : "") << "\n";
    return 0;
  }

  if (*det) {
    (void)d_prep;
    (void)d_user;
    (void)d_models;
    cfg.fill(d_stream, stream_kind, "stream");
    cfg.fill(d_margin, margin, "margin");
    auto P = pipe::load_prepped(prep_dir);
    std::vector<LoadedModel> models;
    std::vector<std::unique_ptr<auth::Scorer>> scorers;
    std::vector<const auth::Scorer*> raw;
    for (const auto& p : model_paths) {
      models.push_back(load_model(p));
      scorers.push_back(models.back().scorer());
      raw.push_back(scorers.back().get());
    }
    const auto& U = P.users.at(user);
    std::vector<ingest::Trajectory> stream;
    if (stream_kind == "clean") {
      stream = ingest::abs_windows(U.att_test, P.cfg.seqlen);
    } else if (stream_kind == "shift") {
      auto clean_w = ingest::abs_windows(U.att_test, P.cfg.seqlen);
      stream = eval::covariate_shift(clean_w, 45.0, 90.0, splitmix64(seed ^ 0x5417u));
    } else {
      stream = load_attack_samples(stream_kind);
    }
    const auto rep_out = eval::detection_run(raw, stream, seed, margin);
    json jr = {{"stream", stream_kind},
               {"verdict", eval::verdict_name(rep_out.verdict)},
               {"suspected_model",
                rep_out.suspected_model >= 0
                    ? json(rep_out.model_names[static_cast<std::size_t>(rep_out.suspected_model)])
                    : json(nullptr)},
               {"alert_rates", rep_out.alert_rates},
               {"clean_baselines", rep_out.clean_baselines},
               {"n_assigned", rep_out.n_assigned},
               {"low_confidence", rep_out.low_confidence},
               {"margin", rep_out.margin},
               {"seed", seed}};
    fs::create_directories(out);
    io::save_json(out / "detection.json", jr);
    std::vector<io::EvalReport> reports;
    for (std::size_t m = 0; m < rep_out.model_names.size(); ++m) {
      reports.push_back(make_report(user, rep_out.model_names[m], "detect-" + stream_kind,
                                    json{{"stream", stream_kind}}, "alert_rate",
                                    rep_out.alert_rates[m], seed));
    }
    io::write_reports_json(out / "alert_rates.json", reports);
    io::write_reports_csv(out / "alert_rates.csv", reports);
    std::cout << "verdict=" << eval::verdict_name(rep_out.verdict) << "\n";
    return 0;
  }

  if (*repc) {
    (void)r_in;
    std::vector<json> entries;
    for (const auto& f : fs::recursive_directory_iterator(in_dir)) {
      if (!f.is_regular_file() || f.path().extension() != ".json") continue;
      json j = io::load_json(f.path());
      if (!j.is_array()) continue;
      for (auto& e : j)
        if (e.contains("metric")) entries.push_back(e);
    }
    if (entries.empty()) throw io::IoError("report: no report entries under " + in_dir);
    fs::create_directories(out);

    // paper-style table layouts, emitted when matching entries exist
    struct Cell {
      double sum = 0, sq = 0;
      int n = 0;
      void add(double v) {
        sum += v;
        sq += v * v;
        ++n;
      }
      std::string fmt(bool with_std) const {
        if (n == 0) return "";
        const double mean = sum / n;
        char buf[64];
        if (with_std && n > 1) {
          const double var = std::max(0.0, sq / n - mean * mean);
          std::snprintf(buf, sizeof buf, "%.5g +- %.3g", mean, std::sqrt(var));
        } else {
          std::snprintf(buf, sizeof buf, "%.5g", mean);
        }
        return buf;
      }
    };
    auto pivot = [&](const std::string& file, const std::string& row_label,
                     auto&& filter, auto&& row_of, auto&& col_of, bool with_std) {
      std::map<std::string, std::map<std::string, Cell>> table;
      std::set<std::string> cols;
      for (const auto& e : entries) {
        if (!filter(e)) continue;
        const std::string r = row_of(e), c = col_of(e);
        table[r][c].add(e.at("value").get<double>());
        cols.insert(c);
      }
      if (table.empty()) return;
      std::ofstream csv(out / file);
      csv << row_label;
      for (const auto& c : cols) csv << ',' << c;
      csv << '\n';
      for (const auto& [r, cells] : table) {
        csv << r;
        for (const auto& c : cols) {
          csv << ',';
          const auto it = cells.find(c);
          if (it != cells.end()) csv << it->second.fmt(with_std);
        }
        csv << '\n';
      }
    };
    auto setting = [](const json& e, const char* key) {
      const auto& s = e.value("settings", json::object());
      if (!s.contains(key)) return std::string("?");
      return s.at(key).is_string() ? s.at(key).get<std::string>() : s.at(key).dump();
    };
    auto model_of = [](const json& e) { return e.value("model", "?"); };
    pivot(
        "table1_baseline.csv", "model",
        [](const json& e) {
          return e.value("attack", "") == "none" &&
                 (e.value("metric", "") == "auc" || e.value("metric", "") == "eer");
        },
        model_of, [](const json& e) { return e.value("metric", "?"); }, false);
    pivot(
        "table3_stats_asr.csv", "attack",
        [](const json& e) {
          return e.value("attack", "") == "stats" && e.value("metric", "") == "asr";
        },
        [](const json&) { return std::string("statistics-based"); }, model_of, false);
    pivot(
        "table4_imitation_asr.csv", "method_seqlen",
        [](const json& e) {
          return e.value("attack", "") == "imitate" && e.value("metric", "") == "asr";
        },
        [&](const json& e) { return setting(e, "method") + "_" + setting(e, "seqlen"); },
        model_of, true);
    auto is_generic_surrogate = [&](const json& e) {
      const std::string a = setting(e, "surrogate_arch");
      return e.value("attack", "") == "surrogate" && e.value("metric", "") == "asr" &&
             (a == "gru-rnn" || a == "fc");
    };
    auto is_matched_surrogate = [&](const json& e) {
      const std::string a = setting(e, "surrogate_arch");
      return e.value("attack", "") == "surrogate" && e.value("metric", "") == "asr" &&
             (a == "svm" || a == "1dcnn");
    };
    pivot(
        "table5_surrogate_asr.csv", "surrogate",
        is_generic_surrogate,
        [&](const json& e) { return setting(e, "surrogate_arch") + " surrogate"; }, model_of,
        false);
    pivot(
        "table6_surrogate_self_asr.csv", "surrogate",
        [](const json& e) { return e.value("metric", "") == "self_asr"; },
        [&](const json& e) { return setting(e, "surrogate_arch") + " surrogate"; },
        [](const json&) { return std::string("self"); }, false);
    pivot(
        "table7_matched_surrogate_asr.csv", "surrogate",
        is_matched_surrogate,
        [&](const json& e) { return setting(e, "surrogate_arch") + " surrogate"; }, model_of,
        false);
    pivot(
        "table8_alert_rates.csv", "stream",
        [](const json& e) { return e.value("metric", "") == "alert_rate"; },
        [](const json& e) { return e.value("attack", "?"); }, model_of, false);
    // wide table: one row per (user, attack, settings), one column per (model, metric)
    std::map<std::string, std::map<std::string, double>> table;
    std::set<std::string> cols;
    for (const auto& e : entries) {
      json s = e.value("settings", json::object());
      s.erase("seed");
      const std::string row = e.value("user", "?") + "," + e.value("attack", "?") + "," +
                              (s.is_null() ? "{}" : s.dump());
      const std::string col = e.value("model", "?") + ":" + e.value("metric", "?");
      table[row][col] = e.at("value").get<double>();
      cols.insert(col);
    }
    std::ofstream csv(out / "summary.csv");
    csv << "user,attack,settings";
    for (const auto& c : cols) csv << ',' << c;
    csv << '\n';
    for (const auto& [row, vals] : table) {
      std::string quoted = row;
      const auto comma2 = quoted.find(',', quoted.find(',') + 1);
      std::string settings = quoted.substr(comma2 + 1);
      for (auto& ch : settings)
        if (ch == ',') ch = ';';
      csv << quoted.substr(0, comma2) << ',' << settings;
      for (const auto& c : cols) {
        csv << ',';
        const auto it = vals.find(c);
        if (it != vals.end()) csv << io::fmt_g17(it->second);
      }
      csv << '\n';
    }
    std::cout << "wrote " << out / "summary.csv" << " with " << table.size() << " rows\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const io::IoError& e) {
    std::cerr << "error:missing_input: " << e.what() << "\n";
    return 1;
  } catch (const ingest::IngestError& e) {
    std::cerr << "error:bad_data: " << e.what() << "\n";
    return 1;
  } catch (const feat::FeatError& e) {
    std::cerr << "error:bad_data: " << e.what() << "\n";
    return 1;
  } catch (const pipe::PipeError& e) {
    std::cerr << "error:bad_config: " << e.what() << "\n";
    return 1;
  } catch (const attack::AttackError& e) {
    std::cerr << "error:bad_config: " << e.what() << "\n";
    return 1;
  } catch (const auth::AuthError& e) {
    std::cerr << "error:bad_config: " << e.what() << "\n";
    return 1;
  } catch (const eval::EvalError& e) {
    std::cerr << "error:bad_config: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error:bad_config: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error:internal: " << e.what() << "\n";
    return 2;
  }
}
