#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mouseforge/attacks.hpp"
#include "mouseforge/auth.hpp"
#include "mouseforge/gradcore.hpp"
#include "mouseforge/ingest.hpp"

namespace mouseforge::io {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ingest::Trajectory;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Canonical session files: UTF-8 CSV, header "ts,x,y", one event per line.
// Doubles are printed with 17 significant digits so a parse round-trips the
// exact values.

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_session_csv(const fs::path& path, const Trajectory& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "ts,x,y\n";
  for (const auto& e : t.events)
    out << fmt_g17(e.ts) << ',' << fmt_g17(e.x) << ',' << fmt_g17(e.y) << '\n';
}

inline Trajectory read_session_csv(const fs::path& path, const ingest::FieldMapping& map,
                                   std::string user_id, std::string session_id) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  return ingest::parse_session(in, map, std::move(user_id), std::move(session_id)).traj;
}

// Dataset layout: <root>/<user_id>/<session_id>.csv
inline std::vector<Trajectory> load_dataset(const fs::path& root,
                                            const ingest::FieldMapping& map = {}) {
  if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root.string());
  std::vector<Trajectory> sessions;
  std::vector<fs::path> users;
  for (const auto& d : fs::directory_iterator(root))
    if (d.is_directory()) users.push_back(d.path());
  std::sort(users.begin(), users.end());
  for (const auto& u : users) {
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(u))
      if (f.is_regular_file() && f.path().extension() == ".csv") files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
      sessions.push_back(read_session_csv(f, map, u.filename().string(), f.stem().string()));
  }
  if (sessions.empty()) throw IoError("no sessions under " + root.string());
  return sessions;
}

inline void write_dataset(const fs::path& root, const std::vector<Trajectory>& sessions) {
  for (const auto& t : sessions) {
    const fs::path dir = root / t.user_id;
    fs::create_directories(dir);
    write_session_csv(dir / (t.session_id + ".csv"), t);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: a versioned JSON container of named tensors plus architecture
// and config. nlohmann/json emits shortest-round-trip doubles, so the JSON
// form round-trips parameters bit-exactly.

inline json tensor_to_json(const grad::Matrix& m) {
  json j;
  j["shape"] = {m.rows(), m.cols()};
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = std::move(data);
  return j;
}

inline grad::Matrix tensor_from_json(const json& j) {
  const auto shape = j.at("shape");
  const Eigen::Index rows = shape.at(0).get<Eigen::Index>();
  const Eigen::Index cols = shape.at(1).get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw IoError("tensor_from_json: shape/data mismatch");
  grad::Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data.at(k++).get<double>();
  return m;
}

namespace detail {

inline json dense_to_json(const grad::Dense& d) {
  return json{{"W", tensor_to_json(d.W.w)},
              {"b", tensor_to_json(d.b.w)},
              {"act", static_cast<int>(d.act)}};
}

inline grad::Dense dense_from_json(const json& j) {
  grad::Dense d;
  d.W.w = tensor_from_json(j.at("W"));
  d.W.g = grad::Matrix::Zero(d.W.w.rows(), d.W.w.cols());
  d.b.w = tensor_from_json(j.at("b"));
  d.b.g = grad::Matrix::Zero(d.b.w.rows(), d.b.w.cols());
  d.act = static_cast<grad::Act>(j.at("act").get<int>());
  return d;
}

inline json conv_to_json(const grad::Conv1d& c) {
  return json{{"W", tensor_to_json(c.W.w)}, {"b", tensor_to_json(c.b.w)},
              {"in_ch", c.in_ch},           {"out_ch", c.out_ch},
              {"k", c.k},                   {"stride", c.stride},
              {"act", static_cast<int>(c.act)}};
}

inline grad::Conv1d conv_from_json(const json& j) {
  grad::Conv1d c;
  c.W.w = tensor_from_json(j.at("W"));
  c.W.g = grad::Matrix::Zero(c.W.w.rows(), c.W.w.cols());
  c.b.w = tensor_from_json(j.at("b"));
  c.b.g = grad::Matrix::Zero(c.b.w.rows(), c.b.w.cols());
  c.in_ch = j.at("in_ch").get<int>();
  c.out_ch = j.at("out_ch").get<int>();
  c.k = j.at("k").get<int>();
  c.stride = j.at("stride").get<int>();
  c.act = static_cast<grad::Act>(j.at("act").get<int>());
  return c;
}

inline json gru_cell_to_json(const grad::GruCellParams& p) {
  json j;
  j["input_dim"] = p.input_dim;
  j["hidden_dim"] = p.hidden_dim;
  const grad::GruCellParams* cp = &p;
  auto put = [&](const char* name, const grad::Param& prm) { j[name] = tensor_to_json(prm.w); };
  put("Wir", cp->Wir); put("Wiz", cp->Wiz); put("Win", cp->Win);
  put("Whr", cp->Whr); put("Whz", cp->Whz); put("Whn", cp->Whn);
  put("bir", cp->bir); put("biz", cp->biz); put("bin", cp->bin);
  put("bhr", cp->bhr); put("bhz", cp->bhz); put("bhn", cp->bhn);
  return j;
}

inline grad::GruCellParams gru_cell_from_json(const json& j) {
  grad::GruCellParams p;
  p.input_dim = j.at("input_dim").get<Eigen::Index>();
  p.hidden_dim = j.at("hidden_dim").get<Eigen::Index>();
  auto get = [&](const char* name, grad::Param& prm) {
    prm.name = name;
    prm.w = tensor_from_json(j.at(name));
    prm.g = grad::Matrix::Zero(prm.w.rows(), prm.w.cols());
  };
  get("Wir", p.Wir); get("Wiz", p.Wiz); get("Win", p.Win);
  get("Whr", p.Whr); get("Whz", p.Whz); get("Whn", p.Whn);
  get("bir", p.bir); get("biz", p.biz); get("bin", p.bin);
  get("bhr", p.bhr); get("bhz", p.bhz); get("bhn", p.bhn);
  return p;
}

inline json gru_stack_to_json(const grad::GruStack& s) {
  json layers = json::array();
  for (const auto& l : s.layers) layers.push_back(gru_cell_to_json(l));
  return json{{"layers", layers}};
}

inline grad::GruStack gru_stack_from_json(const json& j) {
  grad::GruStack s;
  for (const auto& l : j.at("layers")) s.layers.push_back(gru_cell_from_json(l));
  return s;
}

}  // namespace detail

inline json to_json(const auth::SvmModel& m) {
  json j;
  j["format_version"] = 1;
  j["arch"] = "svm";
  grad::Matrix w(m.w.size(), 1);
  w.col(0) = m.w;
  j["tensors"] = {{"w", tensor_to_json(w)},
                  {"std_mean", tensor_to_json(m.standardizer.mean)},
                  {"std_scale", tensor_to_json(m.standardizer.scale)}};
  j["config"] = {{"b", m.b},
                 {"threshold", m.threshold},
                 {"calibrated", m.calibrated},
                 {"clean_alert_rate", m.clean_alert_rate}};
  return j;
}

inline auth::SvmModel svm_from_json(const json& j) {
  if (j.at("arch") != "svm") throw IoError("checkpoint is not an svm model");
  auth::SvmModel m;
  m.w = tensor_from_json(j.at("tensors").at("w")).col(0);
  m.standardizer.mean = tensor_from_json(j.at("tensors").at("std_mean"));
  m.standardizer.scale = tensor_from_json(j.at("tensors").at("std_scale"));
  m.b = j.at("config").at("b").get<double>();
  m.threshold = j.at("config").at("threshold").get<double>();
  m.calibrated = j.at("config").at("calibrated").get<bool>();
  m.clean_alert_rate = j.at("config").at("clean_alert_rate").get<double>();
  return m;
}

inline json to_json(const auth::CnnModel& m) {
  json j;
  j["format_version"] = 1;
  j["arch"] = "1dcnn";
  j["layers"] = {{"convA", detail::conv_to_json(m.convA)},
                 {"convB", detail::conv_to_json(m.convB)},
                 {"conv2", detail::conv_to_json(m.conv2)},
                 {"head", detail::dense_to_json(m.head)}};
  j["config"] = {{"seqlen", m.seqlen},
                 {"threshold", m.threshold},
                 {"calibrated", m.calibrated},
                 {"clean_alert_rate", m.clean_alert_rate}};
  return j;
}

inline auth::CnnModel cnn_from_json(const json& j) {
  if (j.at("arch") != "1dcnn") throw IoError("checkpoint is not a 1dcnn model");
  auth::CnnModel m;
  m.convA = detail::conv_from_json(j.at("layers").at("convA"));
  m.convB = detail::conv_from_json(j.at("layers").at("convB"));
  m.conv2 = detail::conv_from_json(j.at("layers").at("conv2"));
  m.head = detail::dense_from_json(j.at("layers").at("head"));
  m.seqlen = j.at("config").at("seqlen").get<int>();
  m.threshold = j.at("config").at("threshold").get<double>();
  m.calibrated = j.at("config").at("calibrated").get<bool>();
  m.clean_alert_rate = j.at("config").at("clean_alert_rate").get<double>();
  return m;
}

inline json to_json(const attack::GeneratorModel& g) {
  json j;
  j["format_version"] = 1;
  j["arch"] = "gru-generator";
  j["layers"] = {{"rnn", detail::gru_stack_to_json(g.rnn)},
                 {"head", detail::dense_to_json(g.head)}};
  json cfg;
  cfg["rep"] = ingest::rep_name(g.settings.rep);
  cfg["reg"] = attack::reg_name(g.settings.reg);
  cfg["seqlen"] = g.settings.seqlen;
  cfg["lambda"] = g.settings.lambda;
  cfg["median_dt"] = g.median_dt;
  cfg["derivative_target"] = {g.derivative_target.x(), g.derivative_target.y()};
  j["config"] = cfg;
  if (g.kmeans) {
    j["kmeans"] = {{"centroids", tensor_to_json(g.kmeans->centroids)},
                   {"inertia", g.kmeans->inertia}};
  }
  return j;
}

inline attack::GeneratorModel generator_from_json(const json& j) {
  if (j.at("arch") != "gru-generator") throw IoError("checkpoint is not a generator");
  attack::GeneratorModel g;
  g.rnn = detail::gru_stack_from_json(j.at("layers").at("rnn"));
  g.head = detail::dense_from_json(j.at("layers").at("head"));
  const auto& cfg = j.at("config");
  g.settings.rep = ingest::rep_from_name(cfg.at("rep").get<std::string>());
  g.settings.reg = attack::reg_from_name(cfg.at("reg").get<std::string>());
  g.settings.seqlen = cfg.at("seqlen").get<int>();
  g.settings.lambda = cfg.at("lambda").get<double>();
  g.median_dt = cfg.at("median_dt").get<double>();
  g.derivative_target.x() = cfg.at("derivative_target").at(0).get<double>();
  g.derivative_target.y() = cfg.at("derivative_target").at(1).get<double>();
  if (j.contains("kmeans")) {
    feat::KMeansModel km;
    km.centroids = tensor_from_json(j.at("kmeans").at("centroids"));
    km.inertia = j.at("kmeans").at("inertia").get<double>();
    g.kmeans = std::move(km);
  }
  return g;
}

inline json to_json(const attack::SurrogateModel& s) {
  json j;
  j["format_version"] = 1;
  j["arch"] = std::string("surrogate-") + attack::surrogate_name(s.arch);
  j["config"] = {{"seqlen", s.seqlen},
                 {"held_out_accuracy", s.held_out_accuracy},
                 {"fd_step", s.fd_step}};
  switch (s.arch) {
    case attack::SurrogateArch::GruRnn:
      j["layers"] = {{"rnn", detail::gru_stack_to_json(s.rnn)},
                     {"fc1", detail::dense_to_json(s.fc1)},
                     {"fc2", detail::dense_to_json(s.fc2)}};
      break;
    case attack::SurrogateArch::Fc:
      j["layers"] = {{"fcA", detail::dense_to_json(s.fcA)},
                     {"fcB", detail::dense_to_json(s.fcB)}};
      break;
    case attack::SurrogateArch::SvmLike:
      j["layers"] = {{"svm", to_json(s.svm)}};
      break;
    case attack::SurrogateArch::CnnLike:
      j["layers"] = {{"cnn", to_json(s.cnn)}};
      break;
  }
  return j;
}

inline attack::SurrogateModel surrogate_from_json(const json& j) {
  const std::string arch = j.at("arch").get<std::string>();
  const std::string prefix = "surrogate-";
  if (arch.rfind(prefix, 0) != 0) throw IoError("checkpoint is not a surrogate");
  attack::SurrogateModel s;
  s.arch = attack::surrogate_from_name(arch.substr(prefix.size()));
  s.seqlen = j.at("config").at("seqlen").get<int>();
  s.held_out_accuracy = j.at("config").at("held_out_accuracy").get<double>();
  s.fd_step = j.at("config").at("fd_step").get<double>();
  switch (s.arch) {
    case attack::SurrogateArch::GruRnn:
      s.rnn = detail::gru_stack_from_json(j.at("layers").at("rnn"));
      s.fc1 = detail::dense_from_json(j.at("layers").at("fc1"));
      s.fc2 = detail::dense_from_json(j.at("layers").at("fc2"));
      break;
    case attack::SurrogateArch::Fc:
      s.fcA = detail::dense_from_json(j.at("layers").at("fcA"));
      s.fcB = detail::dense_from_json(j.at("layers").at("fcB"));
      break;
    case attack::SurrogateArch::SvmLike:
      s.svm = svm_from_json(j.at("layers").at("svm"));
      break;
    case attack::SurrogateArch::CnnLike:
      s.cnn = cnn_from_json(j.at("layers").at("cnn"));
      break;
  }
  return s;
}

inline void save_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

inline json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  json j;
  in >> j;
  return j;
}

// ---------------------------------------------------------------------------
// Evaluation reports

struct EvalReport {
  std::string dataset, user, model, attack;
  json settings;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
  std::string timestamp;  // informational only, excluded from comparisons
};

inline json to_json(const EvalReport& r) {
  return json{{"dataset", r.dataset}, {"user", r.user},       {"model", r.model},
              {"attack", r.attack},   {"settings", r.settings}, {"metric", r.metric},
              {"value", r.value},     {"seed", r.seed},        {"timestamp", r.timestamp}};
}

inline void write_reports_json(const fs::path& path, const std::vector<EvalReport>& rs) {
  json arr = json::array();
  for (const auto& r : rs) arr.push_back(to_json(r));
  save_json(path, arr);
}

inline void write_reports_csv(const fs::path& path, const std::vector<EvalReport>& rs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "dataset,user,model,attack,settings,metric,value,seed\n";
  for (const auto& r : rs) {
    std::string settings = r.settings.dump();
    for (auto& c : settings)
      if (c == ',') c = ';';
    out << r.dataset << ',' << r.user << ',' << r.model << ',' << r.attack << ','
        << settings << ',' << r.metric << ',' << fmt_g17(r.value) << ',' << r.seed << '\n';
  }
}

inline void write_features_csv(const fs::path& path,
                               const std::vector<feat::FeatureVector>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const auto& names = feat::feature_names();
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  for (const auto& f : rows) {
    for (Eigen::Index i = 0; i < f.values.size(); ++i)
      out << (i ? "," : "") << fmt_g17(f.values[i]);
    out << '\n';
  }
}

inline void write_roc_csv(const fs::path& path, const auth::RocResult& roc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "fpr,tpr,threshold\n";
  for (const auto& p : roc.roc_points)
    out << fmt_g17(p.fpr) << ',' << fmt_g17(p.tpr) << ',' << fmt_g17(p.threshold) << '\n';
}

}  // namespace mouseforge::io
