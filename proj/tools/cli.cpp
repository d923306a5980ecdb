#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ronin/baselines.hpp"
#include "ronin/error.hpp"
#include "ronin/metrics.hpp"
#include "ronin/models.hpp"
#include "ronin/seqdata.hpp"
#include "ronin/synth.hpp"
#include "ronin/train.hpp"

namespace ronin::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using seqdata::SensorSequence;

json to_json(const RunManifest& m) {
  ordered_json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["version"] = m.version;
  j["wall_time_s"] = m.wall_time_s;
  return json::parse(j.dump());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    f << contents;
    if (!f) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename onto " + path.string() + ": " + ec.message());
}

fs::path manifest_path_for(const fs::path& artifact) {
  fs::path p = artifact;
  p += ".manifest.json";
  return p;
}

namespace {

using Clock = std::chrono::steady_clock;

// Keeps the manifest layout stable: ordered keys, no pretty variance.
void write_manifest(const fs::path& where, RunManifest m, Clock::time_point started) {
  m.wall_time_s = std::chrono::duration<double>(Clock::now() - started).count();
  ordered_json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["version"] = m.version;
  j["wall_time_s"] = m.wall_time_s;
  write_atomic(where, j.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::Io, "cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, path.string() + ": " + e.what());
  }
}

std::string fmt_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// ---- datasets ---------------------------------------------------------------

struct Dataset {
  std::vector<SensorSequence> seqs;
  std::vector<std::string> files;
};

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "not a directory: " + dir.string());
  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
  }
  std::sort(csvs.begin(), csvs.end());
  Dataset d;
  for (const auto& p : csvs) {
    d.seqs.push_back(seqdata::load_sequence(p));
    d.files.push_back(p.string());
  }
  if (d.seqs.empty()) throw Error(ErrorKind::EmptyDataset, "no sequence CSVs in " + dir.string());
  return d;
}

std::vector<SensorSequence> select_split(const Dataset& d, const std::string& split) {
  std::vector<SensorSequence> out;
  for (const auto& s : d.seqs) {
    const bool test = s.meta.split == "test_seen" || s.meta.split == "test_unseen";
    if (split == "all" || s.meta.split == split || (split == "test" && test)) out.push_back(s);
  }
  return out;
}

synth::ImuNoiseModel noise_from_json(const json& j) {
  synth::ImuNoiseModel n;
  auto vec3 = [](const json& v) {
    if (!v.is_array() || v.size() != 3) throw Error(ErrorKind::InvalidSpec, "bias must be [x,y,z]");
    return geom::Vec3{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  };
  if (j.contains("gyro_bias")) n.gyro_bias = vec3(j.at("gyro_bias"));
  if (j.contains("accel_bias")) n.accel_bias = vec3(j.at("accel_bias"));
  n.gyro_sigma = j.value("gyro_sigma", n.gyro_sigma);
  n.accel_sigma = j.value("accel_sigma", n.accel_sigma);
  n.yaw_drift_deg_per_min = j.value("yaw_drift_deg_per_min", n.yaw_drift_deg_per_min);
  return n;
}

void set_default_split(synth::DatasetOptions& o, std::size_t count) {
  o.n_val = count / 10;
  o.n_test_seen = count / 10;
  o.n_test_unseen = count / 10;
  o.n_train = count - o.n_val - o.n_test_seen - o.n_test_unseen;
}

// ---- subcommands ------------------------------------------------------------

struct SimulateArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> count;
};

int cmd_simulate(const SimulateArgs& a) {
  const auto started = Clock::now();
  synth::DatasetOptions o;
  o.specs = synth::default_walking_specs();
  json file = json::object();
  bool have_splits = false;
  if (!a.spec.empty()) {
    file = read_json_file(a.spec);
    try {
      if (file.is_array()) {
        o.specs.clear();
        for (const auto& s : file) o.specs.push_back(synth::spec_from_json(s));
      } else if (file.is_object() && file.contains("specs")) {
        o.specs.clear();
        for (const auto& s : file.at("specs")) o.specs.push_back(synth::spec_from_json(s));
        if (file.contains("noise")) o.noise = noise_from_json(file.at("noise"));
        o.random_mounting = file.value("random_mounting", o.random_mounting);
        o.random_heading = file.value("random_heading", o.random_heading);
        o.n_seen_subjects = file.value("n_seen_subjects", o.n_seen_subjects);
        o.n_unseen_subjects = file.value("n_unseen_subjects", o.n_unseen_subjects);
        o.seed = file.value("seed", o.seed);
        if (file.contains("splits")) {
          const auto& sp = file.at("splits");
          o.n_train = sp.value("train", std::size_t{0});
          o.n_val = sp.value("val", std::size_t{0});
          o.n_test_seen = sp.value("test_seen", std::size_t{0});
          o.n_test_unseen = sp.value("test_unseen", std::size_t{0});
          have_splits = true;
        }
      } else if (file.is_object()) {
        o.specs = {synth::spec_from_json(file)};
      } else {
        throw Error(ErrorKind::InvalidSpec, "spec file must hold an object or an array");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::InvalidSpec, a.spec + ": " + e.what());
    }
  }
  if (a.seed) o.seed = *a.seed;
  if (a.count) {
    set_default_split(o, *a.count);
  } else if (!have_splits) {
    set_default_split(o, 10);
  }
  if (o.total() == 0) throw Error(ErrorKind::InvalidSpec, "nothing to simulate");
  for (const auto& s : o.specs) synth::validate(s);

  const auto seqs = synth::gen_dataset(o);
  const fs::path out(a.out);
  fs::create_directories(out);
  RunManifest m;
  m.command = "simulate";
  m.seed = o.seed;
  if (!a.spec.empty()) m.inputs.push_back(a.spec);

  ordered_json splits = {{"train", json::array()}, {"val", json::array()},
                         {"test_seen", json::array()}, {"test_unseen", json::array()}};
  for (const auto& s : seqs) {
    const fs::path p = out / (s.name + ".csv");
    seqdata::save_sequence(s, p);
    m.outputs.push_back(p.string());
    m.outputs.push_back(seqdata::meta_path_for(p).string());
    splits[s.meta.split].push_back(s.name);
  }
  const fs::path split_path = out / "splits.json";
  write_atomic(split_path, splits.dump(2) + "\n");
  m.outputs.push_back(split_path.string());

  json resolved = {{"specs", json::array()}, {"seed", o.seed},
                   {"splits", {o.n_train, o.n_val, o.n_test_seen, o.n_test_unseen}},
                   {"random_mounting", o.random_mounting}, {"random_heading", o.random_heading}};
  for (const auto& s : o.specs) resolved["specs"].push_back(synth::to_json(s));
  m.config_hash = fnv1a_hex(resolved.dump());
  write_manifest(out / "manifest.json", m, started);
  std::cout << "wrote " << seqs.size() << " sequences to " << out.string() << "\n";
  return kOk;
}

struct TrainArgs {
  std::string arch;
  std::string data;
  std::string config;
  std::string out;
  std::string log;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;
  std::optional<double> lr;
  bool verbose = false;
};

int cmd_train(const TrainArgs& a) {
  const auto started = Clock::now();
  const models::Arch arch = models::arch_from_string(a.arch);
  json file = a.config.empty() ? json::object() : read_json_file(a.config);
  if (!file.is_object()) throw Error(ErrorKind::InvalidSpec, "training config must be a JSON object");
  json model_cfg = file.value("model", json::object());
  json train_json = file;
  train_json.erase("model");
  train_json.erase("arch");
  train::TrainConfig tc = train::config_from_json(train_json, arch);
  if (!a.mode.empty()) tc.mode = train::mode_from_string(a.mode);
  if (a.seed) tc.seed = *a.seed;
  if (a.epochs) tc.max_epochs = *a.epochs;
  if (a.batch) tc.batch_size = *a.batch;
  if (a.lr) tc.lr = *a.lr;
  tc.verbose = a.verbose;
  if (tc.batch_size == 0 || tc.max_epochs == 0 || !(tc.lr > 0.0)) {
    throw Error(ErrorKind::InvalidSpec, "epochs, batch and lr must be positive");
  }

  if (!model_cfg.contains("keep_prob")) model_cfg["keep_prob"] = tc.keep_prob;
  if (train::local_frame(tc) && !model_cfg.contains("output_dim")) model_cfg["output_dim"] = 3;
  if (arch == models::Arch::ResNet && !model_cfg.contains("window")) model_cfg["window"] = tc.window;
  const json model_spec = {{"arch", models::to_string(arch)}, {"config", model_cfg}};
  auto model = models::make_model(model_spec, tc.seed);

  const Dataset d = load_dataset(a.data);
  auto train_set = select_split(d, "train");
  auto val_set = select_split(d, "val");
  if (train_set.empty()) train_set = d.seqs;
  if (val_set.empty()) val_set = train_set;

  const auto result = train::fit(*model, train_set, val_set, tc);

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  json meta = {{"frame", train::local_frame(tc) ? "local" : "hacf"},
               {"mode", train::to_string(tc.mode)},
               {"epoch", result.best_epoch},
               {"val_loss", result.best_val_loss},
               {"seed", tc.seed},
               {"train_config", train::to_json(tc)}};
  models::save_checkpoint(*model, out, meta);
  fs::path log = a.log.empty() ? fs::path(out.string() + ".log.csv") : fs::path(a.log);
  write_atomic(log, train::epoch_log_csv(result.log));

  RunManifest m;
  m.command = "train";
  m.seed = tc.seed;
  m.inputs = d.files;
  if (!a.config.empty()) m.inputs.insert(m.inputs.begin(), a.config);
  m.outputs = {out.string(), log.string()};
  m.config_hash = fnv1a_hex(json({{"train", train::to_json(tc)}, {"model", model_spec}}).dump());
  write_manifest(manifest_path_for(out), m, started);
  std::cout << "best epoch " << result.best_epoch << " val loss " << fmt_number(result.best_val_loss) << "\n";
  return kOk;
}

struct PredictArgs {
  std::string ckpt;
  std::string seq;
  std::string out;
};

int cmd_predict(const PredictArgs& a) {
  const auto started = Clock::now();
  auto ck = models::load_checkpoint(a.ckpt);
  const SensorSequence seq = seqdata::load_sequence(a.seq);
  metrics::Trajectory2D traj;
  if (ck.model->arch() == models::Arch::Heading) {
    traj.t = seq.t;
    traj.p = train::predict_heading(*ck.model, seq);
  } else {
    train::PredictOptions po;
    po.local_frame = ck.meta.value("frame", std::string("hacf")) == "local";
    traj = train::predict_trajectory(*ck.model, seq, po);
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  metrics::save_trajectory(traj, out);

  RunManifest m;
  m.command = "predict";
  m.seed = ck.meta.value("seed", std::uint64_t{0});
  m.inputs = {a.ckpt, a.seq};
  m.outputs = {out.string()};
  m.config_hash = fnv1a_hex(ck.model->config_json().dump());
  write_manifest(manifest_path_for(out), m, started);
  return kOk;
}

struct EvaluateArgs {
  std::string est;
  std::string gt;
  std::string align = "none";
  std::string kind = "trajectory";
  std::string name;
  std::string report;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto started = Clock::now();
  const SensorSequence seq = seqdata::load_sequence(a.gt);
  const metrics::Trajectory2D est = metrics::load_trajectory(a.est);
  metrics::MetricsReport r;
  r.sequence = seq.name;
  r.estimator = a.name.empty() ? fs::path(a.est).stem().string() : a.name;
  if (a.kind == "heading") {
    if (!seq.has_heading()) throw Error(ErrorKind::MalformedHeader, a.gt + " has no heading column");
    if (est.size() != seq.size()) {
      throw Error(ErrorKind::ShapeMismatch, "heading predictions need one row per sequence frame");
    }
    const auto h = metrics::heading_metrics(est.p, seq.gt_heading);
    r.heading_mse = h.mse;
    r.heading_mae_deg = h.mae_deg;
  } else {
    const auto gt = metrics::ground_truth_xy(seq);
    metrics::Trajectory2D aligned;
    if (a.align == "first5s") {
      aligned = metrics::align_first_5s(est, gt).apply(est);
    } else {
      aligned = metrics::anchor_start(est, gt);
    }
    r.ate_m = metrics::ate(aligned, gt);
    r.rte_m = metrics::rte(aligned, gt);
  }
  write_atomic(a.report, metrics::report_to_json(r));

  RunManifest m;
  m.command = "evaluate";
  m.inputs = {a.est, a.gt};
  m.outputs = {a.report};
  m.config_hash = fnv1a_hex(json({{"align", a.align}, {"kind", a.kind}}).dump());
  write_manifest(manifest_path_for(a.report), m, started);
  std::cout << metrics::report_to_json(r);
  return kOk;
}

struct CompareArgs {
  std::string data;
  std::string methods;
  std::string report;
  std::string split = "all";
};

struct Method {
  std::string label;
  std::string kind;  // ndi, pdr or neural
  std::string ckpt;
  std::unique_ptr<models::Model> model;
  bool local = false;
};

int cmd_compare(const CompareArgs& a) {
  const auto started = Clock::now();
  std::vector<Method> methods;
  std::stringstream ss(a.methods);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    Method m;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      if (item != "ndi" && item != "pdr") throw Error(ErrorKind::InvalidArgument, "unknown method '" + item + "'");
      m.label = item;
      m.kind = item;
    } else {
      m.label = item.substr(0, colon);
      m.kind = "neural";
      m.ckpt = item.substr(colon + 1);
      auto ck = models::load_checkpoint(m.ckpt);
      if (ck.model->arch() == models::Arch::Heading) {
        throw Error(ErrorKind::InvalidArgument, "compare takes trajectory models, not heading");
      }
      m.local = ck.meta.value("frame", std::string("hacf")) == "local";
      m.model = std::move(ck.model);
    }
    methods.push_back(std::move(m));
  }
  if (methods.empty()) throw Error(ErrorKind::InvalidArgument, "no methods given");

  const Dataset d = load_dataset(a.data);
  const auto seqs = select_split(d, a.split);
  if (seqs.empty()) throw Error(ErrorKind::EmptyDataset, "no sequences in split '" + a.split + "'");

  std::string csv = "sequence";
  for (const auto& m : methods) csv += "," + m.label + "_ate," + m.label + "_rte";
  csv += "\n";
  std::vector<double> sum_ate(methods.size(), 0.0), sum_rte(methods.size(), 0.0);
  for (const auto& seq : seqs) {
    const auto gt = metrics::ground_truth_xy(seq);
    csv += seq.name;
    for (std::size_t k = 0; k < methods.size(); ++k) {
      auto& m = methods[k];
      metrics::Trajectory2D est;
      if (m.kind == "ndi" || m.kind == "pdr") {
        est = m.kind == "ndi" ? baselines::ndi(seq) : baselines::pdr(seq);
        est = metrics::align_first_5s(est, gt).apply(est);
      } else {
        train::PredictOptions po;
        po.local_frame = m.local;
        est = metrics::anchor_start(train::predict_trajectory(*m.model, seq, po), gt);
      }
      const double e_ate = metrics::ate(est, gt);
      const double e_rte = metrics::rte(est, gt);
      sum_ate[k] += e_ate;
      sum_rte[k] += e_rte;
      csv += "," + fmt_number(e_ate) + "," + fmt_number(e_rte);
    }
    csv += "\n";
  }
  csv += "mean";
  const double n = static_cast<double>(seqs.size());
  for (std::size_t k = 0; k < methods.size(); ++k) {
    csv += "," + fmt_number(sum_ate[k] / n) + "," + fmt_number(sum_rte[k] / n);
  }
  csv += "\n";
  write_atomic(a.report, csv);

  RunManifest man;
  man.command = "compare";
  man.inputs = d.files;
  for (const auto& m : methods) {
    if (!m.ckpt.empty()) man.inputs.push_back(m.ckpt);
  }
  man.outputs = {a.report};
  man.config_hash = fnv1a_hex(json({{"methods", a.methods}, {"split", a.split}}).dump());
  write_manifest(manifest_path_for(a.report), man, started);
  std::cout << csv;
  return kOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DivergedLoss:
    case ErrorKind::NonScalarLoss:
    case ErrorKind::GimbalDegenerate: return kInternalError;
    default: return kInputError;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Inertial navigation toolkit: simulate, train, predict, evaluate, compare"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolkitVersion);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a synthetic IMU dataset");
  s->add_option("--spec", sim.spec, "JSON: trajectory spec, array of specs, or dataset object")->check(CLI::ExistingFile);
  s->add_option("--out", sim.out, "Output directory")->required();
  s->add_option("--seed", sim.seed, "Random seed");
  s->add_option("--count", sim.count, "Number of sequences (70/10/10/10 split)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a network on a dataset directory");
  t->add_option("--arch", tr.arch, "resnet | lstm | tcn | heading")
      ->required()
      ->check(CLI::IsMember({"resnet", "lstm", "tcn", "heading"}));
  t->add_option("--data", tr.data, "Dataset directory from simulate")->required()->check(CLI::ExistingDirectory);
  t->add_option("--config", tr.config, "Training config JSON (optional \"model\" object)")->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--log", tr.log, "Epoch log CSV (default <out>.log.csv)");
  t->add_option("--mode", tr.mode, "standard | local-frame | dense-velocity | direct")
      ->check(CLI::IsMember({"standard", "local-frame", "dense-velocity", "direct"}));
  t->add_option("--seed", tr.seed, "Random seed");
  t->add_option("--epochs", tr.epochs, "Maximum epochs");
  t->add_option("--batch", tr.batch, "Batch size");
  t->add_option("--lr", tr.lr, "Initial learning rate");
  t->add_flag("--verbose", tr.verbose, "Print per-epoch losses to stderr");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Run a checkpoint over one sequence");
  p->add_option("--ckpt", pr.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  p->add_option("--seq", pr.seq, "Sequence CSV")->required()->check(CLI::ExistingFile);
  p->add_option("--out", pr.out, "Output CSV: trajectory, or per-frame sin/cos for heading models")->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score an estimate against a sequence's ground truth");
  e->add_option("--est", ev.est, "Estimate CSV (t,x,y)")->required()->check(CLI::ExistingFile);
  e->add_option("--gt", ev.gt, "Sequence CSV with ground truth")->required()->check(CLI::ExistingFile);
  e->add_option("--align", ev.align, "none (start-anchored) | first5s")
      ->check(CLI::IsMember({"none", "first5s"}));
  e->add_option("--kind", ev.kind, "trajectory | heading")->check(CLI::IsMember({"trajectory", "heading"}));
  e->add_option("--name", ev.name, "Estimator label (default: estimate file stem)");
  e->add_option("--report", ev.report, "Output metrics JSON")->required();

  CompareArgs cp;
  auto* c = app.add_subcommand("compare", "Tabulate ATE/RTE of several methods over a dataset");
  c->add_option("--data", cp.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c->add_option("--methods", cp.methods, "Comma list: ndi, pdr, <label>:<checkpoint>")->required();
  c->add_option("--report", cp.report, "Output CSV")->required();
  c->add_option("--split", cp.split, "all | train | val | test | test_seen | test_unseen")
      ->check(CLI::IsMember({"all", "train", "val", "test", "test_seen", "test_unseen"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*t) return cmd_train(tr);
    if (*p) return cmd_predict(pr);
    if (*e) return cmd_evaluate(ev);
    if (*c) return cmd_compare(cp);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err.kind());
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kInputError;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return kInternalError;
  }
  return kInputError;
}

}  // namespace ronin::cli
