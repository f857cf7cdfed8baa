/**
 * @file cli.hpp
 *
 * The `proxquad` command line. Everything lives under --out:
 *
 *   data/manifest.json, data/session_NNN.jsonl      gen-data
 *   models/<approach>_T<T>/{m1,m2,m3}.pqm, report.json   train
 *   sweep/sweep.csv, sweep/plot.csv, sweep/meta.json      sweep
 *   rollouts/<approach>_<scenario>_s<seed>.jsonl, metrics_*.csv   rollout
 */

#pragma once

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "proxquad/bridge_server.hpp"
#include "proxquad/config.hpp"
#include "proxquad/dataset.hpp"
#include "proxquad/evaluation.hpp"
#include "proxquad/model_io.hpp"
#include "proxquad/sweep.hpp"

namespace proxquad::cli {

namespace fs = std::filesystem;
namespace net = boost::asio;

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string model_dir_name(ApproachKind k, int T) { return to_string(k) + "_T" + std::to_string(T); }

inline std::string file_safe(std::string s) {
  for (auto& c : s)
    if (c == ':' || c == '/' || c == ' ') c = '-';
  return s;
}

/// Largest-T model directory for an approach under `root`, if any.
inline std::optional<fs::path> find_model_dir(const fs::path& root, ApproachKind k) {
  if (!fs::is_directory(root)) return std::nullopt;
  const std::string prefix = to_string(k) + "_T";
  std::optional<fs::path> best;
  long best_T = -1;
  for (const auto& e : fs::directory_iterator(root)) {
    const std::string name = e.path().filename().string();
    if (!e.is_directory() || !name.starts_with(prefix)) continue;
    try {
      const long T = std::stol(name.substr(prefix.size()));
      if (T > best_T) best_T = T, best = e.path();
    } catch (const std::exception&) {
    }
  }
  return best;
}

/// A temporary directory removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("proxquad-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// ------------------------------------------------------------------
// Commands
// ------------------------------------------------------------------

struct Globals {
  WorkbenchConfig cfg;
  fs::path out;
  std::ostream* log = &std::cout;
};

inline int cmd_gen_data(const Globals& g) {
  const auto set = build_corpus(g.cfg.corpus, g.cfg.seed, flight_context(g.cfg));
  const fs::path dir = g.out / "data";
  write_corpus(dir, set, g.cfg);
  for (std::size_t s = 0; s < set.sessions.size(); ++s)
    *g.log << session_file_name(set.sessions[s].id) << ": " << set.sessions[s].instances.size() << " instances"
           << (set.is_test_session(s) ? " (test)" : "") << '\n';
  *g.log << "total: " << set.total() << " instances, train " << set.count(Split::Train) << ", validation "
         << set.count(Split::Validation) << ", test " << set.count(Split::Test) << '\n';
  *g.log << "wrote " << dir.string() << '\n';
  return 0;
}

inline SessionSet load_corpus_checked(const Globals& g, const fs::path& dir) {
  const json manifest = read_manifest(dir);
  if (manifest.at("config_hash").get<std::string>() != config_hash(g.cfg))
    *g.log << "warning: corpus was generated with config " << manifest.at("config_hash").get<std::string>()
           << ", current config is " << config_hash(g.cfg) << '\n';
  return read_corpus(dir);
}

inline std::uint64_t train_seed(const WorkbenchConfig& cfg, int T) { return replica_seed(cfg.seed, T, 0); }

inline int cmd_train(const Globals& g, const std::string& approach, int T) {
  const ApproachKind kind = parse_approach(approach);
  if (kind == ApproachKind::GroundTruth) throw ConfigError("the ground-truth controller has nothing to train");
  const SessionSet corpus = load_corpus_checked(g, g.out / "data");
  const std::uint64_t seed = train_seed(g.cfg, T);
  const TrainedApproach app = train_approach(kind, corpus, T, g.cfg.train, seed, g.cfg.controller);
  const fs::path dir = g.out / "models" / model_dir_name(kind, T);
  const auto files = save_approach(dir, app, T, seed, config_hash(g.cfg));
  for (std::size_t i = 0; i < app.reports.size(); ++i)
    *g.log << model_roles(kind)[i] << ": " << app.reports[i].epochs_run << " epochs, best validation loss "
           << app.reports[i].best_validation_loss << '\n';
  for (const auto& f : files) *g.log << "wrote " << f.string() << '\n';
  return 0;
}

inline int cmd_sweep(const Globals& g, unsigned workers) {
  const SessionSet corpus = load_corpus_checked(g, g.out / "data");
  const SweepReport rep = run_sweep(corpus, g.cfg.sweep, g.cfg.train, g.cfg.seed, g.cfg.controller, workers,
                                    [&](int T, int r, const std::array<R2Report, 3>& res) {
                                      *g.log << "T=" << T << " replica " << r;
                                      for (std::size_t a = 0; a < 3; ++a) {
                                        *g.log << "  " << to_string(kLearnedApproaches[a]) << " [";
                                        for (int v = 0; v < 4; ++v) *g.log << (v ? " " : "") << res[a].r2[v];
                                        *g.log << "]";
                                      }
                                      *g.log << std::endl;
                                    });
  const fs::path dir = g.out / "sweep";
  fs::create_directories(dir);
  std::ofstream(dir / "sweep.csv", std::ios::binary | std::ios::trunc) << rep.to_csv();
  std::ofstream(dir / "plot.csv", std::ios::binary | std::ios::trunc) << rep.plot_csv();
  std::ofstream(dir / "meta.json", std::ios::binary | std::ios::trunc)
      << json{{"config_hash", config_hash(g.cfg)}, {"master_seed", g.cfg.seed}, {"sweep", to_json(g.cfg.sweep)}}.dump(2)
      << '\n';
  *g.log << "wrote " << (dir / "sweep.csv").string() << " (" << rep.rows.size() << " rows)\n";
  return 0;
}

inline TrainedApproach load_for_rollout(const Globals& g, ApproachKind kind, const std::string& models) {
  if (kind == ApproachKind::GroundTruth) {
    TrainedApproach gt;
    gt.params = g.cfg.controller;
    return gt;
  }
  std::optional<fs::path> dir;
  if (!models.empty()) {
    dir = fs::path(models);
  } else {
    dir = find_model_dir(g.out / "models", kind);
  }
  if (!dir || !fs::is_directory(*dir)) throw ConfigError("no trained models for " + to_string(kind));
  return load_approach(*dir, kind, g.cfg.controller);
}

inline int cmd_rollout(const Globals& g, const std::string& approach, const std::string& scenario_name,
                       const std::string& models, int runs, double duration) {
  // Everything that can fail on input is checked before anything is written.
  const ApproachKind kind = parse_approach(approach);
  const Scenario scenario = parse_scenario(scenario_name);
  if (runs < 1) throw ConfigError("--runs must be >= 1");
  if (!(duration > 0.0)) throw ConfigError("--duration must be > 0");
  const TrainedApproach app = load_for_rollout(g, kind, models);
  const FlightContext ctx = flight_context(g.cfg);

  std::vector<RolloutTrace> traces;
  for (int r = 0; r < runs; ++r) traces.push_back(rollout(app, scenario, duration, g.cfg.seed + static_cast<std::uint64_t>(r), ctx));

  const fs::path dir = g.out / "rollouts";
  fs::create_directories(dir);
  const std::string stem = to_string(kind) + "_" + file_safe(scenario.name());
  std::ofstream metrics(dir / ("metrics_" + stem + ".csv"), std::ios::binary | std::ios::trunc);
  metrics << metrics_csv_header() << '\n';
  for (const auto& t : traces) {
    const fs::path p = dir / (stem + "_s" + std::to_string(t.seed) + ".jsonl");
    write_trace(p, t, config_hash(g.cfg));
    const RolloutMetrics m = rollout_metrics(t);
    metrics << metrics_csv_row(t, m) << '\n';
    *g.log << p.filename().string() << ": settle "
           << (m.settle_time ? std::to_string(*m.settle_time) + " s" : std::string("never")) << ", final error "
           << m.final_position_error << " m\n";
  }
  *g.log << "wrote " << (dir / ("metrics_" + stem + ".csv")).string() << '\n';
  return 0;
}

// ------------------------------------------------------------------
// verify
// ------------------------------------------------------------------

struct VerifyResult {
  bool ok = true;
  void fail(std::ostream& log, const std::string& what) {
    ok = false;
    log << "FAIL " << what << '\n';
  }
};

/// Every instance's label equals f_C(s_pose, odom) exactly.
inline std::size_t check_labels(const std::vector<DataInstance>& data, const ControllerParams& params,
                                std::vector<std::size_t>* bad = nullptr) {
  std::size_t n_bad = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!(compute_control({data[i].s_pose, data[i].odom}, params) == data[i].u)) {
      ++n_bad;
      if (bad) bad->push_back(i);
    }
  return n_bad;
}

inline bool same_bytes(const fs::path& a, const fs::path& b) { return read_file(a) == read_file(b); }

inline void verify_corpus(const fs::path& dir, VerifyResult& res, std::ostream& log) {
  const json manifest = read_manifest(dir);
  const WorkbenchConfig cfg = config_from_json(manifest.at("config"));
  if (config_hash(cfg) != manifest.at("config_hash").get<std::string>())
    res.fail(log, "manifest config_hash does not match its embedded config");

  std::size_t total = 0;
  for (const auto& entry : manifest.at("sessions")) {
    const auto file = dir / entry.at("file").get<std::string>();
    const SessionFile sf = read_session_file(file);
    if (sf.header.value("config_hash", "") != manifest.at("config_hash").get<std::string>())
      res.fail(log, file.filename().string() + ": header config_hash differs from manifest");
    const std::size_t bad = check_labels(sf.instances, cfg.controller);
    if (bad) res.fail(log, file.filename().string() + ": " + std::to_string(bad) + " labels differ from f_C(s)");
    total += sf.instances.size();
  }
  log << "labels: " << total << " instances checked\n";

  TempDir tmp("verify-data");
  write_corpus(tmp.path, build_corpus(cfg.corpus, cfg.seed, flight_context(cfg)), cfg);
  for (const auto& e : fs::directory_iterator(tmp.path)) {
    const auto name = e.path().filename();
    if (!fs::exists(dir / name))
      res.fail(log, "missing " + name.string());
    else if (!same_bytes(e.path(), dir / name))
      res.fail(log, name.string() + " does not regenerate byte-identically");
  }
  log << "corpus regeneration compared\n";
}

inline void verify_models(const fs::path& dir, const fs::path& data_dir, VerifyResult& res, std::ostream& log) {
  const json report = json::parse(read_file(dir / "report.json"));
  const json manifest = read_manifest(data_dir);
  const WorkbenchConfig cfg = config_from_json(manifest.at("config"));
  if (report.at("config_hash") != manifest.at("config_hash")) {
    res.fail(log, dir.string() + ": models were not trained on this corpus");
    return;
  }
  const ApproachKind kind = parse_approach(report.at("approach").get<std::string>());
  const int T = report.at("T").get<int>();
  const std::uint64_t seed = report.at("seed").get<std::uint64_t>();
  const SessionSet corpus = read_corpus(data_dir);
  TempDir tmp("verify-models");
  save_approach(tmp.path, train_approach(kind, corpus, T, cfg.train, seed, cfg.controller), T, seed,
                manifest.at("config_hash").get<std::string>());
  for (const auto& e : fs::directory_iterator(tmp.path)) {
    const auto name = e.path().filename();
    if (!fs::exists(dir / name) || !same_bytes(e.path(), dir / name))
      res.fail(log, (dir / name).string() + " does not regenerate byte-identically");
  }
  log << "models " << dir.string() << " compared\n";
}

inline void verify_trace(const fs::path& file, const Globals& g, const std::string& models, VerifyResult& res,
                         std::ostream& log) {
  std::ifstream in(file);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty trace " + file.string());
  const json header = json::parse(line);
  std::size_t ticks = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++ticks;
  if (header.at("config_hash").get<std::string>() != config_hash(g.cfg)) {
    res.fail(log, file.string() + ": trace was produced with another config (pass it with --config)");
    return;
  }
  const ApproachKind kind = parse_approach(header.at("approach").get<std::string>());
  const TrainedApproach app = load_for_rollout(g, kind, models);
  const auto seed = header.at("seed").get<std::uint64_t>();
  const RolloutTrace t = rollout(app, parse_scenario(header.at("scenario").get<std::string>()),
                                 static_cast<double>(ticks) * g.cfg.sim.dt, seed, flight_context(g.cfg));
  TempDir tmp("verify-trace");
  write_trace(tmp.path / "t.jsonl", t, config_hash(g.cfg));
  if (!same_bytes(tmp.path / "t.jsonl", file)) res.fail(log, file.string() + " does not regenerate byte-identically");
  log << "trace " << file.filename().string() << " compared\n";
}

inline int cmd_verify(const Globals& g, const std::string& data, const std::vector<std::string>& model_dirs,
                      const std::vector<std::string>& traces, const std::string& models_for_traces) {
  VerifyResult res;
  const fs::path data_dir = data.empty() ? g.out / "data" : fs::path(data);
  verify_corpus(data_dir, res, *g.log);
  for (const auto& m : model_dirs) verify_models(m, data_dir, res, *g.log);
  for (const auto& t : traces) verify_trace(t, g, models_for_traces, res, *g.log);
  *g.log << (res.ok ? "verify: OK" : "verify: FAILED") << '\n';
  return res.ok ? 0 : 2;
}

// ------------------------------------------------------------------
// serve
// ------------------------------------------------------------------

inline std::shared_ptr<const bridge::ModelStore> load_model_store(const Globals& g, const std::string& models,
                                                                  std::ostream& log) {
  auto store = std::make_shared<bridge::ModelStore>(g.cfg.controller);
  const fs::path root = models.empty() ? g.out / "models" : fs::path(models);
  for (ApproachKind k : kLearnedApproaches) {
    if (const auto dir = find_model_dir(root, k)) {
      store->add(load_approach(*dir, k, g.cfg.controller));
      log << "loaded " << to_string(k) << " from " << dir->string() << '\n';
    }
  }
  return store;
}

inline int cmd_serve(const Globals& g, unsigned short port, const std::string& models, double run_for) {
  auto store = load_model_store(g, models, *g.log);
  net::io_context io;
  bridge::BridgeServer server(io, {net::ip::make_address("0.0.0.0"), port}, store, flight_context(g.cfg));
  server.start();
  *g.log << "bridge listening on port " << server.port() << std::endl;

  net::signal_set signals(io, SIGINT, SIGTERM);
  signals.async_wait([&](const boost::system::error_code&, int) {
    server.stop();
    io.stop();
  });
  net::steady_timer deadline(io);
  if (run_for > 0.0) {
    deadline.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(run_for)));
    deadline.async_wait([&](const boost::system::error_code& ec) {
      if (ec) return;
      server.stop();
      io.stop();
    });
  }
  io.run();
  return 0;
}

// ------------------------------------------------------------------
// Entry point
// ------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Quadrotor person-following workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--seed", seed, "master seed (overrides the config)");

  auto* gen = app.add_subcommand("gen-data", "generate the acquisition corpus");

  std::string approach;
  int T = 0;
  auto* train = app.add_subcommand("train", "train one approach on T instances");
  train->add_option("--approach", approach, "a1 | a2 | a3")->required();
  train->add_option("--T", T, "training set size")->required()->check(CLI::PositiveNumber);

  unsigned workers = 1;
  auto* sweep = app.add_subcommand("sweep", "R^2 versus training-set size for all approaches");
  sweep->add_option("--workers", workers, "parallel training jobs")->check(CLI::Range(1u, 256u));

  std::string scenario;
  std::string models;
  int runs = 1;
  double duration = 20.0;
  auto* roll = app.add_subcommand("rollout", "closed-loop rollouts with one approach");
  roll->add_option("--approach", approach, "gt | a1 | a2 | a3")->required();
  roll->add_option("--scenario", scenario, "approach_90 | approach_45 | approach_0 | still | scripted[:aggr]")->required();
  roll->add_option("--models", models, "model directory (default: largest T under <out>/models)");
  roll->add_option("--runs", runs, "number of seeds, starting at --seed");
  roll->add_option("--duration", duration, "simulated seconds");

  std::string data;
  std::vector<std::string> verify_models_dirs;
  std::vector<std::string> verify_traces;
  auto* ver = app.add_subcommand("verify", "check labels and byte-exact regeneration of artifacts");
  ver->add_option("--data", data, "corpus directory (default: <out>/data)");
  ver->add_option("--model-dir", verify_models_dirs, "trained model directory to regenerate")->check(CLI::ExistingDirectory);
  ver->add_option("--trace", verify_traces, "rollout trace to regenerate")->check(CLI::ExistingFile);
  ver->add_option("--models", models, "models used by learned-approach traces");

  unsigned short port = 8765;
  double run_for = 0.0;
  auto* serve = app.add_subcommand("serve", "live bridge service");
  serve->add_option("--port", port, "TCP port (0 picks a free one)");
  serve->add_option("--models", models, "root holding <approach>_T<T> directories (default: <out>/models)");
  serve->add_option("--run-for", run_for, "stop after this many seconds (0: until interrupted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    Globals g;
    g.cfg = config_path.empty() ? WorkbenchConfig{} : load_config(config_path);
    if (seed) g.cfg.seed = *seed;
    if (!out_dir.empty()) g.cfg.output_dir = out_dir;
    g.cfg.validate();
    g.out = g.cfg.output_dir;
    g.log = &out;

    if (*gen) return cmd_gen_data(g);
    if (*train) return cmd_train(g, approach, T);
    if (*sweep) return cmd_sweep(g, workers);
    if (*roll) return cmd_rollout(g, approach, scenario, models, runs, duration);
    if (*ver) return cmd_verify(g, data, verify_models_dirs, verify_traces, models);
    if (*serve) return cmd_serve(g, port, models, run_for);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace proxquad::cli
