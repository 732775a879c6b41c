// hoda: command-line entry point for the pipeline. Subcommands cover every
// stage from synthetic data generation to the long-running detection
// gateway; each stage writes versioned artifacts into a fresh run directory.
//
// Exit codes: 0 success, 1 configuration/validation error, 2 runtime error.

#include "hoda/attacks.hpp"
#include "hoda/calibration.hpp"
#include "hoda/dataset.hpp"
#include "hoda/eval.hpp"
#include "hoda/model.hpp"
#include "hoda/monitor.hpp"
#include "hoda/pipeline.hpp"
#include "hoda/prediction.hpp"
#include "hoda/rng.hpp"
#include "hoda/sequence.hpp"
#include "hoda/service.hpp"
#include "hoda/version.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

namespace fs = std::filesystem;
using namespace hoda;

PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return PipelineConfig::from_json(nlohmann::json::object());
  return PipelineConfig::load(path);
}

std::atomic<bool> g_stop_requested{false};

void handle_signal(int) { g_stop_requested = true; }

int cmd_gen_data(const std::string& config_path, const std::string& out) {
  const auto cfg = load_config(config_path);
  init_run_dir(out, cfg, "gen-data");
  const Dataset ds = generate_dataset(cfg.dataset);
  write_pool_csv(ds.train, fs::path(out) / "train.csv");
  write_pool_csv(ds.test, fs::path(out) / "test.csv");
  std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size()
            << " test samples to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out) {
  const auto cfg = load_config(config_path);
  init_run_dir(out, cfg, "train");
  const SamplePool train_pool = read_pool_csv(fs::path(data) / "train.csv");
  const SnapshotModel model = SnapshotModel::train(train_pool, cfg.train);
  model.save(fs::path(out) / "model.txt");
  std::cout << "trained " << model.epochs() << " epochs, final train accuracy "
            << model.accuracy(model.epochs() - 1, train_pool.features,
                              train_pool.labels)
            << "\n";
  return 0;
}

int cmd_predict_matrix(const std::string& config_path, const std::string& model_path,
                       const std::string& pool_path, const std::string& sequence,
                       const std::string& out) {
  const auto cfg = load_config(config_path);
  init_run_dir(out, cfg, "predict-matrix");
  const SnapshotModel model = SnapshotModel::load(model_path);
  const SamplePool pool = read_pool_csv(pool_path);
  const auto seq = SubclassifierSequence::named(sequence, model.epochs());
  const PredictionMatrix matrix = predict_matrix(model, seq, pool.features);
  matrix.write_csv(fs::path(out) / "matrix.csv");
  std::cout << "wrote " << matrix.rows() << "x" << matrix.cols()
            << " prediction matrix\n";
  return 0;
}

int cmd_calibrate(const std::string& config_path, const std::string& matrix_path,
                  const std::string& out) {
  const auto cfg = load_config(config_path);
  const PredictionMatrix matrix = PredictionMatrix::read_csv(matrix_path);
  CalibrationConfig ccfg = cfg.calibration;
  ccfg.validate(matrix.rows());  // surfaces num_s > pool as a validation error
  init_run_dir(out, cfg, "calibrate");
  const CalibrationResult result = calibrate(matrix, ccfg);
  result.save(fs::path(out) / "calibration.txt");
  std::cout << "delta " << result.delta << " over " << ccfg.num_seq
            << " sequences of " << ccfg.num_s << "\n";
  return 0;
}

int cmd_attack(const std::string& config_path, const std::string& model_path,
               const std::string& pool_path, const std::string& name,
               const std::string& out) {
  const auto cfg = load_config(config_path);
  const AttackConfig* chosen = nullptr;
  for (const auto& a : cfg.experiment.attacks)
    if (a.name == name) chosen = &a;
  if (!chosen)
    throw ValidationError("config defines no attack named '" + name + "'");
  init_run_dir(out, cfg, "attack");
  const SnapshotModel model = SnapshotModel::load(model_path);
  const SamplePool pool = read_pool_csv(pool_path);

  AttackConfig acfg = *chosen;
  const std::uint64_t seed =
      acfg.seed ? acfg.seed : derive_seed(cfg.seed, "experiment/attack/" + acfg.name);
  AttackStream stream;
  switch (acfg.kind) {
    case AttackKind::ood_random: {
      OodStreamSpec spec = acfg.ood;
      spec.dim = model.input_dim();
      spec.base = cfg.dataset;
      if (spec.kind == OodStreamSpec::Kind::pool_resample)
        spec.pool = std::make_shared<SamplePool>(pool);
      stream = ood_stream(spec, acfg.budget, seed);
      break;
    }
    case AttackKind::jbda:
    case AttackKind::jbrand: {
      JbdaConfig jcfg = acfg.jbda;
      jcfg.seed = seed;
      if (jcfg.surrogate.epochs <= 0) jcfg.surrogate = cfg.train;
      Rng seed_rng(derive_seed(seed, "jbda/seed-pool"));
      const auto rows = seed_rng.sample_without_replacement(
          static_cast<int>(pool.size()),
          std::min<int>(cfg.experiment.jbda_num_seeds,
                        static_cast<int>(pool.size())));
      jcfg.seed_samples = select_pool_rows(pool, rows, "attack_seed");
      stream = jbda_stream(model, jcfg, acfg.budget,
                           acfg.kind == AttackKind::jbrand);
      break;
    }
    case AttackKind::adaptive_mix: {
      if (!acfg.adaptive_base)
        throw ValidationError("adaptive attack '" + name + "' has no base");
      AttackConfig base = *acfg.adaptive_base;
      base.name = name + "-base";
      // Reuse this command's machinery for the base by writing it inline.
      OodStreamSpec spec = base.ood;
      AttackStream base_stream;
      if (base.kind == AttackKind::ood_random) {
        spec.dim = model.input_dim();
        spec.base = cfg.dataset;
        if (spec.kind == OodStreamSpec::Kind::pool_resample)
          spec.pool = std::make_shared<SamplePool>(pool);
        base_stream = ood_stream(spec, base.budget,
                                 base.seed ? base.seed
                                           : derive_seed(seed, "adaptive/base"));
      } else {
        JbdaConfig jcfg = base.jbda;
        jcfg.seed = base.seed ? base.seed : derive_seed(seed, "adaptive/base");
        if (jcfg.surrogate.epochs <= 0) jcfg.surrogate = cfg.train;
        Rng seed_rng(derive_seed(jcfg.seed, "jbda/seed-pool"));
        const auto rows = seed_rng.sample_without_replacement(
            static_cast<int>(pool.size()),
            std::min<int>(cfg.experiment.jbda_num_seeds,
                          static_cast<int>(pool.size())));
        jcfg.seed_samples = select_pool_rows(pool, rows, "attack_seed");
        base_stream = jbda_stream(model, jcfg, base.budget,
                                  base.kind == AttackKind::jbrand);
      }
      AdaptiveMixConfig mix = acfg.adaptive;
      mix.seed = seed;
      stream = adaptive_stream(base_stream, pool, mix, acfg.budget);
      break;
    }
  }
  stream.write_csv(fs::path(out) / "stream.csv");
  std::cout << "wrote attack stream of " << stream.size() << " samples\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& out,
                 const std::string& attack_filter, int num_s_filter) {
  auto cfg = load_config(config_path);
  if (!attack_filter.empty()) {
    std::vector<AttackConfig> kept;
    for (const auto& a : cfg.experiment.attacks)
      if (a.name == attack_filter) kept.push_back(a);
    if (kept.empty())
      throw ValidationError("config defines no attack named '" + attack_filter + "'");
    cfg.experiment.attacks = kept;
  }
  if (num_s_filter > 0) cfg.experiment.num_s_sweep = {num_s_filter};
  init_run_dir(out, cfg, "evaluate");
  DetectionReport report = run_experiment(cfg.experiment);
  report.plan_digest = cfg.digest();
  report.save_json(fs::path(out) / "report.json");
  emit_reports(report, fs::path(out) / "reports");
  std::cout << "evaluated " << report.rows.size() << " detection rows; "
            << "target test accuracy " << report.target_test_accuracy << "\n";
  for (const auto& row : report.rows)
    std::cout << "  " << row.attack << " num_s=" << row.num_s << " seq="
              << row.sequence << " delta=" << row.delta << " fpr=" << row.fpr
              << " detection=" << row.detection_rate << " auc=" << row.auc
              << "\n";
  return 0;
}

int cmd_report(const std::string& report_path, const std::string& out) {
  const DetectionReport report = DetectionReport::load_json(report_path);
  emit_reports(report, out);
  std::cout << "wrote report tables to " << out << "\n";
  return 0;
}

int cmd_serve(const std::string& model_path, const std::string& calibration_path,
              const std::string& listen, const std::string& policy,
              const std::string& action, const std::string& snapshot_out) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos)
    throw ValidationError("listen endpoint must be host:port");
  ServiceConfig scfg;
  scfg.listen_host = listen.substr(0, colon);
  scfg.port = std::stoi(listen.substr(colon + 1));
  scfg.window_policy = window_policy_from_string(policy);
  scfg.action_on_flag = flag_action_from_string(action);
  if (!snapshot_out.empty()) scfg.shutdown_snapshot_path = snapshot_out;

  DetectionServer server(SnapshotModel::load(model_path),
                         CalibrationResult::load(calibration_path), scfg);
  server.start();
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::cout << "serving on " << scfg.listen_host << ":" << server.port()
            << " (policy " << policy << ", action " << action << ")\n";
  while (!g_stop_requested)
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  std::cout << "shut down\n";
  return 0;
}

int cmd_replay(const std::string& connect, const std::string& stream_path,
               const std::string& user, const std::string& out) {
  const auto colon = connect.rfind(':');
  if (colon == std::string::npos)
    throw ValidationError("connect endpoint must be host:port");
  const std::string host = connect.substr(0, colon);
  const int port = std::stoi(connect.substr(colon + 1));
  const AttackStream stream = AttackStream::read_csv(stream_path);
  const auto responses = replay_stream(host, port, user, stream.features);
  std::ostream* sink = &std::cout;
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw std::runtime_error("cannot write " + out);
    sink = &file;
  }
  for (const auto& r : responses) *sink << r.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hoda: hardness-degree monitoring for model extraction detection"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, model_path, pool_path,
      matrix_path, sequence = "full", attack_name, report_path,
      calibration_path, listen = "127.0.0.1:7788", policy = "tumbling",
      action = "flag_only", snapshot_out, connect, stream_path,
      user = "replay", replay_out, attack_filter;
  int num_s_filter = 0;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen->add_option("--config", config_path, "pipeline config JSON");
  gen->add_option("--out", out_dir, "run directory")->required();

  auto* train = app.add_subcommand("train", "train the snapshot model");
  train->add_option("--config", config_path, "pipeline config JSON");
  train->add_option("--data", data_dir, "gen-data run directory")->required();
  train->add_option("--out", out_dir, "run directory")->required();

  auto* pm = app.add_subcommand("predict-matrix",
                                "predict a pool across a subclassifier sequence");
  pm->add_option("--config", config_path, "pipeline config JSON");
  pm->add_option("--model", model_path, "model file")->required();
  pm->add_option("--pool", pool_path, "pool CSV")->required();
  pm->add_option("--sequence", sequence, "full | hoda-11 | hoda-5");
  pm->add_option("--out", out_dir, "run directory")->required();

  auto* cal = app.add_subcommand("calibrate", "build H_n and delta");
  cal->add_option("--config", config_path, "pipeline config JSON");
  cal->add_option("--matrix", matrix_path, "prediction matrix CSV")->required();
  cal->add_option("--out", out_dir, "run directory")->required();

  auto* att = app.add_subcommand("attack", "generate an attack stream");
  att->add_option("--config", config_path, "pipeline config JSON");
  att->add_option("--model", model_path, "target model file")->required();
  att->add_option("--pool", pool_path, "user pool CSV (seeds / normal pool)")
      ->required();
  att->add_option("--name", attack_name, "attack name from the config")
      ->required();
  att->add_option("--out", out_dir, "run directory")->required();

  auto* ev = app.add_subcommand("evaluate", "run the full experiment harness");
  ev->add_option("--config", config_path, "pipeline config JSON");
  ev->add_option("--out", out_dir, "run directory")->required();
  ev->add_option("--attack", attack_filter, "restrict to one attack name");
  ev->add_option("--num-s", num_s_filter, "restrict the num_s sweep");

  auto* rep = app.add_subcommand("report", "emit CSV/SVG tables from a report");
  rep->add_option("--in", report_path, "report.json from evaluate")->required();
  rep->add_option("--out", out_dir, "output directory")->required();

  auto* srv = app.add_subcommand("serve", "run the detection gateway");
  srv->add_option("--model", model_path, "model file")->required();
  srv->add_option("--calibration", calibration_path, "calibration file")
      ->required();
  srv->add_option("--listen", listen, "host:port (default 127.0.0.1:7788)");
  srv->add_option("--policy", policy, "tumbling | cumulative");
  srv->add_option("--action", action, "flag_only | reject_user");
  srv->add_option("--snapshot-out", snapshot_out,
                  "user-state snapshot written on shutdown");

  auto* rp = app.add_subcommand("replay", "replay a stream file against a server");
  rp->add_option("--connect", connect, "host:port")->required();
  rp->add_option("--stream", stream_path, "attack-stream CSV")->required();
  rp->add_option("--user", user, "user id to replay as");
  rp->add_option("--out", replay_out, "write verdict records here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
    if (train->parsed()) return cmd_train(config_path, data_dir, out_dir);
    if (pm->parsed())
      return cmd_predict_matrix(config_path, model_path, pool_path, sequence,
                                out_dir);
    if (cal->parsed()) return cmd_calibrate(config_path, matrix_path, out_dir);
    if (att->parsed())
      return cmd_attack(config_path, model_path, pool_path, attack_name, out_dir);
    if (ev->parsed())
      return cmd_evaluate(config_path, out_dir, attack_filter, num_s_filter);
    if (rep->parsed()) return cmd_report(report_path, out_dir);
    if (srv->parsed())
      return cmd_serve(model_path, calibration_path, listen, policy, action,
                       snapshot_out);
    if (rp->parsed()) return cmd_replay(connect, stream_path, user, replay_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
