// choplab: train, chop, and measure small transformer encoders on
// synthetic pointer-chase tasks.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "choplab/ablation.hpp"
#include "choplab/checkpoint.hpp"
#include "choplab/gate.hpp"
#include "choplab/report.hpp"
#include "choplab/runconfig.hpp"
#include "choplab/train.hpp"

namespace fs = std::filesystem;
using namespace choplab;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::size_t workers = 0;  // 0 = resolve from env / default 1
};

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required = true) {
  auto* c = cmd->add_option("--config", a.config_path, "run configuration file");
  if (config_required) c->required();
  cmd->add_option("--seed", a.seed, "override the config seed");
  cmd->add_option("--out", a.out_dir, "output directory");
  cmd->add_option("--workers", a.workers,
                  "evaluation threads (default: CHOPLAB_WORKERS or 1)");
}

std::size_t resolve_workers(std::size_t flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("CHOPLAB_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

RunConfig load_config(const CommonArgs& a) {
  RunConfig cfg = RunConfig::parse_file(a.config_path);
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  return cfg;
}

std::string artifact_path(const CommonArgs& a, const std::string& stem,
                          const RunConfig& cfg, const std::string& ext) {
  fs::create_directories(a.out_dir);
  std::ostringstream name;
  name << stem << '_' << cfg.hash() << '_' << cfg.seed << ext;
  return (fs::path(a.out_dir) / name.str()).string();
}

RunManifest start_manifest(const std::string& command, const RunConfig& cfg) {
  RunManifest m;
  m.command = command;
  m.config_hash = cfg.hash();
  m.seed = cfg.seed;
  m.code_version = code_version();
  m.started = current_timestamp();
  return m;
}

void finish_manifest(RunManifest& m, const CommonArgs& a, const RunConfig& cfg) {
  m.finished = current_timestamp();
  m.write(artifact_path(a, "manifest_" + m.command, cfg, ".json"));
}

EncoderParams load_model(const std::string& path, const RunConfig& cfg) {
  std::string stored_hash;
  EncoderParams params = load_encoder_checkpoint(path, &stored_hash);
  if (stored_hash != cfg.hash())
    throw CheckpointError("checkpoint " + path + " was written under config hash " +
                          stored_hash + ", current config hashes to " + cfg.hash());
  if (!(params.config == cfg.encoder))
    throw CheckpointError("checkpoint encoder shape disagrees with the config");
  return params;
}

int run_train_model(const CommonArgs& a) {
  RunConfig cfg = load_config(a);
  RunManifest manifest = start_manifest("train-model", cfg);

  Dataset data = cfg.build_dataset();
  Dataset ramp = cfg.build_ramp_dataset();
  EncoderParams params = EncoderParams::init(cfg.encoder, cfg.seed);
  align_pointer_embeddings(params, data.specs.front());
  TrainOptions opt = cfg.train;
  opt.seed = cfg.seed;
  opt.log = &std::cout;
  TrainResult result = train_encoder_staged(data, ramp, params, opt);

  std::string model_path = artifact_path(a, "model", cfg, ".json");
  save_encoder_checkpoint(model_path, result.best, cfg.hash(), cfg.seed);
  manifest.artifacts.push_back(model_path);
  manifest.metrics.emplace_back("best_val_acc", result.best_val_acc);

  EvalReport test = eval_by_type(result.best, ChopPlan::identity(cfg.encoder),
                                 data.test);
  manifest.metrics.emplace_back("test_acc", test.overall);
  std::cout << "best val acc " << result.best_val_acc << ", test acc "
            << test.overall << "\n";
  finish_manifest(manifest, a, cfg);
  if (result.diverged) {
    std::cerr << "training diverged; checkpoint holds the last good snapshot\n";
    return kDivergence;
  }
  return kOk;
}

int run_train_gate(const CommonArgs& a, const std::string& model_path) {
  RunConfig cfg = load_config(a);
  RunManifest manifest = start_manifest("train-gate", cfg);

  Dataset data = cfg.build_dataset();
  EncoderParams params = load_model(model_path, cfg);
  GateParams gate = GateParams::init(cfg.encoder, cfg.gate_per_layer,
                                     cfg.gate_lambda, cfg.seed);
  GateTrainOptions opt = cfg.gate_train;
  opt.seed = cfg.seed;
  GateTrainResult result = train_gate(data, params, gate, opt);

  std::string gate_path = artifact_path(a, "gate", cfg, ".json");
  save_gate_checkpoint(gate_path, gate, cfg.encoder, cfg.hash(), cfg.seed);
  manifest.artifacts.push_back(gate_path);
  if (!result.loss_history.empty())
    manifest.metrics.emplace_back("final_loss", result.loss_history.back());
  std::cout << "gate saved to " << gate_path << "\n";
  finish_manifest(manifest, a, cfg);
  return kOk;
}

std::vector<double> depths_of(const RunConfig& cfg) {
  std::vector<double> d;
  for (const auto& spec : cfg.task_specs()) d.push_back(static_cast<double>(spec.depth));
  return d;
}

void emit_matrix(const CommonArgs& a, const RunConfig& cfg, RunManifest& manifest,
                 const std::string& stem, AblationMatrix m,
                 const std::vector<double>* depths = nullptr) {
  m.seed = cfg.seed;
  m.config_hash = cfg.hash();
  std::string csv = artifact_path(a, stem, cfg, ".csv");
  write_matrix_csv(csv, m);
  manifest.artifacts.push_back(csv);

  EchelonStat stat;
  const EchelonStat* stat_ptr = nullptr;
  if (depths) {
    try {
      stat = echelon_statistic(m, *depths);
      stat_ptr = &stat;
      manifest.metrics.emplace_back(stem + "_spearman_rho", stat.spearman_rho);
    } catch (const std::invalid_argument&) {
      // fewer than two rows with defined centroids; skip the statistic
    }
  }
  std::string sidecar = artifact_path(a, stem, cfg, ".meta.json");
  write_matrix_sidecar(sidecar, m, stat_ptr, depths);
  manifest.artifacts.push_back(sidecar);
  std::cout << render_heatmap(m);
}

int run_sweep(const CommonArgs& a, const std::string& which,
              const std::string& model_path, const std::string& gate_path,
              const std::vector<double>& thresholds_flag) {
  RunConfig cfg = load_config(a);
  RunManifest manifest = start_manifest("sweep-" + which, cfg);
  std::size_t workers = resolve_workers(a.workers);

  Dataset data = cfg.build_dataset();
  EncoderParams params = load_model(model_path, cfg);
  std::vector<double> depths = depths_of(cfg);

  if (which == "head-remove" || which == "head-keep") {
    HeadSweepResult r = which == "head-remove"
                            ? remove_one_head_sweep(params, data.test, workers)
                            : keep_one_head_sweep(params, data.test, workers);
    emit_matrix(a, cfg, manifest, which, r.full);
    emit_matrix(a, cfg, manifest, which + "-perlayer", r.per_layer_extreme, &depths);
    manifest.metrics.emplace_back("baseline_acc", r.baseline.overall);
  } else if (which == "layer-remove" || which == "layer-keep") {
    LayerSweepResult r = which == "layer-remove"
                             ? remove_one_layer_sweep(params, data.test, workers)
                             : keep_one_layer_sweep(params, data.test, workers);
    emit_matrix(a, cfg, manifest, which, r.matrix, &depths);
    manifest.metrics.emplace_back("baseline_acc", r.baseline.overall);
  } else if (which == "threshold") {
    if (gate_path.empty())
      throw ConfigError("sweep --which threshold needs --gate");
    GateParams gate = load_gate_checkpoint(gate_path);
    std::vector<double> grid =
        thresholds_flag.empty() ? cfg.thresholds : thresholds_flag;
    std::vector<ThresholdRow> rows =
        threshold_sweep(params, gate, data.test, grid, cfg.seed);
    std::string csv = artifact_path(a, "threshold", cfg, ".csv");
    write_threshold_csv(csv, rows);
    manifest.artifacts.push_back(csv);
    std::string sidecar = artifact_path(a, "threshold", cfg, ".meta.json");
    write_threshold_sidecar(sidecar, rows, cfg.hash(), cfg.seed);
    manifest.artifacts.push_back(sidecar);
    for (const auto& r : rows)
      std::cout << "theta " << r.theta << ": acc " << r.report.overall
                << ", kept_fraction " << r.kept_fraction << " (random baseline "
                << r.random_baseline.overall << ")\n";
  } else {
    throw ConfigError("unknown sweep kind: " + which);
  }
  finish_manifest(manifest, a, cfg);
  return kOk;
}

int run_report(const std::string& in_path, const std::vector<double>& depths) {
  AblationMatrix m = read_matrix_csv(in_path);
  std::cout << render_heatmap(m);
  if (!depths.empty()) {
    try {
      EchelonStat stat = echelon_statistic(m, depths);
      std::cout << "centroids:";
      for (const auto& c : stat.centroids)
        std::cout << ' ' << (c ? format_g17(*c) : std::string("undef"));
      std::cout << "\nspearman_rho: " << format_g17(stat.spearman_rho) << "\n";
    } catch (const std::invalid_argument& e) {
      std::cout << "echelon statistic undefined: " << e.what() << "\n";
    }
  }
  return kOk;
}

int run_dump_attention(const CommonArgs& a, const std::string& model_path,
                       const std::string& gate_path, double threshold) {
  RunConfig cfg = load_config(a);
  RunManifest manifest = start_manifest("dump-attention", cfg);

  Dataset data = cfg.build_dataset();
  EncoderParams params = load_model(model_path, cfg);
  GateParams gate;
  bool use_gate = !gate_path.empty();
  if (use_gate) gate = load_gate_checkpoint(gate_path);

  // One instance per task type, the first of each in the test split.
  std::vector<bool> seen(cfg.task_types, false);
  for (const auto& inst : data.test) {
    if (seen[static_cast<std::size_t>(inst.type_id)]) continue;
    seen[static_cast<std::size_t>(inst.type_id)] = true;
    ChopPlan plan = ChopPlan::identity(cfg.encoder);
    if (use_gate) {
      ForwardTrace trace = encoder_forward(inst.tokens, params, plan);
      plan = apply_threshold(layer_scores(trace, gate, cfg.encoder), threshold,
                             cfg.encoder);
    }
    std::string path = artifact_path(
        a, "attention_type" + std::to_string(inst.type_id), cfg, ".csv");
    dump_attention(params, plan, inst, path);
    manifest.artifacts.push_back(path);
  }
  finish_manifest(manifest, a, cfg);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured chopping lab for small transformer encoders"};
  app.require_subcommand(1);

  CommonArgs train_args, gate_args, sweep_args, dump_args;
  std::string gate_model, sweep_model, sweep_gate, sweep_which, dump_model, dump_gate;
  std::string report_in;
  std::vector<double> sweep_thresholds, report_depths;
  double dump_threshold = 0.5;

  auto* train_cmd = app.add_subcommand("train-model", "train an encoder");
  add_common(train_cmd, train_args);

  auto* gate_cmd = app.add_subcommand("train-gate", "train the chopping gate");
  add_common(gate_cmd, gate_args);
  gate_cmd->add_option("--model", gate_model, "encoder checkpoint")->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "run an ablation sweep");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd
      ->add_option("--which", sweep_which,
                   "head-remove|head-keep|layer-remove|layer-keep|threshold")
      ->required();
  sweep_cmd->add_option("--model", sweep_model, "encoder checkpoint")->required();
  sweep_cmd->add_option("--gate", sweep_gate, "gate checkpoint (threshold sweep)");
  sweep_cmd->add_option("--threshold", sweep_thresholds,
                        "threshold grid override (threshold sweep)");

  auto* report_cmd = app.add_subcommand("report", "render a sweep CSV");
  report_cmd->add_option("--in", report_in, "matrix CSV")->required();
  report_cmd->add_option("--depths", report_depths, "task depth per row");

  auto* dump_cmd = app.add_subcommand("dump-attention", "dump attention maps");
  add_common(dump_cmd, dump_args);
  dump_cmd->add_option("--model", dump_model, "encoder checkpoint")->required();
  dump_cmd->add_option("--gate", dump_gate, "gate checkpoint (optional)");
  dump_cmd->add_option("--threshold", dump_threshold, "gate threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (train_cmd->parsed()) return run_train_model(train_args);
    if (gate_cmd->parsed()) return run_train_gate(gate_args, gate_model);
    if (sweep_cmd->parsed())
      return run_sweep(sweep_args, sweep_which, sweep_model, sweep_gate,
                       sweep_thresholds);
    if (report_cmd->parsed()) return run_report(report_in, report_depths);
    if (dump_cmd->parsed())
      return run_dump_attention(dump_args, dump_model, dump_gate, dump_threshold);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kCheckpointError;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  }
  return kUsageError;
}
