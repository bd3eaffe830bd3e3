// Command-line front end: synth / train-teacher / distill-student /
// evaluate / bench. Options come from flags or a flat JSON config file;
// explicit flags win over config file values.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "s2p/bench.hpp"
#include "s2p/checkpoint.hpp"
#include "s2p/distill.hpp"
#include "s2p/evaluate.hpp"
#include "s2p/pipeline.hpp"
#include "s2p/synth.hpp"
#include "s2p/telemetry.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config file must hold a JSON object");
  return j;
}

// Config values apply only where the flag was not given on the command line.
template <typename T>
void config_override(const json& cfg, const CLI::Option* opt, const std::string& key,
                     T& var) {
  if (opt != nullptr && opt->count() > 0) return;
  const auto it = cfg.find(key);
  if (it == cfg.end()) return;
  try {
    var = it->get<T>();
  } catch (const json::exception&) {
    throw std::runtime_error("config key '" + key + "' has the wrong type");
  }
}

// Timestamped directory under `base`, suffixed if the name is taken.
fs::path make_run_dir(const std::string& base, const std::string& kind) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&tt));
  fs::create_directories(base);
  for (int i = 0;; ++i) {
    fs::path dir = fs::path(base) /
                   (kind + "-" + stamp + (i == 0 ? "" : "-" + std::to_string(i)));
    if (!fs::exists(dir)) {
      fs::create_directories(dir);
      return dir;
    }
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<s2p::TelemetryRecord> load_series(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("data file not found: " + path);
  return s2p::read_csv_file(path);
}

struct CommonOpts {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir = "runs";
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--seed", c.seed, "RNG seed");
  cmd->add_option("--config", c.config_path, "JSON config file (flat keys)");
  cmd->add_option("--out-dir", c.out_dir, "output directory");
}

struct PipelineFlags {
  int L = 360;
  int H = 15;
  int stride = 1;
  int max_gap = 5;
  bool time_encodings = false;

  s2p::PipelineOptions to_options() const {
    s2p::PipelineOptions o;
    o.L = L;
    o.H = H;
    o.stride = stride;
    o.max_gap_minutes = max_gap;
    o.time_encodings = time_encodings;
    return o;
  }
};

void print_report_table(const s2p::EvalReport& r) {
  std::cerr << "  mode       " << r.mode << '\n'
            << "  samples    " << r.n_samples << '\n'
            << "  MAE  [%]   " << r.mae_pct << '\n'
            << "  RMSE [%]   " << r.rmse_pct << '\n';
}

// -----------------------------------------------------------------------
// synth

int run_synth(const CommonOpts& common, const json& cfg, CLI::App* cmd, int minutes,
              std::string out_path) {
  s2p::SynthConfig scfg;
  scfg.seed = common.seed;
  scfg.n_minutes = minutes;
  config_override(cfg, cmd->get_option_no_throw("--minutes"), "minutes",
                  scfg.n_minutes);
  config_override(cfg, cmd->get_option_no_throw("--seed"), "seed", scfg.seed);
  if (out_path.empty()) out_path = (fs::path(common.out_dir) / "synth.csv").string();

  const auto records = s2p::generate(scfg);
  if (fs::path(out_path).has_parent_path())
    fs::create_directories(fs::path(out_path).parent_path());
  s2p::write_csv_file(out_path, records);
  std::cerr << "wrote " << records.size() << " records to " << out_path << '\n';
  return 0;
}

// -----------------------------------------------------------------------
// train-teacher

int run_train_teacher(const CommonOpts& common, const json& cfg, CLI::App* cmd,
                      const std::string& data_path, PipelineFlags& pf,
                      s2p::TeacherConfig& tcfg, s2p::TrainOptions& topt) {
  auto ov = [&](const char* flag, const char* key, auto& var) {
    config_override(cfg, cmd->get_option_no_throw(flag), key, var);
  };
  ov("--L", "L", pf.L);
  ov("--H", "H", pf.H);
  ov("--stride", "stride", pf.stride);
  ov("--max-gap", "max_gap", pf.max_gap);
  ov("--d-m", "d_m", tcfg.d_m);
  ov("--n-layers", "n_layers", tcfg.n_layers);
  ov("--n-heads", "n_heads", tcfg.n_heads);
  ov("--d-ff", "d_ff", tcfg.d_ff);
  ov("--epochs", "epochs", topt.epochs);
  ov("--batch", "batch", topt.batch);
  ov("--lr", "lr", topt.opt.lr);
  ov("--patience", "patience", topt.patience);
  tcfg.L = pf.L;
  tcfg.H = pf.H;
  tcfg.d_u = 1 + s2p::kFeatureChannels + (pf.time_encodings ? 2 : 0);
  tcfg.validate();
  topt.seed = common.seed;

  const auto series = load_series(data_path);
  const auto data = s2p::prepare_dataset(series, pf.to_options());
  if (data.train.empty() || data.val.empty())
    throw std::runtime_error("not enough data for the requested window sizes");

  const fs::path run_dir = make_run_dir(common.out_dir, "teacher");
  write_json_file(run_dir / "config.json",
                  {{"subcommand", "train-teacher"},
                   {"data", data_path},
                   {"seed", common.seed},
                   {"L", tcfg.L},
                   {"H", tcfg.H},
                   {"d_u", tcfg.d_u},
                   {"d_m", tcfg.d_m},
                   {"n_layers", tcfg.n_layers},
                   {"n_heads", tcfg.n_heads},
                   {"d_ff", tcfg.d_ff},
                   {"stride", pf.stride},
                   {"max_gap", pf.max_gap},
                   {"epochs", topt.epochs},
                   {"batch", topt.batch},
                   {"lr", topt.opt.lr},
                   {"patience", topt.patience},
                   {"scaler_fingerprint", data.scaler_fingerprint}});

  std::cerr << "training teacher on " << data.train.size() << " windows ("
            << tcfg.param_count() << " params)\n";
  auto result = s2p::train_teacher(data.train, data.val, tcfg, topt);

  s2p::write_metrics_csv((run_dir / "metrics.csv").string(), result.history);
  s2p::save_checkpoint(result.model, (run_dir / "best.ckpt").string());
  s2p::TeacherModel final_model = result.model;
  s2p::apply_param_snapshot(final_model, result.final_params);
  s2p::save_checkpoint(final_model, (run_dir / "final.ckpt").string());

  const auto& best = result.history[static_cast<std::size_t>(result.best_epoch - 1)];
  std::cout << json{{"run_dir", run_dir.string()},
                    {"best_epoch", result.best_epoch},
                    {"val_mae_pct", 100.0 * best.val_mae},
                    {"val_rmse_pct", 100.0 * best.val_rmse}}
                   .dump(2)
            << '\n';
  return 0;
}

// -----------------------------------------------------------------------
// distill-student

int run_distill(const CommonOpts& common, const json& cfg, CLI::App* cmd,
                const std::string& data_path, const std::string& teacher_path,
                PipelineFlags& pf, s2p::StudentConfig& scfg, s2p::DistillConfig& dcfg) {
  auto ov = [&](const char* flag, const char* key, auto& var) {
    config_override(cfg, cmd->get_option_no_throw(flag), key, var);
  };
  ov("--stride", "stride", pf.stride);
  ov("--max-gap", "max_gap", pf.max_gap);
  ov("--d-h", "d_h", scfg.d_h);
  ov("--d-z", "d_z", scfg.d_z);
  ov("--gamma", "gamma", dcfg.gamma);
  ov("--lambda", "lambda", dcfg.lambda);
  ov("--epochs", "epochs", dcfg.train.epochs);
  ov("--batch", "batch", dcfg.train.batch);
  ov("--lr", "lr", dcfg.train.opt.lr);
  ov("--patience", "patience", dcfg.train.patience);
  dcfg.train.seed = common.seed;

  if (!fs::exists(teacher_path))
    throw std::runtime_error("teacher checkpoint not found: " + teacher_path);
  const s2p::TeacherModel teacher = s2p::load_teacher(teacher_path);
  pf.L = teacher.cfg.L;
  pf.H = teacher.cfg.H;
  scfg.d_u = teacher.cfg.d_u;
  scfg.validate();

  const auto series = load_series(data_path);
  const auto data = s2p::prepare_dataset(series, pf.to_options());
  if (data.train.empty() || data.val.empty())
    throw std::runtime_error("not enough data for the requested window sizes");

  const fs::path run_dir = make_run_dir(common.out_dir, "student");
  write_json_file(run_dir / "config.json",
                  {{"subcommand", "distill-student"},
                   {"data", data_path},
                   {"teacher", teacher_path},
                   {"seed", common.seed},
                   {"L", pf.L},
                   {"H", pf.H},
                   {"d_u", scfg.d_u},
                   {"d_h", scfg.d_h},
                   {"d_z", scfg.d_z},
                   {"gamma", dcfg.gamma},
                   {"lambda", dcfg.lambda},
                   {"use_logit", dcfg.use_logit},
                   {"stride", pf.stride},
                   {"max_gap", pf.max_gap},
                   {"epochs", dcfg.train.epochs},
                   {"batch", dcfg.train.batch},
                   {"lr", dcfg.train.opt.lr},
                   {"patience", dcfg.train.patience},
                   {"scaler_fingerprint", data.scaler_fingerprint}});

  std::cerr << "distilling student on " << data.train.size() << " windows ("
            << scfg.param_count() << " params)\n";
  auto result = s2p::distill_student(data.train, data.val, teacher, scfg, dcfg);

  s2p::write_metrics_csv((run_dir / "metrics.csv").string(), result.history);
  s2p::save_checkpoint(result.model, (run_dir / "best.ckpt").string());
  s2p::StudentModel final_model = result.model;
  s2p::apply_param_snapshot(final_model, result.final_params);
  s2p::save_checkpoint(final_model, (run_dir / "final.ckpt").string());

  const auto& best = result.history[static_cast<std::size_t>(result.best_epoch - 1)];
  std::cout << json{{"run_dir", run_dir.string()},
                    {"best_epoch", result.best_epoch},
                    {"val_mae_pct", 100.0 * best.val_mae},
                    {"val_rmse_pct", 100.0 * best.val_rmse}}
                   .dump(2)
            << '\n';
  return 0;
}

// -----------------------------------------------------------------------
// evaluate

int run_evaluate(const json& cfg, CLI::App* cmd, const std::string& model_path,
                 const std::string& data_path, std::string mode, PipelineFlags& pf,
                 const std::string& trace_path, int trace_steps, bool skip_embed_head,
                 bool watts) {
  auto ov = [&](const char* flag, const char* key, auto& var) {
    config_override(cfg, cmd->get_option_no_throw(flag), key, var);
  };
  ov("--L", "L", pf.L);
  ov("--H", "H", pf.H);
  ov("--max-gap", "max_gap", pf.max_gap);
  ov("--mode", "mode", mode);

  if (!fs::exists(model_path))
    throw std::runtime_error("model checkpoint not found: " + model_path);
  const s2p::ModelKind kind = s2p::checkpoint_kind(model_path);

  if (kind == s2p::ModelKind::teacher) {
    const s2p::TeacherModel m = s2p::load_teacher(model_path);
    pf.L = m.cfg.L;
    pf.H = m.cfg.H;
  }
  const auto series = load_series(data_path);
  const auto data = s2p::prepare_dataset(series, pf.to_options());
  if (data.test.empty()) throw std::runtime_error("empty test split");

  s2p::EvalReport report;
  if (kind == s2p::ModelKind::teacher) {
    const s2p::TeacherModel m = s2p::load_teacher(model_path);
    if (mode == "one-step") {
      report = s2p::eval_one_step(m, data.test);
    } else if (mode == "trajectory") {
      report = s2p::eval_trajectory(m, data.test);
    } else {
      throw std::runtime_error("mode '" + mode + "' not supported for teacher models");
    }
    if (!trace_path.empty()) s2p::export_trace(m, data.test, trace_steps, trace_path);
  } else {
    const s2p::StudentModel m = s2p::load_student(model_path, skip_embed_head);
    if (mode == "one-step") {
      report = s2p::eval_one_step(m, data.test);
    } else if (mode == "rolling") {
      report = s2p::eval_student_rolling(m, data.test);
    } else {
      throw std::runtime_error("mode '" + mode + "' not supported for student models");
    }
    if (!trace_path.empty()) s2p::export_trace(m, data.test, trace_steps, trace_path);
  }

  json j = report.to_json();
  if (watts) {
    // undo the min-max scaling of the power channel: percent -> watts
    const double range = data.scaler.hi[0] - data.scaler.lo[0];
    j["mae_watts"] = report.mae_pct / 100.0 * range;
    j["rmse_watts"] = report.rmse_pct / 100.0 * range;
  }
  std::cout << j.dump(2) << '\n';
  print_report_table(report);
  return 0;
}

// -----------------------------------------------------------------------
// bench

int run_bench(const CommonOpts& common, const json& cfg, CLI::App* cmd,
              const std::string& model_path, int batch, int warmup, int iters) {
  auto ov = [&](const char* flag, const char* key, auto& var) {
    config_override(cfg, cmd->get_option_no_throw(flag), key, var);
  };
  ov("--batch", "batch", batch);
  ov("--warmup", "warmup", warmup);
  ov("--iters", "iters", iters);
  if (!fs::exists(model_path))
    throw std::runtime_error("model checkpoint not found: " + model_path);
  const auto r = s2p::bench_latency(model_path, batch, warmup, iters, common.seed);
  std::cout << r.to_json().dump(2) << '\n';
  std::cerr << "  model         " << r.model_kind << '\n'
            << "  params        " << r.params << '\n'
            << "  fp32 mem [KB] " << r.fp32_mem_kb << '\n'
            << "  on disk  [KB] " << r.on_disk_kb << '\n'
            << "  mean [ms]     " << r.latency_mean_ms << '\n'
            << "  p95  [ms]     " << r.latency_p95_ms << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequence-to-point load forecasting: teacher training, student "
               "distillation, evaluation, deployment benchmarks"};
  app.require_subcommand(1);

  CommonOpts common;

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic telemetry CSV");
  int synth_minutes = 20000;
  std::string synth_out;
  add_common(synth, common);
  synth->add_option("--minutes", synth_minutes, "series length in minutes");
  synth->add_option("-o,--output", synth_out, "output CSV path");

  // train-teacher
  auto* tt = app.add_subcommand("train-teacher", "train the transformer teacher");
  std::string tt_data;
  PipelineFlags tt_pf;
  s2p::TeacherConfig tcfg;
  s2p::TrainOptions topt;
  add_common(tt, common);
  tt->add_option("--data", tt_data, "telemetry CSV")->required();
  tt->add_option("--L", tt_pf.L, "history length (minutes)");
  tt->add_option("--H", tt_pf.H, "forecast horizon (minutes)");
  tt->add_option("--stride", tt_pf.stride, "training window stride");
  tt->add_option("--max-gap", tt_pf.max_gap, "forward-fill limit (minutes)");
  tt->add_option("--d-m", tcfg.d_m, "model width");
  tt->add_option("--n-layers", tcfg.n_layers, "encoder blocks");
  tt->add_option("--n-heads", tcfg.n_heads, "attention heads");
  tt->add_option("--d-ff", tcfg.d_ff, "feed-forward width");
  tt->add_option("--epochs", topt.epochs, "max epochs");
  tt->add_option("--batch", topt.batch, "minibatch size");
  tt->add_option("--lr", topt.opt.lr, "learning rate");
  tt->add_option("--patience", topt.patience, "early-stop patience");

  // distill-student
  auto* ds = app.add_subcommand("distill-student",
                                "distill a student from a frozen teacher");
  std::string ds_data, ds_teacher;
  PipelineFlags ds_pf;
  s2p::StudentConfig scfg;
  s2p::DistillConfig dcfg;
  add_common(ds, common);
  ds->add_option("--data", ds_data, "telemetry CSV")->required();
  ds->add_option("--teacher", ds_teacher, "teacher checkpoint")->required();
  ds->add_option("--stride", ds_pf.stride, "training window stride");
  ds->add_option("--max-gap", ds_pf.max_gap, "forward-fill limit (minutes)");
  ds->add_option("--d-h", scfg.d_h, "student hidden width");
  ds->add_option("--d-z", scfg.d_z, "student embedding width");
  ds->add_option("--gamma", dcfg.gamma, "horizon decay for the soft target");
  ds->add_option("--lambda", dcfg.lambda, "feature-loss weight");
  ds->add_flag("--no-logit", [&dcfg](std::int64_t) { dcfg.use_logit = false; },
               "drop the soft-target loss term");
  ds->add_flag("--no-cache", [&dcfg](std::int64_t) { dcfg.cache_targets = false; },
               "recompute teacher targets every epoch");
  ds->add_option("--epochs", dcfg.train.epochs, "max epochs");
  ds->add_option("--batch", dcfg.train.batch, "minibatch size");
  ds->add_option("--lr", dcfg.train.opt.lr, "learning rate");
  ds->add_option("--patience", dcfg.train.patience, "early-stop patience");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "metrics on the test split");
  std::string ev_model, ev_data, ev_mode = "one-step", ev_trace;
  PipelineFlags ev_pf;
  int ev_trace_steps = 300;
  bool ev_skip_embed = false, ev_watts = false;
  add_common(ev, common);
  ev->add_option("--model", ev_model, "checkpoint to evaluate")->required();
  ev->add_option("--data", ev_data, "telemetry CSV")->required();
  ev->add_option("--mode", ev_mode, "one-step | trajectory | rolling");
  ev->add_option("--L", ev_pf.L, "history length (students only)");
  ev->add_option("--H", ev_pf.H, "horizon (students only)");
  ev->add_option("--max-gap", ev_pf.max_gap, "forward-fill limit (minutes)");
  ev->add_option("--trace", ev_trace, "write a t,truth,pred CSV here");
  ev->add_option("--trace-steps", ev_trace_steps, "trace length");
  ev->add_flag("--skip-embed-head", ev_skip_embed,
               "load students without the distillation embedding head");
  ev->add_flag("--watts", ev_watts, "also report denormalized errors in watts");

  // bench
  auto* be = app.add_subcommand("bench", "deployment measurements on a checkpoint");
  std::string be_model;
  int be_batch = 1, be_warmup = 50, be_iters = 1000;
  add_common(be, common);
  be->add_option("--model", be_model, "checkpoint to benchmark")->required();
  be->add_option("--batch", be_batch, "inputs per timed iteration");
  be->add_option("--warmup", be_warmup, "untimed warmup iterations");
  be->add_option("--iters", be_iters, "timed iterations");

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const json cfg = load_config_file(common.config_path);
    config_override(cfg, cmd->get_option_no_throw("--seed"), "seed", common.seed);
    config_override(cfg, cmd->get_option_no_throw("--out-dir"), "out_dir",
                    common.out_dir);

    if (cmd == synth)
      return run_synth(common, cfg, synth, synth_minutes, synth_out);
    if (cmd == tt)
      return run_train_teacher(common, cfg, tt, tt_data, tt_pf, tcfg, topt);
    if (cmd == ds)
      return run_distill(common, cfg, ds, ds_data, ds_teacher, ds_pf, scfg, dcfg);
    if (cmd == ev)
      return run_evaluate(cfg, ev, ev_model, ev_data, ev_mode, ev_pf, ev_trace,
                          ev_trace_steps, ev_skip_embed, ev_watts);
    if (cmd == be)
      return run_bench(common, cfg, be, be_model, be_batch, be_warmup, be_iters);
    throw std::logic_error("unhandled subcommand");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
