// Copyright 2026 The GDB Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: baseline, train, binarize, evaluate.
//
// Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error,
// 3 numerical failure. Logs go to `err`; `out` carries only results.

#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "gdb/checkpoint.hpp"
#include "gdb/classical.hpp"
#include "gdb/config.hpp"
#include "gdb/metrics.hpp"
#include "gdb/pipeline.hpp"

namespace gdb {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2, kExitNumerical = 3 };

namespace cli {

namespace fs = std::filesystem;

struct BaselineArgs {
  std::string method;
  fs::path input, output;
  std::optional<int> window;
  std::optional<double> k;
};

struct TrainArgs {
  fs::path data_dir, out_checkpoint, config, resume, log;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
};

struct BinarizeArgs {
  fs::path checkpoint, input, output;
  bool no_multiscale = false;
  int iterate = 0;
  std::optional<int> patch, stride, global_size;
  int threads = 0;
};

struct EvaluateArgs {
  fs::path pred_dir, gt_dir, report;
};

inline void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

inline void require_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

inline void require_parent(const fs::path& p) {
  const fs::path parent = fs::absolute(p).parent_path();
  if (!fs::is_directory(parent)) throw IoError("output directory does not exist: " + parent.string());
}

inline int baseline(const BaselineArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.input, "input image");
  require_parent(a.output);
  const RasterImage gray = to_grayscale(load_image(a.input));
  BinaryMap result;
  if (a.method == "otsu") {
    if (a.window || a.k) throw ArgumentError("--window and --k apply to sauvola and niblack only");
    const int t = otsu_threshold(gray);
    result = binarize_otsu(gray);
    err << "otsu: threshold " << t << "\n";
    out << "threshold=" << t << "\n";
  } else {
    LocalStatsWindow w = a.method == "sauvola" ? LocalStatsWindow::sauvola_defaults() : LocalStatsWindow::niblack_defaults();
    if (a.window) w.window = *a.window;
    if (a.k) w.k = *a.k;
    w.validate();
    result = a.method == "sauvola" ? binarize_sauvola(gray, w) : binarize_niblack(gray, w);
    err << a.method << ": window " << w.window << " k " << w.k << " R " << w.R << "\n";
    out << "window=" << w.window << " k=" << w.k << " R=" << w.R << "\n";
  }
  save_image(result, a.output);
  return kExitOk;
}

inline int train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  require_dir(a.data_dir, "data directory");
  require_parent(a.out_checkpoint);
  if (!a.config.empty()) require_file(a.config, "config file");
  if (!a.resume.empty()) require_file(a.resume, "checkpoint to resume");

  TrainConfig cfg;
  if (!a.config.empty()) apply_config(read_config(a.config), cfg);
  if (a.steps) cfg.steps = *a.steps;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  Dataset ds = ingest_dataset(a.data_dir, &err);
  const fs::path log_path = a.log.empty() ? fs::path(a.out_checkpoint.string() + ".log.csv") : a.log;
  write_manifest(ds, fs::path(a.out_checkpoint.string() + ".manifest.csv"));
  err << "training on " << ds.pairs.size() << " document(s), " << ds.skipped.size() << " skipped\n";

  std::unique_ptr<TrainState> state;
  if (!a.resume.empty()) {
    state = load_train_state(a.resume, cfg);
    err << "resuming from step " << state->step << "\n";
  } else {
    state = std::make_unique<TrainState>(cfg);
  }
  const bool append = !a.resume.empty() && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write training log " + log_path.string());
  if (!append) log << log_header() << "\n";

  Trainer trainer(std::move(ds.pairs), cfg, std::move(state));
  const long until = trainer.state().step + cfg.steps;
  const auto start = std::chrono::steady_clock::now();
  trainer.run(until, [&](const StepLosses& l) {
    log << log_row(l) << "\n";
    if (l.step % 50 == 0 || l.step == until) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      err << "step " << l.step << " total " << l.total << " dice " << l.dice << " (" << s << " s)\n";
    }
  });
  log.flush();
  save_train_state(trainer.state(), a.out_checkpoint);
  err << "wrote " << a.out_checkpoint.string() << " and " << log_path.string() << "\n";
  out << "step=" << trainer.state().step << "\n";
  return kExitOk;
}

inline int binarize(const BinarizeArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.input, "input image");
  require_parent(a.output);
  if (a.iterate < 0) throw ArgumentError("--iterate must be >= 0");
  const CheckpointTable table = read_checkpoint(a.checkpoint);
  const GdbModel model = load_model(table);
  InferenceOptions opt;
  if (const auto g = checkpoint_geometry(table)) std::tie(opt.patch, opt.global_size) = *g;
  opt.patch = a.patch.value_or(opt.patch);
  opt.stride = a.stride.value_or(opt.patch / 2);
  opt.global_size = a.global_size.value_or(opt.global_size);
  opt.use_multiscale = !a.no_multiscale;
  opt.iterations = a.iterate;
  opt.threads = a.threads;
  const RasterImage doc = to_rgb(load_image(a.input));
  err << "binarizing " << doc.width() << "x" << doc.height() << " (patch " << opt.patch << ", stride " << opt.stride
      << ", global " << opt.global_size << ")" << (opt.use_multiscale ? " with" : " without") << " multiscale, "
      << opt.iterations << " iteration(s)\n";
  const BinaryMap mask = binarize_document(doc, model, opt);
  save_image(mask, a.output);
  out << a.output.string() << "\n";
  return kExitOk;
}

inline int evaluate_dirs(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  require_dir(a.pred_dir, "prediction directory");
  require_dir(a.gt_dir, "ground-truth directory");
  require_parent(a.report);
  const DatasetReport r = dataset_report(a.pred_dir, a.gt_dir);
  for (const std::string& s : r.skipped) err << "warning: skipped " << s << "\n";
  write_report(r, a.report);
  out << report_row("MEAN", r.mean) << "\n";
  return kExitOk;
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Document binarization with gated convolutions, classical baselines and DIBCO metrics", "gdbin"};
  app.require_subcommand(1);

  cli::BaselineArgs ba;
  CLI::App* base = app.add_subcommand("baseline", "Binarize one image with a classical threshold");
  base->add_option("--method", ba.method, "otsu, sauvola or niblack")
      ->required()
      ->check(CLI::IsMember({"otsu", "sauvola", "niblack"}));
  base->add_option("--input", ba.input, "input image (png, pgm, ppm)")->required();
  base->add_option("--output", ba.output, "output binary image")->required();
  base->add_option("--window", ba.window, "local window side (odd)");
  base->add_option("--k", ba.k, "local threshold k");

  cli::TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train", "Train the network on <dir>/originals and <dir>/gt");
  tr->add_option("--data-dir", ta.data_dir, "dataset root")->required();
  tr->add_option("--out-checkpoint", ta.out_checkpoint, "checkpoint to write")->required();
  tr->add_option("--steps", ta.steps, "steps to run (default from config, else 1000)");
  tr->add_option("--seed", ta.seed, "random seed");
  tr->add_option("--config", ta.config, "key=value training configuration");
  tr->add_option("--resume", ta.resume, "continue from this checkpoint");
  tr->add_option("--log", ta.log, "training log CSV (default <out-checkpoint>.log.csv)");

  cli::BinarizeArgs bi;
  CLI::App* bin = app.add_subcommand("binarize", "Binarize one image with a trained checkpoint");
  bin->add_option("--checkpoint", bi.checkpoint, "trained checkpoint")->required();
  bin->add_option("--input", bi.input, "input image")->required();
  bin->add_option("--output", bi.output, "output binary image")->required();
  bin->add_flag("--no-multiscale", bi.no_multiscale, "use the local coarse mask in place of the global one");
  bin->add_option("--iterate", bi.iterate, "iterative refinement rounds")->capture_default_str();
  bin->add_option("--patch", bi.patch, "inference patch size, multiple of 16 (default: training patch, else 256)");
  bin->add_option("--stride", bi.stride, "inference stride (default: half the patch)");
  bin->add_option("--global-size", bi.global_size, "global-branch resolution (default: as trained, else 256)");
  bin->add_option("--threads", bi.threads, "worker threads (0: GDB_THREADS or all cores)");

  cli::EvaluateArgs ev;
  CLI::App* eva = app.add_subcommand("evaluate", "Score predictions against ground truth");
  eva->add_option("--pred-dir", ev.pred_dir, "predicted binary images")->required();
  eva->add_option("--gt-dir", ev.gt_dir, "ground-truth images")->required();
  eva->add_option("--report", ev.report, "CSV report to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n"
        << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitUsage;
  }

  try {
    if (base->parsed()) return cli::baseline(ba, out, err);
    if (tr->parsed()) return cli::train(ta, out, err);
    if (bin->parsed()) return cli::binarize(bi, out, err);
    return cli::evaluate_dirs(ev, out, err);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ChecksumError& e) {
    err << "error: corrupt checkpoint (" << e.what() << ")\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace gdb
