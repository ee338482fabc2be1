/* Copyright 2026 The tempseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


// tempseg: gen-data, train, eval, ablate, report.
// Exit codes: 0 success, 1 usage/validation, 2 numerical divergence, 3 I/O.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tempseg/ablation.hpp"
#include "tempseg/config.hpp"
#include "tempseg/data.hpp"
#include "tempseg/engine.hpp"
#include "tempseg/metrics.hpp"

namespace fs = std::filesystem;
using namespace tempseg;

namespace {

constexpr const char* kArtifactVersion = "tempseg-0.1.0+ckpt1+clip1";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

/// File defaults, then TEMPSEG_SEED, then --seed.
TrainingConfig resolve_config(const Globals& g) {
  TrainingConfig cfg = load_config(g.config);
  if (g.seed) {
    io::KeyValues kv;
    kv.set("seed", std::to_string(*g.seed));
    apply_config(cfg, kv, "--seed");
    cfg.data.seed = cfg.seed;
    cfg.validate();
  }
  return cfg;
}

std::string require_out(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out is required");
  return g.out;
}

bool non_empty_dir(const std::string& d) { return fs::is_directory(d) && !fs::is_empty(d); }

/// One manifest per run: command line, resolved config, dataset hash,
/// outputs, wall-clock and artifact version.
struct RunManifest {
  std::string command;
  std::string argv;
  io::KeyValues config;
  std::string dataset_hash;
  std::vector<std::string> outputs;
  double wall_clock = 0;
  std::string status = "ok";

  void write(const std::string& out_dir) const {
    io::KeyValues m;
    m.set("artifact_version", kArtifactVersion);
    m.set("command", command);
    m.set("argv", argv);
    m.set("dataset_hash", dataset_hash.empty() ? "-" : dataset_hash);
    std::string outs;
    for (const auto& o : outputs) outs += (outs.empty() ? "" : ",") + o;
    m.set("outputs", outs.empty() ? "-" : outs);
    m.set("wall_clock_seconds", io::fmt_double(wall_clock, 6));
    m.set("status", status);
    for (const auto& [k, v] : config.entries()) m.set("config." + k, v);
    io::write_file_atomic((fs::path(out_dir) / kRunManifestName).string(), m.str());
  }
};

std::vector<VideoClip> load_required(const std::string& data, const std::string& split, const LoadOptions& opts = {}) {
  if (!fs::is_directory(fs::path(data) / split)) throw IoError((fs::path(data) / split).string(), "no such split directory");
  auto clips = load_split(data, split, opts);
  TEMPSEG_VALIDATE(!clips.empty(), "split ", split, " under ", data, " has no clips");
  return clips;
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const Globals& g, RunManifest& man) {
  const std::string out = require_out(g);
  const TrainingConfig cfg = resolve_config(g);
  if (non_empty_dir(out)) {
    if (!g.force) throw UsageError("output directory " + out + " is not empty (use --force to overwrite)");
    fs::remove_all(out);
  }
  fs::create_directories(out);
  man.config = config_snapshot(cfg);
  for (const auto& [split, count] : {std::pair<std::string, int>{"train", cfg.data.train_clips}, {"val", cfg.data.val_clips}}) {
    for (int i = 0; i < count; ++i)
      save_clip(generate_dataset_clip(cfg.data, split, i), (fs::path(out) / split / clip_name(i)).string());
    man.outputs.push_back((fs::path(out) / split).string());
  }
  io::KeyValues spec;
  for (const auto& [k, v] : man.config.entries())
    if (k.rfind("data.", 0) == 0 || k == "seed") spec.set(k, v);
  io::write_file_atomic((fs::path(out) / "dataset.cfg").string(), spec.str());
  man.dataset_hash = dataset_hash(out);
  std::cout << "generated " << cfg.data.train_clips << " train + " << cfg.data.val_clips << " val clips ("
            << cfg.data.train_clips + cfg.data.val_clips << " total, " << cfg.data.clip_length << " frames each) in "
            << out << "\n";
}

/// Accepts either a training output directory or the checkpoint itself.
std::string checkpoint_path(const std::string& p) {
  if (fs::exists(fs::path(p) / "checkpoint") || fs::exists(fs::path(p) / "checkpoint.old")) return (fs::path(p) / "checkpoint").string();
  return p;
}

struct TrainArgs {
  std::string data, role = "student", teacher, terms;
  bool resume = false;
  int stop_after = -1;
};

void cmd_train(const Globals& g, const TrainArgs& a, RunManifest& man) {
  const std::string out = require_out(g);
  if (a.data.empty()) throw UsageError("--data is required");
  if (a.role != "teacher" && a.role != "student") throw UsageError("--role must be teacher or student");
  if (a.role == "student" && a.teacher.empty()) throw UsageError("the student role requires --teacher <checkpoint>");
  TrainingConfig cfg = resolve_config(g);
  if (!a.terms.empty()) cfg.terms = TermFlags::parse(a.terms);
  man.config = config_snapshot(cfg);
  if (!a.resume && non_empty_dir(out) && !g.force)
    throw UsageError("output directory " + out + " is not empty (use --resume or --force)");
  if (!a.resume && g.force && fs::exists(out)) fs::remove_all(out);

  const auto clips = load_required(a.data, "train");
  TrainOptions o;
  o.out_dir = out;
  o.resume = a.resume;
  o.stop_after = a.stop_after;
  o.dataset_hash = man.dataset_hash = dataset_hash(a.data);
  o.progress = &std::cerr;
  o.progress_every = std::max(1, (a.role == "teacher" ? cfg.teacher : cfg.student).max_iters / 20);

  TrainResult r;
  if (a.role == "teacher") {
    r = train_teacher(cfg, clips, o);
  } else {
    Checkpoint t = load_checkpoint(checkpoint_path(a.teacher));
    r = train_student(cfg, clips, *t.net, o);
  }
  man.outputs = {(fs::path(out) / "checkpoint").string(), (fs::path(out) / "train.log").string()};
  std::cout << a.role << " " << (r.finished ? "finished" : "stopped") << " at iteration "
            << r.checkpoint.iteration << " (terms " << r.checkpoint.terms << "), checkpoint in " << out << "/checkpoint\n";
}

struct EvalArgs {
  std::string data, checkpoint, split = "val", frames = "all", order = "forward";
  bool dump = false;
};

void cmd_eval(const Globals& g, const EvalArgs& a, RunManifest& man) {
  const std::string out = require_out(g);
  if (a.data.empty() || a.checkpoint.empty()) throw UsageError("--data and --checkpoint are required");
  if (a.frames != "all" && a.frames != "labeled") throw UsageError("--frames must be all or labeled");
  if (a.order != "forward" && a.order != "reverse") throw UsageError("--order must be forward or reverse");
  const Checkpoint ck = load_checkpoint(checkpoint_path(a.checkpoint));
  man.config = ck.config;
  man.dataset_hash = dataset_hash(a.data);

  EvalOptions eo;
  eo.labeled_only = a.frames == "labeled";
  eo.reverse_order = a.order == "reverse";
  if (a.dump) eo.dump_dir = (fs::path(out) / "predictions").string();
  LoadOptions lo;
  lo.labeled_frames_only = eo.labeled_only;
  lo.flows = !eo.labeled_only;
  const Evaluation ev = evaluate(*ck.net, load_required(a.data, a.split, lo), eo);

  const auto put = [&](const std::string& name, const std::string& bytes) {
    const std::string p = (fs::path(out) / name).string();
    io::write_file_atomic(p, bytes);
    man.outputs.push_back(p);
  };
  put("metrics.csv", metrics_csv(ev.report));
  put("per_class.csv", per_class_csv(ev.report));
  if (ev.has_tc) put("tc_trace.csv", tc_trace_csv(ev.report));
  if (a.dump) man.outputs.push_back(eo.dump_dir);

  std::cout << per_class_table({{ck.terms == "none" ? std::string(role_name(ck.role)) : std::string(role_name(ck.role)) + "+" + ck.terms, ev.report}});
  std::cout << "mIoU " << io::fmt_double(ev.report.miou, 6) << "  pixel accuracy " << io::fmt_double(ev.report.pixel_accuracy, 6);
  if (ev.has_tc) std::cout << "  TC " << io::fmt_double(ev.report.mean_tc, 6);
  std::cout << "\n#Param " << ev.parameters << "  frames " << ev.frames << "  fps " << io::fmt_double(ev.fps, 4) << "\n";
}

struct AblateArgs {
  std::string data, schemes;
  bool full = false, no_transfer = false;
};

int cmd_ablate(const Globals& g, const AblateArgs& a, RunManifest& man) {
  const std::string out = require_out(g);
  if (a.data.empty()) throw UsageError("--data is required");
  TrainingConfig cfg = resolve_config(g);
  if (a.full) cfg.ablate_schemes = "all";
  if (!a.schemes.empty()) cfg.ablate_schemes = a.schemes;
  if (a.no_transfer) cfg.ablate_transfer = false;
  parse_schemes(cfg.ablate_schemes);
  man.config = config_snapshot(cfg);
  if (non_empty_dir(out)) {
    if (!g.force) throw UsageError("output directory " + out + " is not empty (use --force to overwrite)");
    fs::remove_all(out);
  }
  man.dataset_hash = dataset_hash(a.data);
  const auto train = load_required(a.data, "train");
  const auto val = load_required(a.data, "val");
  const AblationResult res = run_ablation(cfg, train, val, out, &std::cerr);

  const auto put = [&](const std::string& name, const std::string& bytes) {
    const std::string p = (fs::path(out) / name).string();
    io::write_file_atomic(p, bytes);
    man.outputs.push_back(p);
  };
  put("ablation.csv", ablation_csv(res.rows));
  std::string table = ablation_table(res.rows);
  if (!res.transfer.empty()) {
    put("transfer.csv", ablation_csv(res.transfer));
    table += "\n" + transfer_table(res);
  }
  std::string checks;
  for (const auto& c : ordering_checks(res, cfg.ablate_seeds))
    checks += (c.pass() ? "holds  " : "fails  ") + c.name + "  (" + std::to_string(c.satisfied) + "/" +
              std::to_string(c.evaluated) + " seeds)\n";
  table += "\n" + checks;
  put("table.txt", table);
  std::cout << table;
  if (!res.all_ok()) {
    man.status = "partial";
    std::cerr << "tempseg: one or more ablation members failed (marked FAILED)\n";
    return 1;
  }
  return 0;
}

/// Parses a per_class.csv / metrics.csv pair back into a report.
EvalReport read_eval_dir(const std::string& dir) {
  EvalReport r;
  const auto cell = [](const std::string& s) -> std::optional<double> {
    if (s == "nan") return std::nullopt;
    return io::KeyValues::to_double("csv cell", s);
  };
  const auto rows = [](const std::string& path) {
    std::vector<std::vector<std::string>> out;
    std::istringstream in(io::read_file(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ls(line);
      std::string x;
      while (std::getline(ls, x, ',')) f.push_back(x);
      if (!f.empty()) out.push_back(f);
    }
    return out;
  };
  const std::string pc = (fs::path(dir) / "per_class.csv").string();
  for (const auto& f : rows(pc)) {
    if (f.size() != 3) throw IoError(pc, "expected 3 columns");
    r.class_names.push_back(f[0]);
    r.class_iou.push_back(cell(f[1]));
    r.class_tc.push_back(cell(f[2]));
  }
  r.classes = static_cast<int>(r.class_names.size());
  const std::string mp = (fs::path(dir) / "metrics.csv").string();
  const auto m = rows(mp);
  if (m.size() != 1 || m[0].size() != 3) throw IoError(mp, "expected one row of miou,pixel_accuracy,tc");
  r.miou = cell(m[0][0]).value_or(0);
  r.pixel_accuracy = cell(m[0][1]).value_or(0);
  r.mean_tc = cell(m[0][2]).value_or(std::nan(""));
  return r;
}

void cmd_report(const Globals& g, const std::vector<std::string>& dirs, RunManifest& man) {
  if (dirs.empty()) throw UsageError("report needs at least one eval or ablate output directory");
  std::string text;
  std::vector<std::pair<std::string, EvalReport>> evals;
  for (const auto& d : dirs) {
    if (fs::exists(fs::path(d) / "table.txt")) {
      text += "== " + d + "\n" + io::read_file((fs::path(d) / "table.txt").string()) + "\n";
    } else if (fs::exists(fs::path(d) / "per_class.csv")) {
      evals.emplace_back(fs::path(d).filename().string(), read_eval_dir(d));
    } else {
      throw IoError(d, "neither an eval nor an ablate output directory");
    }
  }
  if (!evals.empty()) text += per_class_table(evals);
  std::cout << text;
  if (!g.out.empty()) {
    const std::string p = (fs::path(g.out) / "report.txt").string();
    io::write_file_atomic(p, text);
    man.outputs.push_back(p);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporally consistent video segmentation: data, training, evaluation, ablation"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--config", g.config, "Configuration file (key = value)");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--force", g.force, "Overwrite a non-empty output directory");
  for (auto* o : app.get_options()) o->configurable(false);
  app.fallthrough();

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic dataset");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a teacher or a student");
  train->add_option("--data", ta.data, "Dataset root");
  train->add_option("--role", ta.role, "teacher | student")->check(CLI::IsMember({"teacher", "student"}));
  train->add_option("--teacher", ta.teacher, "Teacher training directory or checkpoint");
  train->add_option("--terms", ta.terms, "Student terms: none, all, or a list of sf,pf,mf,tl");
  train->add_flag("--resume", ta.resume, "Continue from <out>/checkpoint");
  train->add_option("--stop-after", ta.stop_after, "Stop after this many iterations");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--data", ea.data, "Dataset root");
  eval->add_option("--checkpoint", ea.checkpoint, "Training directory or checkpoint");
  eval->add_option("--split", ea.split, "Split to evaluate")->check(CLI::IsMember({"train", "val"}));
  eval->add_option("--frames", ea.frames, "all | labeled");
  eval->add_option("--order", ea.order, "forward | reverse");
  eval->add_flag("--dump-predictions", ea.dump, "Write predicted label PNGs under <out>/predictions");

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the scheme grid");
  ablate->add_option("--data", aa.data, "Dataset root");
  ablate->add_option("--schemes", aa.schemes, "Comma list of schemes a..j, or all");
  ablate->add_flag("--full", aa.full, "Run all ten schemes a..j");
  ablate->add_flag("--no-transfer", aa.no_transfer, "Skip the teacher-transfer contrast");

  std::vector<std::string> report_dirs;
  auto* report = app.add_subcommand("report", "Tabulate eval and ablate outputs");
  report->add_option("dirs", report_dirs, "Output directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  if (*seed_opt) g.seed = seed;

  RunManifest man;
  for (int i = 0; i < argc; ++i) man.argv += (i ? " " : "") + std::string(argv[i]);
  const auto start = std::chrono::steady_clock::now();
  int code = 0;
  std::string manifest_dir = g.out;
  try {
    if (gen->parsed()) {
      man.command = "gen-data";
      cmd_gen_data(g, man);
    } else if (train->parsed()) {
      man.command = "train";
      cmd_train(g, ta, man);
    } else if (eval->parsed()) {
      man.command = "eval";
      cmd_eval(g, ea, man);
    } else if (ablate->parsed()) {
      man.command = "ablate";
      code = cmd_ablate(g, aa, man);
    } else if (report->parsed()) {
      man.command = "report";
      cmd_report(g, report_dirs, man);
    }
  } catch (const UsageError& e) {
    std::cerr << "tempseg: usage: " << e.what() << "\n";
    return 1;  // nothing was run; no manifest
  } catch (const ValidationError& e) {
    std::cerr << "tempseg: invalid input: " << e.what() << "\n";
    man.status = "invalid";
    code = 1;
  } catch (const ContractViolation& e) {
    std::cerr << "tempseg: invalid input: " << e.what() << "\n";
    man.status = "invalid";
    code = 1;
  } catch (const VersionError& e) {
    std::cerr << "tempseg: version mismatch: " << e.what() << "\n";
    man.status = "version_mismatch";
    code = 3;
  } catch (const DivergenceError& e) {
    std::cerr << "tempseg: diverged: " << e.what() << "\n";
    man.status = "diverged";
    code = 2;
  } catch (const IoError& e) {
    std::cerr << "tempseg: I/O error: " << e.what() << "\n";
    man.status = "io_error";
    code = 3;
  } catch (const std::exception& e) {
    std::cerr << "tempseg: error: " << e.what() << "\n";
    man.status = "error";
    code = 3;
  }
  man.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!manifest_dir.empty() && fs::is_directory(manifest_dir)) {
    try {
      man.write(manifest_dir);
    } catch (const IoError& e) {
      std::cerr << "tempseg: I/O error: " << e.what() << "\n";
      return 3;
    }
  }
  return code;
}
