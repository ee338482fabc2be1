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

// Training and evaluation: poly learning-rate schedule, SGD with momentum,
// teacher pretraining, student distillation with a frozen teacher,
// checkpoints with exact resume, and per-frame evaluation.

#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tempseg/config.hpp"
#include "tempseg/conv_lstm.hpp"
#include "tempseg/data.hpp"
#include "tempseg/flowwarp.hpp"
#include "tempseg/io.hpp"
#include "tempseg/losses.hpp"
#include "tempseg/metrics.hpp"
#include "tempseg/models.hpp"
#include "tempseg/similarity.hpp"

namespace tempseg {

/// base * (1 - iter / max_iters)^power. max_iters = 0 yields 0.
inline double poly_lr(int iter, int max_iters, double base = 0.01, double power = 0.9) {
  TEMPSEG_VALIDATE(max_iters >= 0, "max_iters must be non-negative, got ", max_iters);
  TEMPSEG_VALIDATE(iter >= 0 && iter <= max_iters, "iteration ", iter, " outside [0, ", max_iters, "]");
  if (iter == max_iters) return 0.0;
  return base * std::pow(1.0 - static_cast<double>(iter) / max_iters, power);
}

/// v <- mu * v + g; p <- p - lr * v.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Var<T>> params, double momentum) : params_(std::move(params)), momentum_(momentum) {
    for (const auto& p : params_) buffers_.emplace_back(p.shape());
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step(double lr) {
    const T mu = static_cast<T>(momentum_), rate = static_cast<T>(lr);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& value = params_[i].mutable_value().data;
      const auto& grad = params_[i].grad().data;
      auto& buf = buffers_[i].data;
      for (std::size_t k = 0; k < value.size(); ++k) {
        buf[k] = mu * buf[k] + grad[k];
        value[k] -= rate * buf[k];
      }
    }
  }

  std::vector<Tensor<T>>& buffers() { return buffers_; }
  const std::vector<Var<T>>& params() const { return params_; }

 private:
  std::vector<Var<T>> params_;
  double momentum_;
  std::vector<Tensor<T>> buffers_;
};

// ---------------------------------------------------------------------------
// Blobs and checkpoints

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string encode_f32(const std::vector<Tensor<float>>& tensors) {
  std::string out;
  for (const auto& t : tensors)
    for (float v : t.data) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
    }
  return out;
}

inline void decode_f32(const std::string& bytes, std::vector<Tensor<float>*> targets, const std::string& origin) {
  std::size_t need = 0;
  for (auto* t : targets) need += t->size() * 4;
  if (bytes.size() != need)
    throw IoError(origin, "blob holds " + std::to_string(bytes.size()) + " bytes, manifest shapes need " +
                              std::to_string(need));
  std::size_t pos = 0;
  for (auto* t : targets)
    for (float& v : t->data) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * b);
      v = std::bit_cast<float>(bits);
    }
}

inline std::string shapes_str(const std::vector<std::string>& names, const std::vector<Var<float>>& vars) {
  std::string out;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    out += (i ? ";" : "") + names[i] + ":";
    for (std::size_t d = 0; d < vars[i].shape().size(); ++d)
      out += (d ? "x" : "") + std::to_string(vars[i].shape()[d]);
  }
  return out;
}

inline std::vector<Tensor<float>> values_of(const std::vector<Var<float>>& vars) {
  std::vector<Tensor<float>> out;
  for (const auto& v : vars) out.push_back(v.value());
  return out;
}

}  // namespace detail

enum class Role { kTeacher, kStudent };

inline const char* role_name(Role r) { return r == Role::kTeacher ? "teacher" : "student"; }

/// Everything needed to continue or evaluate a run.
struct Checkpoint {
  Role role = Role::kStudent;
  int iteration = 0;
  TinyNetConfig net_config;
  std::shared_ptr<TinyNet<float>> net;
  std::optional<ConvLSTMParams<float>> lstm;
  std::vector<Tensor<float>> net_momentum;
  std::vector<Tensor<float>> lstm_momentum;
  std::string rng_state;
  std::string dataset_hash;
  std::string terms;
  io::KeyValues config;  // snapshot, keys without prefix
};

/// Writes `ckpt` into `dir` through a sibling temp directory so an
/// interrupted save leaves the previous checkpoint intact.
inline void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path target(dir);
  const fs::path tmp = target.string() + ".tmp";
  const fs::path old = target.string() + ".old";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  io::KeyValues m;
  m.set_number("format_version", kCheckpointVersion);
  m.set("role", role_name(ckpt.role));
  m.set_number("iteration", ckpt.iteration);
  ckpt.net_config.save(m, "net.");
  const auto net_params = ckpt.net->parameters();
  m.set("net.tensors", detail::shapes_str(ckpt.net->parameter_names(), net_params));
  m.set("lstm.present", ckpt.lstm ? "true" : "false");
  if (ckpt.lstm) {
    m.set_number("lstm.kernel", ckpt.lstm->kernel);
    m.set_number("lstm.hidden", ckpt.lstm->hidden);
    m.set("lstm.tensors", detail::shapes_str(ConvLSTMParams<float>::tensor_names(), ckpt.lstm->tensors()));
  }
  m.set("rng", ckpt.rng_state);
  m.set("dataset_hash", ckpt.dataset_hash);
  m.set("terms", ckpt.terms);
  for (const auto& [k, v] : ckpt.config.entries()) m.set("config." + k, v);

  io::write_file_atomic((tmp / "net.bin").string(), detail::encode_f32(detail::values_of(net_params)));
  if (!ckpt.net_momentum.empty())
    io::write_file_atomic((tmp / "net_momentum.bin").string(), detail::encode_f32(ckpt.net_momentum));
  if (ckpt.lstm) {
    io::write_file_atomic((tmp / "lstm.bin").string(), detail::encode_f32(detail::values_of(ckpt.lstm->tensors())));
    if (!ckpt.lstm_momentum.empty())
      io::write_file_atomic((tmp / "lstm_momentum.bin").string(), detail::encode_f32(ckpt.lstm_momentum));
  }
  io::write_file_atomic((tmp / "manifest").string(), m.str());

  fs::remove_all(old);
  if (fs::exists(target)) fs::rename(target, old);
  fs::rename(tmp, target);
  fs::remove_all(old);
}

inline Checkpoint load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::string base = dir;
  if (!fs::exists(fs::path(base) / "manifest") && fs::exists(fs::path(base + ".old") / "manifest")) base += ".old";
  const std::string manifest_path = (fs::path(base) / "manifest").string();
  const io::KeyValues m = io::KeyValues::load(manifest_path);
  if (!m.has("format_version") || m.get_int("format_version") != kCheckpointVersion)
    throw VersionError(manifest_path + ": checkpoint format version " + m.get_or("format_version", "<missing>") +
                       ", this build reads version " + std::to_string(kCheckpointVersion));
  Checkpoint c;
  try {
    const std::string role = m.get("role");
    TEMPSEG_VALIDATE(role == "teacher" || role == "student", "unknown role '", role, "'");
    c.role = role == "teacher" ? Role::kTeacher : Role::kStudent;
    c.iteration = static_cast<int>(m.get_int("iteration"));
    c.net_config = TinyNetConfig::load(m, "net.");
    c.rng_state = m.get_or("rng", "");
    c.dataset_hash = m.get_or("dataset_hash", "");
    c.terms = m.get_or("terms", "none");
    for (const auto& [k, v] : m.entries())
      if (k.rfind("config.", 0) == 0) c.config.set(k.substr(7), v);
  } catch (const ValidationError& e) {
    throw ValidationError(manifest_path + ": " + e.what());
  }
  c.net = std::make_shared<TinyNet<float>>(c.net_config, 0);
  const auto params = c.net->parameters();
  if (m.get("net.tensors") != detail::shapes_str(c.net->parameter_names(), params))
    throw ValidationError(manifest_path + ": tensor shapes disagree with the network configuration");
  std::vector<Tensor<float>*> targets;
  for (auto p : params) targets.push_back(&p.mutable_value());
  const std::string net_bin = (fs::path(base) / "net.bin").string();
  detail::decode_f32(io::read_file(net_bin), targets, net_bin);

  const auto load_momentum = [&](const std::string& file, const std::vector<Var<float>>& vars) {
    std::vector<Tensor<float>> out;
    const std::string path = (fs::path(base) / file).string();
    if (!fs::exists(path)) return out;
    for (const auto& v : vars) out.emplace_back(v.shape());
    std::vector<Tensor<float>*> ptrs;
    for (auto& t : out) ptrs.push_back(&t);
    detail::decode_f32(io::read_file(path), ptrs, path);
    return out;
  };
  c.net_momentum = load_momentum("net_momentum.bin", params);

  if (m.get_bool("lstm.present")) {
    auto lstm = ConvLSTMParams<float>::zeros(static_cast<int>(m.get_int("lstm.kernel")),
                                             static_cast<int>(m.get_int("lstm.hidden")));
    std::vector<Tensor<float>*> lt;
    for (auto v : lstm.tensors()) lt.push_back(&v.mutable_value());
    const std::string lstm_bin = (fs::path(base) / "lstm.bin").string();
    detail::decode_f32(io::read_file(lstm_bin), lt, lstm_bin);
    c.lstm_momentum = load_momentum("lstm_momentum.bin", lstm.tensors());
    c.lstm = std::move(lstm);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Teacher outputs

/// Lazily computed frozen-teacher outputs: full-resolution probabilities
/// and features average-pooled to `grid`, stored as [C, gh, gw].
class TeacherCache {
 public:
  TeacherCache(const SegmentationNet<float>& net, GridSize grid) : net_(&net), grid_(grid) {}

  const TeacherFrame<float>& get(const VideoClip& clip, std::size_t clip_index, int frame) {
    const auto key = std::make_pair(clip_index, frame);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const NetOutput<float> out = net_->forward(Var<float>::constant(clip.frames[frame]));
    const Tensor<float> pooled = pool_to_grid(out.features, grid_).value();  // [N,C]
    const int n = pooled.dim(0), c = pooled.dim(1);
    Tensor<float> features({c, grid_.height, grid_.width});
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) features.data[static_cast<std::size_t>(ch) * n + i] = pooled.at(i, ch);
    return cache_.emplace(key, TeacherFrame<float>{out.probs.value(), std::move(features)}).first->second;
  }

 private:
  const SegmentationNet<float>* net_;
  GridSize grid_;
  std::map<std::pair<std::size_t, int>, TeacherFrame<float>> cache_;
};

// ---------------------------------------------------------------------------
// Training loop

/// Averages of one iteration's breakdown over its batch.
struct IterationRecord {
  int iteration = 0;
  double lr = 0;
  double ce = 0, sf_pixel = 0, sf_pair = 0, tl = 0, pf = 0, mf = 0, anti_collapse = 0, total = 0;
  double teacher_embedding_norm = 0;
};

/// One log line; only the terms enabled for the run appear.
inline std::string format_record(const IterationRecord& r, const TermFlags& terms, double lambda, bool anti_collapse) {
  std::string s = "iter=" + std::to_string(r.iteration) + " lr=" + io::fmt_double(r.lr) + " ce=" + io::fmt_double(r.ce);
  if (terms.sf) s += " sf_pixel=" + io::fmt_double(r.sf_pixel) + " sf_pair=" + io::fmt_double(r.sf_pair);
  if (terms.tl) s += " tl=" + io::fmt_double(r.tl);
  if (terms.pf) s += " pf=" + io::fmt_double(r.pf);
  if (terms.mf) {
    s += " mf=" + io::fmt_double(r.mf);
    if (anti_collapse) s += " anti_collapse=" + io::fmt_double(r.anti_collapse);
    s += " teacher_embedding_norm=" + io::fmt_double(r.teacher_embedding_norm);
  }
  if (terms.any()) s += " lambda=" + io::fmt_double(lambda);
  s += " total=" + io::fmt_double(r.total);
  return s;
}

struct TrainOptions {
  std::string out_dir;       // checkpoint + log; empty keeps everything in memory
  bool resume = false;       // continue from out_dir/checkpoint
  int stop_after = -1;       // return after this many iterations (simulated interruption)
  std::string dataset_hash;
  std::ostream* progress = nullptr;
  int progress_every = 50;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<IterationRecord> log;  // iterations run by this call
  bool finished = false;
};

namespace detail {

inline std::uint64_t role_stream(Role r) { return r == Role::kTeacher ? 101 : 202; }

inline std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream oss;
  oss << rng;
  return oss.str();
}

inline void set_rng_text(std::mt19937_64& rng, const std::string& text, const std::string& origin) {
  std::istringstream iss(text);
  iss >> rng;
  if (iss.fail()) throw ValidationError(origin + ": malformed rng state");
}

// Keeps the lines of `path` whose iteration is below `iteration`.
inline void truncate_log(const std::string& path, int iteration) {
  if (!std::filesystem::exists(path)) return;
  std::istringstream in(io::read_file(path));
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.rfind("iter=", 0) != 0) continue;
    const int it = std::stoi(line.substr(5));
    if (it < iteration) kept += line + "\n";
  }
  io::write_file_atomic(path, kept);
}

inline double sum_squares(const std::vector<Var<float>>& vars, bool grads) {
  double acc = 0;
  for (const auto& v : vars)
    for (float x : (grads ? v.grad() : v.value()).data) acc += static_cast<double>(x) * x;
  return acc;
}

}  // namespace detail

/// Shared optimisation loop for both roles. The teacher role minimises
/// ce (+ lambda * tl when enabled); the student role minimises the full
/// composite objective against `teacher`, whose parameters stay frozen.
inline TrainResult run_training(const TrainingConfig& cfg, Role role, const std::vector<VideoClip>& clips,
                                const SegmentationNet<float>* teacher, const TrainOptions& opts) {
  namespace fs = std::filesystem;
  cfg.validate();
  TEMPSEG_VALIDATE(!clips.empty(), "training split is empty");
  const PhaseConfig& phase = role == Role::kTeacher ? cfg.teacher : cfg.student;
  ObjectiveConfig objective = cfg.objective();
  if (role == Role::kTeacher) objective.terms = cfg.teacher_temporal_loss ? TermFlags::parse("tl") : TermFlags{};
  const TermFlags terms = objective.terms;
  TEMPSEG_VALIDATE(role == Role::kTeacher || !terms.needs_teacher() || teacher != nullptr,
                   "student terms ", terms.str(), " need a teacher network");
  for (const auto& c : clips)
    TEMPSEG_VALIDATE(c.classes == cfg.data.scene.classes, "clip ", c.id, " has ", c.classes,
                     " classes, config expects ", cfg.data.scene.classes);

  const std::string ckpt_dir = opts.out_dir.empty() ? "" : (fs::path(opts.out_dir) / "checkpoint").string();
  const std::string log_path = opts.out_dir.empty() ? "" : (fs::path(opts.out_dir) / "train.log").string();
  const io::KeyValues snapshot = config_snapshot(cfg);

  Checkpoint state;
  state.role = role;
  state.terms = terms.str();
  state.config = snapshot;
  state.dataset_hash = opts.dataset_hash;
  std::mt19937_64 rng(derive_seed(cfg.seed, detail::role_stream(role), 1));

  if (opts.resume) {
    TEMPSEG_VALIDATE(!ckpt_dir.empty(), "resume needs an output directory");
    Checkpoint prev = load_checkpoint(ckpt_dir);
    TEMPSEG_VALIDATE(prev.role == role, "checkpoint in ", ckpt_dir, " belongs to a ", role_name(prev.role), " run");
    TEMPSEG_VALIDATE(prev.config.entries() == snapshot.entries(), "configuration differs from the checkpointed run in ",
                     ckpt_dir);
    state.iteration = prev.iteration;
    state.net_config = prev.net_config;
    state.net = prev.net;
    state.lstm = prev.lstm;
    state.net_momentum = prev.net_momentum;
    state.lstm_momentum = prev.lstm_momentum;
    detail::set_rng_text(rng, prev.rng_state, ckpt_dir);
    detail::truncate_log(log_path, state.iteration);
  } else {
    state.net_config = TinyNetConfig::preset(role == Role::kTeacher ? cfg.teacher_preset : cfg.student_preset,
                                             cfg.data.scene.classes);
    state.net = std::make_shared<TinyNet<float>>(state.net_config, derive_seed(cfg.seed, detail::role_stream(role), 0));
    if (terms.mf) {
      if (cfg.lstm_init == "uniform") {
        std::mt19937_64 lstm_rng(derive_seed(cfg.seed, detail::role_stream(role), 2));
        state.lstm = ConvLSTMParams<float>::uniform(cfg.lstm_kernel, cfg.lstm_hidden,
                                                    static_cast<float>(cfg.lstm_init_scale), lstm_rng);
        clip_weights(*state.lstm, static_cast<float>(cfg.clip_lo), static_cast<float>(cfg.clip_hi));
      } else {
        state.lstm = ConvLSTMParams<float>::zeros(cfg.lstm_kernel, cfg.lstm_hidden);
      }
    }
    if (!log_path.empty()) {
      fs::create_directories(opts.out_dir);
      io::write_file_atomic(log_path, "");
    }
  }

  TinyNet<float>& net = *state.net;
  net.set_trainable(true);
  SgdMomentum<float> net_opt(net.parameters(), phase.momentum);
  if (!state.net_momentum.empty()) net_opt.buffers() = state.net_momentum;
  std::optional<SgdMomentum<float>> lstm_opt;
  if (state.lstm) {
    lstm_opt.emplace(state.lstm->tensors(), phase.momentum);
    if (!state.lstm_momentum.empty()) lstm_opt->buffers() = state.lstm_momentum;
  }

  std::optional<TeacherCache> cache;
  if (role == Role::kStudent && terms.needs_teacher()) cache.emplace(*teacher, objective.pair_grid);

  const auto checkpoint_now = [&]() {
    state.net_momentum = net_opt.buffers();
    if (lstm_opt) state.lstm_momentum = lstm_opt->buffers();
    state.rng_state = detail::rng_text(rng);
    if (!ckpt_dir.empty()) save_checkpoint(state, ckpt_dir);
  };

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::app);
    if (!log) throw IoError(log_path, "cannot open training log");
  }

  TrainResult result;
  const bool all_frames = terms.any();
  const int batch = phase.batch;
  int ran = 0;
  while (state.iteration < phase.max_iters) {
    if (opts.stop_after >= 0 && ran >= opts.stop_after) {
      result.checkpoint = state;
      return result;
    }
    const int iter = state.iteration;
    const double lr = poly_lr(iter, phase.max_iters, phase.base_lr, phase.poly_power);
    net_opt.zero_grad();
    if (lstm_opt) lstm_opt->zero_grad();
    IterationRecord rec;
    rec.iteration = iter;
    rec.lr = lr;
    std::vector<std::string> drawn;
    for (int b = 0; b < batch; ++b) {
      const std::size_t ci = std::uniform_int_distribution<std::size_t>(0, clips.size() - 1)(rng);
      const VideoClip& clip = clips[ci];
      const Sequence seq = sample_sequence(clip, rng, cfg.window, cfg.sequence_length);
      std::string where = clip.id + "@";
      for (std::size_t i = 0; i < seq.frames.size(); ++i) where += (i ? "," : "") + std::to_string(seq.frames[i]);
      drawn.push_back(where);

      SequenceBatch<float> sb;
      for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        const bool labeled = static_cast<int>(i) == seq.labeled_position;
        if (!all_frames && !labeled) continue;
        const int f = seq.frames[i];
        const NetOutput<float> out = net.forward(Var<float>::constant(clip.frames[f]));
        sb.student.push_back({out.probs, out.features});
        sb.labels.push_back(labeled ? std::optional<LabelMap>(*clip.label_for(f)) : std::nullopt);
        if (cache) sb.teacher.push_back(cache->get(clip, ci, f));
      }
      if (all_frames) {
        sb.flows = seq.flows;
        for (std::size_t i = 0; i + 1 < seq.frames.size(); ++i) {
          const Tensor<float> warped = warp_backward(clip.frames[seq.frames[i + 1]], seq.flows[i]);
          sb.masks.push_back(occlusion_mask(clip.frames[seq.frames[i]], warped));
        }
      }
      const LossBreakdown<float> lb = total_objective(sb, objective, state.lstm ? &*state.lstm : nullptr);
      backward(scale(lb.objective, 1.0f / static_cast<float>(batch)));
      rec.ce += lb.ce / batch;
      rec.sf_pixel += lb.sf_pixel / batch;
      rec.sf_pair += lb.sf_pair / batch;
      rec.tl += lb.tl / batch;
      rec.pf += lb.pf / batch;
      rec.mf += lb.mf / batch;
      rec.anti_collapse += lb.anti_collapse / batch;
      rec.total += lb.total / batch;
      rec.teacher_embedding_norm += lb.teacher_embedding_norm / batch;
    }

    const double grad_sq = detail::sum_squares(net_opt.params(), true) +
                           (lstm_opt ? detail::sum_squares(lstm_opt->params(), true) : 0.0);
    if (!std::isfinite(rec.total) || !std::isfinite(grad_sq)) {
      io::KeyValues dump;
      dump.set_number("iteration", iter);
      dump.set("lr", io::fmt_double(lr, 17));
      dump.set("record", format_record(rec, terms, objective.lambda, objective.anti_collapse));
      dump.set("gradient_sq_norm", io::fmt_double(grad_sq, 17));
      dump.set("parameter_sq_norm", io::fmt_double(detail::sum_squares(net_opt.params(), false), 17));
      std::string items;
      for (std::size_t i = 0; i < drawn.size(); ++i) items += (i ? ";" : "") + drawn[i];
      dump.set("batch", items);
      const auto names = net.parameter_names();
      const auto params = net.parameters();
      for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i].value().all_finite() || !params[i].grad().all_finite()) dump.set("non_finite." + names[i], "true");
      std::string where;
      if (!opts.out_dir.empty()) {
        where = (fs::path(opts.out_dir) / "divergence_dump").string();
        io::write_file_atomic(where, dump.str());
      }
      throw DivergenceError("non-finite loss or gradient at iteration " + std::to_string(iter) +
                            (where.empty() ? "" : "; state dumped to " + where) + "\n" + dump.str());
    }

    net_opt.step(lr);
    if (lstm_opt) {
      lstm_opt->step(lr);
      clip_weights(*state.lstm, static_cast<float>(cfg.clip_lo), static_cast<float>(cfg.clip_hi));
    }
    state.iteration = iter + 1;
    ++ran;
    result.log.push_back(rec);
    if (log.is_open()) {
      log << format_record(rec, terms, objective.lambda, objective.anti_collapse) << "\n";
      log.flush();
    }
    if (opts.progress && (state.iteration % opts.progress_every == 0 || state.iteration == phase.max_iters))
      *opts.progress << role_name(role) << " " << state.iteration << "/" << phase.max_iters << " "
                     << format_record(rec, terms, objective.lambda, objective.anti_collapse) << std::endl;
    if (state.iteration % phase.checkpoint_every == 0 && state.iteration < phase.max_iters) checkpoint_now();
  }
  checkpoint_now();
  result.checkpoint = state;
  result.finished = true;
  return result;
}

inline TrainResult train_teacher(const TrainingConfig& cfg, const std::vector<VideoClip>& clips,
                                 const TrainOptions& opts = {}) {
  return run_training(cfg, Role::kTeacher, clips, nullptr, opts);
}

/// The teacher is frozen for the whole run: its parameters record no
/// gradients and are never handed to an optimiser.
inline TrainResult train_student(const TrainingConfig& cfg, const std::vector<VideoClip>& clips,
                                 SegmentationNet<float>& teacher, const TrainOptions& opts = {}) {
  teacher.set_trainable(false);
  return run_training(cfg, Role::kStudent, clips, &teacher, opts);
}

// ---------------------------------------------------------------------------
// Evaluation

/// Hard per-frame prediction; depends on `image` and the parameters only.
inline LabelMap predict(const SegmentationNet<float>& net, const Tensor<float>& image) {
  return argmax_labels(net.forward(Var<float>::constant(image)).probs.value());
}

struct EvalOptions {
  bool labeled_only = false;  // skip unlabeled frames; no temporal consistency
  bool reverse_order = false;
  std::string dump_dir;       // write <dump_dir>/<clip>/pred_%03d.png
};

struct Evaluation {
  EvalReport report;
  bool has_tc = false;
  std::size_t parameters = 0;
  double fps = 0;
  int frames = 0;
};

/// Per-frame inference over every clip, then accuracy on labeled frames and
/// temporal consistency over whole predicted sequences.
inline Evaluation evaluate(const SegmentationNet<float>& net, const std::vector<VideoClip>& clips,
                           const EvalOptions& opts = {}) {
  TEMPSEG_VALIDATE(!clips.empty(), "evaluation split is empty");
  const int classes = net.classes();
  std::vector<std::pair<std::size_t, int>> order;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    TEMPSEG_VALIDATE(clips[c].classes == classes, "clip ", clips[c].id, " has ", clips[c].classes,
                     " classes, network predicts ", classes);
    for (int t = 0; t < clips[c].length(); ++t)
      if (!opts.labeled_only || clips[c].label_for(t)) order.emplace_back(c, t);
  }
  if (opts.reverse_order) std::reverse(order.begin(), order.end());

  std::vector<std::vector<LabelMap>> preds(clips.size());
  for (std::size_t c = 0; c < clips.size(); ++c) preds[c].resize(static_cast<std::size_t>(clips[c].length()));
  const auto start = std::chrono::steady_clock::now();
  for (const auto& [c, t] : order) {
    TEMPSEG_VALIDATE(!clips[c].frames[t].empty(), "frame ", t, " of clip ", clips[c].id, " was not loaded");
    preds[c][t] = predict(net, clips[c].frames[t]);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Evaluation ev;
  ev.frames = static_cast<int>(order.size());
  ev.fps = seconds > 0 ? ev.frames / seconds : 0.0;
  ev.parameters = net.parameter_count();

  std::vector<LabelMap> p_lab, g_lab;
  for (std::size_t c = 0; c < clips.size(); ++c)
    for (std::size_t i = 0; i < clips[c].labeled.size(); ++i) {
      p_lab.push_back(preds[c][clips[c].labeled[i]]);
      g_lab.push_back(clips[c].labels[i]);
    }
  if (opts.labeled_only) {
    const AccuracyReport acc = confusion_and_miou(p_lab, g_lab, classes);
    ev.report.classes = classes;
    for (int k = 0; k < classes; ++k) ev.report.class_names.push_back("class_" + std::to_string(k));
    ev.report.class_iou = acc.class_iou;
    ev.report.class_tc.assign(static_cast<std::size_t>(classes), std::nullopt);
    ev.report.miou = acc.miou;
    ev.report.pixel_accuracy = acc.pixel_accuracy;
    ev.report.mean_tc = std::nan("");
  } else {
    std::vector<std::vector<FlowField>> to_prev;
    for (const auto& clip : clips) {
      TEMPSEG_VALIDATE(clip.backward_flows.size() + 1 == clip.frames.size(), "clip ", clip.id,
                       " has no backward flows for temporal consistency");
      to_prev.push_back(clip.backward_flows);
    }
    ev.report = per_class_report(p_lab, g_lab, preds, to_prev, classes);
    for (std::size_t c = 0; c < clips.size(); ++c) ev.report.sequence_ids[c] = clips[c].id;
    ev.has_tc = true;
  }

  if (!opts.dump_dir.empty())
    for (const auto& [c, t] : order)
      write_labels_png(detail::indexed((std::filesystem::path(opts.dump_dir) / clips[c].id).string(), "pred", t, "png"),
                       preds[c][t]);
  return ev;
}

}  // namespace tempseg
