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


// Table-1-style ablation grid: a shared teacher, one student per
// (scheme, seed), and an optional teacher-transfer contrast between PF
// students distilled from a TL-trained and a no-TL teacher.

#pragma once

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tempseg/config.hpp"
#include "tempseg/engine.hpp"

namespace tempseg {

/// Term flags of scheme a..j.
inline TermFlags scheme_terms(const std::string& scheme) {
  static const std::map<std::string, std::string> table = {
      {"a", "none"},  {"b", "sf"},       {"c", "pf"},          {"d", "mf"},       {"e", "tl"},
      {"f", "pf,mf"}, {"g", "sf,tl"},    {"h", "pf,mf,tl"},    {"i", "sf,pf,mf"}, {"j", "all"}};
  auto it = table.find(scheme);
  TEMPSEG_VALIDATE(it != table.end(), "unknown scheme '", scheme, "' (expected a..j)");
  return TermFlags::parse(it->second);
}

inline std::vector<std::string> parse_schemes(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    std::string s = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (s == "all") {
      for (const char* x : {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"}) out.emplace_back(x);
    } else {
      scheme_terms(s);
      out.push_back(s);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  TEMPSEG_VALIDATE(!out.empty(), "no schemes selected");
  return out;
}

struct AblationRow {
  std::string scheme;  // a..j, or "transfer"
  std::uint64_t seed = 0;
  std::string teacher = "tl";  // tl | notl
  TermFlags terms;
  bool ok = false;
  std::string error;
  double miou = 0, pixel_accuracy = 0, tc = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;      // scheme grid
  std::vector<AblationRow> transfer;  // PF students from both teachers
  double teacher_tl_miou = 0, teacher_tl_tc = 0;
  double teacher_notl_miou = 0, teacher_notl_tc = 0;
  bool all_ok() const {
    for (const auto* v : {&rows, &transfer})
      for (const auto& r : *v)
        if (!r.ok) return false;
    return true;
  }
};

namespace detail {

inline void log_line(std::ostream* out, const std::string& s) {
  if (out) *out << s << std::endl;
}

inline AblationRow run_member(const TrainingConfig& base, const std::string& scheme, std::uint64_t seed,
                              const TermFlags& terms, const std::vector<VideoClip>& train,
                              const std::vector<VideoClip>& val, SegmentationNet<float>& teacher,
                              const std::string& dir, std::ostream* progress) {
  AblationRow row;
  row.scheme = scheme;
  row.seed = seed;
  row.terms = terms;
  try {
    TrainingConfig cfg = base;
    cfg.seed = seed;
    cfg.terms = terms;
    TrainOptions o;
    o.out_dir = dir;
    const TrainResult r = train_student(cfg, train, teacher, o);
    const Evaluation ev = evaluate(*r.checkpoint.net, val);
    io::write_file_atomic(dir + "/metrics.csv", metrics_csv(ev.report));
    row.miou = ev.report.miou;
    row.pixel_accuracy = ev.report.pixel_accuracy;
    row.tc = ev.report.mean_tc;
    row.ok = true;
  } catch (const std::exception& e) {
    row.error = e.what();
    row.error = row.error.substr(0, row.error.find('\n'));
  }
  log_line(progress, "scheme " + scheme + " seed " + std::to_string(seed) +
                         (row.ok ? " miou=" + io::fmt_double(row.miou, 6) + " tc=" + io::fmt_double(row.tc, 6)
                                 : " FAILED: " + row.error));
  return row;
}

inline std::pair<std::shared_ptr<TinyNet<float>>, Evaluation> make_teacher(
    const TrainingConfig& base, bool temporal_loss, const std::vector<VideoClip>& train,
    const std::vector<VideoClip>& val, const std::string& dir, std::ostream* progress) {
  TrainingConfig cfg = base;
  cfg.teacher_temporal_loss = temporal_loss;
  TrainOptions o;
  o.out_dir = dir;
  const TrainResult r = train_teacher(cfg, train, o);
  Evaluation ev = evaluate(*r.checkpoint.net, val);
  io::write_file_atomic(dir + "/metrics.csv", metrics_csv(ev.report));
  log_line(progress, std::string("teacher ") + (temporal_loss ? "tl" : "notl") +
                         " miou=" + io::fmt_double(ev.report.miou, 6) + " tc=" + io::fmt_double(ev.report.mean_tc, 6));
  return {r.checkpoint.net, std::move(ev)};
}

}  // namespace detail

/// Trains the teacher(s) once with the base seed, then every selected
/// scheme for every seed, members strictly in sequence. A failing member is
/// recorded and the grid continues.
inline AblationResult run_ablation(const TrainingConfig& cfg, const std::vector<VideoClip>& train,
                                   const std::vector<VideoClip>& val, const std::string& out_dir,
                                   std::ostream* progress = nullptr) {
  namespace fs = std::filesystem;
  const auto schemes = parse_schemes(cfg.ablate_schemes);
  AblationResult res;
  auto [teacher, tev] = detail::make_teacher(cfg, true, train, val, (fs::path(out_dir) / "teacher_tl").string(), progress);
  res.teacher_tl_miou = tev.report.miou;
  res.teacher_tl_tc = tev.report.mean_tc;
  for (std::uint64_t seed : cfg.ablate_seeds)
    for (const auto& s : schemes) {
      const std::string dir = (fs::path(out_dir) / ("seed_" + std::to_string(seed)) / s).string();
      res.rows.push_back(detail::run_member(cfg, s, seed, scheme_terms(s), train, val, *teacher, dir, progress));
    }
  if (!cfg.ablate_transfer) return res;

  auto [plain, pev] = detail::make_teacher(cfg, false, train, val, (fs::path(out_dir) / "teacher_notl").string(), progress);
  res.teacher_notl_miou = pev.report.miou;
  res.teacher_notl_tc = pev.report.mean_tc;
  const TermFlags pf = TermFlags::parse("pf");
  for (std::uint64_t seed : cfg.ablate_seeds) {
    // Scheme c is exactly the PF student of the TL teacher; reuse it when run.
    AblationRow from_tl;
    bool have = false;
    for (const auto& r : res.rows)
      if (r.scheme == "c" && r.seed == seed) {
        from_tl = r;
        have = true;
      }
    if (!have) {
      const std::string dir = (fs::path(out_dir) / ("seed_" + std::to_string(seed)) / "transfer_tl").string();
      from_tl = detail::run_member(cfg, "transfer", seed, pf, train, val, *teacher, dir, progress);
    }
    from_tl.scheme = "transfer";
    from_tl.teacher = "tl";
    res.transfer.push_back(from_tl);
    const std::string dir = (fs::path(out_dir) / ("seed_" + std::to_string(seed)) / "transfer_notl").string();
    AblationRow from_plain = detail::run_member(cfg, "transfer", seed, pf, train, val, *plain, dir, progress);
    from_plain.teacher = "notl";
    res.transfer.push_back(from_plain);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Ordering checks mirroring the Table 1 / Table 2 claims

struct OrderingCheck {
  std::string name;
  int satisfied = 0;
  int evaluated = 0;
  bool pass() const { return evaluated > 0 && 2 * satisfied > evaluated; }
};

inline const AblationRow* find_row(const std::vector<AblationRow>& rows, const std::string& scheme,
                                   std::uint64_t seed, const std::string& teacher = "tl") {
  for (const auto& r : rows)
    if (r.scheme == scheme && r.seed == seed && r.teacher == teacher && r.ok) return &r;
  return nullptr;
}

/// Majority-of-seeds checks; a seed with a missing or failed member counts
/// as evaluated and unsatisfied.
inline std::vector<OrderingCheck> ordering_checks(const AblationResult& res, const std::vector<std::uint64_t>& seeds,
                                                  double margin = 0.01) {
  OrderingCheck e_tc{"TC(e) >= TC(a) + 1pt"}, e_iou{"mIoU(e) >= mIoU(a) - 1pt"};
  OrderingCheck j_iou{"mIoU(j) >= mIoU(e)"}, j_tc{"TC(j) >= TC(a) + 1pt"};
  OrderingCheck transfer{"TC(PF from TL teacher) >= TC(PF from no-TL teacher)"};
  for (std::uint64_t s : seeds) {
    const auto* a = find_row(res.rows, "a", s);
    const auto* e = find_row(res.rows, "e", s);
    const auto* j = find_row(res.rows, "j", s);
    for (auto* c : {&e_tc, &e_iou, &j_iou, &j_tc}) ++c->evaluated;
    if (a && e) {
      e_tc.satisfied += e->tc >= a->tc + margin;
      e_iou.satisfied += e->miou >= a->miou - margin;
    }
    if (j && e) j_iou.satisfied += j->miou >= e->miou;
    if (j && a) j_tc.satisfied += j->tc >= a->tc + margin;
    if (!res.transfer.empty()) {
      ++transfer.evaluated;
      const auto* t = find_row(res.transfer, "transfer", s, "tl");
      const auto* n = find_row(res.transfer, "transfer", s, "notl");
      if (t && n) transfer.satisfied += t->tc >= n->tc;
    }
  }
  std::vector<OrderingCheck> out{e_tc, e_iou, j_iou, j_tc};
  if (transfer.evaluated) out.push_back(transfer);
  return out;
}

// ---------------------------------------------------------------------------
// Emission

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "scheme,seed,teacher,sf,pf,mf,tl,miou,pixel_accuracy,tc,status\n";
  for (const auto& r : rows) {
    out += r.scheme + "," + std::to_string(r.seed) + "," + r.teacher + "," + (r.terms.sf ? "1" : "0") + "," +
           (r.terms.pf ? "1" : "0") + "," + (r.terms.mf ? "1" : "0") + "," + (r.terms.tl ? "1" : "0") + ",";
    if (r.ok)
      out += io::fmt_double(r.miou, 10) + "," + io::fmt_double(r.pixel_accuracy, 10) + "," + io::fmt_double(r.tc, 10) + ",ok\n";
    else
      out += "nan,nan,nan,FAILED\n";
  }
  return out;
}

/// One line per scheme: flags, then mean mIoU / accuracy / TC in percent
/// over the seeds that succeeded; failed members are marked.
inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::vector<std::string> order;
  for (const auto& r : rows)
    if (std::find(order.begin(), order.end(), r.scheme) == order.end()) order.push_back(r.scheme);
  std::ostringstream oss;
  oss << std::left << std::setw(8) << "scheme" << std::setw(4) << "SF" << std::setw(4) << "PF" << std::setw(4) << "MF"
      << std::setw(4) << "TL" << std::right << std::setw(8) << "mIoU" << std::setw(8) << "Acc" << std::setw(8) << "TC"
      << "  runs\n";
  for (const auto& s : order) {
    double miou = 0, acc = 0, tc = 0;
    int ok = 0, total = 0;
    TermFlags t;
    for (const auto& r : rows)
      if (r.scheme == s) {
        t = r.terms;
        ++total;
        if (!r.ok) continue;
        ++ok;
        miou += r.miou;
        acc += r.pixel_accuracy;
        tc += r.tc;
      }
    const auto mark = [](bool on) { return on ? "x" : ""; };
    oss << std::left << std::setw(8) << s << std::setw(4) << mark(t.sf) << std::setw(4) << mark(t.pf) << std::setw(4)
        << mark(t.mf) << std::setw(4) << mark(t.tl) << std::right << std::fixed << std::setprecision(2);
    if (ok)
      oss << std::setw(8) << 100 * miou / ok << std::setw(8) << 100 * acc / ok << std::setw(8) << 100 * tc / ok;
    else
      oss << std::setw(8) << "FAILED" << std::setw(8) << "-" << std::setw(8) << "-";
    oss << "  " << ok << "/" << total << (ok < total ? " (failures)" : "") << "\n";
  }
  return oss.str();
}

inline std::string transfer_table(const AblationResult& res) {
  std::ostringstream oss;
  oss << std::fixed << std::setprecision(2);
  oss << "teacher  teacher_mIoU teacher_TC  student_mIoU student_TC\n";
  for (const char* which : {"tl", "notl"}) {
    double miou = 0, tc = 0;
    int ok = 0;
    for (const auto& r : res.transfer)
      if (r.teacher == which && r.ok) {
        miou += r.miou;
        tc += r.tc;
        ++ok;
      }
    const bool tl = std::string(which) == "tl";
    oss << std::left << std::setw(9) << which << std::right << std::setw(12)
        << 100 * (tl ? res.teacher_tl_miou : res.teacher_notl_miou) << std::setw(11)
        << 100 * (tl ? res.teacher_tl_tc : res.teacher_notl_tc);
    if (ok)
      oss << std::setw(14) << 100 * miou / ok << std::setw(11) << 100 * tc / ok << "\n";
    else
      oss << std::setw(14) << "FAILED" << std::setw(11) << "-" << "\n";
  }
  return oss.str();
}

}  // namespace tempseg
