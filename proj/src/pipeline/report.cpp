// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Metrics tables, Markdown summary and SVG plots for one run.  Everything
// here is a pure function of earlier stage artifacts.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "../fft.hpp"
#include "emshep/errors.hpp"
#include "emshep/evalkit.hpp"
#include "emshep/io.hpp"
#include "internal.hpp"

namespace emshep::pipeline::detail {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, int prec = 4) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

std::uint64_t table_hash(const io::CsvTable& t) {
  for (const auto& c : t.comments)
    if (c.rfind("config_hash=", 0) == 0) return io::parse_hex64(c.substr(12));
  return 0;
}

io::CsvTable read_checked(const fs::path& p, std::uint64_t expected) {
  io::CsvTable t = io::read_csv(p);
  check_hash(table_hash(t), expected, p.filename().string());
  return t;
}

struct VerdictEntry {
  std::uint64_t id = 0;
  std::size_t pred = 0;
  double loss = 0.0;
  double threshold = 0.0;
  bool flagged = false;
  std::size_t label = 0;
  long target = -1;
};

std::vector<VerdictEntry> read_verdicts(const fs::path& dir, const std::string& group,
                                        const io::CsvTable& index, std::uint64_t h) {
  const io::CsvTable t = read_checked(dir / ("verdicts_" + group + ".csv"), h);
  const std::size_t ci = t.column("sample_id"), cp = t.column("pred_label"),
                    cl = t.column("loss"), ct = t.column("threshold"),
                    cd = t.column("decision");
  std::vector<VerdictEntry> out;
  for (const auto& r : t.rows) {
    VerdictEntry e;
    e.id = static_cast<std::uint64_t>(io::parse_int(r[ci]));
    e.pred = static_cast<std::size_t>(io::parse_int(r[cp]));
    e.loss = io::parse_double(r[cl]);
    e.threshold = io::parse_double(r[ct]);
    e.flagged = r[cd] == "adversarial";
    out.push_back(e);
  }
  const std::size_t ig = index.column("group"), il = index.column("label"),
                    it = index.column("target");
  std::size_t k = 0;
  for (const auto& r : index.rows) {
    if (r[ig] != group) continue;
    if (k >= out.size()) throw FormatError("report: index/verdict mismatch for " + group);
    out[k].label = static_cast<std::size_t>(io::parse_int(r[il]));
    out[k].target = io::parse_int(r[it]);
    ++k;
  }
  if (k != out.size()) throw FormatError("report: index/verdict mismatch for " + group);
  return out;
}

double flagged_rate(const std::vector<const VerdictEntry*>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
  for (const auto* e : v) n += e->flagged ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(v.size());
}

std::vector<const VerdictEntry*> all_of(const std::vector<VerdictEntry>& v) {
  std::vector<const VerdictEntry*> out;
  for (const auto& e : v) out.push_back(&e);
  return out;
}

// ---- SVG ------------------------------------------------------------------

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> pts;
};

void line_plot(const fs::path& path, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, const std::vector<Series>& series, double x0,
               double x1, double y0, double y1) {
  const double W = 480, H = 360, L = 60, R = 20, T = 36, B = 50;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  std::ofstream o(path, std::ios::binary);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\""
    << H - T - B << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << fmt(px(fx), 1) << "\" y=\"" << H - B + 16
      << "\" text-anchor=\"middle\">" << fmt(fx, 2) << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << fmt(py(fy) + 4, 1) << "\" text-anchor=\"end\">"
      << fmt(fy, 2) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << xlabel << "</text>\n";
  o << "<text x=\"14\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* col = kPalette[s % 6];
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[s].pts) o << fmt(px(x), 1) << ',' << fmt(py(y), 1) << ' ';
    o << "\"/>\n";
    o << "<text x=\"" << W - R - 8 << "\" y=\"" << T + 16 + 14 * s << "\" text-anchor=\"end\" fill=\""
      << col << "\">" << series[s].name << "</text>\n";
  }
  o << "</svg>\n";
}

void heatmap(const fs::path& path, const std::string& title, const evalkit::TTestMap& m) {
  const double cell = 8, L = 40, T = 36;
  const double W = L + cell * static_cast<double>(m.cols) + 20;
  const double H = T + cell * static_cast<double>(m.rows) + 30;
  const double peak = std::max(m.peak_abs(), 1e-12);
  std::ofstream o(path, std::ios::binary);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      const auto& v = m.t[r * m.cols + c];
      std::string fill = "#cccccc";
      if (v) {
        const int g = static_cast<int>(std::lround(255.0 * (1.0 - std::min(std::abs(*v) / peak, 1.0))));
        char buf[16];
        std::snprintf(buf, sizeof(buf), "#ff%02x%02x", g, g);
        fill = buf;
      }
      o << "<rect x=\"" << L + cell * static_cast<double>(c) << "\" y=\""
        << T + cell * static_cast<double>(r) << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"" << fill << "\"/>\n";
    }
  }
  o << "<text x=\"" << L << "\" y=\"" << H - 10 << "\">peak |t| = " << fmt(m.peak_abs(), 2)
    << " (rows: time windows, columns: bands)</text>\n";
  o << "</svg>\n";
}

// ---- leakage t-tests --------------------------------------------------------

struct TTestRow {
  std::string mode;
  double cross = 0.0;
  double same = 0.0;
};

// Class 0 vs class 1 against a split of class 0, equal group sizes.
TTestRow compare(const std::string& mode, const std::vector<std::vector<double>>& c0,
                 const std::vector<std::vector<double>>& c1, std::size_t rows, std::size_t cols,
                 evalkit::TTestMap* cross_map = nullptr) {
  const std::size_t half = std::min(c0.size() / 2, c1.size());
  std::vector<std::vector<double>> a(c0.begin(), c0.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<std::vector<double>> b(c0.begin() + static_cast<std::ptrdiff_t>(half),
                                     c0.begin() + static_cast<std::ptrdiff_t>(2 * half));
  std::vector<std::vector<double>> o(c1.begin(), c1.begin() + static_cast<std::ptrdiff_t>(half));
  const evalkit::TTestMap cross = evalkit::welch_t(a, o, rows, cols);
  const evalkit::TTestMap same = evalkit::welch_t(a, b, rows, cols);
  if (cross_map) *cross_map = cross;
  return {mode, cross.peak_abs(), same.peak_abs()};
}

}  // namespace

void write_report(const ExperimentConfig& cfg, const fs::path& run) {
  auto dir = [&](Stage s) { return run / std::string(stage_name(s)); };
  const fs::path out = dir(Stage::kReport);
  const std::uint64_t h = cfg.stage_hash(Stage::kReport);
  const bool robust = cfg.scenario == "robust";
  const std::size_t N = cfg.n_classes;
  std::vector<std::pair<std::string, double>> metrics;

  // Victim.
  const auto victim_summary = read_metric_table(dir(Stage::kTrainVictim) / "summary.csv");
  for (const auto& [k, v] : victim_summary) metrics.emplace_back("victim_" + k, v);

  // EM classifiers.
  const io::CsvTable emrep =
      read_checked(dir(Stage::kTrainEmclf) / "report.csv", cfg.stage_hash(Stage::kTrainEmclf));
  std::vector<double> seg_acc;
  for (const auto& r : emrep.rows) {
    if (r[emrep.column("class")] == "all") seg_acc.push_back(io::parse_double(r[emrep.column("recall")]));
  }
  double acc_mean = 0.0;
  for (std::size_t m = 0; m < seg_acc.size(); ++m) {
    metrics.emplace_back("emclf_val_accuracy_seg" + std::to_string(m), seg_acc[m]);
    acc_mean += seg_acc[m] / static_cast<double>(seg_acc.size());
  }
  metrics.emplace_back("emclf_val_accuracy_mean", acc_mean);

  // Segmentation.
  const io::CsvTable segt =
      read_checked(dir(Stage::kProcess) / "segmentation.csv", cfg.stage_hash(Stage::kProcess));
  double seg_fail = 0.0;
  for (const auto& r : segt.rows) seg_fail += io::parse_double(r[segt.column("failures")]);
  metrics.emplace_back("segmentation_failures", seg_fail);

  // Verdicts.
  const std::uint64_t hd = cfg.stage_hash(Stage::kDetect);
  const io::CsvTable index = read_checked(dir(Stage::kDetect) / "index.csv", hd);
  const auto test = read_verdicts(dir(Stage::kDetect), "test", index, hd);
  const auto holdout = read_verdicts(dir(Stage::kDetect), "holdout", index, hd);

  // Per-class FPR on the fresh benign hold-out, routed by prediction.
  std::vector<std::vector<const VerdictEntry*>> by_class(N);
  for (const auto& e : holdout) by_class[e.pred].push_back(&e);
  std::vector<double> fpr(N);
  double fpr_mean = 0.0, fpr_dev = 0.0;
  for (std::size_t c = 0; c < N; ++c) {
    fpr[c] = flagged_rate(by_class[c]);
    fpr_mean += fpr[c] / static_cast<double>(N);
    fpr_dev = std::max(fpr_dev, std::abs(fpr[c] - cfg.target_fpr));
  }
  metrics.emplace_back("fpr_holdout_overall", flagged_rate(all_of(holdout)));
  metrics.emplace_back("fpr_holdout_mean", fpr_mean);
  metrics.emplace_back("fpr_holdout_max_deviation", fpr_dev);
  const double fpr_test = flagged_rate(all_of(test));
  metrics.emplace_back("fpr_test", fpr_test);
  {
    io::CsvWriter w(out / "fpr.csv");
    w.comment("config_hash=" + io::hex64(h));
    w.row({"class", "holdout_samples", "fpr"});
    for (std::size_t c = 0; c < N; ++c) {
      w.row({std::to_string(c), std::to_string(by_class[c].size()), io::format_double(fpr[c])});
    }
    w.close();
  }

  // Victim confusion on the test split.
  {
    std::vector<std::size_t> preds, labels;
    for (const auto& e : test) {
      preds.push_back(e.pred);
      labels.push_back(e.label);
    }
    const auto cm = evalkit::confusion_matrix(preds, labels, N);
    io::CsvWriter w(out / "confusion_victim.csv");
    w.comment("config_hash=" + io::hex64(h));
    std::vector<std::string> header{"true"};
    for (std::size_t c = 0; c < N; ++c) header.push_back("pred_" + std::to_string(c));
    w.row(header);
    for (std::size_t t = 0; t < N; ++t) {
      std::vector<std::string> row{std::to_string(t)};
      for (std::size_t p = 0; p < N; ++p) row.push_back(std::to_string(cm.at(t, p)));
      w.row(row);
    }
    w.close();
  }

  // Detection per attack norm.
  struct NormRow {
    std::string tag;
    std::size_t count = 0;
    double dr_mean = 0.0, dr_min = 1.0, f1 = 0.0, auc = 0.0;
  };
  std::vector<NormRow> norm_rows;
  std::vector<Series> pr_series;
  io::CsvWriter drw(out / "dr.csv");
  drw.comment("config_hash=" + io::hex64(h));
  drw.row({"norm", "target", "adversarials", "detected", "dr"});
  std::vector<double> adv_losses_first;
  for (attacks::Norm norm : cfg.attack_norms) {
    NormRow nr;
    nr.tag = norm_tag(norm);
    const auto adv = read_verdicts(dir(Stage::kDetect), "adv_" + nr.tag, index, hd);
    nr.count = adv.size();
    std::vector<std::vector<const VerdictEntry*>> by_target(N);
    for (const auto& e : adv) by_target[static_cast<std::size_t>(e.target)].push_back(&e);
    std::size_t used = 0;
    for (std::size_t t = 0; t < N; ++t) {
      const double dr = flagged_rate(by_target[t]);
      std::size_t det = 0;
      for (const auto* e : by_target[t]) det += e->flagged ? 1 : 0;
      drw.row({nr.tag, std::to_string(t), std::to_string(by_target[t].size()),
               std::to_string(det), by_target[t].empty() ? "" : io::format_double(dr)});
      if (by_target[t].empty()) continue;
      nr.dr_mean += dr;
      nr.dr_min = std::min(nr.dr_min, dr);
      ++used;
    }
    nr.dr_mean = used ? nr.dr_mean / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
    if (!used) nr.dr_min = std::numeric_limits<double>::quiet_NaN();

    // Clean test split against this batch; scores are losses relative to
    // the routed class threshold.
    std::size_t tp = 0, fp = 0, fn = 0;
    std::vector<double> scores;
    std::vector<std::uint8_t> pos;
    for (const auto& e : test) {
      fp += e.flagged ? 1 : 0;
      scores.push_back(e.loss / e.threshold);
      pos.push_back(0);
    }
    for (const auto& e : adv) {
      (e.flagged ? tp : fn) += 1;
      scores.push_back(e.loss / e.threshold);
      pos.push_back(1);
      if (norm == cfg.attack_norms.front()) adv_losses_first.push_back(e.loss / e.threshold);
    }
    nr.f1 = tp + fp + fn ? evalkit::f1(tp, fp, fn) : std::numeric_limits<double>::quiet_NaN();
    if (!adv.empty() && !test.empty()) {
      const evalkit::PrCurve pr = evalkit::pr_curve(scores, pos);
      nr.auc = pr.auc;
      io::CsvWriter w(out / ("pr_" + nr.tag + ".csv"));
      w.comment("config_hash=" + io::hex64(h));
      w.row({"threshold", "recall", "precision"});
      Series s{"PGD-" + nr.tag, {}};
      for (const auto& p : pr.points) {
        w.row({io::format_double(p.threshold), io::format_double(p.recall),
               io::format_double(p.precision)});
        s.pts.emplace_back(p.recall, p.precision);
      }
      w.close();
      pr_series.push_back(std::move(s));
    } else {
      nr.auc = std::numeric_limits<double>::quiet_NaN();
    }
    metrics.emplace_back("adv_count_" + nr.tag, static_cast<double>(nr.count));
    metrics.emplace_back("dr_mean_" + nr.tag, nr.dr_mean);
    metrics.emplace_back("dr_min_" + nr.tag, nr.dr_min);
    metrics.emplace_back("f1_" + nr.tag, nr.f1);
    metrics.emplace_back("pr_auc_" + nr.tag, nr.auc);
    norm_rows.push_back(nr);
  }
  drw.close();
  if (!pr_series.empty()) {
    line_plot(out / "pr.svg", "Precision-recall (clean test split vs adversarials)", "recall",
              "precision", pr_series, 0.0, 1.0, 0.0, 1.0);
  }

  // Robust scenario: FGSM-perturbed benign inputs the victim still gets right.
  double fpr_fgsm = std::numeric_limits<double>::quiet_NaN();
  double fpr_combined = fpr_fgsm;
  std::size_t fgsm_n = 0;
  if (robust) {
    const auto fg = read_verdicts(dir(Stage::kDetect), "fgsm", index, hd);
    std::vector<const VerdictEntry*> ok;
    for (const auto& e : fg)
      if (e.pred == e.label) ok.push_back(&e);
    fgsm_n = ok.size();
    fpr_fgsm = flagged_rate(ok);
    std::vector<const VerdictEntry*> pooled = all_of(test);
    pooled.insert(pooled.end(), ok.begin(), ok.end());
    fpr_combined = flagged_rate(pooled);
    metrics.emplace_back("fgsm_benign_count", static_cast<double>(fgsm_n));
    metrics.emplace_back("fpr_fgsm", fpr_fgsm);
    metrics.emplace_back("fpr_combined", fpr_combined);
  }

  // Loss histogram: hold-out benign vs the first attack batch.
  {
    std::vector<double> ben;
    for (const auto& e : holdout) ben.push_back(e.loss / e.threshold);
    const double hi = 3.0;
    const std::size_t bins = 30;
    auto hist = [&](const std::vector<double>& v) {
      std::vector<double> c(bins, 0.0);
      for (double x : v) c[std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, x) / hi * bins))] += 1.0;
      for (double& x : c) x /= std::max<std::size_t>(v.size(), 1);
      return c;
    };
    const auto hb = hist(ben), ha = hist(adv_losses_first);
    Series sb{"benign hold-out", {}}, sa{"adversarial", {}};
    double ymax = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
      const double x = (static_cast<double>(b) + 0.5) * hi / bins;
      sb.pts.emplace_back(x, hb[b]);
      sa.pts.emplace_back(x, ha[b]);
      ymax = std::max({ymax, hb[b], ha[b]});
    }
    line_plot(out / "loss_hist.svg", "Detector loss / class threshold", "loss / threshold",
              "fraction", {sb, sa}, 0.0, hi, 0.0, std::max(ymax, 1e-9));
  }

  // Leakage t-tests: band-selected spectrogram cells, raw time samples of
  // the first segment, and the whole-trace spectrum.
  std::vector<TTestRow> trows;
  evalkit::TTestMap cross_map;
  {
    std::uint64_t fh = 0;
    const FeatureStore store = load_features(dir(Stage::kProcess) / "features.bin", &fh);
    check_hash(fh, cfg.stage_hash(Stage::kProcess), "features.bin");
    std::uint64_t dh = 0;
    const victim::Dataset data =
        victim::import_dataset_csv(dir(Stage::kGenData) / "dataset.csv", N, &dh);
    check_hash(dh, cfg.stage_hash(Stage::kGenData), "dataset.csv");
    const auto& ds = store.group("dataset");
    std::vector<std::size_t> c0, c1;
    for (std::size_t i : data.indices(victim::Split::kTrain)) {
      if (data.labels[i] == 0) c0.push_back(i);
      if (data.labels[i] == 1) c1.push_back(i);
    }
    std::size_t rows = 0;
    for (const auto& l : store.layout) rows += l.windows;
    const std::size_t cols = cfg.bands;
    std::vector<std::vector<double>> f0, f1;
    for (std::size_t i : c0) f0.push_back(ds.records[i].values);
    for (std::size_t i : c1) f1.push_back(ds.records[i].values);
    trows.push_back(compare("spectrogram", f0, f1, rows, cols, &cross_map));

    std::uint64_t vh = 0, sh = 0;
    const victim::VictimModel model = victim::load_victim(dir(Stage::kTrainVictim) / "victim.bin", &vh);
    check_hash(vh, cfg.stage_hash(Stage::kTrainVictim), "victim.bin");
    const leaksim::ExecutionSchedule sched = leaksim::load_schedule(dir(Stage::kSimulate) / "schedule.bin", &sh);
    check_hash(sh, cfg.stage_hash(Stage::kSimulate), "schedule.bin");
    Featurizer fz(cfg, model, sched);
    const std::size_t len0 = store.layout[0].length;
    std::size_t trace_len = std::numeric_limits<std::size_t>::max();
    auto raw = [&](const std::vector<std::size_t>& idx, std::vector<std::vector<double>>& time,
                   std::vector<std::vector<double>>& spec) {
      time.resize(idx.size());
      spec.resize(idx.size());
      std::vector<leaksim::Trace> traces(idx.size());
      parallel_for(idx.size(), cfg.jobs, [&](std::size_t k) {
        const std::size_t i = idx[k];
        const auto segs = fz.segments(data.inputs[i], sample_id(kGroupDataset, i));
        time[k] = traceproc::fit_length(segs.empty() ? std::vector<double>{} : segs[0].samples, len0);
        traces[k] = fz.trace(data.inputs[i], sample_id(kGroupDataset, i), data.labels[i]);
      });
      for (const auto& t : traces) trace_len = std::min(trace_len, t.samples.size());
      for (std::size_t k = 0; k < traces.size(); ++k) spec[k] = std::move(traces[k].samples);
    };
    std::vector<std::vector<double>> t0, t1, s0, s1;
    raw(c0, t0, s0);
    raw(c1, t1, s1);
    trows.push_back(compare("time", t0, t1, 1, len0));
    auto magnitude = [&](std::vector<std::vector<double>>& v) {
      std::vector<std::complex<double>> z;
      for (auto& x : v) {
        x.resize(trace_len);
        fft::forward_real(x, z);
        x.resize(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) x[k] = std::abs(z[k]);
      }
    };
    magnitude(s0);
    magnitude(s1);
    trows.push_back(compare("spectrum", s0, s1, 1, trace_len / 2 + 1));
  }
  {
    io::CsvWriter w(out / "ttest.csv");
    w.comment("config_hash=" + io::hex64(h));
    w.row({"mode", "cross_class_peak", "same_class_peak", "ratio"});
    for (const auto& r : trows) {
      const double ratio = r.same > 0.0 ? r.cross / r.same : std::numeric_limits<double>::infinity();
      w.row({r.mode, io::format_double(r.cross), io::format_double(r.same), io::format_double(ratio)});
      metrics.emplace_back("ttest_cross_" + r.mode, r.cross);
      metrics.emplace_back("ttest_same_" + r.mode, r.same);
      metrics.emplace_back("ttest_ratio_" + r.mode, ratio);
    }
    w.close();
    io::CsvWriter m(out / "ttest_map.csv");
    m.comment("config_hash=" + io::hex64(h));
    std::vector<std::string> header;
    for (std::size_t c = 0; c < cross_map.cols; ++c) header.push_back("band" + std::to_string(c));
    m.row(header);
    for (std::size_t r = 0; r < cross_map.rows; ++r) {
      std::vector<std::string> row;
      for (std::size_t c = 0; c < cross_map.cols; ++c) {
        const auto& v = cross_map.t[r * cross_map.cols + c];
        row.push_back(v ? io::format_double(*v) : "");
      }
      m.row(row);
    }
    m.close();
    heatmap(out / "ttest_map.svg", "Welch t, class 0 vs class 1 (band-selected spectrograms)",
            cross_map);
  }

  write_metric_table(out / "metrics.csv", metrics, h);

  // Markdown summary.
  std::map<std::string, double> mm(metrics.begin(), metrics.end());
  std::ostringstream md;
  md << "# Detection report\n\n";
  md << "- config hash: `" << io::hex64(cfg.hash()) << "`\n";
  md << "- scenario: " << cfg.scenario << "\n";
  md << "- seed: " << cfg.seed << "\n";
  md << "- target FPR per class: " << fmt(cfg.target_fpr, 3) << "\n\n";
  md << "## Victim\n\n| metric | value |\n|---|---|\n";
  for (const auto& [k, v] : victim_summary) md << "| " << k << " | " << fmt(v) << " |\n";
  md << "\n## EM classifiers (validation accuracy)\n\n| segment | accuracy |\n|---|---|\n";
  for (std::size_t m = 0; m < seg_acc.size(); ++m) md << "| " << m << " | " << fmt(seg_acc[m]) << " |\n";
  md << "\nSegmentation failures (all groups): " << static_cast<long>(seg_fail) << "\n";
  md << "\n## Detection (targeted PGD)\n\n"
     << "| norm | adversarials | mean DR | min DR | F1 | PR-AUC |\n|---|---|---|---|---|---|\n";
  for (const auto& r : norm_rows) {
    md << "| " << r.tag << " | " << r.count << " | " << fmt(r.dr_mean) << " | " << fmt(r.dr_min)
       << " | " << fmt(r.f1) << " | " << fmt(r.auc) << " |\n";
  }
  md << "\nDR is averaged over target classes; F1 and PR-AUC use the clean test split as the "
        "benign set.\n";
  md << "\n## False positives\n\n| class | hold-out samples | FPR |\n|---|---|---|\n";
  for (std::size_t c = 0; c < N; ++c) {
    md << "| " << c << " | " << by_class[c].size() << " | " << fmt(fpr[c]) << " |\n";
  }
  md << "\nHold-out mean FPR " << fmt(fpr_mean) << ", max deviation from target "
     << fmt(fpr_dev) << "; clean test split FPR " << fmt(fpr_test) << ".\n";
  if (robust) {
    md << "\n## Robust victim\n\n| metric | value |\n|---|---|\n";
    md << "| FGSM accuracy (robust) | " << fmt(mm["victim_fgsm_accuracy"]) << " |\n";
    md << "| FGSM accuracy (reference) | " << fmt(mm["victim_reference_fgsm_accuracy"]) << " |\n";
    md << "| FGSM benign samples | " << fgsm_n << " |\n";
    md << "| FPR on FGSM benign | " << fmt(fpr_fgsm) << " |\n";
    md << "| FPR clean + FGSM | " << fmt(fpr_combined) << " |\n";
  }
  md << "\n## Leakage t-test (class 0 vs class 1)\n\n"
     << "| domain | cross-class peak abs t | same-class peak abs t | ratio |\n|---|---|---|---|\n";
  for (const auto& r : trows) {
    md << "| " << r.mode << " | " << fmt(r.cross, 2) << " | " << fmt(r.same, 2) << " | "
       << fmt(r.same > 0 ? r.cross / r.same : std::numeric_limits<double>::infinity(), 2) << " |\n";
  }
  md << "\nPlots: `pr.svg`, `loss_hist.svg`, `ttest_map.svg`.\n";
  std::ofstream(out / "report.md", std::ios::binary) << md.str();
}

}  // namespace emshep::pipeline::detail
