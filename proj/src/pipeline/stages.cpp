// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "emshep/anomaly.hpp"
#include "emshep/emclf.hpp"
#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "emshep/rng.hpp"
#include "internal.hpp"

namespace emshep::pipeline {

namespace fs = std::filesystem;
using namespace detail;

namespace {

std::string marker_text(const ExperimentConfig& cfg, Stage s) {
  return "stage = " + std::string(stage_name(s)) + "\nhash = " + io::hex64(cfg.stage_hash(s)) +
         "\n";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t csv_hash(const io::CsvTable& t) {
  for (const auto& c : t.comments)
    if (c.rfind("config_hash=", 0) == 0) return io::parse_hex64(c.substr(12));
  return 0;
}

struct Context {
  const ExperimentConfig& cfg;
  fs::path run;

  fs::path dir(Stage s) const { return run / std::string(stage_name(s)); }
  std::uint64_t hash(Stage s) const { return cfg.stage_hash(s); }

  victim::Dataset dataset() const {
    std::uint64_t h = 0;
    victim::Dataset d =
        victim::import_dataset_csv(dir(Stage::kGenData) / "dataset.csv", cfg.n_classes, &h);
    check_hash(h, hash(Stage::kGenData), "dataset.csv");
    return d;
  }
  victim::VictimModel victim_model() const {
    std::uint64_t h = 0;
    victim::VictimModel m = victim::load_victim(dir(Stage::kTrainVictim) / "victim.bin", &h);
    check_hash(h, hash(Stage::kTrainVictim), "victim.bin");
    return m;
  }
  std::vector<attacks::AdversarialExample> adversarials(attacks::Norm n) const {
    std::uint64_t h = 0;
    auto batch = attacks::import_adversarial_csv(
        dir(Stage::kAttack) / ("adversarial_" + norm_tag(n) + ".csv"), &h);
    check_hash(h, hash(Stage::kAttack), "adversarial_" + norm_tag(n) + ".csv");
    return batch;
  }
  std::vector<attacks::AdversarialExample> fgsm_set() const {
    std::uint64_t h = 0;
    auto batch = attacks::import_adversarial_csv(dir(Stage::kAttack) / "fgsm_benign.csv", &h);
    check_hash(h, hash(Stage::kAttack), "fgsm_benign.csv");
    return batch;
  }
  leaksim::ExecutionSchedule schedule() const {
    std::uint64_t h = 0;
    auto s = leaksim::load_schedule(dir(Stage::kSimulate) / "schedule.bin", &h);
    check_hash(h, hash(Stage::kSimulate), "schedule.bin");
    return s;
  }
  FeatureStore features() const {
    std::uint64_t h = 0;
    FeatureStore f = load_features(dir(Stage::kProcess) / "features.bin", &h);
    check_hash(h, hash(Stage::kProcess), "features.bin");
    return f;
  }
  std::vector<emclf::EmClassifier> classifiers() const {
    std::uint64_t h = 0;
    auto c = emclf::load_classifiers(dir(Stage::kTrainEmclf) / "classifiers.bin", &h);
    check_hash(h, hash(Stage::kTrainEmclf), "classifiers.bin");
    return c;
  }
  anomaly::DetectorBank bank(Stage s) const {
    std::uint64_t h = 0;
    auto b = anomaly::load_bank(dir(s) / "bank.bin", &h);
    check_hash(h, hash(s), "bank.bin");
    return b;
  }
};

std::vector<double> logits_vector(const std::vector<emclf::EmClassifier>& clfs,
                                  const FeatureStore& fs, const FeatureRecord& r,
                                  std::size_t n_classes) {
  const auto specs = fs.spectrograms(r);
  std::vector<std::vector<double>> per;
  for (std::size_t m = 0; m < clfs.size(); ++m) per.push_back(emclf::classify(clfs[m], m, specs[m]));
  return emclf::concat_logits(per, clfs.size(), n_classes);
}

SegmentLayout make_layout(const ExperimentConfig& cfg, std::size_t length) {
  const std::vector<double> zeros(length, 0.0);
  const traceproc::Spectrogram s = traceproc::select_bands(
      traceproc::stft(zeros, cfg.stft_window, cfg.stft_stride), cfg.carrier, cfg.bands);
  SegmentLayout l;
  l.length = length;
  l.windows = s.windows;
  l.bands = s.bands;
  return l;
}

// Fresh benign draws of one pool, scored against the bank.
struct PoolScores {
  std::vector<std::uint64_t> ids;
  std::vector<std::uint32_t> labels;
  std::vector<anomaly::Verdict> verdicts;  // threshold/decision unset if uncalibrated
};

PoolScores score_pool(const ExperimentConfig& cfg, const victim::VictimModel& model,
                      const leaksim::ExecutionSchedule& sched, const FeatureStore& fs,
                      const std::vector<emclf::EmClassifier>& clfs,
                      const anomaly::DetectorBank& bank, std::uint64_t group,
                      std::uint64_t draw_offset, std::size_t per_class) {
  const victim::SampleSource src(dataset_config(cfg));
  Featurizer fz(cfg, model, sched);
  fz.set_layout(fs.layout);
  const std::size_t n = cfg.n_classes * per_class;
  PoolScores out;
  out.ids.resize(n);
  out.labels.resize(n);
  out.verdicts.resize(n);
  parallel_for(n, cfg.jobs, [&](std::size_t k) {
    const std::size_t c = k / per_class;
    const std::vector<double> x = src.draw(c, stream::kHoldout, draw_offset + k);
    const std::uint64_t id = sample_id(group, k);
    const FeatureRecord r = fz.featurize(x, id, static_cast<std::uint32_t>(c));
    const std::vector<double> lv = logits_vector(clfs, fs, r, cfg.n_classes);
    anomaly::Verdict v;
    v.predicted_class = r.pred;
    if (bank.calibrated()) {
      v = anomaly::detect(bank, lv, r.pred);
    } else {
      v.loss = anomaly::score(bank, lv, r.pred);
    }
    out.ids[k] = id;
    out.labels[k] = static_cast<std::uint32_t>(c);
    out.verdicts[k] = v;
  });
  return out;
}

constexpr std::uint64_t kHoldoutDrawOffset = 1ULL << 32;

}  // namespace

Pipeline::Pipeline(ExperimentConfig cfg, fs::path out_root)
    : cfg_(std::move(cfg)), out_root_(std::move(out_root)) {
  cfg_.validate();
}

fs::path Pipeline::run_dir() const { return out_root_ / io::hex64(cfg_.hash()); }

fs::path Pipeline::stage_dir(Stage s) const { return run_dir() / std::string(stage_name(s)); }

bool Pipeline::is_complete(Stage s) const {
  const fs::path m = stage_dir(s) / "STAGE";
  return fs::exists(m) && slurp(m) == marker_text(cfg_, s);
}

void Pipeline::mark_complete(Stage s) const {
  std::ofstream out(stage_dir(s) / "STAGE", std::ios::binary);
  out << marker_text(cfg_, s);
  if (!out) throw Error("cannot write stage marker in " + stage_dir(s).string());
}

void Pipeline::require(Stage s) const {
  for (int i = 0; i < static_cast<int>(s); ++i) {
    const Stage p = static_cast<Stage>(i);
    if (!is_complete(p)) {
      const fs::path m = stage_dir(p) / "STAGE";
      if (fs::exists(m)) {
        throw ConfigError("stage '" + std::string(stage_name(p)) +
                          "' was produced by a different configuration (config-hash mismatch)");
      }
      throw PrerequisiteError("stage '" + std::string(stage_name(s)) + "' needs '" +
                              std::string(stage_name(p)) + "' to be run first");
    }
  }
}

bool Pipeline::try_reuse(Stage s) {
  if (!fs::exists(out_root_)) return false;
  const std::string want = marker_text(cfg_, s);
  std::vector<fs::path> candidates;
  for (const auto& e : fs::directory_iterator(out_root_)) {
    if (!e.is_directory() || e.path() == run_dir()) continue;
    candidates.push_back(e.path());
  }
  std::sort(candidates.begin(), candidates.end());
  for (const auto& c : candidates) {
    const fs::path src = c / std::string(stage_name(s));
    const fs::path m = src / "STAGE";
    if (!fs::exists(m) || slurp(m) != want) continue;
    fs::remove_all(stage_dir(s));
    fs::create_directories(run_dir());
    fs::copy(src, stage_dir(s), fs::copy_options::recursive);
    return true;
  }
  return false;
}

void Pipeline::run_stage(Stage s) {
  if (is_complete(s)) return;
  require(s);
  fs::create_directories(run_dir());
  {
    std::ofstream out(run_dir() / "config.txt", std::ios::binary);
    out << cfg_.canonical();
  }
  if (try_reuse(s)) return;
  fs::remove_all(stage_dir(s));
  fs::create_directories(stage_dir(s));
  switch (s) {
    case Stage::kGenData: gen_data(); break;
    case Stage::kTrainVictim: train_victim(); break;
    case Stage::kAttack: attack(); break;
    case Stage::kSimulate: simulate(); break;
    case Stage::kProcess: process(); break;
    case Stage::kTrainEmclf: train_emclf(); break;
    case Stage::kTrainDetector: train_detector(); break;
    case Stage::kCalibrate: calibrate(); break;
    case Stage::kDetect: detect(); break;
    case Stage::kReport: report(); break;
  }
  mark_complete(s);
}

void Pipeline::run_until(Stage last) {
  for (int i = 0; i <= static_cast<int>(last); ++i) run_stage(static_cast<Stage>(i));
}

void Pipeline::gen_data() {
  const victim::Dataset data = victim::gen_dataset(dataset_config(cfg_));
  victim::export_dataset_csv(stage_dir(Stage::kGenData) / "dataset.csv", data,
                             cfg_.stage_hash(Stage::kGenData));
}

void Pipeline::train_victim() {
  const Context ctx{cfg_, run_dir()};
  const fs::path dir = stage_dir(Stage::kTrainVictim);
  const std::uint64_t h = cfg_.stage_hash(Stage::kTrainVictim);
  const victim::Dataset data = ctx.dataset();
  const victim::TrainConfig tc = victim_train_config(cfg_);
  const double eps = cfg_.robust_fgsm_eps;
  const bool robust = cfg_.scenario == "robust";

  victim::Augmenter aug;
  if (robust) {
    aug = [eps](const victim::VictimModel& m, std::span<const double> x, std::size_t label) {
      return attacks::fgsm(m, x, label, eps).perturbed;
    };
  }
  victim::TrainReport rep;
  const victim::VictimModel model = victim::train_victim(data, tc, &rep, aug);
  victim::save_victim(dir / "victim.bin", model, h);

  io::CsvWriter w(dir / "training.csv");
  w.comment("config_hash=" + io::hex64(h));
  w.row({"epoch", "loss"});
  for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) {
    w.row({std::to_string(e + 1), io::format_double(rep.epoch_loss[e])});
  }
  w.close();

  const auto test = data.indices(victim::Split::kTest);
  auto fgsm_accuracy = [&](const victim::VictimModel& m) {
    std::size_t ok = 0;
    for (std::size_t i : test) {
      if (attacks::fgsm(m, data.inputs[i], data.labels[i], eps).predicted_label == data.labels[i]) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(test.size());
  };
  std::vector<std::pair<std::string, double>> rows = {
      {"train_accuracy", rep.train_accuracy},
      {"test_accuracy", rep.test_accuracy},
      {"fgsm_accuracy", fgsm_accuracy(model)},
  };
  if (robust) {
    // Same data and seed without augmentation, for the FGSM comparison.
    victim::TrainReport ref_rep;
    const victim::VictimModel ref = victim::train_victim(data, tc, &ref_rep);
    victim::save_victim(dir / "reference_victim.bin", ref, h);
    rows.emplace_back("reference_test_accuracy", ref_rep.test_accuracy);
    rows.emplace_back("reference_fgsm_accuracy", fgsm_accuracy(ref));
  }
  write_metric_table(dir / "summary.csv", rows, h);
}

void Pipeline::attack() {
  const Context ctx{cfg_, run_dir()};
  const fs::path dir = stage_dir(Stage::kAttack);
  const std::uint64_t h = cfg_.stage_hash(Stage::kAttack);
  const victim::Dataset data = ctx.dataset();
  const victim::VictimModel model = ctx.victim_model();
  const auto test = data.indices(victim::Split::kTest);

  for (attacks::Norm norm : cfg_.attack_norms) {
    attacks::AttackSpec spec = attacks::default_pgd(norm, cfg_.pgd_steps);
    spec.eps = norm == attacks::Norm::kLinf ? cfg_.eps_linf
               : norm == attacks::Norm::kL2 ? cfg_.eps_l2
                                            : cfg_.eps_l1;
    spec.step_size = spec.eps / 10.0;
    spec.targeted = true;

    std::vector<attacks::AdversarialExample> kept;
    std::vector<std::size_t> targets;
    for (std::size_t t = 0; t < cfg_.n_classes; ++t) {
      std::vector<std::size_t> sources;
      for (std::size_t i : test) {
        if (data.labels[i] != t) sources.push_back(i);
        if (sources.size() == cfg_.attack_max_attempts) break;
      }
      attacks::AttackSpec st = spec;
      st.target = t;
      std::size_t got = 0;
      std::size_t next = 0;
      // Attacks are independent per source, so chunks can run in parallel
      // while the kept set stays in source order.
      while (got < cfg_.adv_per_target && next < sources.size()) {
        const std::size_t chunk =
            std::min(sources.size() - next, std::max(cfg_.adv_per_target - got, cfg_.jobs * 4));
        std::vector<attacks::AdversarialExample> res(chunk);
        parallel_for(chunk, cfg_.jobs, [&](std::size_t k) {
          const std::size_t i = sources[next + k];
          res[k] = attacks::pgd(model, data.inputs[i], data.labels[i], st);
        });
        for (auto& ex : res) {
          if (got == cfg_.adv_per_target) break;
          if (!ex.misclassified()) continue;
          kept.push_back(std::move(ex));
          targets.push_back(t);
          ++got;
        }
        next += chunk;
      }
    }
    attacks::export_adversarial_csv(dir / ("adversarial_" + norm_tag(norm) + ".csv"), kept, h);
    io::CsvWriter w(dir / ("targets_" + norm_tag(norm) + ".csv"));
    w.comment("config_hash=" + io::hex64(h));
    w.row({"index", "target"});
    for (std::size_t k = 0; k < targets.size(); ++k) {
      w.row({std::to_string(k), std::to_string(targets[k])});
    }
    w.close();
  }

  if (cfg_.scenario == "robust") {
    std::vector<attacks::AdversarialExample> set(test.size());
    parallel_for(test.size(), cfg_.jobs, [&](std::size_t k) {
      const std::size_t i = test[k];
      set[k] = attacks::fgsm(model, data.inputs[i], data.labels[i], cfg_.robust_fgsm_eps);
    });
    attacks::export_adversarial_csv(dir / "fgsm_benign.csv", set, h);
  }
}

void Pipeline::simulate() {
  const Context ctx{cfg_, run_dir()};
  const fs::path dir = stage_dir(Stage::kSimulate);
  const std::uint64_t h = cfg_.stage_hash(Stage::kSimulate);
  const victim::Dataset data = ctx.dataset();
  const victim::VictimModel model = ctx.victim_model();

  leaksim::ScheduleConfig sc;
  sc.samples_per_mac = cfg_.samples_per_mac;
  sc.gap = cfg_.gap;
  sc.carrier = cfg_.carrier;
  sc.baseline = cfg_.baseline;
  leaksim::ExecutionSchedule sched = leaksim::build_schedule(model, sc);
  std::vector<victim::LayerActivations> acts;
  for (std::size_t i : data.indices(victim::Split::kTrain)) {
    acts.push_back(victim::forward_trace(model, data.inputs[i]));
  }
  leaksim::calibrate_quantization(sched, acts);
  leakage_config(cfg_).validate(sched);
  leaksim::save_schedule(dir / "schedule.bin", sched, h);

  const Featurizer fz(cfg_, model, sched);
  const std::size_t n = std::min(cfg_.trace_export, data.size());
  fs::create_directories(dir / "traces");
  std::vector<leaksim::Trace> traces(n);
  parallel_for(n, cfg_.jobs, [&](std::size_t i) {
    traces[i] = fz.trace(data.inputs[i], sample_id(kGroupDataset, i), data.labels[i]);
  });
  io::CsvWriter w(dir / "manifest.csv");
  w.comment("config_hash=" + io::hex64(h));
  w.row({"sample_id", "file", "label", "pred_label"});
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "trace_%06zu.emsh", i);
    leaksim::write_trace(dir / "traces" / name, traces[i]);
    w.row({std::to_string(i), std::string("traces/") + name,
           std::to_string(traces[i].provenance.true_label),
           std::to_string(traces[i].provenance.predicted_label)});
  }
  w.close();
}

void Pipeline::process() {
  const Context ctx{cfg_, run_dir()};
  const fs::path dir = stage_dir(Stage::kProcess);
  const std::uint64_t h = cfg_.stage_hash(Stage::kProcess);
  const victim::Dataset data = ctx.dataset();
  const victim::VictimModel model = ctx.victim_model();
  const leaksim::ExecutionSchedule sched = ctx.schedule();
  const std::size_t M = sched.num_segments();
  Featurizer fz(cfg_, model, sched);

  // Canonical length per segment: median over correctly segmented training
  // traces.
  const auto train = data.indices(victim::Split::kTrain);
  std::vector<std::vector<std::size_t>> seg_lengths(train.size());
  parallel_for(train.size(), cfg_.jobs, [&](std::size_t k) {
    const std::size_t i = train[k];
    for (const auto& s : fz.segments(data.inputs[i], sample_id(kGroupDataset, i))) {
      seg_lengths[k].push_back(s.samples.size());
    }
  });
  std::vector<std::vector<std::size_t>> lens(M);
  std::size_t train_failures = 0;
  for (const auto& l : seg_lengths) {
    if (l.size() != M) {
      ++train_failures;
      continue;
    }
    for (std::size_t m = 0; m < M; ++m) lens[m].push_back(l[m]);
  }
  if (lens[0].empty()) {
    throw SegmentationError("process: no training trace yields the expected " +
                            std::to_string(M) + " segments");
  }
  FeatureStore store;
  store.window = cfg_.stft_window;
  store.stride = cfg_.stft_stride;
  for (std::size_t m = 0; m < M; ++m) {
    std::sort(lens[m].begin(), lens[m].end());
    store.layout.push_back(make_layout(cfg_, lens[m][lens[m].size() / 2]));
  }
  fz.set_layout(store.layout);

  auto run_group = [&](const std::string& name, std::uint64_t group,
                       const std::vector<std::vector<double>>& inputs,
                       const std::vector<std::uint32_t>& labels) {
    FeatureGroup g;
    g.name = name;
    g.records.resize(inputs.size());
    parallel_for(inputs.size(), cfg_.jobs, [&](std::size_t k) {
      g.records[k] = fz.featurize(inputs[k], sample_id(group, k), labels[k]);
    });
    store.groups.push_back(std::move(g));
  };
  run_group("dataset", kGroupDataset, data.inputs, data.labels);
  auto run_batch = [&](const std::string& name, std::uint64_t group,
                       const std::vector<attacks::AdversarialExample>& batch) {
    std::vector<std::vector<double>> in;
    std::vector<std::uint32_t> lab;
    for (const auto& ex : batch) {
      in.push_back(ex.perturbed);
      lab.push_back(static_cast<std::uint32_t>(ex.source_label));
    }
    run_group(name, group, in, lab);
  };
  for (attacks::Norm norm : cfg_.attack_norms) {
    run_batch("adv_" + norm_tag(norm), norm_group(norm), ctx.adversarials(norm));
  }
  if (cfg_.scenario == "robust") run_batch("fgsm", kGroupFgsm, ctx.fgsm_set());
  save_features(dir / "features.bin", store, h);

  io::CsvWriter w(dir / "segments.csv");
  w.comment("config_hash=" + io::hex64(h));
  w.row({"segment", "canonical_length", "windows", "bands"});
  for (std::size_t m = 0; m < M; ++m) {
    w.row({std::to_string(m), std::to_string(store.layout[m].length),
           std::to_string(store.layout[m].windows), std::to_string(store.layout[m].bands.size())});
  }
  w.close();
  io::CsvWriter f(dir / "segmentation.csv");
  f.comment("config_hash=" + io::hex64(h));
  f.row({"group", "traces", "failures"});
  for (const auto& g : store.groups) {
    std::size_t bad = 0;
    for (const auto& r : g.records) bad += r.segmented ? 0 : 1;
    f.row({g.name, std::to_string(g.records.size()), std::to_string(bad)});
  }
  f.close();
}

void Pipeline::train_emclf() {
  const Context ctx{cfg_, run_dir()};
  const fs::path dir = stage_dir(Stage::kTrainEmclf);
  const std::uint64_t h = cfg_.stage_hash(Stage::kTrainEmclf);
  const victim::Dataset data = ctx.dataset();
  const FeatureStore store = ctx.features();
  const FeatureGroup& ds = store.group("dataset");
  const std::size_t M = store.layout.size();

  std::vector<std::vector<traceproc::Spectrogram>> specs(ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) specs[i] = store.spectrograms(ds.records[i]);

  emclf::ClassifierConfig cc;
  cc.hidden = cfg_.clf_hidden;
  cc.learning_rate = cfg_.clf_lr;
  cc.momentum = cfg_.clf_momentum;
  cc.epochs = cfg_.clf_epochs;
  cc.batch_size = cfg_.clf_batch;
  cc.seed = cfg_.seed;

  const auto train = data.indices(victim::Split::kTrain);
  const auto val = data.indices(victim::Split::kValidation);
  std::vector<emclf::EmClassifier> clfs(M);
  std::vector<emclf::TrainResult> results(M);
  parallel_for(M, cfg_.jobs, [&](std::size_t m) {
    std::vector<traceproc::Spectrogram> a, b;
    std::vector<std::size_t> la, lb;
    for (std::size_t i : train) {
      a.push_back(specs[i][m]);
      la.push_back(data.labels[i]);
    }
    for (std::size_t i : val) {
      b.push_back(specs[i][m]);
      lb.push_back(data.labels[i]);
    }
    clfs[m] = emclf::train_classifier(m, a, la, b, lb, cfg_.n_classes, cc, &results[m]);
  });
  emclf::save_classifiers(dir / "classifiers.bin", clfs, h);

  io::CsvWriter tw(dir / "training.csv");
  tw.comment("config_hash=" + io::hex64(h));
  tw.row({"segment", "epoch", "loss"});
  io::CsvWriter rw(dir / "report.csv");
  rw.comment("config_hash=" + io::hex64(h));
  rw.row({"segment", "class", "support", "precision", "recall", "f1"});
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t e = 0; e < results[m].epoch_loss.size(); ++e) {
      tw.row({std::to_string(m), std::to_string(e + 1), io::format_double(results[m].epoch_loss[e])});
    }
    const auto& rep = results[m].validation;
    for (std::size_t c = 0; c < rep.classes.size(); ++c) {
      const auto& cm = rep.classes[c];
      rw.row({std::to_string(m), std::to_string(c), std::to_string(cm.support),
              io::format_double(cm.precision), io::format_double(cm.recall),
              io::format_double(cm.f1)});
    }
    rw.row({std::to_string(m), "all", std::to_string(rep.confusion.total()),
            io::format_double(rep.accuracy), io::format_double(rep.accuracy),
            io::format_double(rep.accuracy)});
  }
  tw.close();
  rw.close();

  std::vector<std::uint64_t> ids;
  std::vector<std::size_t> preds;
  std::vector<std::vector<double>> lvs(ds.records.size());
  parallel_for(ds.records.size(), cfg_.jobs, [&](std::size_t i) {
    lvs[i] = logits_vector(clfs, store, ds.records[i], cfg_.n_classes);
  });
  for (const auto& r : ds.records) {
    ids.push_back(r.id);
    preds.push_back(r.pred);
  }
  emclf::export_logits_csv(dir / "logits.csv", ids, preds, lvs, h);
}

void Pipeline::train_detector() {
  const Context ctx{cfg_, run_dir()};
  const fs::path dir = stage_dir(Stage::kTrainDetector);
  const std::uint64_t h = cfg_.stage_hash(Stage::kTrainDetector);
  const victim::Dataset data = ctx.dataset();
  const FeatureStore store = ctx.features();
  const auto clfs = ctx.classifiers();
  const FeatureGroup& ds = store.group("dataset");

  // Benign training traces, routed by the victim's prediction.
  std::vector<std::vector<std::vector<double>>> per_class(cfg_.n_classes);
  for (std::size_t i : data.indices(victim::Split::kTrain)) {
    const FeatureRecord& r = ds.records[i];
    per_class[r.pred].push_back(logits_vector(clfs, store, r, cfg_.n_classes));
  }
  anomaly::VaeConfig vc;
  vc.latent = cfg_.vae_latent;
  vc.lambda = cfg_.vae_lambda;
  vc.learning_rate = cfg_.vae_lr;
  vc.epochs = cfg_.vae_epochs;
  vc.batch_size = cfg_.vae_batch;
  vc.seed = cfg_.seed;

  anomaly::DetectorBank bank;
  bank.target_fpr = cfg_.target_fpr;
  bank.detectors.resize(cfg_.n_classes);
  std::vector<anomaly::VaeTrainReport> reps(cfg_.n_classes);
  parallel_for(cfg_.n_classes, cfg_.jobs, [&](std::size_t c) {
    bank.detectors[c] = anomaly::train_vae(per_class[c], vc, c, &reps[c]);
  });
  anomaly::save_bank(dir / "bank.bin", bank, h);

  io::CsvWriter w(dir / "training.csv");
  w.comment("config_hash=" + io::hex64(h));
  w.row({"class", "samples", "epoch", "loss"});
  for (std::size_t c = 0; c < cfg_.n_classes; ++c) {
    for (std::size_t e = 0; e < reps[c].epoch_loss.size(); ++e) {
      w.row({std::to_string(c), std::to_string(per_class[c].size()), std::to_string(e + 1),
             io::format_double(reps[c].epoch_loss[e])});
    }
  }
  w.close();
}

void Pipeline::calibrate() {
  const Context ctx{cfg_, run_dir()};
  const fs::path dir = stage_dir(Stage::kCalibrate);
  const std::uint64_t h = cfg_.stage_hash(Stage::kCalibrate);
  const victim::Dataset data = ctx.dataset();
  const victim::VictimModel model = ctx.victim_model();
  const leaksim::ExecutionSchedule sched = ctx.schedule();
  const FeatureStore store = ctx.features();
  const auto clfs = ctx.classifiers();
  anomaly::DetectorBank bank = ctx.bank(Stage::kTrainDetector);

  std::vector<std::vector<double>> losses(cfg_.n_classes);
  const FeatureGroup& ds = store.group("dataset");
  for (std::size_t i : data.indices(victim::Split::kValidation)) {
    const FeatureRecord& r = ds.records[i];
    losses[r.pred].push_back(
        anomaly::score(bank, logits_vector(clfs, store, r, cfg_.n_classes), r.pred));
  }
  const PoolScores pool = score_pool(cfg_, model, sched, store, clfs, bank, kGroupCalib, 0,
                                     cfg_.calib_per_class);
  for (const auto& v : pool.verdicts) losses[v.predicted_class].push_back(v.loss);

  bank.target_fpr = cfg_.target_fpr;
  for (std::size_t c = 0; c < cfg_.n_classes; ++c) {
    try {
      bank.thresholds.push_back(anomaly::fit_threshold(losses[c], cfg_.target_fpr));
    } catch (const ConfigError& e) {
      throw ConfigError("calibrate: class " + std::to_string(c) + ": " + e.what());
    }
  }
  anomaly::save_bank(dir / "bank.bin", bank, h);
  io::CsvWriter w(dir / "thresholds.csv");
  w.comment("config_hash=" + io::hex64(h));
  w.row({"class", "calibration_losses", "threshold"});
  for (std::size_t c = 0; c < cfg_.n_classes; ++c) {
    w.row({std::to_string(c), std::to_string(losses[c].size()),
           io::format_double(bank.thresholds[c])});
  }
  w.close();
}

void Pipeline::detect() {
  const Context ctx{cfg_, run_dir()};
  const fs::path dir = stage_dir(Stage::kDetect);
  const std::uint64_t h = cfg_.stage_hash(Stage::kDetect);
  const victim::Dataset data = ctx.dataset();
  const victim::VictimModel model = ctx.victim_model();
  const leaksim::ExecutionSchedule sched = ctx.schedule();
  const FeatureStore store = ctx.features();
  const auto clfs = ctx.classifiers();
  const anomaly::DetectorBank bank = ctx.bank(Stage::kCalibrate);

  io::CsvWriter index(dir / "index.csv");
  index.comment("config_hash=" + io::hex64(h));
  index.row({"group", "sample_id", "label", "target"});

  auto emit = [&](const std::string& name, const std::vector<const FeatureRecord*>& recs,
                  const std::vector<long>& targets) {
    std::vector<anomaly::VerdictRow> rows(recs.size());
    parallel_for(recs.size(), cfg_.jobs, [&](std::size_t k) {
      rows[k].sample_id = recs[k]->id;
      rows[k].verdict =
          anomaly::detect(bank, logits_vector(clfs, store, *recs[k], cfg_.n_classes), recs[k]->pred);
    });
    anomaly::export_verdicts_csv(dir / ("verdicts_" + name + ".csv"), rows, h);
    for (std::size_t k = 0; k < recs.size(); ++k) {
      index.row({name, std::to_string(recs[k]->id), std::to_string(recs[k]->label),
                 std::to_string(targets[k])});
    }
  };

  {
    std::vector<const FeatureRecord*> recs;
    const FeatureGroup& ds = store.group("dataset");
    for (std::size_t i : data.indices(victim::Split::kTest)) recs.push_back(&ds.records[i]);
    emit("test", recs, std::vector<long>(recs.size(), -1));
  }
  for (attacks::Norm norm : cfg_.attack_norms) {
    const std::string tag = norm_tag(norm);
    const io::CsvTable tt = io::read_csv(ctx.dir(Stage::kAttack) / ("targets_" + tag + ".csv"));
    check_hash(csv_hash(tt), ctx.hash(Stage::kAttack), "targets_" + tag + ".csv");
    const FeatureGroup& g = store.group("adv_" + tag);
    if (tt.rows.size() != g.records.size()) throw FormatError("detect: target list size mismatch");
    std::vector<const FeatureRecord*> recs;
    std::vector<long> targets;
    for (std::size_t k = 0; k < g.records.size(); ++k) {
      recs.push_back(&g.records[k]);
      targets.push_back(io::parse_int(tt.rows[k][tt.column("target")]));
    }
    emit("adv_" + tag, recs, targets);
  }
  if (cfg_.scenario == "robust") {
    std::vector<const FeatureRecord*> recs;
    for (const auto& r : store.group("fgsm").records) recs.push_back(&r);
    emit("fgsm", recs, std::vector<long>(recs.size(), -1));
  }

  const PoolScores pool = score_pool(cfg_, model, sched, store, clfs, bank, kGroupHoldout,
                                     kHoldoutDrawOffset, cfg_.holdout_per_class);
  std::vector<anomaly::VerdictRow> rows(pool.ids.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].sample_id = pool.ids[k];
    rows[k].verdict = pool.verdicts[k];
    index.row({"holdout", std::to_string(pool.ids[k]), std::to_string(pool.labels[k]), "-1"});
  }
  anomaly::export_verdicts_csv(dir / "verdicts_holdout.csv", rows, h);
  index.close();
}

void Pipeline::report() { write_report(cfg_, run_dir()); }

}  // namespace emshep::pipeline
