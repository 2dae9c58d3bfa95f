// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <set>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "internal.hpp"

namespace emshep::pipeline {

namespace fs = std::filesystem;

std::map<std::string, double> read_metrics(const fs::path& run_dir) {
  const fs::path p = run_dir / std::string(stage_name(Stage::kReport)) / "metrics.csv";
  if (!fs::exists(p)) throw PrerequisiteError("no report in " + run_dir.string());
  return detail::read_metric_table(p);
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, std::string_view parameter,
                            const std::vector<std::string>& values, const fs::path& out_root) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<SweepRow> rows;
  if (parameter == "norm") {
    // One run attacks with every norm; the rows split its metrics.
    ExperimentConfig cfg = base;
    cfg.attack_norms.clear();
    for (const auto& v : values) cfg.attack_norms.push_back(attacks::parse_norm(v));
    Pipeline p(cfg, out_root);
    p.run_until();
    const auto m = read_metrics(p.run_dir());
    for (attacks::Norm n : cfg.attack_norms) {
      SweepRow r;
      r.value = std::string(attacks::norm_name(n));
      const std::string tag = detail::norm_tag(n);
      for (const char* k : {"adv_count_", "dr_mean_", "dr_min_", "f1_", "pr_auc_"}) {
        r.metrics[std::string(k).substr(0, std::string(k).size() - 1)] = m.at(k + tag);
      }
      rows.push_back(std::move(r));
    }
    return rows;
  }
  for (const auto& v : values) {
    ExperimentConfig cfg = base;
    if (parameter == "window") {
      cfg.set("stft_window", v);
      cfg.stft_stride = std::max<std::size_t>(1, cfg.stft_window / 2);
    } else if (parameter == "bands") {
      cfg.set("bands", v);
    } else if (parameter == "latent") {
      cfg.set("vae_latent", v);
    } else if (parameter == "sigma") {
      cfg.set("noise_sigma", v);
    } else {
      throw ConfigError("sweep: unknown parameter '" + std::string(parameter) +
                        "' (window, bands, latent, norm, sigma)");
    }
    Pipeline p(cfg, out_root);
    p.run_until();
    rows.push_back({v, read_metrics(p.run_dir())});
  }
  return rows;
}

void write_sweep(const fs::path& dir, std::string_view parameter,
                 const std::vector<SweepRow>& rows) {
  fs::create_directories(dir);
  std::set<std::string> keys;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.metrics) keys.insert(k);
  const std::string name = "sweep_" + std::string(parameter);
  io::CsvWriter w(dir / (name + ".csv"));
  std::vector<std::string> header{std::string(parameter)};
  header.insert(header.end(), keys.begin(), keys.end());
  w.row(header);
  for (const auto& r : rows) {
    std::vector<std::string> row{r.value};
    for (const auto& k : keys) {
      const auto it = r.metrics.find(k);
      row.push_back(it == r.metrics.end() ? "" : io::format_double(it->second));
    }
    w.row(row);
  }
  w.close();

  // Markdown with the headline columns for the parameter.
  std::vector<std::string> cols;
  if (parameter == "window" || parameter == "bands") {
    cols = {"emclf_val_accuracy_seg0", "emclf_val_accuracy_mean", "dr_mean_linf"};
  } else if (parameter == "latent") {
    cols = {"pr_auc_linf", "dr_mean_linf", "fpr_holdout_mean"};
  } else if (parameter == "norm") {
    cols = {"adv_count", "dr_mean", "f1", "pr_auc"};
  } else {
    cols = {"emclf_val_accuracy_mean", "dr_mean_linf", "fpr_holdout_mean"};
  }
  std::ofstream md(dir / (name + ".md"), std::ios::binary);
  md << "| " << parameter;
  for (const auto& c : cols) md << " | " << c;
  md << " |\n|---";
  for (std::size_t i = 0; i < cols.size(); ++i) md << "|---";
  md << "|\n";
  for (const auto& r : rows) {
    md << "| " << r.value;
    for (const auto& c : cols) {
      const auto it = r.metrics.find(c);
      char buf[32] = "n/a";
      if (it != r.metrics.end()) std::snprintf(buf, sizeof(buf), "%.4f", it->second);
      md << " | " << buf;
    }
    md << " |\n";
  }
}

}  // namespace emshep::pipeline
