// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <functional>
#include <sstream>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "emshep/pipeline.hpp"

namespace emshep::pipeline {

namespace {

constexpr std::string_view kStageNames[kNumStages] = {
    "gen-data", "train-victim",   "attack",    "simulate", "process",
    "train-emclf", "train-detector", "calibrate", "detect",   "report"};

struct KeyInfo {
  std::string_view name;
  Stage stage;  // first stage the key affects
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

std::size_t to_size(std::string_view key, std::string_view v) {
  const long long n = io::parse_int(v);
  if (n < 0) throw ConfigError("config: " + std::string(key) + " must be >= 0");
  return static_cast<std::size_t>(n);
}

template <typename T>
KeyInfo count_key(std::string_view name, Stage st, T ExperimentConfig::*field) {
  return {name, st, [field](const ExperimentConfig& c) { return std::to_string(c.*field); },
          [field, name](ExperimentConfig& c, std::string_view v) {
            c.*field = static_cast<T>(to_size(name, v));
          }};
}

KeyInfo real_key(std::string_view name, Stage st, double ExperimentConfig::*field) {
  return {name, st, [field](const ExperimentConfig& c) { return io::format_double(c.*field); },
          [field](ExperimentConfig& c, std::string_view v) { c.*field = io::parse_double(v); }};
}

const std::vector<KeyInfo>& registry() {
  using C = ExperimentConfig;
  static const std::vector<KeyInfo> keys = {
      {"seed", Stage::kGenData, [](const C& c) { return std::to_string(c.seed); },
       [](C& c, std::string_view v) {
         const long long s = io::parse_int(v);
         if (s < 0) throw ConfigError("config: seed must be >= 0");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      count_key("n_classes", Stage::kGenData, &C::n_classes),
      count_key("n_per_class", Stage::kGenData, &C::n_per_class),
      count_key("dim", Stage::kGenData, &C::dim),
      real_key("class_separation", Stage::kGenData, &C::class_separation),
      real_key("train_fraction", Stage::kGenData, &C::train_fraction),
      real_key("validation_fraction", Stage::kGenData, &C::validation_fraction),

      {"scenario", Stage::kTrainVictim, [](const C& c) { return c.scenario; },
       [](C& c, std::string_view v) { c.scenario = std::string(v); }},
      {"victim_layers", Stage::kTrainVictim,
       [](const C& c) {
         std::string s;
         for (std::size_t i = 0; i < c.victim_layers.size(); ++i) {
           if (i) s += ',';
           s += std::to_string(c.victim_layers[i]);
         }
         return s;
       },
       [](C& c, std::string_view v) {
         c.victim_layers.clear();
         for (const auto& p : io::split(v, ',')) c.victim_layers.push_back(to_size("victim_layers", io::trim(p)));
       }},
      real_key("victim_lr", Stage::kTrainVictim, &C::victim_lr),
      real_key("victim_momentum", Stage::kTrainVictim, &C::victim_momentum),
      count_key("victim_epochs", Stage::kTrainVictim, &C::victim_epochs),
      count_key("victim_batch", Stage::kTrainVictim, &C::victim_batch),
      real_key("robust_fgsm_eps", Stage::kTrainVictim, &C::robust_fgsm_eps),

      {"attack_norms", Stage::kAttack,
       [](const C& c) {
         std::string s;
         for (std::size_t i = 0; i < c.attack_norms.size(); ++i) {
           if (i) s += ',';
           s += attacks::norm_name(c.attack_norms[i]);
         }
         return s;
       },
       [](C& c, std::string_view v) {
         c.attack_norms.clear();
         for (const auto& p : io::split(v, ',')) c.attack_norms.push_back(attacks::parse_norm(io::trim(p)));
       }},
      count_key("adv_per_target", Stage::kAttack, &C::adv_per_target),
      count_key("attack_max_attempts", Stage::kAttack, &C::attack_max_attempts),
      count_key("pgd_steps", Stage::kAttack, &C::pgd_steps),
      real_key("eps_linf", Stage::kAttack, &C::eps_linf),
      real_key("eps_l2", Stage::kAttack, &C::eps_l2),
      real_key("eps_l1", Stage::kAttack, &C::eps_l1),

      count_key("samples_per_mac", Stage::kSimulate, &C::samples_per_mac),
      count_key("gap", Stage::kSimulate, &C::gap),
      real_key("carrier", Stage::kSimulate, &C::carrier),
      real_key("baseline", Stage::kSimulate, &C::baseline),
      real_key("gain", Stage::kSimulate, &C::gain),
      count_key("quant_bits", Stage::kSimulate, &C::quant_bits),
      count_key("jitter_max", Stage::kSimulate, &C::jitter_max),
      real_key("noise_sigma", Stage::kSimulate, &C::noise_sigma),
      count_key("trace_export", Stage::kSimulate, &C::trace_export),

      real_key("bandpass_halfwidth", Stage::kProcess, &C::bandpass_halfwidth),
      count_key("energy_window", Stage::kProcess, &C::energy_window),
      real_key("segment_threshold", Stage::kProcess, &C::segment_threshold),
      count_key("stft_window", Stage::kProcess, &C::stft_window),
      count_key("stft_stride", Stage::kProcess, &C::stft_stride),
      count_key("bands", Stage::kProcess, &C::bands),

      count_key("clf_hidden", Stage::kTrainEmclf, &C::clf_hidden),
      real_key("clf_lr", Stage::kTrainEmclf, &C::clf_lr),
      real_key("clf_momentum", Stage::kTrainEmclf, &C::clf_momentum),
      count_key("clf_epochs", Stage::kTrainEmclf, &C::clf_epochs),
      count_key("clf_batch", Stage::kTrainEmclf, &C::clf_batch),

      count_key("vae_latent", Stage::kTrainDetector, &C::vae_latent),
      real_key("vae_lambda", Stage::kTrainDetector, &C::vae_lambda),
      real_key("vae_lr", Stage::kTrainDetector, &C::vae_lr),
      count_key("vae_epochs", Stage::kTrainDetector, &C::vae_epochs),
      count_key("vae_batch", Stage::kTrainDetector, &C::vae_batch),

      real_key("target_fpr", Stage::kCalibrate, &C::target_fpr),
      count_key("calib_per_class", Stage::kCalibrate, &C::calib_per_class),
      count_key("holdout_per_class", Stage::kDetect, &C::holdout_per_class),
  };
  return keys;
}

const KeyInfo& find_key(std::string_view key) {
  for (const auto& k : registry())
    if (k.name == key) return k;
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

}  // namespace

std::string_view stage_name(Stage s) { return kStageNames[static_cast<int>(s)]; }

Stage parse_stage(std::string_view name) {
  for (int i = 0; i < kNumStages; ++i)
    if (kStageNames[i] == name) return static_cast<Stage>(i);
  throw ConfigError("unknown stage: " + std::string(name));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.emplace_back(k.name);
  return out;
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  if (key == "jobs") {
    jobs = to_size(key, value);
    return;
  }
  find_key(key).set(*this, value);
}

std::string ExperimentConfig::get(std::string_view key) const {
  if (key == "jobs") return std::to_string(jobs);
  return find_key(key).get(*this);
}

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  need(scenario == "baseline" || scenario == "robust", "scenario must be baseline or robust");
  need(n_classes >= 2, "n_classes must be >= 2");
  need(n_per_class >= 10, "n_per_class must be >= 10");
  need(dim >= 4, "dim must be >= 4");
  need(class_separation > 0.0, "class_separation must be > 0");
  need(train_fraction > 0.0 && validation_fraction > 0.0 &&
           train_fraction + validation_fraction < 1.0,
       "train/validation fractions must be positive and leave a test split");
  need(victim_layers.size() >= 2 && victim_layers.front() == dim &&
           victim_layers.back() == n_classes,
       "victim_layers must start at dim and end at n_classes");
  for (std::size_t w : victim_layers) need(w > 0, "victim layer widths must be positive");
  need(victim_lr > 0.0 && victim_epochs >= 1 && victim_batch >= 1, "bad victim optimizer");
  need(victim_momentum >= 0.0 && victim_momentum < 1.0, "victim_momentum must be in [0, 1)");
  need(robust_fgsm_eps > 0.0, "robust_fgsm_eps must be > 0");
  need(!attack_norms.empty(), "attack_norms must not be empty");
  for (auto n : attack_norms) need(n != attacks::Norm::kL0, "L0 attacks are not supported");
  need(adv_per_target >= 1 && attack_max_attempts >= adv_per_target,
       "attack_max_attempts must be >= adv_per_target >= 1");
  need(pgd_steps >= 1, "pgd_steps must be >= 1");
  need(eps_linf > 0.0 && eps_l2 > 0.0 && eps_l1 > 0.0, "attack budgets must be > 0");
  need(samples_per_mac >= 1, "samples_per_mac must be >= 1");
  need(carrier > 0.0 && carrier < 0.5, "carrier must be in (0, 0.5)");
  need(gain > 0.0, "gain must be > 0");
  need(quant_bits >= 1 && quant_bits <= 16, "quant_bits must be in [1, 16]");
  need(jitter_max < gap, "jitter_max must be < gap");
  need(noise_sigma >= 0.0, "noise_sigma must be >= 0");
  need(bandpass_halfwidth > 0.0 && carrier - bandpass_halfwidth > 0.0 &&
           carrier + bandpass_halfwidth < 0.5,
       "bandpass band must lie inside (0, 0.5)");
  need(energy_window >= 1, "energy_window must be >= 1");
  need(segment_threshold > 0.0 && segment_threshold < 1.0, "segment_threshold must be in (0, 1)");
  need(stft_window >= 2 && stft_stride >= 1, "bad STFT window/stride");
  need(bands >= 1 && bands <= stft_window / 2 + 1, "bands must be in [1, window/2 + 1]");
  need(clf_hidden >= 1 && clf_lr > 0.0 && clf_epochs >= 1 && clf_batch >= 1,
       "bad classifier settings");
  need(clf_momentum >= 0.0 && clf_momentum < 1.0, "clf_momentum must be in [0, 1)");
  need(vae_latent >= 1 && vae_lambda >= 0.0 && vae_lr > 0.0 && vae_epochs >= 1 && vae_batch >= 1,
       "bad VAE settings");
  need(target_fpr > 0.0 && target_fpr <= 0.5, "target_fpr must be in (0, 0.5]");
  need(calib_per_class >= 20, "calib_per_class must be >= 20");
  need(holdout_per_class >= 1, "holdout_per_class must be >= 1");
  // Sample ids carry a group tag above bit 24.
  constexpr std::size_t kMaxGroup = std::size_t{1} << 24;
  need(n_classes * n_per_class < kMaxGroup && n_classes * calib_per_class < kMaxGroup &&
           n_classes * holdout_per_class < kMaxGroup && n_classes * adv_per_target < kMaxGroup,
       "dataset and pools must hold fewer than 2^24 samples each");
  need(jobs >= 1, "jobs must be >= 1");
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& k : registry()) {
    out += k.name;
    out += " = ";
    out += k.get(*this);
    out += '\n';
  }
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return io::fnv1a(canonical()); }

std::uint64_t ExperimentConfig::stage_hash(Stage s) const {
  std::string text = "stage<=" + std::string(stage_name(s)) + "\n";
  for (const auto& k : registry()) {
    if (static_cast<int>(k.stage) > static_cast<int>(s)) continue;
    text += k.name;
    text += " = ";
    text += k.get(*this);
    text += '\n';
  }
  return io::fnv1a(text);
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = io::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = io::trim(std::string_view(t).substr(0, eq));
    const std::string value = io::trim(std::string_view(t).substr(eq + 1));
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace emshep::pipeline
