// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Gradient attacks on the victim: FGSM and PGD under L1, L2 and Linf budgets.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emshep/victim.hpp"

namespace emshep::attacks {

enum class Norm { kL0, kL1, kL2, kLinf };
enum class Method { kFgsm, kPgd };

std::string_view norm_name(Norm p);
Norm parse_norm(std::string_view s);

struct AttackSpec {
  Method method = Method::kPgd;
  Norm norm = Norm::kLinf;
  double eps = 0.1;
  std::size_t steps = 40;
  double step_size = 0.01;
  bool targeted = false;
  std::optional<std::size_t> target;

  // Throws ConfigError if the spec is inconsistent.  `source` is checked
  // against the target for targeted attacks.
  void validate(std::optional<std::size_t> source = std::nullopt) const;
};

// Default budget for a norm: Linf 0.1, L2 1.0, L1 5.0; step size eps/10.
AttackSpec default_pgd(Norm norm, std::size_t steps = 40);

struct AdversarialExample {
  std::vector<double> original;
  std::vector<double> perturbed;
  std::size_t source_label = 0;
  std::size_t predicted_label = 0;
  Norm norm = Norm::kLinf;
  double eps = 0.0;
  double distance = 0.0;
  std::optional<std::size_t> target;

  bool misclassified() const { return predicted_label != source_label; }
};

double lp_distance(std::span<const double> x, std::span<const double> y, Norm p);

// Euclidean projection of delta onto the radius-eps ball of norm p
// (p in {L1, L2, Linf}).
std::vector<double> project(std::span<const double> delta, Norm p, double eps);

AdversarialExample fgsm(const victim::VictimModel& model, std::span<const double> x,
                        std::size_t label, double eps);

AdversarialExample pgd(const victim::VictimModel& model, std::span<const double> x,
                       std::size_t label, const AttackSpec& spec);

// adversarial batch CSV:
//   source_label,pred_label,norm,eps,achieved_dist,f0..f{d-1}
void export_adversarial_csv(const std::filesystem::path& path,
                            const std::vector<AdversarialExample>& batch,
                            std::uint64_t config_hash);
std::vector<AdversarialExample> import_adversarial_csv(const std::filesystem::path& path,
                                                       std::uint64_t* config_hash = nullptr);

}  // namespace emshep::attacks
