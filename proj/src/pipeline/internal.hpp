// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Shared plumbing for the pipeline stages.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "emshep/attacks.hpp"
#include "emshep/leaksim.hpp"
#include "emshep/pipeline.hpp"
#include "emshep/traceproc.hpp"
#include "emshep/victim.hpp"

namespace emshep::pipeline::detail {

// Sample ids are (group << 24) | index; the id seeds the trace noise.
enum Group : std::uint64_t {
  kGroupDataset = 0,
  kGroupL1 = 1,
  kGroupL2 = 2,
  kGroupLinf = 3,
  kGroupFgsm = 4,
  kGroupCalib = 5,
  kGroupHoldout = 6,
};
inline constexpr std::uint64_t kGroupShift = 24;

inline std::uint64_t sample_id(std::uint64_t group, std::uint64_t index) {
  return (group << kGroupShift) | index;
}

std::uint64_t norm_group(attacks::Norm n);
std::string norm_tag(attacks::Norm n);  // linf, l2, l1

// Runs f(i) for i in [0, n) on up to `jobs` threads.  Results must be
// written to per-index slots; the exception of the lowest failing index is
// rethrown.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t err_index = n;
  std::exception_ptr err;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// Shape of one segment's band-selected spectrogram.
struct SegmentLayout {
  std::size_t length = 0;  // canonical segment length
  std::size_t windows = 0;
  std::vector<std::size_t> bands;
};

struct FeatureRecord {
  std::uint64_t id = 0;
  std::uint32_t label = 0;  // true or source label
  std::uint32_t pred = 0;   // victim prediction
  bool segmented = true;    // segment count matched the schedule
  std::vector<double> values;  // all segments, row-major windows x bands each
};

struct FeatureGroup {
  std::string name;
  std::vector<FeatureRecord> records;
};

struct FeatureStore {
  std::vector<SegmentLayout> layout;
  std::size_t window = 0;
  std::size_t stride = 0;
  std::vector<FeatureGroup> groups;

  const FeatureGroup& group(std::string_view name) const;
  std::size_t feature_size() const;
  std::vector<traceproc::Spectrogram> spectrograms(const FeatureRecord& r) const;
};

void save_features(const std::filesystem::path& path, const FeatureStore& fs,
                   std::uint64_t config_hash);
FeatureStore load_features(const std::filesystem::path& path, std::uint64_t* config_hash);

// Input -> trace -> band-pass -> segments -> spectrograms.
class Featurizer {
 public:
  Featurizer(const ExperimentConfig& cfg, const victim::VictimModel& model,
             const leaksim::ExecutionSchedule& sched);

  leaksim::Trace trace(std::span<const double> x, std::uint64_t id,
                       std::uint32_t label) const;
  // Segments of the band-passed trace; empty on segmentation failure.
  std::vector<traceproc::Segment> segments(std::span<const double> x, std::uint64_t id) const;

  void set_layout(std::vector<SegmentLayout> layout) { layout_ = std::move(layout); }
  const std::vector<SegmentLayout>& layout() const { return layout_; }

  FeatureRecord featurize(std::span<const double> x, std::uint64_t id,
                          std::uint32_t label) const;

 private:
  const ExperimentConfig& cfg_;
  const victim::VictimModel& model_;
  const leaksim::ExecutionSchedule& sched_;
  leaksim::LeakageConfig leak_;
  traceproc::SegmentConfig seg_;
  std::vector<SegmentLayout> layout_;
};

leaksim::LeakageConfig leakage_config(const ExperimentConfig& cfg);
victim::DatasetConfig dataset_config(const ExperimentConfig& cfg);
victim::TrainConfig victim_train_config(const ExperimentConfig& cfg);

void check_hash(std::uint64_t embedded, std::uint64_t expected, const std::string& what);

// Simple metric,value table.
void write_metric_table(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, double>>& rows,
                        std::uint64_t config_hash);
std::map<std::string, double> read_metric_table(const std::filesystem::path& path);

void write_report(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

}  // namespace emshep::pipeline::detail
