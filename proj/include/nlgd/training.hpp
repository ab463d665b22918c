#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nlgd/optimizers.hpp"
#include "nlgd/problems.hpp"

namespace nlgd {

struct ScheduleSpec {
  enum class Kind { kConstant, kAnnihilation };

  Kind kind = Kind::kConstant;
  double base_lr = 0.1;
  std::size_t total_epochs = 100;
  double annihilation_factor = 10.0;
  std::size_t annihilation_epochs = 5;

  void validate() const;
};

// Learning rate for the given epoch (0-based). Throws on out-of-range epoch.
double schedule_lr(const ScheduleSpec& s, std::size_t epoch);

struct RunConfig {
  std::string problem_id = "quadratic_deep";
  std::map<std::string, double> problem_params;
  std::uint64_t problem_seed = 42;  // fixes the problem instance across seeds

  OptKind opt_kind = OptKind::kSgd;
  HyperParams hyper;
  Optimizer::Options opt_options;
  ScheduleSpec schedule;

  std::size_t batch_size = 128;
  std::size_t batches_per_epoch = 100;  // online problems only
  std::uint64_t seed = 0;

  void validate() const;
};

struct RunRecord {
  RunConfig config;
  std::vector<double> train_loss;  // one entry per completed epoch
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;  // empty when the problem has none
  double final_test_loss = 0.0;
  double final_test_accuracy = 0.0;
  bool has_accuracy = false;
  bool diverged = false;
  std::size_t completed_epochs = 0;
  double wall_seconds = 0.0;

  // Validation metric used for model selection: accuracy when defined
  // (higher better), loss otherwise (lower better).
  double final_val_metric() const;
  bool metric_is_accuracy() const { return has_accuracy; }
};

// Trains per config. Deterministic: metrics are a pure function of the
// config. Divergence (non-finite loss, or loss above 1e6 x initial) stops
// the run early with the diverged flag set; it is a result, not an error.
RunRecord run_training(const RunConfig& cfg);

// Convenience: run on an already-built problem (must match cfg.problem_id
// semantics); lets searches share one problem instance across many runs.
RunRecord run_training(const RunConfig& cfg, const Problem& problem);

struct RepeatSummary {
  std::vector<RunRecord> records;
  double mean = 0.0;  // of final test loss (or accuracy when defined)
  double stddev = 0.0;  // sample standard deviation; 0 when n = 1
  std::size_t diverged_count = 0;
};

// Repeats cfg with seeds derived from cfg.seed. Flagged (diverged) records
// are kept in the list; include_diverged controls the summary only.
RepeatSummary run_repeats(const RunConfig& cfg, std::size_t n_seeds,
                          bool include_diverged = true);

// Mean and sample std helpers (n = 1 -> std 0).
double sample_mean(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);

}  // namespace nlgd
