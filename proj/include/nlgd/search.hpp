#pragma once

#include <cstdint>
#include <vector>

#include "nlgd/training.hpp"

namespace nlgd {

// The "medium" random-search protocol: budget single-seed samples, best by
// validation, then a multi-seed rerun of the winner.
struct SearchSpec {
  std::size_t budget = 50;
  double lr_low = 1e-4;
  double lr_high = 1.0;
  std::vector<double> nu_choices = {0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double rho = 0.9;  // fixed for momentum variants
  std::size_t final_repeats = 10;

  void validate() const;
};

// Draws lr log-uniform over [lr_low, lr_high]; nu uniform over nu_choices
// (only applied to NL kinds); rho fixed per spec for momentum kinds.
HyperParams sample_hyperparams(const SearchSpec& spec, OptKind kind,
                               const HyperParams& base, RngStream& rng);

struct SearchSample {
  HyperParams hyper;
  double val_metric = 0.0;
  bool metric_is_accuracy = false;
  bool diverged = false;
};

struct SearchResult {
  std::vector<SearchSample> samples;
  std::size_t best_index = 0;
  bool all_diverged = false;  // search failure: nothing converged
  RepeatSummary final_summary;  // empty when all_diverged
  std::size_t runs_executed = 0;
};

// base_cfg supplies problem, optimizer kind, schedule, batch size; its
// hyper fields act as defaults for everything the spec does not sample.
// Deterministic end-to-end for a given master_seed.
SearchResult run_medium_search(const RunConfig& base_cfg, const SearchSpec& spec,
                               std::uint64_t master_seed);

struct GridResult {
  std::vector<double> nu_values;   // rows
  std::vector<double> lr_values;   // columns
  std::vector<std::vector<double>> mean_metric;  // [nu][lr]
  std::vector<std::vector<bool>> flagged;        // any seed diverged
  bool metric_is_accuracy = false;
};

// Full Cartesian nu x lr sweep; each cell averages seeds_per_cell runs.
// For non-NL kinds the nu axis should be {1.0} (it is ignored by the update).
GridResult grid_sweep(const RunConfig& base_cfg,
                      const std::vector<double>& nu_values,
                      const std::vector<double>& lr_values,
                      std::size_t seeds_per_cell, std::uint64_t master_seed);

}  // namespace nlgd
