#include "nlgd/search.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nlgd {

void SearchSpec::validate() const {
  if (budget == 0) throw std::invalid_argument("SearchSpec: budget must be >= 1");
  if (!(lr_low > 0.0) || !(lr_low < lr_high)) {
    throw std::invalid_argument("SearchSpec: need 0 < lr_low < lr_high");
  }
  if (nu_choices.empty()) {
    throw std::invalid_argument("SearchSpec: nu_choices must be nonempty");
  }
  if (final_repeats == 0) {
    throw std::invalid_argument("SearchSpec: final_repeats must be >= 1");
  }
}

HyperParams sample_hyperparams(const SearchSpec& spec, OptKind kind,
                               const HyperParams& base, RngStream& rng) {
  spec.validate();
  HyperParams hp = base;
  const double lo = std::log(spec.lr_low), hi = std::log(spec.lr_high);
  hp.alpha = std::exp(lo + rng.next_uniform() * (hi - lo));
  if (is_nl_kind(kind)) {
    const auto idx = static_cast<std::size_t>(rng.next_uniform() *
                                              static_cast<double>(spec.nu_choices.size()));
    hp.nu = spec.nu_choices[std::min(idx, spec.nu_choices.size() - 1)];
  } else {
    hp.nu = 1.0;
  }
  if (is_momentum_kind(kind)) hp.rho = spec.rho;
  return hp;
}

namespace {

// True when `a` beats `b` under the metric; strict, so earlier samples win ties.
bool better(double a, double b, bool accuracy) {
  return accuracy ? a > b : a < b;
}

}  // namespace

SearchResult run_medium_search(const RunConfig& base_cfg, const SearchSpec& spec,
                               std::uint64_t master_seed) {
  spec.validate();
  const auto problem = make_problem(base_cfg.problem_id, base_cfg.problem_params,
                                    base_cfg.problem_seed);

  RngStream master(master_seed);
  RngStream sampler = master.split(0);
  RngStream run_seeds = master.split(1);

  SearchResult result;
  bool have_best = false;
  double best_metric = 0.0;
  RunConfig best_cfg = base_cfg;

  for (std::size_t i = 0; i < spec.budget; ++i) {
    RunConfig cfg = base_cfg;
    cfg.hyper = sample_hyperparams(spec, cfg.opt_kind, base_cfg.hyper, sampler);
    cfg.schedule.base_lr = cfg.hyper.alpha;
    cfg.seed = run_seeds.split(i).seed();

    RunRecord rec = run_training(cfg, *problem);
    ++result.runs_executed;

    SearchSample sample;
    sample.hyper = cfg.hyper;
    sample.val_metric = rec.final_val_metric();
    sample.metric_is_accuracy = rec.metric_is_accuracy();
    sample.diverged = rec.diverged;
    result.samples.push_back(sample);

    if (!rec.diverged && std::isfinite(sample.val_metric) &&
        (!have_best || better(sample.val_metric, best_metric,
                              sample.metric_is_accuracy))) {
      have_best = true;
      best_metric = sample.val_metric;
      best_cfg = cfg;
      result.best_index = i;
    }
  }

  if (!have_best) {
    result.all_diverged = true;
    return result;
  }

  best_cfg.seed = master.split(2).seed();
  result.final_summary = run_repeats(best_cfg, spec.final_repeats);
  result.runs_executed += spec.final_repeats;
  return result;
}

GridResult grid_sweep(const RunConfig& base_cfg,
                      const std::vector<double>& nu_values,
                      const std::vector<double>& lr_values,
                      std::size_t seeds_per_cell, std::uint64_t master_seed) {
  if (nu_values.empty() || lr_values.empty() || seeds_per_cell == 0) {
    throw std::invalid_argument("grid_sweep: empty axis or zero seeds");
  }
  const auto problem = make_problem(base_cfg.problem_id, base_cfg.problem_params,
                                    base_cfg.problem_seed);

  GridResult grid;
  grid.nu_values = nu_values;
  grid.lr_values = lr_values;
  grid.mean_metric.assign(nu_values.size(),
                          std::vector<double>(lr_values.size(), 0.0));
  grid.flagged.assign(nu_values.size(),
                      std::vector<bool>(lr_values.size(), false));

  RngStream master(master_seed);
  for (std::size_t r = 0; r < nu_values.size(); ++r) {
    for (std::size_t c = 0; c < lr_values.size(); ++c) {
      RngStream cell_seeds = master.split(r * lr_values.size() + c);
      std::vector<double> metrics;
      bool flagged = false;
      for (std::size_t s = 0; s < seeds_per_cell; ++s) {
        RunConfig cfg = base_cfg;
        cfg.hyper.nu = nu_values[r];
        cfg.hyper.alpha = lr_values[c];
        cfg.schedule.base_lr = lr_values[c];
        cfg.seed = cell_seeds.split(s).seed();
        RunRecord rec = run_training(cfg, *problem);
        grid.metric_is_accuracy = rec.metric_is_accuracy();
        if (rec.diverged || !std::isfinite(rec.final_val_metric())) {
          flagged = true;
        } else {
          metrics.push_back(rec.final_val_metric());
        }
      }
      grid.flagged[r][c] = flagged;
      grid.mean_metric[r][c] = metrics.empty()
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : sample_mean(metrics);
    }
  }
  return grid;
}

}  // namespace nlgd
