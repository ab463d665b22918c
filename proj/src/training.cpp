#include "nlgd/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace nlgd {

void ScheduleSpec::validate() const {
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) {
    throw std::invalid_argument("ScheduleSpec: base_lr must be finite and >= 0");
  }
  if (total_epochs == 0) {
    throw std::invalid_argument("ScheduleSpec: total_epochs must be positive");
  }
  if (kind == Kind::kAnnihilation) {
    if (!(annihilation_factor > 1.0)) {
      throw std::invalid_argument("ScheduleSpec: annihilation_factor must be > 1");
    }
    if (annihilation_epochs >= total_epochs) {
      throw std::invalid_argument(
          "ScheduleSpec: annihilation_epochs must be < total_epochs");
    }
  }
}

double schedule_lr(const ScheduleSpec& s, std::size_t epoch) {
  s.validate();
  if (epoch >= s.total_epochs) {
    throw std::out_of_range("schedule_lr: epoch " + std::to_string(epoch) +
                            " outside [0, " + std::to_string(s.total_epochs) + ")");
  }
  if (s.kind == ScheduleSpec::Kind::kConstant) return s.base_lr;
  return epoch < s.total_epochs - s.annihilation_epochs
             ? s.base_lr
             : s.base_lr / s.annihilation_factor;
}

void RunConfig::validate() const {
  hyper.validate();
  schedule.validate();
  if (batch_size == 0) throw std::invalid_argument("RunConfig: batch_size == 0");
  if (batches_per_epoch == 0) {
    throw std::invalid_argument("RunConfig: batches_per_epoch == 0");
  }
}

double RunRecord::final_val_metric() const {
  if (has_accuracy) {
    return val_accuracy.empty() ? 0.0 : val_accuracy.back();
  }
  return val_loss.empty() ? std::numeric_limits<double>::infinity()
                          : val_loss.back();
}

namespace {

bool params_finite(const ParamSet& params) {
  for (const Tensor& t : params.kernels) {
    if (!all_finite(t)) return false;
  }
  for (const Tensor& t : params.biases) {
    if (!all_finite(t)) return false;
  }
  return true;
}

}  // namespace

RunRecord run_training(const RunConfig& cfg) {
  const auto problem =
      make_problem(cfg.problem_id, cfg.problem_params, cfg.problem_seed);
  return run_training(cfg, *problem);
}

RunRecord run_training(const RunConfig& cfg, const Problem& problem) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();

  RngStream root(cfg.seed);
  RngStream init_rng = root.split(0);
  RngStream batch_rng = root.split(1);
  RngStream shuffle_rng = root.split(2);

  ParamSet params = problem.initial_params(init_rng);
  // Scheduled lr rescales the whole step; hp.alpha is the base rate.
  HyperParams hp = cfg.hyper;
  hp.alpha = cfg.schedule.base_lr;
  Optimizer opt(cfg.opt_kind, hp, cfg.opt_options);
  OptimizerState state = opt.init_state(params);

  const std::size_t train_n = problem.train_size();
  std::vector<std::size_t> order(train_n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  RunRecord rec;
  rec.config = cfg;
  rec.has_accuracy = problem.validation_is_accuracy();

  double initial_loss = 0.0;
  bool have_initial = false;

  for (std::size_t epoch = 0; epoch < cfg.schedule.total_epochs; ++epoch) {
    const double lr = schedule_lr(cfg.schedule, epoch);
    double epoch_loss = 0.0;
    std::size_t steps = 0;

    std::size_t n_batches;
    if (train_n == 0) {
      n_batches = cfg.batches_per_epoch;
    } else {
      for (std::size_t i = train_n; i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);
      }
      n_batches = (train_n + cfg.batch_size - 1) / cfg.batch_size;
    }

    for (std::size_t b = 0; b < n_batches; ++b) {
      Batch batch;
      if (train_n == 0) {
        batch = problem.draw_train_batch(cfg.batch_size, batch_rng);
      } else {
        const std::size_t lo = b * cfg.batch_size;
        const std::size_t hi = std::min(lo + cfg.batch_size, train_n);
        batch = problem.batch_at(
            {order.begin() + static_cast<std::ptrdiff_t>(lo),
             order.begin() + static_cast<std::ptrdiff_t>(hi)});
      }

      ParamSet lookahead;
      const ParamSet* eval_point = &params;
      if (opt.needs_lookahead()) {
        lookahead = opt.lookahead_point(params, state, lr);
        eval_point = &lookahead;
      }
      const LossGrad lg = problem.train_step_grad(*eval_point, batch);
      if (!have_initial) {
        initial_loss = lg.loss;
        have_initial = true;
      }
      const bool blown =
          !std::isfinite(lg.loss) ||
          (std::isfinite(initial_loss) &&
           std::abs(lg.loss) > 1e6 * std::max(1.0, std::abs(initial_loss)));
      if (blown || !params_finite(params)) {
        rec.diverged = true;
        break;
      }
      opt.step(params, lg.grads, state, lr);
      epoch_loss += lg.loss;
      ++steps;
    }

    if (rec.diverged) break;

    rec.train_loss.push_back(steps ? epoch_loss / static_cast<double>(steps)
                                   : 0.0);
    const Evaluation val = problem.evaluate_validation(params);
    rec.val_loss.push_back(val.loss);
    if (rec.has_accuracy) rec.val_accuracy.push_back(val.accuracy.value_or(0.0));
    if (!std::isfinite(val.loss)) {
      rec.diverged = true;
      break;
    }
    ++rec.completed_epochs;
  }

  const Evaluation test = problem.evaluate_test(params);
  rec.final_test_loss = test.loss;
  rec.final_test_accuracy = test.accuracy.value_or(0.0);

  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return rec;
}

double sample_mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

RepeatSummary run_repeats(const RunConfig& cfg, std::size_t n_seeds,
                          bool include_diverged) {
  if (n_seeds == 0) throw std::invalid_argument("run_repeats: n_seeds == 0");
  const auto problem =
      make_problem(cfg.problem_id, cfg.problem_params, cfg.problem_seed);

  RngStream seed_source(cfg.seed);
  RepeatSummary out;
  std::vector<double> finals;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    RunConfig run_cfg = cfg;
    run_cfg.seed = seed_source.split(i).seed();
    RunRecord rec = run_training(run_cfg, *problem);
    if (rec.diverged) ++out.diverged_count;
    if (!rec.diverged || include_diverged) {
      finals.push_back(rec.has_accuracy ? rec.final_test_accuracy
                                        : rec.final_test_loss);
    }
    out.records.push_back(std::move(rec));
  }
  out.mean = sample_mean(finals);
  out.stddev = sample_std(finals);
  return out;
}

}  // namespace nlgd
