#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nlgd/nl_transform.hpp"
#include "nlgd/tensor.hpp"

namespace nlgd {

enum class OptKind {
  kSgd,
  kMomentum,
  kNag,
  kAdam,
  kClippedSgd,
  kSignSgd,
  kNlSgd,
  kNlMom,
  kNlNag,
};

std::string opt_kind_name(OptKind kind);
OptKind opt_kind_from_name(const std::string& name);
bool is_nl_kind(OptKind kind);
bool is_momentum_kind(OptKind kind);
bool is_nag_kind(OptKind kind);

struct HyperParams {
  double alpha = 0.1;          // base learning rate
  double nu = 1.0;             // signed-power exponent, [0, 1]
  double rho = 0.0;            // momentum, [0, 1)
  double lambda_prime = 0.0;   // reported weight-decay strength (lambda')
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<double> clip_t;  // clipped-SGD threshold

  void validate() const;
};

// Trainable parameters, split into kernels (which receive the non-linear
// transform) and biases (which never do). Slot i of each gradient/state
// vector pairs with slot i here; shapes are fixed for the life of a run.
struct ParamSet {
  std::vector<Tensor> kernels;
  std::vector<Tensor> biases;
};

struct GradSet {
  std::vector<Tensor> kernels;
  std::vector<Tensor> biases;
};

struct OptimizerState {
  std::vector<Tensor> kernel_velocity;
  std::vector<Tensor> bias_velocity;
  std::vector<Tensor> kernel_m, kernel_v;  // Adam moments
  std::vector<Tensor> bias_m, bias_v;
  std::uint64_t step = 0;
  bool lookahead_taken = false;  // NAG two-phase protocol
};

// Weight decay actually applied in the update: alpha * lambda' for plain
// steps and alpha * lambda' / (1 - rho) for momentum-style steps, which
// approximates the momentum amplification as a geometric series.
double lambda_effective(double alpha, double lambda_prime, double rho);

// One update rule behind a common step interface. Baselines are written out
// as the textbook updates so the nu-endpoint equivalence checks compare two
// genuinely separate code paths.
class Optimizer {
 public:
  struct Options {
    // Evaluate NAG gradients at theta + lr * v, as printed in the source
    // algorithm, instead of the standard theta - lr * rho * v lookahead.
    bool paper_lookahead_sign = false;
    // Rescale the decay term by lr / alpha when a schedule changes lr.
    bool couple_decay_to_lr = false;
  };

  Optimizer(OptKind kind, HyperParams hp);
  Optimizer(OptKind kind, HyperParams hp, Options options);

  OptimizerState init_state(const ParamSet& params) const;

  bool needs_lookahead() const { return is_nag_kind(kind_); }

  // Gradient-evaluation point for NAG-family steps. Marks the state so a
  // following step() knows the protocol was honoured. Identity (and no
  // marking requirement) for other kinds.
  ParamSet lookahead_point(const ParamSet& params, OptimizerState& state,
                           double lr) const;

  // Applies one update in place. lr is the scheduled learning rate,
  // normally hp.alpha.
  void step(ParamSet& params, const GradSet& grads, OptimizerState& state,
            double lr) const;

  OptKind kind() const { return kind_; }
  const HyperParams& hyper() const { return hp_; }
  double decay() const { return decay_; }

 private:
  OptKind kind_;
  HyperParams hp_;
  Options options_;
  double decay_;
};

// Spec-level operation wrappers over the class above.
ParamSet nl_sgd_step(const ParamSet& params, const GradSet& grads,
                     const HyperParams& hp, double lr);
ParamSet nl_momentum_step(const ParamSet& params, const GradSet& grads,
                          OptimizerState& state, const HyperParams& hp,
                          double lr);
ParamSet nl_nag_step(const ParamSet& params, const GradSet& grads_at_lookahead,
                     OptimizerState& state, const HyperParams& hp, double lr);
ParamSet baseline_step(OptKind kind, const ParamSet& params,
                       const GradSet& grads, OptimizerState& state,
                       const HyperParams& hp, double lr);

}  // namespace nlgd
