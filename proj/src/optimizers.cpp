#include "nlgd/optimizers.hpp"

#include <cmath>
#include <stdexcept>

namespace nlgd {

namespace {

void check_slots(const std::vector<Tensor>& params,
                 const std::vector<Tensor>& other, const char* what) {
  if (params.size() != other.size()) {
    throw std::invalid_argument(std::string(what) + ": slot count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], other[i], what);
  }
}

std::vector<Tensor> zeros_for(const std::vector<Tensor>& slots) {
  std::vector<Tensor> out;
  out.reserve(slots.size());
  for (const Tensor& t : slots) out.push_back(zeros_like(t));
  return out;
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::string opt_kind_name(OptKind kind) {
  switch (kind) {
    case OptKind::kSgd: return "sgd";
    case OptKind::kMomentum: return "momentum";
    case OptKind::kNag: return "nag";
    case OptKind::kAdam: return "adam";
    case OptKind::kClippedSgd: return "clipped-sgd";
    case OptKind::kSignSgd: return "sign-sgd";
    case OptKind::kNlSgd: return "nl-sgd";
    case OptKind::kNlMom: return "nl-mom";
    case OptKind::kNlNag: return "nl-nag";
  }
  throw std::invalid_argument("unknown optimizer kind");
}

OptKind opt_kind_from_name(const std::string& name) {
  for (OptKind kind :
       {OptKind::kSgd, OptKind::kMomentum, OptKind::kNag, OptKind::kAdam,
        OptKind::kClippedSgd, OptKind::kSignSgd, OptKind::kNlSgd,
        OptKind::kNlMom, OptKind::kNlNag}) {
    if (opt_kind_name(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown optimizer kind: " + name);
}

bool is_nl_kind(OptKind kind) {
  return kind == OptKind::kNlSgd || kind == OptKind::kNlMom ||
         kind == OptKind::kNlNag;
}

bool is_momentum_kind(OptKind kind) {
  return kind == OptKind::kMomentum || kind == OptKind::kNag ||
         kind == OptKind::kNlMom || kind == OptKind::kNlNag;
}

bool is_nag_kind(OptKind kind) {
  return kind == OptKind::kNag || kind == OptKind::kNlNag;
}

void HyperParams::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("HyperParams: alpha must be > 0");
  if (!(nu >= 0.0 && nu <= 1.0)) {
    throw std::invalid_argument("HyperParams: nu must lie in [0, 1]");
  }
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw std::invalid_argument("HyperParams: rho must lie in [0, 1)");
  }
  if (lambda_prime < 0.0) {
    throw std::invalid_argument("HyperParams: lambda must be >= 0");
  }
  if (clip_t && !(*clip_t > 0.0)) {
    throw std::invalid_argument("HyperParams: clip threshold must be > 0");
  }
}

double lambda_effective(double alpha, double lambda_prime, double rho) {
  if (!(alpha > 0.0)) throw std::invalid_argument("lambda_effective: alpha must be > 0");
  if (lambda_prime < 0.0) {
    throw std::invalid_argument("lambda_effective: lambda' must be >= 0");
  }
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw std::invalid_argument("lambda_effective: rho must lie in [0, 1)");
  }
  if (rho == 0.0) return alpha * lambda_prime;
  return alpha * lambda_prime / (1.0 - rho);
}

Optimizer::Optimizer(OptKind kind, HyperParams hp)
    : Optimizer(kind, std::move(hp), Options{}) {}

Optimizer::Optimizer(OptKind kind, HyperParams hp, Options options)
    : kind_(kind), hp_(hp), options_(options) {
  hp_.validate();
  if (kind_ == OptKind::kClippedSgd && !hp_.clip_t) {
    throw std::invalid_argument("clipped-sgd requires a clip threshold");
  }
  decay_ = lambda_effective(hp_.alpha, hp_.lambda_prime,
                            is_momentum_kind(kind_) ? hp_.rho : 0.0);
}

OptimizerState Optimizer::init_state(const ParamSet& params) const {
  OptimizerState state;
  if (is_momentum_kind(kind_)) {
    state.kernel_velocity = zeros_for(params.kernels);
    state.bias_velocity = zeros_for(params.biases);
  }
  if (kind_ == OptKind::kAdam) {
    state.kernel_m = zeros_for(params.kernels);
    state.kernel_v = zeros_for(params.kernels);
    state.bias_m = zeros_for(params.biases);
    state.bias_v = zeros_for(params.biases);
  }
  return state;
}

ParamSet Optimizer::lookahead_point(const ParamSet& params,
                                    OptimizerState& state, double lr) const {
  if (!needs_lookahead()) return params;
  state.lookahead_taken = true;
  ParamSet point = params;
  const double c = options_.paper_lookahead_sign ? lr : -lr * hp_.rho;
  for (std::size_t i = 0; i < point.kernels.size(); ++i) {
    axpy(c, state.kernel_velocity[i], point.kernels[i]);
  }
  for (std::size_t i = 0; i < point.biases.size(); ++i) {
    axpy(c, state.bias_velocity[i], point.biases[i]);
  }
  return point;
}

void Optimizer::step(ParamSet& params, const GradSet& grads,
                     OptimizerState& state, double lr) const {
  if (!(lr > 0.0)) throw std::invalid_argument("step: lr must be > 0");
  check_slots(params.kernels, grads.kernels, "step kernels");
  check_slots(params.biases, grads.biases, "step biases");
  if (needs_lookahead()) {
    if (!state.lookahead_taken) {
      throw std::logic_error(
          "nag step without a preceding lookahead_point in this step");
    }
    state.lookahead_taken = false;
  }
  state.step += 1;

  const double shrink = options_.couple_decay_to_lr
                            ? decay_ * (lr / hp_.alpha)
                            : decay_;
  const NlSpec nl{hp_.nu, 0.0};

  // Decay uses the pre-update parameter value; both terms are applied in one
  // pass so no slot copy is needed.
  auto apply = [&](Tensor& p, const Tensor& update) {
    if (shrink != 0.0) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        p.data[i] = p.data[i] - shrink * p.data[i] - lr * update.data[i];
      }
    } else {
      axpy(-lr, update, p);
    }
  };

  switch (kind_) {
    case OptKind::kSgd: {
      for (std::size_t i = 0; i < params.kernels.size(); ++i) {
        apply(params.kernels[i], grads.kernels[i]);
      }
      for (std::size_t i = 0; i < params.biases.size(); ++i) {
        apply(params.biases[i], grads.biases[i]);
      }
      break;
    }
    case OptKind::kClippedSgd: {
      const ClipSpec clip{*hp_.clip_t};
      for (std::size_t i = 0; i < params.kernels.size(); ++i) {
        apply(params.kernels[i], apply_clip(grads.kernels[i], clip));
      }
      for (std::size_t i = 0; i < params.biases.size(); ++i) {
        apply(params.biases[i], apply_clip(grads.biases[i], clip));
      }
      break;
    }
    case OptKind::kSignSgd: {
      auto signed_grad = [](const Tensor& g) {
        return elementwise(g, [](double x) { return sign_of(x); });
      };
      for (std::size_t i = 0; i < params.kernels.size(); ++i) {
        apply(params.kernels[i], signed_grad(grads.kernels[i]));
      }
      for (std::size_t i = 0; i < params.biases.size(); ++i) {
        apply(params.biases[i], signed_grad(grads.biases[i]));
      }
      break;
    }
    case OptKind::kNlSgd: {
      for (std::size_t i = 0; i < params.kernels.size(); ++i) {
        apply(params.kernels[i], apply_power_sign(grads.kernels[i], nl));
      }
      // Bias gradients are never passed through the transform.
      for (std::size_t i = 0; i < params.biases.size(); ++i) {
        apply(params.biases[i], grads.biases[i]);
      }
      break;
    }
    case OptKind::kMomentum:
    case OptKind::kNag: {
      for (std::size_t i = 0; i < params.kernels.size(); ++i) {
        Tensor& v = state.kernel_velocity[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
          v.data[j] = hp_.rho * v.data[j] + grads.kernels[i].data[j];
        }
        apply(params.kernels[i], v);
      }
      for (std::size_t i = 0; i < params.biases.size(); ++i) {
        Tensor& v = state.bias_velocity[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
          v.data[j] = hp_.rho * v.data[j] + grads.biases[i].data[j];
        }
        apply(params.biases[i], v);
      }
      break;
    }
    case OptKind::kNlMom:
    case OptKind::kNlNag: {
      for (std::size_t i = 0; i < params.kernels.size(); ++i) {
        Tensor& v = state.kernel_velocity[i];
        const Tensor h = apply_power_sign(grads.kernels[i], nl);
        for (std::size_t j = 0; j < v.size(); ++j) {
          v.data[j] = hp_.rho * v.data[j] + h.data[j];
        }
        apply(params.kernels[i], v);
      }
      for (std::size_t i = 0; i < params.biases.size(); ++i) {
        Tensor& v = state.bias_velocity[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
          v.data[j] = hp_.rho * v.data[j] + grads.biases[i].data[j];
        }
        apply(params.biases[i], v);
      }
      break;
    }
    case OptKind::kAdam: {
      const double t = static_cast<double>(state.step);
      const double c1 = 1.0 - std::pow(hp_.adam_beta1, t);
      const double c2 = 1.0 - std::pow(hp_.adam_beta2, t);
      auto adam_slot = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
        Tensor update = zeros_like(p);
        for (std::size_t j = 0; j < p.size(); ++j) {
          m.data[j] = hp_.adam_beta1 * m.data[j] + (1.0 - hp_.adam_beta1) * g.data[j];
          v.data[j] = hp_.adam_beta2 * v.data[j] +
                      (1.0 - hp_.adam_beta2) * g.data[j] * g.data[j];
          const double mhat = m.data[j] / c1;
          const double vhat = v.data[j] / c2;
          update.data[j] = mhat / (std::sqrt(vhat) + hp_.adam_eps);
        }
        apply(p, update);
      };
      for (std::size_t i = 0; i < params.kernels.size(); ++i) {
        adam_slot(params.kernels[i], grads.kernels[i], state.kernel_m[i],
                  state.kernel_v[i]);
      }
      for (std::size_t i = 0; i < params.biases.size(); ++i) {
        adam_slot(params.biases[i], grads.biases[i], state.bias_m[i],
                  state.bias_v[i]);
      }
      break;
    }
  }
}

ParamSet nl_sgd_step(const ParamSet& params, const GradSet& grads,
                     const HyperParams& hp, double lr) {
  Optimizer opt(OptKind::kNlSgd, hp);
  ParamSet out = params;
  OptimizerState state = opt.init_state(out);
  opt.step(out, grads, state, lr);
  return out;
}

ParamSet nl_momentum_step(const ParamSet& params, const GradSet& grads,
                          OptimizerState& state, const HyperParams& hp,
                          double lr) {
  Optimizer opt(OptKind::kNlMom, hp);
  ParamSet out = params;
  opt.step(out, grads, state, lr);
  return out;
}

ParamSet nl_nag_step(const ParamSet& params, const GradSet& grads_at_lookahead,
                     OptimizerState& state, const HyperParams& hp, double lr) {
  Optimizer opt(OptKind::kNlNag, hp);
  ParamSet out = params;
  opt.step(out, grads_at_lookahead, state, lr);
  return out;
}

ParamSet baseline_step(OptKind kind, const ParamSet& params,
                       const GradSet& grads, OptimizerState& state,
                       const HyperParams& hp, double lr) {
  if (is_nl_kind(kind)) {
    throw std::invalid_argument("baseline_step: " + opt_kind_name(kind) +
                                " is not a baseline kind");
  }
  Optimizer opt(kind, hp);
  ParamSet out = params;
  opt.step(out, grads, state, lr);
  return out;
}

}  // namespace nlgd
