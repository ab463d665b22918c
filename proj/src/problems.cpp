#include "nlgd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace nlgd {

Batch Problem::draw_batch(std::size_t, RngStream&) const {
  throw std::logic_error(id() + ": draw_batch is not supported (finite dataset)");
}

Batch Problem::batch_at(const std::vector<std::size_t>&) const {
  throw std::logic_error(id() + ": batch_at is not supported (online problem)");
}

// ---------------------------------------------------------------------------
// Quadratic Deep

namespace {

// Haar-random orthogonal matrix: modified Gram-Schmidt on a Gaussian matrix,
// with one re-orthogonalization pass for numerical hygiene at d ~ 100.
Tensor random_orthogonal(std::size_t d, RngStream& rng) {
  Tensor m = sample_gaussian({d, d}, 0.0, 1.0, rng);
  for (std::size_t j = 0; j < d; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < d; ++i) proj += m.at(i, j) * m.at(i, k);
        for (std::size_t i = 0; i < d; ++i) m.at(i, j) -= proj * m.at(i, k);
      }
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += m.at(i, j) * m.at(i, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::runtime_error("degenerate Gaussian column");
    for (std::size_t i = 0; i < d; ++i) m.at(i, j) /= norm;
  }
  return m;
}

Tensor column_mean(const Tensor& batch) {
  const std::size_t n = batch.rows(), d = batch.cols();
  Tensor mean({d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += batch.at(i, j);
  }
  for (double& x : mean.data) x /= static_cast<double>(n);
  return mean;
}

Tensor matvec(const Tensor& m, const Tensor& v) {
  const std::size_t r = m.rows(), c = m.cols();
  if (v.size() != c) {
    throw std::invalid_argument("matvec: shape mismatch " + m.shape_string() +
                                " and " + v.shape_string());
  }
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += m.at(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

}  // namespace

QuadraticProblem build_quadratic_deep(std::size_t d, RngStream& rng,
                                      double data_std) {
  if (d < 10 || d % 10 != 0) {
    throw std::invalid_argument(
        "build_quadratic_deep: d must be >= 10 and divisible by 10");
  }
  std::vector<double> eigs(d);
  const std::size_t small_count = d * 9 / 10;
  for (std::size_t i = 0; i < small_count; ++i) eigs[i] = rng.next_uniform();
  for (std::size_t i = small_count; i < d; ++i) {
    eigs[i] = 30.0 + 30.0 * rng.next_uniform();
  }
  const Tensor r = random_orthogonal(d, rng);

  // Q = R diag(eigs) R^T, then symmetrized against rounding.
  Tensor q({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += r.at(i, k) * eigs[k] * r.at(j, k);
      q.at(i, j) = s;
      q.at(j, i) = s;
    }
  }
  return QuadraticProblem{std::move(q), d, data_std};
}

std::pair<double, Tensor> quadratic_loss_grad(const QuadraticProblem& p,
                                              const Tensor& theta,
                                              const Tensor& batch) {
  if (theta.size() != p.dim || batch.rank() != 2 || batch.cols() != p.dim) {
    throw std::invalid_argument("quadratic_loss_grad: shape mismatch " +
                                theta.shape_string() + " / " +
                                batch.shape_string());
  }
  const std::size_t n = batch.rows(), d = p.dim;
  double loss = 0.0;
  Tensor delta({d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) delta[j] = theta[j] - batch.at(i, j);
    const Tensor qd = matvec(p.q, delta);
    loss += 0.5 * dot(delta, qd);
  }
  loss /= static_cast<double>(n);
  Tensor mean_delta = sub(theta, column_mean(batch));
  return {loss, matvec(p.q, mean_delta)};
}

QuadraticDeepProblem::QuadraticDeepProblem(QuadraticProblem core,
                                           RngStream eval_rng,
                                           std::size_t val_size,
                                           std::size_t test_size)
    : core_(std::move(core)) {
  RngStream val_rng = eval_rng.split(0);
  RngStream test_rng = eval_rng.split(1);
  val_ = make_eval_set(val_size, val_rng);
  test_ = make_eval_set(test_size, test_rng);
}

QuadraticDeepProblem::EvalSet QuadraticDeepProblem::make_eval_set(
    std::size_t n, RngStream& rng) const {
  EvalSet set;
  set.samples = sample_gaussian({n, core_.dim}, 0.0, core_.data_std, rng);
  set.q_x = Tensor({n, core_.dim});
  set.xqx.resize(n);
  Tensor x({core_.dim});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < core_.dim; ++j) x[j] = set.samples.at(i, j);
    const Tensor qx = matvec(core_.q, x);
    for (std::size_t j = 0; j < core_.dim; ++j) set.q_x.at(i, j) = qx[j];
    set.xqx[i] = dot(x, qx);
  }
  return set;
}

ParamSet QuadraticDeepProblem::initial_params(RngStream&) const {
  // Fixed start, equally far from the optimum in every coordinate.
  ParamSet params;
  params.kernels.push_back(Tensor({core_.dim}, core_.init_scale));
  return params;
}

LossGrad QuadraticDeepProblem::loss_grad(const ParamSet& params,
                                         const Batch& batch) const {
  auto [loss, grad] = quadratic_loss_grad(core_, params.kernels.at(0), batch.inputs);
  LossGrad out;
  out.loss = loss;
  out.grads.kernels.push_back(std::move(grad));
  return out;
}

LossGrad QuadraticDeepProblem::train_step_grad(const ParamSet& params,
                                               const Batch& batch) const {
  // Cheap path: gradient is exact, the loss is the batch-mean quadratic form
  // evaluated at the mean sample only (a finite divergence monitor).
  const Tensor& theta = params.kernels.at(0);
  Tensor mean_delta = sub(theta, column_mean(batch.inputs));
  Tensor grad = matvec(core_.q, mean_delta);
  LossGrad out;
  out.loss = 0.5 * dot(mean_delta, grad);
  out.grads.kernels.push_back(std::move(grad));
  return out;
}

Batch QuadraticDeepProblem::draw_batch(std::size_t size, RngStream& rng) const {
  return Batch{sample_gaussian({size, core_.dim}, 0.0, core_.data_std, rng), {}};
}

Batch QuadraticDeepProblem::draw_train_batch(std::size_t size,
                                             RngStream& rng) const {
  const double mean_std = core_.data_std / std::sqrt(static_cast<double>(size));
  return Batch{sample_gaussian({1, core_.dim}, 0.0, mean_std, rng), {}};
}

Evaluation QuadraticDeepProblem::evaluate_set(const ParamSet& params,
                                              const EvalSet& set) const {
  const Tensor& theta = params.kernels.at(0);
  const Tensor q_theta = matvec(core_.q, theta);
  const double tqt = dot(theta, q_theta);
  const std::size_t n = set.samples.rows();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double cross = 0.0;
    for (std::size_t j = 0; j < core_.dim; ++j) {
      cross += theta[j] * set.q_x.at(i, j);
    }
    loss += 0.5 * (tqt - 2.0 * cross + set.xqx[i]);
  }
  return Evaluation{loss / static_cast<double>(n), std::nullopt};
}

Evaluation QuadraticDeepProblem::evaluate_validation(const ParamSet& p) const {
  return evaluate_set(p, val_);
}

Evaluation QuadraticDeepProblem::evaluate_test(const ParamSet& p) const {
  return evaluate_set(p, test_);
}

// ---------------------------------------------------------------------------
// Toy models

ToySingleGrad toy_single_grad(const ToySingleNode& m, const Tensor& batch_inputs) {
  if (batch_inputs.rank() != 2 || batch_inputs.cols() != 2 ||
      batch_inputs.rows() == 0) {
    throw std::invalid_argument("toy_single_grad: batch must be nonempty [B x 2]");
  }
  const std::size_t n = batch_inputs.rows();
  ToySingleGrad out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = batch_inputs.at(i, 0), x2 = batch_inputs.at(i, 1);
    const double r = m.v1 * x1 + m.v2 * x2 - m.a;
    out.loss += r * r;
    out.d_v1 += 2.0 * r * x1;
    out.d_v2 += 2.0 * r * x2;
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loss *= inv;
  out.d_v1 *= inv;
  out.d_v2 *= inv;
  return out;
}

ToyThreeNode make_kappa_imbalanced(double w, double kappa, double a, double sigma) {
  if (kappa == 0.0) throw std::invalid_argument("kappa must be nonzero");
  return ToyThreeNode{w, w, w * kappa, w / kappa, a, sigma};
}

double toy_three_forward(const ToyThreeNode& m, double x1, double x2) {
  return m.w11 * m.w12 * x1 + m.w21 * m.w22 * x2;
}

ToyThreeProductStep toy_three_product_step(const ToyThreeNode& m,
                                           const Tensor& batch_inputs) {
  if (batch_inputs.rank() != 2 || batch_inputs.cols() != 2 ||
      batch_inputs.rows() == 0) {
    throw std::invalid_argument(
        "toy_three_product_step: batch must be nonempty [B x 2]");
  }
  ToyThreeProductStep out;
  const std::size_t n = batch_inputs.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = batch_inputs.at(i, 0), x2 = batch_inputs.at(i, 1);
    const double err = toy_three_forward(m, x1, x2) - m.a;
    out.s1 += x1 * err;
    out.s2 += x2 * err;
  }

  // Closed form for the batch-summed 1/2 (y - a)^2 loss at unit step.
  out.closed_p1 = m.w11 * m.w12 * (1.0 + out.s1 * out.s1) -
                  out.s1 * (m.w11 * m.w11 + m.w12 * m.w12);
  out.closed_p2 = m.w21 * m.w22 * (1.0 + out.s2 * out.s2) -
                  out.s2 * (m.w21 * m.w21 + m.w22 * m.w22);

  // Literal backprop on the same loss: dL/dw11 = w12 S1, etc.
  const double w11 = m.w11 - m.w12 * out.s1;
  const double w12 = m.w12 - m.w11 * out.s1;
  const double w21 = m.w21 - m.w22 * out.s2;
  const double w22 = m.w22 - m.w21 * out.s2;
  out.backprop_p1 = w11 * w12;
  out.backprop_p2 = w21 * w22;
  return out;
}

ToyThreeGrad toy_three_grad(const ToyThreeNode& m, const Tensor& batch_inputs) {
  if (batch_inputs.rank() != 2 || batch_inputs.cols() != 2 ||
      batch_inputs.rows() == 0) {
    throw std::invalid_argument("toy_three_grad: batch must be nonempty [B x 2]");
  }
  const std::size_t n = batch_inputs.rows();
  ToyThreeGrad out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = batch_inputs.at(i, 0), x2 = batch_inputs.at(i, 1);
    const double r = toy_three_forward(m, x1, x2) - m.a;
    out.loss += r * r;
    out.d_w11 += 2.0 * r * x1 * m.w12;
    out.d_w12 += 2.0 * r * x1 * m.w11;
    out.d_w21 += 2.0 * r * x2 * m.w22;
    out.d_w22 += 2.0 * r * x2 * m.w21;
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.loss *= inv;
  out.d_w11 *= inv;
  out.d_w12 *= inv;
  out.d_w21 *= inv;
  out.d_w22 *= inv;
  return out;
}

ToySingleTrajectory run_toy_single(const ToySingleNode& init, OptKind kind,
                                   const HyperParams& hp, std::size_t steps,
                                   std::size_t batch_size, std::uint64_t seed) {
  Optimizer opt(kind, hp);
  ParamSet params;
  params.kernels.push_back(Tensor::vector({init.v1, init.v2}));
  OptimizerState state = opt.init_state(params);
  RngStream rng(seed);

  ToySingleTrajectory traj;
  traj.v1.push_back(init.v1);
  traj.v2.push_back(init.v2);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor batch = sample_gaussian({batch_size, 2}, init.a, init.sigma, rng);
    ParamSet eval = opt.needs_lookahead()
                        ? opt.lookahead_point(params, state, hp.alpha)
                        : params;
    ToySingleNode at{eval.kernels[0][0], eval.kernels[0][1], init.a, init.sigma};
    const ToySingleGrad g = toy_single_grad(at, batch);
    GradSet grads;
    grads.kernels.push_back(Tensor::vector({g.d_v1, g.d_v2}));
    opt.step(params, grads, state, hp.alpha);
    traj.v1.push_back(params.kernels[0][0]);
    traj.v2.push_back(params.kernels[0][1]);
  }
  return traj;
}

ToyThreeTrajectory run_toy_three(const ToyThreeNode& init, OptKind kind,
                                 const HyperParams& hp, std::size_t steps,
                                 std::size_t batch_size, std::uint64_t seed) {
  Optimizer opt(kind, hp);
  ParamSet params;
  params.kernels.push_back(
      Tensor::vector({init.w11, init.w12, init.w21, init.w22}));
  OptimizerState state = opt.init_state(params);
  RngStream rng(seed);

  auto products = [&params](double& p1, double& p2) {
    const Tensor& w = params.kernels[0];
    p1 = w[0] * w[1];
    p2 = w[2] * w[3];
  };

  ToyThreeTrajectory traj;
  double p1 = 0.0, p2 = 0.0;
  products(p1, p2);
  traj.p1.push_back(p1);
  traj.p2.push_back(p2);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor batch = sample_gaussian({batch_size, 2}, init.a, init.sigma, rng);
    ParamSet eval = opt.needs_lookahead()
                        ? opt.lookahead_point(params, state, hp.alpha)
                        : params;
    const Tensor& w = eval.kernels[0];
    ToyThreeNode at{w[0], w[1], w[2], w[3], init.a, init.sigma};
    const ToyThreeGrad g = toy_three_grad(at, batch);
    GradSet grads;
    grads.kernels.push_back(
        Tensor::vector({g.d_w11, g.d_w12, g.d_w21, g.d_w22}));
    opt.step(params, grads, state, hp.alpha);
    products(p1, p2);
    traj.p1.push_back(p1);
    traj.p2.push_back(p2);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Correlated dataset

CorrelatedDataset gen_correlated_dataset(const CorrelatedSpec& spec,
                                         RngStream& rng) {
  if (spec.signal_count < 2) {
    throw std::invalid_argument(
        "gen_correlated_dataset: signal subset needs at least 2 inputs");
  }
  if (spec.signal_count > spec.dim) {
    throw std::invalid_argument("gen_correlated_dataset: |C| exceeds dim");
  }
  CorrelatedDataset out;
  out.spec = spec;
  out.inputs = Tensor({spec.n, spec.dim});
  out.labels = Tensor({spec.n});
  out.latent = Tensor({spec.n});
  if (spec.label_flip < 0.0 || spec.label_flip >= 1.0) {
    throw std::invalid_argument("gen_correlated_dataset: label_flip in [0, 1)");
  }
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double s = spec.sigma_signal * rng.next_gaussian();
    out.latent[i] = s;
    double label = s > 0.0 ? 1.0 : 0.0;
    if (rng.next_uniform() < spec.label_flip) label = 1.0 - label;
    out.labels[i] = label;
    for (std::size_t j = 0; j < spec.dim; ++j) {
      const double noise = spec.sigma_noise * rng.next_gaussian();
      out.inputs.at(i, j) = (j < spec.signal_count) ? s + noise : noise;
    }
  }
  return out;
}

Tensor activation_rate(const Tensor& activations) {
  if (activations.rank() != 2 || activations.rows() == 0) {
    throw std::invalid_argument("activation_rate: need a nonempty [n x units]");
  }
  const std::size_t n = activations.rows(), k = activations.cols();
  Tensor rates({k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (activations.at(i, j) > 0.0) rates[j] += 1.0;
    }
  }
  for (double& r : rates.data) r /= static_cast<double>(n);
  return rates;
}

// ---------------------------------------------------------------------------
// MLP

ParamSet MlpClassifier::init_params(RngStream& rng) const {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("MlpClassifier: need at least input and output");
  }
  ParamSet params;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t in = layer_sizes[l], out = layer_sizes[l + 1];
    const double std = std::sqrt(2.0 / static_cast<double>(in));
    params.kernels.push_back(sample_gaussian({in, out}, 0.0, std, rng));
    params.biases.push_back(Tensor({out}));
  }
  return params;
}

ParamSet MlpClassifier::zero_params() const {
  ParamSet params;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    params.kernels.push_back(Tensor({layer_sizes[l], layer_sizes[l + 1]}));
    params.biases.push_back(Tensor({layer_sizes[l + 1]}));
  }
  return params;
}

namespace {

// z = x W + b
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor z = matmul(x, w);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < z.cols(); ++j) z.at(i, j) += b[j];
  }
  return z;
}

void softmax_rows(Tensor& z) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double mx = z.at(i, 0);
    for (std::size_t j = 1; j < z.cols(); ++j) mx = std::max(mx, z.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) {
      z.at(i, j) = std::exp(z.at(i, j) - mx);
      sum += z.at(i, j);
    }
    for (std::size_t j = 0; j < z.cols(); ++j) z.at(i, j) /= sum;
  }
}

}  // namespace

Tensor MlpClassifier::forward(const ParamSet& params, const Tensor& inputs) const {
  Tensor a = inputs;
  for (std::size_t l = 0; l < params.kernels.size(); ++l) {
    a = affine(a, params.kernels[l], params.biases[l]);
    if (l + 1 < params.kernels.size()) {
      for (double& x : a.data) x = std::max(0.0, x);
    }
  }
  softmax_rows(a);
  return a;
}

LossGrad mlp_loss_grad(const MlpClassifier& model, const ParamSet& params,
                       const Batch& batch) {
  const std::size_t layers = params.kernels.size();
  const std::size_t n = batch.inputs.rows();
  if (n == 0 || batch.inputs.cols() != model.layer_sizes.front()) {
    throw std::invalid_argument("mlp_loss_grad: bad batch shape " +
                                batch.inputs.shape_string());
  }
  if (batch.targets.size() != n) {
    throw std::invalid_argument("mlp_loss_grad: targets/inputs mismatch");
  }

  // Forward, keeping pre-activations for the backward pass.
  std::vector<Tensor> acts;  // post-activation per layer, acts[0] = inputs
  std::vector<Tensor> zs;
  acts.push_back(batch.inputs);
  for (std::size_t l = 0; l < layers; ++l) {
    zs.push_back(affine(acts.back(), params.kernels[l], params.biases[l]));
    Tensor a = zs.back();
    if (l + 1 < layers) {
      for (double& x : a.data) x = std::max(0.0, x);
    }
    acts.push_back(std::move(a));
  }
  Tensor probs = acts.back();
  softmax_rows(probs);

  const std::size_t classes = model.layer_sizes.back();
  double loss = 0.0;
  Tensor delta = probs;  // becomes (probs - onehot) / n
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::size_t>(batch.targets[i]);
    if (label >= classes) {
      throw std::invalid_argument("mlp_loss_grad: label out of range");
    }
    loss -= std::log(std::max(probs.at(i, label), 1e-300));
    delta.at(i, label) -= 1.0;
  }
  loss /= static_cast<double>(n);
  for (double& x : delta.data) x /= static_cast<double>(n);

  LossGrad out;
  out.loss = loss;
  out.grads.kernels.resize(layers);
  out.grads.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    const Tensor& a_prev = acts[l];
    // grad W = a_prev^T delta; grad b = column sums of delta.
    Tensor gw({params.kernels[l].rows(), params.kernels[l].cols()});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < gw.rows(); ++p) {
        const double ap = a_prev.at(i, p);
        if (ap == 0.0) continue;
        for (std::size_t q = 0; q < gw.cols(); ++q) {
          gw.at(p, q) += ap * delta.at(i, q);
        }
      }
    }
    Tensor gb({params.biases[l].size()});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t q = 0; q < gb.size(); ++q) gb[q] += delta.at(i, q);
    }
    out.grads.kernels[l] = std::move(gw);
    out.grads.biases[l] = std::move(gb);
    if (l > 0) {
      Tensor prev_delta({n, params.kernels[l].rows()});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < prev_delta.cols(); ++p) {
          if (zs[l - 1].at(i, p) <= 0.0) continue;  // rectifier gate
          double s = 0.0;
          for (std::size_t q = 0; q < params.kernels[l].cols(); ++q) {
            s += delta.at(i, q) * params.kernels[l].at(p, q);
          }
          prev_delta.at(i, p) = s;
        }
      }
      delta = std::move(prev_delta);
    }
  }
  return out;
}

MlpCorrelatedProblem::MlpCorrelatedProblem(CorrelatedDataset data,
                                           std::size_t hidden,
                                           std::uint64_t split_seed,
                                           double loss_scale)
    : data_(std::move(data)), loss_scale_(loss_scale) {
  if (!(loss_scale_ > 0.0)) {
    throw std::invalid_argument("MlpCorrelatedProblem: loss_scale must be > 0");
  }
  model_.layer_sizes = {data_.spec.dim, hidden, 2};

  // Deterministic 80/10/10 split by seeded shuffle.
  const std::size_t n = data_.spec.n;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  RngStream rng(split_seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.next_u64() % i;
    std::swap(perm[i - 1], perm[j]);
  }
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  train_idx_.assign(perm.begin(), perm.begin() + n_train);
  val_idx_.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  test_idx_.assign(perm.begin() + n_train + n_val, perm.end());
}

ParamSet MlpCorrelatedProblem::initial_params(RngStream& rng) const {
  return model_.init_params(rng);
}

LossGrad MlpCorrelatedProblem::loss_grad(const ParamSet& params,
                                         const Batch& batch) const {
  LossGrad lg = mlp_loss_grad(model_, params, batch);
  if (loss_scale_ != 1.0) {
    lg.loss *= loss_scale_;
    for (Tensor& g : lg.grads.kernels) g = scale(g, loss_scale_);
    for (Tensor& g : lg.grads.biases) g = scale(g, loss_scale_);
  }
  return lg;
}

Batch MlpCorrelatedProblem::batch_at(const std::vector<std::size_t>& indices) const {
  const std::size_t d = data_.spec.dim;
  Batch batch;
  batch.inputs = Tensor({indices.size(), d});
  batch.targets = Tensor({indices.size()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    for (std::size_t j = 0; j < d; ++j) {
      batch.inputs.at(i, j) = data_.inputs.at(src, j);
    }
    batch.targets[i] = data_.labels[src];
  }
  return batch;
}

Evaluation MlpCorrelatedProblem::evaluate_indices(
    const ParamSet& params, const std::vector<std::size_t>& idx) const {
  const Batch batch = batch_at(idx);
  const Tensor probs = model_.forward(params, batch.inputs);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto label = static_cast<std::size_t>(batch.targets[i]);
    loss -= std::log(std::max(probs.at(i, label), 1e-300));
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.cols(); ++j) {
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    }
    if (best == label) ++correct;
  }
  return Evaluation{loss / static_cast<double>(idx.size()),
                    static_cast<double>(correct) / static_cast<double>(idx.size())};
}

Evaluation MlpCorrelatedProblem::evaluate_validation(const ParamSet& p) const {
  return evaluate_indices(p, val_idx_);
}

Evaluation MlpCorrelatedProblem::evaluate_test(const ParamSet& p) const {
  return evaluate_indices(p, test_idx_);
}

// ---------------------------------------------------------------------------
// Flat binary image format

namespace {

constexpr char kImageMagic[4] = {'N', 'L', 'I', '1'};

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xFF),
      static_cast<unsigned char>((v >> 8) & 0xFF),
      static_cast<unsigned char>((v >> 16) & 0xFF),
      static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

ImageSet load_flat_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kImageMagic, 4) != 0) {
    throw std::runtime_error("bad image file magic in " + path);
  }
  const std::uint32_t count = read_u32(in);
  const std::uint32_t rows = read_u32(in);
  const std::uint32_t cols = read_u32(in);
  if (!in || count == 0 || rows == 0 || cols == 0) {
    throw std::runtime_error("bad image file header in " + path);
  }
  ImageSet set;
  set.rows = rows;
  set.cols = cols;
  set.labels = Tensor({count});
  set.images = Tensor({count, static_cast<std::size_t>(rows) * cols});
  std::vector<unsigned char> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
  for (std::uint32_t i = 0; i < count; ++i) set.labels[i] = buf[i];
  buf.resize(static_cast<std::size_t>(count) * rows * cols);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!in) throw std::runtime_error("truncated image file: " + path);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    set.images.data[i] = static_cast<double>(buf[i]) / 255.0;
  }
  return set;
}

void save_flat_images(const std::string& path, const ImageSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image file: " + path);
  out.write(kImageMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(set.labels.size()));
  write_u32(out, static_cast<std::uint32_t>(set.rows));
  write_u32(out, static_cast<std::uint32_t>(set.cols));
  std::vector<unsigned char> buf;
  buf.reserve(set.labels.size() + set.images.size());
  for (double v : set.labels.data) buf.push_back(static_cast<unsigned char>(v));
  for (double v : set.images.data) {
    buf.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
}

// ---------------------------------------------------------------------------
// Online toy problem wrappers and the factory

namespace {

double param_or(const std::map<std::string, double>& params,
                const std::string& key, double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

class ToySingleProblem : public Problem {
 public:
  ToySingleProblem(ToySingleNode init, RngStream eval_rng) : init_(init) {
    RngStream val_rng = eval_rng.split(0);
    RngStream test_rng = eval_rng.split(1);
    val_ = sample_gaussian({512, 2}, init.a, init.sigma, val_rng);
    test_ = sample_gaussian({512, 2}, init.a, init.sigma, test_rng);
  }

  std::string id() const override { return "toy_single"; }

  ParamSet initial_params(RngStream&) const override {
    ParamSet p;
    p.kernels.push_back(Tensor::vector({init_.v1, init_.v2}));
    return p;
  }

  LossGrad loss_grad(const ParamSet& params, const Batch& batch) const override {
    ToySingleNode at{params.kernels.at(0)[0], params.kernels.at(0)[1], init_.a,
                     init_.sigma};
    const ToySingleGrad g = toy_single_grad(at, batch.inputs);
    LossGrad out;
    out.loss = g.loss;
    out.grads.kernels.push_back(Tensor::vector({g.d_v1, g.d_v2}));
    return out;
  }

  Batch draw_batch(std::size_t size, RngStream& rng) const override {
    return Batch{sample_gaussian({size, 2}, init_.a, init_.sigma, rng), {}};
  }

  Evaluation evaluate_validation(const ParamSet& params) const override {
    return eval_on(params, val_);
  }
  Evaluation evaluate_test(const ParamSet& params) const override {
    return eval_on(params, test_);
  }

 private:
  Evaluation eval_on(const ParamSet& params, const Tensor& set) const {
    ToySingleNode at{params.kernels.at(0)[0], params.kernels.at(0)[1], init_.a,
                     init_.sigma};
    return Evaluation{toy_single_grad(at, set).loss, std::nullopt};
  }

  ToySingleNode init_;
  Tensor val_, test_;
};

class ToyThreeProblem : public Problem {
 public:
  ToyThreeProblem(ToyThreeNode init, RngStream eval_rng) : init_(init) {
    RngStream val_rng = eval_rng.split(0);
    RngStream test_rng = eval_rng.split(1);
    val_ = sample_gaussian({512, 2}, init.a, init.sigma, val_rng);
    test_ = sample_gaussian({512, 2}, init.a, init.sigma, test_rng);
  }

  std::string id() const override { return "toy_three"; }

  ParamSet initial_params(RngStream&) const override {
    ParamSet p;
    p.kernels.push_back(
        Tensor::vector({init_.w11, init_.w12, init_.w21, init_.w22}));
    return p;
  }

  LossGrad loss_grad(const ParamSet& params, const Batch& batch) const override {
    const Tensor& w = params.kernels.at(0);
    ToyThreeNode at{w[0], w[1], w[2], w[3], init_.a, init_.sigma};
    const ToyThreeGrad g = toy_three_grad(at, batch.inputs);
    LossGrad out;
    out.loss = g.loss;
    out.grads.kernels.push_back(
        Tensor::vector({g.d_w11, g.d_w12, g.d_w21, g.d_w22}));
    return out;
  }

  Batch draw_batch(std::size_t size, RngStream& rng) const override {
    return Batch{sample_gaussian({size, 2}, init_.a, init_.sigma, rng), {}};
  }

  Evaluation evaluate_validation(const ParamSet& params) const override {
    return eval_on(params, val_);
  }
  Evaluation evaluate_test(const ParamSet& params) const override {
    return eval_on(params, test_);
  }

 private:
  Evaluation eval_on(const ParamSet& params, const Tensor& set) const {
    const Tensor& w = params.kernels.at(0);
    ToyThreeNode at{w[0], w[1], w[2], w[3], init_.a, init_.sigma};
    return Evaluation{toy_three_grad(at, set).loss, std::nullopt};
  }

  ToyThreeNode init_;
  Tensor val_, test_;
};

}  // namespace

std::unique_ptr<Problem> make_problem(const std::string& id,
                                      const std::map<std::string, double>& params,
                                      std::uint64_t problem_seed) {
  RngStream seed_rng(problem_seed);
  if (id == "quadratic_deep") {
    RngStream build_rng = seed_rng.split(0);
    QuadraticProblem core = build_quadratic_deep(
        static_cast<std::size_t>(param_or(params, "dim", 100)), build_rng,
        param_or(params, "data_std", 0.6));
    core.init_scale = param_or(params, "init_scale", 50.0);
    return std::make_unique<QuadraticDeepProblem>(
        std::move(core), seed_rng.split(1),
        static_cast<std::size_t>(param_or(params, "val_size", 1000)),
        static_cast<std::size_t>(param_or(params, "test_size", 1000)));
  }
  if (id == "mlp_correlated") {
    CorrelatedSpec spec;
    spec.n = static_cast<std::size_t>(param_or(params, "n", 2000));
    spec.dim = static_cast<std::size_t>(param_or(params, "dim", 16));
    spec.signal_count =
        static_cast<std::size_t>(param_or(params, "signal_count", 4));
    spec.sigma_signal = param_or(params, "sigma_signal", 3.0);
    spec.sigma_noise = param_or(params, "sigma_noise", 1.0);
    spec.label_flip = param_or(params, "label_flip", 0.0);
    RngStream data_rng = seed_rng.split(0);
    CorrelatedDataset data = gen_correlated_dataset(spec, data_rng);
    return std::make_unique<MlpCorrelatedProblem>(
        std::move(data), static_cast<std::size_t>(param_or(params, "hidden", 32)),
        seed_rng.split(1).seed(), param_or(params, "loss_scale", 1.0));
  }
  if (id == "toy_single") {
    ToySingleNode init{param_or(params, "v1", 0.01), param_or(params, "v2", 0.0001),
                       param_or(params, "a", 1.0), param_or(params, "sigma", 0.3)};
    return std::make_unique<ToySingleProblem>(init, seed_rng.split(1));
  }
  if (id == "toy_three") {
    ToyThreeNode init = make_kappa_imbalanced(
        param_or(params, "w", 0.1), param_or(params, "kappa", 0.5),
        param_or(params, "a", 1.0), param_or(params, "sigma", 0.3));
    return std::make_unique<ToyThreeProblem>(init, seed_rng.split(1));
  }
  throw std::invalid_argument("unknown problem id: " + id);
}

}  // namespace nlgd
