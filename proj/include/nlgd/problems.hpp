#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nlgd/optimizers.hpp"
#include "nlgd/rng.hpp"
#include "nlgd/tensor.hpp"

namespace nlgd {

// One mini-batch. For classification problems targets hold class ids; for
// regression-style problems they hold raw target values (possibly empty when
// the target is a problem constant).
struct Batch {
  Tensor inputs;
  Tensor targets;
};

struct Evaluation {
  double loss = 0.0;
  std::optional<double> accuracy;
};

struct LossGrad {
  double loss = 0.0;
  GradSet grads;
};

// A differentiable objective with fixed validation/test sets. Instances are
// immutable after construction; loss/grad calls are pure in (params, batch).
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string id() const = 0;
  virtual ParamSet initial_params(RngStream& rng) const = 0;

  // Exact batch loss and gradients.
  virtual LossGrad loss_grad(const ParamSet& params, const Batch& batch) const = 0;

  // Gradient path used inside the training loop. The returned loss may be a
  // cheap finite monitor rather than the exact batch loss; exact_train_loss()
  // says which. Default: same as loss_grad.
  virtual LossGrad train_step_grad(const ParamSet& params,
                                   const Batch& batch) const {
    return loss_grad(params, batch);
  }
  virtual bool exact_train_loss() const { return true; }

  // Number of training samples; 0 means online (fresh samples every batch).
  virtual std::size_t train_size() const { return 0; }

  // Online problems: draw a fresh batch.
  virtual Batch draw_batch(std::size_t size, RngStream& rng) const;

  // Batch used by the training loop. Problems whose gradient depends on the
  // batch only through a sufficient statistic may return a reduced batch
  // with the same gradient distribution. Default: draw_batch.
  virtual Batch draw_train_batch(std::size_t size, RngStream& rng) const {
    return draw_batch(size, rng);
  }

  // Finite problems: materialize the given training indices.
  virtual Batch batch_at(const std::vector<std::size_t>& indices) const;

  virtual Evaluation evaluate_validation(const ParamSet& params) const = 0;
  virtual Evaluation evaluate_test(const ParamSet& params) const = 0;

  // True when higher validation metric is better (classification accuracy).
  virtual bool validation_is_accuracy() const { return false; }
};

// ---------------------------------------------------------------------------
// Quadratic Deep

// Synthetic ill-conditioned quadratic: L = 1/2 (theta - x)^T Q (theta - x),
// with 90% of Q's eigenvalues in (0,1) and 10% in (30,60), and x drawn from
// a zero-mean normal with per-coordinate std data_std.
struct QuadraticProblem {
  Tensor q;          // d x d symmetric positive definite
  std::size_t dim = 0;
  double data_std = 0.6;
  // Start at init_scale * ones. Large enough that tuned constant-lr runs
  // balance leftover bias against gradient-noise equilibrium instead of
  // sitting exactly on the noise floor.
  double init_scale = 50.0;
};

// d must be >= 10 and divisible by 10 so the 90/10 eigenvalue split is exact.
// Q = R diag(eigs) R^T with R Haar-random orthogonal.
QuadraticProblem build_quadratic_deep(std::size_t d, RngStream& rng,
                                      double data_std = 0.6);

// Batch-averaged loss and gradient; batch is [B x d].
std::pair<double, Tensor> quadratic_loss_grad(const QuadraticProblem& p,
                                              const Tensor& theta,
                                              const Tensor& batch);

class QuadraticDeepProblem : public Problem {
 public:
  QuadraticDeepProblem(QuadraticProblem core, RngStream eval_rng,
                       std::size_t val_size = 1000, std::size_t test_size = 1000);

  std::string id() const override { return "quadratic_deep"; }
  ParamSet initial_params(RngStream& rng) const override;
  LossGrad loss_grad(const ParamSet& params, const Batch& batch) const override;
  LossGrad train_step_grad(const ParamSet& params, const Batch& batch) const override;
  bool exact_train_loss() const override { return false; }
  Batch draw_batch(std::size_t size, RngStream& rng) const override;
  // The gradient is Q(theta - mean(batch)); the batch mean of B samples is
  // itself Gaussian, so one row at std/sqrt(B) reproduces the exact gradient
  // distribution at 1/B the sampling cost.
  Batch draw_train_batch(std::size_t size, RngStream& rng) const override;
  Evaluation evaluate_validation(const ParamSet& params) const override;
  Evaluation evaluate_test(const ParamSet& params) const override;

  const QuadraticProblem& core() const { return core_; }

 private:
  struct EvalSet {
    Tensor samples;          // n x d
    Tensor q_x;              // n x d rows of Q x_i
    std::vector<double> xqx; // x_i^T Q x_i
  };

  Evaluation evaluate_set(const ParamSet& params, const EvalSet& set) const;
  EvalSet make_eval_set(std::size_t n, RngStream& rng) const;

  QuadraticProblem core_;
  EvalSet val_;
  EvalSet test_;
};

// ---------------------------------------------------------------------------
// Toy models

// Single node, two inputs x_i ~ N(a, sigma^2), constant target a,
// loss (v1 x1 + v2 x2 - a)^2. Solutions lie on the line v1 + v2 = 1; the
// noise-optimal point has v1 = v2.
struct ToySingleNode {
  double v1 = 0.0;
  double v2 = 0.0;
  double a = 1.0;
  double sigma = 0.3;
};

// Mean squared-error loss over the batch and its exact gradients.
// batch.inputs is [B x 2].
struct ToySingleGrad {
  double loss = 0.0;
  double d_v1 = 0.0;
  double d_v2 = 0.0;
};
ToySingleGrad toy_single_grad(const ToySingleNode& m, const Tensor& batch_inputs);

// Three-node model: two input paths, path i carrying weights w_i1 (first
// layer) and w_i2 (second layer); output y = w11 w12 x1 + w21 w22 x2. The
// per-path weight product plays the role of v_i in the single-node model.
struct ToyThreeNode {
  double w11 = 0.1, w12 = 0.1;
  double w21 = 0.1, w22 = 0.1;
  double a = 1.0;
  double sigma = 0.3;
};

// Balanced-product, imbalanced-path initialization: w11 = w12 = w,
// w21 = w * kappa, w22 = w / kappa.
ToyThreeNode make_kappa_imbalanced(double w, double kappa, double a, double sigma);

// One full-gradient descent step on the summed 1/2 (y - a)^2 batch loss at
// unit learning rate, reported two ways: via the closed-form product update
// p_i' = p_i (1 + S_i^2) - S_i (w_i1^2 + w_i2^2) with
// S_j = sum_n x_j^(n) (y^(n) - a), and by updating all four weights literally
// and multiplying. The two routes agree to rounding.
struct ToyThreeProductStep {
  double s1 = 0.0, s2 = 0.0;
  double closed_p1 = 0.0, closed_p2 = 0.0;
  double backprop_p1 = 0.0, backprop_p2 = 0.0;
};
ToyThreeProductStep toy_three_product_step(const ToyThreeNode& m,
                                           const Tensor& batch_inputs);

// Mean-loss gradients for training the three-node model.
struct ToyThreeGrad {
  double loss = 0.0;
  double d_w11 = 0.0, d_w12 = 0.0, d_w21 = 0.0, d_w22 = 0.0;
};
ToyThreeGrad toy_three_grad(const ToyThreeNode& m, const Tensor& batch_inputs);

double toy_three_forward(const ToyThreeNode& m, double x1, double x2);

// Online training trajectories, fresh sampled batch per step.
struct ToySingleTrajectory {
  std::vector<double> v1, v2;  // length steps + 1, index 0 = init
};
ToySingleTrajectory run_toy_single(const ToySingleNode& init, OptKind kind,
                                   const HyperParams& hp, std::size_t steps,
                                   std::size_t batch_size, std::uint64_t seed);

struct ToyThreeTrajectory {
  std::vector<double> p1, p2;  // weight products, length steps + 1
};
ToyThreeTrajectory run_toy_three(const ToyThreeNode& init, OptKind kind,
                                 const HyperParams& hp, std::size_t steps,
                                 std::size_t batch_size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Correlated synthetic classification data

struct CorrelatedSpec {
  std::size_t n = 2000;
  std::size_t dim = 16;
  std::size_t signal_count = 4;  // |C|, the inputs sharing the latent signal
  double sigma_signal = 3.0;
  double sigma_noise = 1.0;
  double label_flip = 0.0;  // fraction of labels flipped (irreducible error)
};

struct CorrelatedDataset {
  CorrelatedSpec spec;
  Tensor inputs;  // n x dim
  Tensor labels;  // n, class ids {0, 1}: sign of the latent signal
  Tensor latent;  // n, the shared signal component per sample
};

CorrelatedDataset gen_correlated_dataset(const CorrelatedSpec& spec,
                                         RngStream& rng);

// Fraction of strictly positive entries per column of [samples x units].
Tensor activation_rate(const Tensor& activations);

// ---------------------------------------------------------------------------
// MLP classifier with exact manual backprop

// Fully connected rectifier network with a softmax-cross-entropy head.
// layer_sizes = {input_dim, hidden..., classes}; kernels are [in x out].
struct MlpClassifier {
  std::vector<std::size_t> layer_sizes;

  ParamSet init_params(RngStream& rng) const;
  ParamSet zero_params() const;
  // Class probabilities, [B x classes].
  Tensor forward(const ParamSet& params, const Tensor& inputs) const;
};

// Mean cross-entropy loss over the batch and exact gradients for every
// kernel and bias. batch.targets holds class ids.
LossGrad mlp_loss_grad(const MlpClassifier& model, const ParamSet& params,
                       const Batch& batch);

class MlpCorrelatedProblem : public Problem {
 public:
  // loss_scale multiplies the cross-entropy loss and all gradients; values
  // above 1 move training into the attenuation regime of the signed-power
  // transform (typical gradient magnitudes > 1).
  MlpCorrelatedProblem(CorrelatedDataset data, std::size_t hidden,
                       std::uint64_t split_seed, double loss_scale = 1.0);

  std::string id() const override { return "mlp_correlated"; }
  ParamSet initial_params(RngStream& rng) const override;
  LossGrad loss_grad(const ParamSet& params, const Batch& batch) const override;
  std::size_t train_size() const override { return train_idx_.size(); }
  Batch batch_at(const std::vector<std::size_t>& indices) const override;
  Evaluation evaluate_validation(const ParamSet& params) const override;
  Evaluation evaluate_test(const ParamSet& params) const override;
  bool validation_is_accuracy() const override { return true; }

  const MlpClassifier& model() const { return model_; }
  const CorrelatedDataset& data() const { return data_; }

 private:
  Evaluation evaluate_indices(const ParamSet& params,
                              const std::vector<std::size_t>& idx) const;

  CorrelatedDataset data_;
  MlpClassifier model_;
  double loss_scale_ = 1.0;
  std::vector<std::size_t> train_idx_, val_idx_, test_idx_;
};

// ---------------------------------------------------------------------------
// Flat binary image format (optional loader for real datasets)
//
// Layout: magic "NLI1", then three little-endian uint32 fields
// (count, rows, cols), then count label bytes, then count*rows*cols
// row-major pixel bytes. Pixels are scaled to [0, 1] on load.

struct ImageSet {
  Tensor images;  // count x (rows*cols)
  Tensor labels;  // count, class ids
  std::size_t rows = 0, cols = 0;
};

ImageSet load_flat_images(const std::string& path);
void save_flat_images(const std::string& path, const ImageSet& set);

// ---------------------------------------------------------------------------
// Problem factory used by the run engine and CLI.
//
// Known ids and their numeric parameters (all optional):
//   quadratic_deep : dim (100), data_std (0.6), val_size, test_size
//   mlp_correlated : n, dim, signal_count, sigma_signal, sigma_noise, hidden
//   toy_single     : v1, v2, a, sigma
//   toy_three      : w, kappa, a, sigma
std::unique_ptr<Problem> make_problem(const std::string& id,
                                      const std::map<std::string, double>& params,
                                      std::uint64_t problem_seed);

}  // namespace nlgd
