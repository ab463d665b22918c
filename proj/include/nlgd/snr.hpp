#pragma once

#include <functional>
#include <optional>

#include "nlgd/tensor.hpp"

namespace nlgd {

// Second-order statistics of a node's inputs x_j = s_j + n_j: covariance of
// the signal components and per-input noise variances. Optionally the raw
// (pre-rectifier) noise variances and activation rates a_j, related by
// noise_var_j = a_j * raw_noise_var_j.
struct SnrInputs {
  Tensor signal_cov;                    // k x k, symmetric PSD
  Tensor noise_var;                     // k, entries > 0
  std::optional<Tensor> raw_noise_var;  // k
  std::optional<Tensor> act_rates;      // k, entries in [0, 1]

  std::size_t dim() const { return noise_var.size(); }
  void validate() const;
};

struct NodeWeights {
  Tensor w;
  double scale = 1.0;  // the k_i constant; any positive value is equivalent
};

// var(sum_j w_j s_j) / sum_j w_j^2 var(n_j).
double node_snr(const NodeWeights& w, const SnrInputs& inputs);

// SNR-maximizing weights, solved by normalized fixed-point iteration of
// w <- scale * signal_cov * w / noise_var (elementwise division). When
// act_rates are present the denominator is a_j * raw_noise_var_j instead.
// Throws on failure to converge within max_iters at the given tolerance.
NodeWeights optimal_weights(const SnrInputs& inputs, double scale = 1.0,
                            double tol = 1e-10, std::size_t max_iters = 10000);

// 1 - |cosine similarity|; invariant to scale and sign of either argument.
double snr_distance(const NodeWeights& actual, const NodeWeights& optimal);

// Empirical SnrInputs from samples [n x k] given the per-sample signal
// components [n x k] (ground truth for synthetic data). Noise is the
// residual x - s; noise variances are per-input, signal covariance full.
SnrInputs estimate_snr_inputs(const Tensor& samples, const Tensor& signals);

}  // namespace nlgd
