#include "nlgd/snr.hpp"

#include <cmath>
#include <stdexcept>

namespace nlgd {

void SnrInputs::validate() const {
  const std::size_t k = noise_var.size();
  if (k == 0) throw std::invalid_argument("SnrInputs: empty");
  if (signal_cov.rank() != 2 || signal_cov.rows() != k || signal_cov.cols() != k) {
    throw std::invalid_argument("SnrInputs: signal_cov must be " +
                                std::to_string(k) + "x" + std::to_string(k));
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (std::abs(signal_cov.at(i, j) - signal_cov.at(j, i)) > 1e-10) {
        throw std::invalid_argument("SnrInputs: signal_cov not symmetric");
      }
    }
  }
  for (double v : noise_var.data) {
    if (!(v > 0.0)) throw std::invalid_argument("SnrInputs: noise_var must be > 0");
  }
  if (act_rates) {
    if (act_rates->size() != k) {
      throw std::invalid_argument("SnrInputs: act_rates dimension mismatch");
    }
    for (double a : act_rates->data) {
      if (!(a >= 0.0 && a <= 1.0)) {
        throw std::invalid_argument("SnrInputs: act_rates must lie in [0, 1]");
      }
    }
  }
  if (raw_noise_var && raw_noise_var->size() != k) {
    throw std::invalid_argument("SnrInputs: raw_noise_var dimension mismatch");
  }
  if (raw_noise_var && act_rates) {
    for (std::size_t j = 0; j < k; ++j) {
      if (std::abs(noise_var[j] - (*act_rates)[j] * (*raw_noise_var)[j]) > 1e-10) {
        throw std::invalid_argument(
            "SnrInputs: noise_var != act_rate * raw_noise_var");
      }
    }
  }
}

namespace {

// Effective per-input noise variances: a_j * var(n_j^r) when activation
// rates are supplied, plain var(n_j) otherwise.
Tensor effective_noise(const SnrInputs& inputs) {
  if (inputs.act_rates && inputs.raw_noise_var) {
    Tensor out({inputs.dim()});
    for (std::size_t j = 0; j < inputs.dim(); ++j) {
      out[j] = (*inputs.act_rates)[j] * (*inputs.raw_noise_var)[j];
      if (!(out[j] > 0.0)) {
        throw std::invalid_argument("SnrInputs: effective noise must be > 0");
      }
    }
    return out;
  }
  return inputs.noise_var;
}

Tensor cov_times(const Tensor& cov, const Tensor& w) {
  const std::size_t k = w.size();
  Tensor out({k});
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += cov.at(i, j) * w[j];
    out[i] = s;
  }
  return out;
}

double norm2(const Tensor& v) { return std::sqrt(dot(v, v)); }

}  // namespace

double node_snr(const NodeWeights& w, const SnrInputs& inputs) {
  inputs.validate();
  if (w.w.size() != inputs.dim()) {
    throw std::invalid_argument("node_snr: weight dimension mismatch");
  }
  const Tensor noise = effective_noise(inputs);
  double denom = 0.0;
  for (std::size_t j = 0; j < w.w.size(); ++j) {
    denom += w.w[j] * w.w[j] * noise[j];
  }
  if (denom == 0.0) {
    throw std::invalid_argument("node_snr: undefined for all-zero weights");
  }
  const double numer = dot(w.w, cov_times(inputs.signal_cov, w.w));
  return numer / denom;
}

NodeWeights optimal_weights(const SnrInputs& inputs, double scale, double tol,
                            std::size_t max_iters) {
  inputs.validate();
  if (!(scale > 0.0)) throw std::invalid_argument("optimal_weights: scale <= 0");
  if (max_abs(inputs.signal_cov) == 0.0) {
    throw std::invalid_argument("optimal_weights: signal_cov is zero");
  }
  const std::size_t k = inputs.dim();
  const Tensor noise = effective_noise(inputs);

  Tensor w({k}, 1.0 / std::sqrt(static_cast<double>(k)));
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    Tensor next = cov_times(inputs.signal_cov, w);
    for (std::size_t j = 0; j < k; ++j) next[j] = scale * next[j] / noise[j];
    const double n = norm2(next);
    if (n == 0.0) {
      // Landed in the null space; restart from a shifted direction.
      for (std::size_t j = 0; j < k; ++j) {
        next[j] = (j % 2 == 0) ? 1.0 : 0.5;
      }
    } else {
      for (double& x : next.data) x /= n;
    }
    // Fixed point up to sign (the iteration may alternate sign).
    double diff_plus = 0.0, diff_minus = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      diff_plus = std::max(diff_plus, std::abs(next[j] - w[j]));
      diff_minus = std::max(diff_minus, std::abs(next[j] + w[j]));
    }
    w = std::move(next);
    if (std::min(diff_plus, diff_minus) < tol) {
      return NodeWeights{std::move(w), scale};
    }
  }
  throw std::runtime_error("optimal_weights: no convergence after " +
                           std::to_string(max_iters) + " iterations");
}

double snr_distance(const NodeWeights& actual, const NodeWeights& optimal) {
  if (actual.w.size() != optimal.w.size()) {
    throw std::invalid_argument("snr_distance: dimension mismatch");
  }
  const double na = norm2(actual.w), nb = norm2(optimal.w);
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("snr_distance: undefined for zero vector");
  }
  const double cosine = dot(actual.w, optimal.w) / (na * nb);
  return 1.0 - std::min(1.0, std::abs(cosine));
}

SnrInputs estimate_snr_inputs(const Tensor& samples, const Tensor& signals) {
  if (samples.rank() != 2 || signals.rank() != 2 ||
      samples.shape != signals.shape) {
    throw std::invalid_argument("estimate_snr_inputs: shape mismatch " +
                                samples.shape_string() + " vs " +
                                signals.shape_string());
  }
  const std::size_t n = samples.rows(), k = samples.cols();
  if (n < 2) {
    throw std::invalid_argument("estimate_snr_inputs: need at least 2 samples");
  }

  Tensor s_mean({k}), n_mean({k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      s_mean[j] += signals.at(i, j);
      n_mean[j] += samples.at(i, j) - signals.at(i, j);
    }
  }
  for (double& v : s_mean.data) v /= static_cast<double>(n);
  for (double& v : n_mean.data) v /= static_cast<double>(n);

  SnrInputs out;
  out.signal_cov = Tensor({k, k});
  out.noise_var = Tensor({k});
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      const double sa = signals.at(i, a) - s_mean[a];
      for (std::size_t b = a; b < k; ++b) {
        out.signal_cov.at(a, b) += sa * (signals.at(i, b) - s_mean[b]);
      }
      const double na = samples.at(i, a) - signals.at(i, a) - n_mean[a];
      out.noise_var[a] += na * na;
    }
  }
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a; b < k; ++b) {
      out.signal_cov.at(a, b) /= denom;
      out.signal_cov.at(b, a) = out.signal_cov.at(a, b);
    }
    out.noise_var[a] /= denom;
  }
  return out;
}

}  // namespace nlgd
