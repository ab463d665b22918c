#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "nlgd/rng.hpp"
#include "nlgd/snr.hpp"

using namespace nlgd;

namespace {

SnrInputs two_input_case() {
  // Perfectly correlated unit-variance signals, unit noise everywhere.
  SnrInputs in;
  in.signal_cov = Tensor({2, 2}, 1.0);
  in.noise_var = Tensor::vector({1.0, 1.0});
  return in;
}

Tensor random_unit(std::size_t k, RngStream& rng) {
  Tensor w({k});
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : w.data) {
      x = rng.next_gaussian();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : w.data) x /= norm;
  return w;
}

}  // namespace

TEST_CASE("node snr: worked examples") {
  SnrInputs in = two_input_case();
  // Equal weights add the signals coherently: var(s1+s2) = 4, noise 2.
  CHECK(node_snr({Tensor::vector({1.0, 1.0}), 1.0}, in) ==
        doctest::Approx(2.0).epsilon(1e-15));
  // A single input gives SNR 1.
  CHECK(node_snr({Tensor::vector({1.0, 0.0}), 1.0}, in) ==
        doctest::Approx(1.0).epsilon(1e-15));
  // Scale invariance is exact for power-of-two scalings.
  const double base = node_snr({Tensor::vector({0.3, -0.7}), 1.0}, in);
  CHECK(node_snr({Tensor::vector({0.6, -1.4}), 1.0}, in) == base);
  CHECK(node_snr({Tensor::vector({-0.15, 0.35}), 1.0}, in) == base);

  CHECK_THROWS_AS(node_snr({Tensor::vector({0.0, 0.0}), 1.0}, in),
                  std::invalid_argument);
}

TEST_CASE("node snr: Monte Carlo oracle") {
  // x_j = s + n_j with var(s) = 4, noise vars (1, 2). Analytic SNR of
  // w = (1, 1): var(2s) / (1 + 2) = 16/3.
  SnrInputs in;
  in.signal_cov = Tensor({2, 2}, 4.0);
  in.noise_var = Tensor::vector({1.0, 2.0});
  const NodeWeights w{Tensor::vector({1.0, 1.0}), 1.0};
  CHECK(node_snr(w, in) == doctest::Approx(16.0 / 3.0).epsilon(1e-12));

  RngStream r(77);
  const int n = 100000;
  double sig_ss = 0.0, noise_ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = 2.0 * r.next_gaussian();
    const double noise = 1.0 * r.next_gaussian() +
                         std::sqrt(2.0) * r.next_gaussian();
    sig_ss += (2.0 * s) * (2.0 * s);
    noise_ss += noise * noise;
  }
  const double mc = sig_ss / noise_ss;
  CHECK(mc == doctest::Approx(node_snr(w, in)).epsilon(0.05));
}

TEST_CASE("snr inputs: validation") {
  SnrInputs in = two_input_case();
  in.validate();

  SnrInputs asym = in;
  asym.signal_cov.at(0, 1) = 0.5;  // breaks symmetry
  CHECK_THROWS_AS(asym.validate(), std::invalid_argument);

  SnrInputs nonpos = in;
  nonpos.noise_var[0] = 0.0;
  CHECK_THROWS_AS(nonpos.validate(), std::invalid_argument);

  SnrInputs rates = in;
  rates.raw_noise_var = Tensor::vector({2.0, 2.0});
  rates.act_rates = Tensor::vector({0.5, 0.5});
  rates.validate();  // noise = rate * raw holds
  rates.act_rates = Tensor::vector({0.9, 0.5});
  CHECK_THROWS_AS(rates.validate(), std::invalid_argument);
  rates.act_rates = Tensor::vector({1.5, 0.5});
  CHECK_THROWS_AS(rates.validate(), std::invalid_argument);
}

TEST_CASE("optimal weights: symmetric case is uniform") {
  SnrInputs in = two_input_case();
  NodeWeights w = optimal_weights(in);
  CHECK(std::abs(w.w[0]) == doctest::Approx(std::abs(w.w[1])).epsilon(1e-8));
  // And it attains the best possible SNR, 2.
  CHECK(node_snr(w, in) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("optimal weights: noisier inputs get downweighted proportionally") {
  // Fully correlated signal, noise vars (1, 2): the optimum solves
  // w_j proportional to (C w)_j / noise_j, giving w1 / w2 = 2.
  SnrInputs in;
  in.signal_cov = Tensor({2, 2}, 1.0);
  in.noise_var = Tensor::vector({1.0, 2.0});
  NodeWeights w = optimal_weights(in);
  CHECK(w.w[0] / w.w[1] == doctest::Approx(2.0).epsilon(1e-8));

  // Same statement through activation rates: raw noise equal, one input
  // active half the time. Effective noise (1, 0.5) so w2 = 2 w1.
  SnrInputs act;
  act.signal_cov = Tensor({2, 2}, 1.0);
  act.noise_var = Tensor::vector({1.0, 0.5});
  act.raw_noise_var = Tensor::vector({1.0, 1.0});
  act.act_rates = Tensor::vector({1.0, 0.5});
  NodeWeights w2 = optimal_weights(act);
  CHECK(w2.w[1] / w2.w[0] == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("optimal weights: grid oracle on a 2-input instance") {
  // Exhaustive angular scan at 1e-3 resolution cannot beat the fixed point.
  SnrInputs in;
  in.signal_cov = Tensor({2, 2}, 0.0);
  in.signal_cov.at(0, 0) = 2.0;
  in.signal_cov.at(1, 1) = 1.0;
  in.signal_cov.at(0, 1) = in.signal_cov.at(1, 0) = 0.8;
  in.noise_var = Tensor::vector({0.7, 1.3});
  NodeWeights opt = optimal_weights(in);
  const double best = node_snr(opt, in);
  double grid_best = 0.0;
  for (double t = 0.0; t < 3.141592653589793; t += 1e-3) {
    NodeWeights w{Tensor::vector({std::cos(t), std::sin(t)}), 1.0};
    grid_best = std::max(grid_best, node_snr(w, in));
  }
  CHECK(best >= grid_best - 1e-6);
  CHECK(best == doctest::Approx(grid_best).epsilon(1e-4));
}

TEST_CASE("optimal weights: maximality against random directions") {
  RngStream r(5);
  for (int inst = 0; inst < 5; ++inst) {
    const std::size_t k = 4;
    // Random PSD covariance A A^T and positive noise.
    Tensor a = sample_gaussian({k, k}, 0.0, 1.0, r);
    SnrInputs in;
    in.signal_cov = Tensor({k, k}, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t m = 0; m < k; ++m) s += a.at(i, m) * a.at(j, m);
        in.signal_cov.at(i, j) = s;
      }
    }
    // Exact symmetry.
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        in.signal_cov.at(j, i) = in.signal_cov.at(i, j);
      }
    }
    in.noise_var = Tensor({k});
    for (double& x : in.noise_var.data) x = 0.5 + r.next_uniform();

    NodeWeights opt = optimal_weights(in);
    const double best = node_snr(opt, in);
    for (int trial = 0; trial < 1000; ++trial) {
      NodeWeights w{random_unit(k, r), 1.0};
      CHECK(node_snr(w, in) <= best + 1e-9);
    }
  }
}

TEST_CASE("snr distance: trivial values") {
  NodeWeights a{Tensor::vector({1.0, 2.0}), 1.0};
  NodeWeights same{Tensor::vector({2.0, 4.0}), 1.0};      // same direction
  NodeWeights flipped{Tensor::vector({-1.0, -2.0}), 1.0};  // sign flip
  NodeWeights ortho{Tensor::vector({2.0, -1.0}), 1.0};
  CHECK(snr_distance(a, a) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(snr_distance(a, same) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(snr_distance(a, flipped) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(snr_distance(a, ortho) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("estimate snr inputs: exact on noiseless data") {
  RngStream r(8);
  Tensor signals = sample_gaussian({200, 3}, 0.0, 1.0, r);
  SnrInputs est = estimate_snr_inputs(signals, signals);
  // Residuals are identically zero; estimated noise variance is zero, which
  // validate() rejects, so check the raw fields instead.
  for (double v : est.noise_var.data) CHECK(std::abs(v) < 1e-10);
  // Signal covariance must match a direct computation to rounding.
  Tensor mean({3});
  for (std::size_t i = 0; i < 200; ++i) {
    for (std::size_t j = 0; j < 3; ++j) mean[j] += signals.at(i, j);
  }
  for (double& m : mean.data) m /= 200.0;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < 200; ++i) {
        s += (signals.at(i, a) - mean[a]) * (signals.at(i, b) - mean[b]);
      }
      s /= 199.0;
      CHECK(est.signal_cov.at(a, b) == doctest::Approx(s).epsilon(1e-12));
    }
  }
}

TEST_CASE("estimate snr inputs: recovers known variances") {
  RngStream r(9);
  const std::size_t n = 10000, k = 2;
  Tensor signals({n, k});
  Tensor samples({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    const double s = r.next_gaussian();  // shared, var 1
    for (std::size_t j = 0; j < k; ++j) {
      signals.at(i, j) = s;
      samples.at(i, j) = s + 0.5 * r.next_gaussian();
    }
  }
  SnrInputs est = estimate_snr_inputs(samples, signals);
  est.validate();
  CHECK(est.signal_cov.at(0, 0) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(est.signal_cov.at(0, 1) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(est.noise_var[0] == doctest::Approx(0.25).epsilon(0.1));
  CHECK(est.noise_var[1] == doctest::Approx(0.25).epsilon(0.1));

  // Permuting the rows changes nothing: the statistics are symmetric.
  Tensor perm_samples = samples, perm_signals = signals;
  for (std::size_t j = 0; j < k; ++j) {
    std::swap(perm_samples.at(0, j), perm_samples.at(n - 1, j));
    std::swap(perm_signals.at(0, j), perm_signals.at(n - 1, j));
  }
  SnrInputs est2 = estimate_snr_inputs(perm_samples, perm_signals);
  CHECK(std::abs(est2.signal_cov.at(0, 1) - est.signal_cov.at(0, 1)) < 1e-9);
  CHECK(std::abs(est2.noise_var[0] - est.noise_var[0]) < 1e-9);

  CHECK_THROWS_AS(estimate_snr_inputs(Tensor({1, 2}), Tensor({1, 2})),
                  std::invalid_argument);
}
