#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "nlgd/problems.hpp"

using namespace nlgd;

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.at(i, j);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("quadratic deep: eigenspectrum recovered by an independent solver") {
  RngStream r(42);
  QuadraticProblem p = build_quadratic_deep(100, r);
  CHECK(p.dim == 100);

  // Symmetry.
  double asym = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    for (std::size_t j = 0; j < 100; ++j) {
      asym = std::max(asym, std::abs(p.q.at(i, j) - p.q.at(j, i)));
    }
  }
  CHECK(asym < 1e-12);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(to_eigen(p.q));
  REQUIRE(solver.info() == Eigen::Success);
  const auto& eigs = solver.eigenvalues();
  std::size_t low = 0, high = 0;
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    const double e = eigs(i);
    if (e > -1e-8 && e < 1.0 + 1e-8) ++low;
    else if (e > 30.0 - 1e-8 && e < 60.0 + 1e-8) ++high;
  }
  // 90% small, 10% large: the construction's diagonal must survive the
  // orthogonal conjugation exactly (up to solver tolerance).
  CHECK(low == 90);
  CHECK(high == 10);
  // Condition number at least 30 by construction.
  CHECK(eigs(eigs.size() - 1) / eigs(0) >= 30.0);
}

TEST_CASE("quadratic deep: small instance and bad dimensions") {
  RngStream r(1);
  QuadraticProblem p = build_quadratic_deep(10, r);
  double asym = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 10; ++j) {
      asym = std::max(asym, std::abs(p.q.at(i, j) - p.q.at(j, i)));
    }
  }
  CHECK(asym < 1e-12);
  RngStream r2(1);
  CHECK_THROWS_AS(build_quadratic_deep(7, r2), std::invalid_argument);
  CHECK_THROWS_AS(build_quadratic_deep(0, r2), std::invalid_argument);
}

TEST_CASE("quadratic loss/grad: worked values") {
  // theta equal to the single sample: zero loss, zero gradient.
  RngStream r(2);
  QuadraticProblem p = build_quadratic_deep(10, r);
  Tensor x = sample_gaussian({1, 10}, 0.0, 1.0, r);
  Tensor theta({10});
  for (std::size_t j = 0; j < 10; ++j) theta[j] = x.at(0, j);
  auto [loss, grad] = quadratic_loss_grad(p, theta, x);
  CHECK(std::abs(loss) < 1e-12);
  CHECK(max_abs(grad) < 1e-12);

  // Identity Q, offset e1: loss 1/2, gradient e1.
  QuadraticProblem ident;
  ident.dim = 3;
  ident.q = Tensor({3, 3}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) ident.q.at(i, i) = 1.0;
  Tensor zero_batch({1, 3}, 0.0);
  Tensor e1 = Tensor::vector({1.0, 0.0, 0.0});
  auto [l2, g2] = quadratic_loss_grad(ident, e1, zero_batch);
  CHECK(l2 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(max_abs_diff(g2, e1) < 1e-15);

  CHECK_THROWS_AS(quadratic_loss_grad(p, Tensor({3}), x), std::invalid_argument);
}

TEST_CASE("quadratic loss/grad: finite differences") {
  RngStream r(5);
  QuadraticProblem p = build_quadratic_deep(10, r);
  Tensor batch = sample_gaussian({4, 10}, 0.0, p.data_std, r);
  Tensor theta = sample_gaussian({10}, 0.0, 1.0, r);
  auto [loss, grad] = quadratic_loss_grad(p, theta, batch);
  (void)loss;
  const double h = 1e-6;
  for (std::size_t j = 0; j < 10; ++j) {
    Tensor tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    const double fd = (quadratic_loss_grad(p, tp, batch).first -
                       quadratic_loss_grad(p, tm, batch).first) /
                      (2.0 * h);
    CHECK(std::abs(fd - grad[j]) <= 1e-6 * std::max(1.0, std::abs(grad[j])));
  }
}

TEST_CASE("quadratic deep problem: factory defaults and train batches") {
  auto prob = make_problem("quadratic_deep", {}, 42);
  RngStream init(0);
  ParamSet p0 = prob->initial_params(init);
  REQUIRE(p0.kernels.size() == 1);
  CHECK(p0.kernels[0].size() == 100);
  for (double v : p0.kernels[0].data) CHECK(v == 50.0);

  // At the data mean the loss is near the noise floor 0.5*std^2*tr(Q),
  // which the construction pins inside [84, 90] for the default instance.
  ParamSet at_zero = p0;
  for (double& v : at_zero.kernels[0].data) v = 0.0;
  const double floor_loss = prob->evaluate_test(at_zero).loss;
  CHECK(floor_loss > 80.0);
  CHECK(floor_loss < 95.0);

  // The reduced training batch has one row whose statistics match the mean
  // of a size-B batch: per-coordinate std = data_std / sqrt(B).
  RngStream br(9);
  const std::size_t B = 64;
  const int trials = 4000;
  double sumsq = 0.0;
  for (int t = 0; t < trials; ++t) {
    Batch b = prob->draw_train_batch(B, br);
    REQUIRE(b.inputs.rows() == 1);
    sumsq += b.inputs.at(0, 0) * b.inputs.at(0, 0);
  }
  const double emp_std = std::sqrt(sumsq / trials);
  CHECK(emp_std == doctest::Approx(0.6 / std::sqrt(64.0)).epsilon(0.1));

  // Gradient from the reduced batch equals the full-batch formula applied
  // to the same single row.
  RngStream br2(10);
  Batch b = prob->draw_train_batch(B, br2);
  LossGrad lg = prob->train_step_grad(p0, b);
  LossGrad exact = prob->loss_grad(p0, b);
  CHECK(max_abs_diff(lg.grads.kernels[0], exact.grads.kernels[0]) < 1e-12);
}

TEST_CASE("toy single node: gradients and stationary line") {
  ToySingleNode m{0.3, 0.5, 1.0, 0.3};
  RngStream r(3);
  Tensor batch = sample_gaussian({16, 2}, m.a, m.sigma, r);
  ToySingleGrad g = toy_single_grad(m, batch);

  const double h = 1e-7;
  auto loss_at = [&](double v1, double v2) {
    ToySingleNode mm = m;
    mm.v1 = v1;
    mm.v2 = v2;
    return toy_single_grad(mm, batch).loss;
  };
  const double fd1 = (loss_at(m.v1 + h, m.v2) - loss_at(m.v1 - h, m.v2)) / (2 * h);
  const double fd2 = (loss_at(m.v1, m.v2 + h) - loss_at(m.v1, m.v2 - h)) / (2 * h);
  CHECK(std::abs(fd1 - g.d_v1) < 1e-6 * std::max(1.0, std::abs(g.d_v1)));
  CHECK(std::abs(fd2 - g.d_v2) < 1e-6 * std::max(1.0, std::abs(g.d_v2)));

  // Noiseless inputs on the solution line: zero loss and gradient anywhere
  // with v1 + v2 = 1.
  Tensor clean({4, 2}, 1.0);
  ToySingleNode on_line{0.8, 0.2, 1.0, 0.0};
  ToySingleGrad gl = toy_single_grad(on_line, clean);
  CHECK(std::abs(gl.loss) < 1e-15);
  CHECK(std::abs(gl.d_v1) < 1e-15);
  CHECK(std::abs(gl.d_v2) < 1e-15);
}

TEST_CASE("toy three node: forward equals single node on products") {
  ToyThreeNode m = make_kappa_imbalanced(0.4, 0.5, 1.0, 0.3);
  CHECK(m.w11 == 0.4);
  CHECK(m.w12 == 0.4);
  CHECK(m.w21 == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(m.w22 == doctest::Approx(0.8).epsilon(1e-15));
  const double p1 = m.w11 * m.w12;
  const double p2 = m.w21 * m.w22;
  CHECK(p1 == doctest::Approx(p2).epsilon(1e-12));  // balanced products

  RngStream r(8);
  for (int i = 0; i < 100; ++i) {
    const double x1 = r.next_gaussian(), x2 = r.next_gaussian();
    const double via_three = toy_three_forward(m, x1, x2);
    const double via_single = p1 * x1 + p2 * x2;
    CHECK(std::abs(via_three - via_single) < 1e-12);
  }
}

TEST_CASE("toy three node: closed-form product step matches literal backprop") {
  RngStream r(12);
  for (int trial = 0; trial < 20; ++trial) {
    ToyThreeNode m = make_kappa_imbalanced(0.05 + 0.2 * r.next_uniform(),
                                           0.3 + 0.6 * r.next_uniform(), 1.0, 0.3);
    Tensor batch = sample_gaussian({8, 2}, m.a, m.sigma, r);
    ToyThreeProductStep s = toy_three_product_step(m, batch);
    CHECK(std::abs(s.closed_p1 - s.backprop_p1) < 1e-10);
    CHECK(std::abs(s.closed_p2 - s.backprop_p2) < 1e-10);
  }
}

TEST_CASE("toy three node: fixed point and symmetry preservation") {
  // At the summed-loss stationary point S = 0 the product update is the
  // identity. A noiseless batch with w-products summing to 1 gives S = 0.
  ToyThreeNode m = make_kappa_imbalanced(std::sqrt(0.5), 1.0, 1.0, 0.0);
  Tensor clean({4, 2}, 1.0);
  ToyThreeProductStep s = toy_three_product_step(m, clean);
  CHECK(s.s1 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.closed_p1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.closed_p2 == doctest::Approx(0.5).epsilon(1e-12));

  // Symmetric initialization stays symmetric under the full-gradient step.
  ToyThreeNode sym = make_kappa_imbalanced(0.2, 1.0, 1.0, 0.3);
  RngStream r(21);
  Tensor batch = sample_gaussian({8, 2}, 1.0, 0.3, r);
  // Force x1 = x2 per row so both paths see identical data.
  for (std::size_t i = 0; i < batch.rows(); ++i) batch.at(i, 1) = batch.at(i, 0);
  ToyThreeProductStep step = toy_three_product_step(sym, batch);
  CHECK(step.backprop_p1 == doctest::Approx(step.backprop_p2).epsilon(1e-12));
}

TEST_CASE("toy three node: mean-loss gradients match finite differences") {
  ToyThreeNode m{0.3, 0.25, 0.15, 0.4, 1.0, 0.3};
  RngStream r(4);
  Tensor batch = sample_gaussian({8, 2}, m.a, m.sigma, r);
  ToyThreeGrad g = toy_three_grad(m, batch);
  const double h = 1e-7;
  auto loss_with = [&](auto setter) {
    ToyThreeNode mm = m;
    setter(mm);
    return toy_three_grad(mm, batch).loss;
  };
  auto fd = [&](double ToyThreeNode::*field) {
    const double f1 = loss_with([&](ToyThreeNode& mm) { mm.*field += h; });
    const double f0 = loss_with([&](ToyThreeNode& mm) { mm.*field -= h; });
    return (f1 - f0) / (2 * h);
  };
  CHECK(std::abs(fd(&ToyThreeNode::w11) - g.d_w11) < 1e-6);
  CHECK(std::abs(fd(&ToyThreeNode::w12) - g.d_w12) < 1e-6);
  CHECK(std::abs(fd(&ToyThreeNode::w21) - g.d_w21) < 1e-6);
  CHECK(std::abs(fd(&ToyThreeNode::w22) - g.d_w22) < 1e-6);
}

TEST_CASE("toy trajectories: shape and determinism") {
  ToySingleNode init{0.01, 0.0001, 1.0, 0.3};
  HyperParams hp;
  hp.alpha = 0.1;
  hp.nu = 1.0;
  ToySingleTrajectory t1 = run_toy_single(init, OptKind::kSgd, hp, 50, 4, 7);
  ToySingleTrajectory t2 = run_toy_single(init, OptKind::kSgd, hp, 50, 4, 7);
  REQUIRE(t1.v1.size() == 51);
  CHECK(t1.v1[0] == 0.01);
  CHECK(t1.v2[0] == 0.0001);
  CHECK(t1.v1 == t2.v1);
  CHECK(t1.v2 == t2.v2);
  // The sum of weights moves toward the solution line v1 + v2 = 1.
  CHECK(std::abs(t1.v1.back() + t1.v2.back() - 1.0) <
        std::abs(t1.v1.front() + t1.v2.front() - 1.0));

  ToyThreeNode m3 = make_kappa_imbalanced(0.1, 0.5, 1.0, 0.3);
  ToyThreeTrajectory t3 = run_toy_three(m3, OptKind::kNlSgd, hp, 50, 4, 7);
  REQUIRE(t3.p1.size() == 51);
  CHECK(t3.p1[0] == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("correlated dataset: statistics") {
  CorrelatedSpec spec;
  spec.n = 10000;
  spec.dim = 8;
  spec.signal_count = 3;
  spec.sigma_signal = 3.0;
  spec.sigma_noise = 1.0;
  RngStream r(33);
  CorrelatedDataset ds = gen_correlated_dataset(spec, r);
  REQUIRE(ds.inputs.rows() == 10000);
  REQUIRE(ds.inputs.cols() == 8);

  // Labels are the sign of the latent signal (no flips requested).
  for (std::size_t i = 0; i < spec.n; ++i) {
    CHECK(ds.labels[i] == (ds.latent[i] > 0.0 ? 1.0 : 0.0));
  }

  // Two signal coordinates correlate at sigma_s^2 / (sigma_s^2 + sigma_n^2).
  std::vector<double> c0(spec.n), c1(spec.n), c_out(spec.n), lab(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    c0[i] = ds.inputs.at(i, 0);
    c1[i] = ds.inputs.at(i, 1);
    c_out[i] = ds.inputs.at(i, 5);  // outside the signal set
    lab[i] = ds.labels[i];
  }
  const double want = 9.0 / 10.0;
  CHECK(std::abs(pearson(c0, c1) - want) < 0.05);
  // Non-signal coordinates carry no label information.
  CHECK(std::abs(pearson(c_out, lab)) < 0.05);

  // Label flipping flips roughly the requested fraction.
  CorrelatedSpec flip = spec;
  flip.label_flip = 0.25;
  RngStream r2(33);
  CorrelatedDataset fd = gen_correlated_dataset(flip, r2);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double base = fd.latent[i] > 0.0 ? 1.0 : 0.0;
    if (fd.labels[i] != base) ++flipped;
  }
  const double frac = static_cast<double>(flipped) / static_cast<double>(spec.n);
  CHECK(std::abs(frac - 0.25) < 0.02);

  CorrelatedSpec bad = spec;
  bad.signal_count = 1;
  RngStream r3(1);
  CHECK_THROWS_AS(gen_correlated_dataset(bad, r3), std::invalid_argument);
  bad = spec;
  bad.signal_count = 9;
  CHECK_THROWS_AS(gen_correlated_dataset(bad, r3), std::invalid_argument);
  bad = spec;
  bad.label_flip = 1.0;
  CHECK_THROWS_AS(gen_correlated_dataset(bad, r3), std::invalid_argument);
}

TEST_CASE("activation rate") {
  Tensor acts({4, 3}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    acts.at(i, 0) = 1.0;            // always active
    acts.at(i, 1) = -1.0;           // never active
    acts.at(i, 2) = (i % 2) ? 1.0 : -1.0;  // half
  }
  Tensor rate = activation_rate(acts);
  CHECK(rate[0] == 1.0);
  CHECK(rate[1] == 0.0);
  CHECK(rate[2] == 0.5);

  RngStream r(2);
  Tensor g = sample_gaussian({10000, 1}, 0.0, 1.0, r);
  CHECK(activation_rate(g)[0] == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("mlp: uniform prediction at zero parameters") {
  MlpClassifier model{{6, 8, 2}};
  ParamSet zero = model.zero_params();
  RngStream r(5);
  Tensor inputs = sample_gaussian({5, 6}, 0.0, 1.0, r);
  Tensor probs = model.forward(zero, inputs);
  REQUIRE(probs.rows() == 5);
  REQUIRE(probs.cols() == 2);
  for (double p : probs.data) CHECK(p == doctest::Approx(0.5).epsilon(1e-12));

  Batch b;
  b.inputs = inputs;
  b.targets = Tensor::vector({0.0, 1.0, 0.0, 1.0, 1.0});
  LossGrad lg = mlp_loss_grad(model, zero, b);
  CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("mlp: backprop matches finite differences") {
  MlpClassifier model{{4, 5, 3}};
  RngStream r(7);
  ParamSet params = model.init_params(r);
  Batch b;
  b.inputs = sample_gaussian({6, 4}, 0.0, 1.0, r);
  b.targets = Tensor::vector({0.0, 2.0, 1.0, 1.0, 0.0, 2.0});
  LossGrad lg = mlp_loss_grad(model, params, b);

  const double h = 1e-6;
  auto fd_check = [&](std::vector<Tensor> ParamSet::*slot_field,
                      const std::vector<Tensor>& grads) {
    for (std::size_t s = 0; s < (params.*slot_field).size(); ++s) {
      for (std::size_t i = 0; i < (params.*slot_field)[s].size(); ++i) {
        ParamSet pp = params, pm = params;
        (pp.*slot_field)[s].data[i] += h;
        (pm.*slot_field)[s].data[i] -= h;
        const double fd = (mlp_loss_grad(model, pp, b).loss -
                           mlp_loss_grad(model, pm, b).loss) /
                          (2 * h);
        CHECK(std::abs(fd - grads[s].data[i]) <=
              1e-5 * std::max(1.0, std::abs(grads[s].data[i])));
      }
    }
  };
  fd_check(&ParamSet::kernels, lg.grads.kernels);
  fd_check(&ParamSet::biases, lg.grads.biases);
}

TEST_CASE("mlp: duplicated samples leave the mean loss unchanged") {
  MlpClassifier model{{3, 4, 2}};
  RngStream r(9);
  ParamSet params = model.init_params(r);
  Batch one;
  one.inputs = sample_gaussian({1, 3}, 0.0, 1.0, r);
  one.targets = Tensor::vector({1.0});
  Batch two;
  two.inputs = Tensor({2, 3});
  for (std::size_t j = 0; j < 3; ++j) {
    two.inputs.at(0, j) = one.inputs.at(0, j);
    two.inputs.at(1, j) = one.inputs.at(0, j);
  }
  two.targets = Tensor::vector({1.0, 1.0});
  LossGrad a = mlp_loss_grad(model, params, one);
  LossGrad c = mlp_loss_grad(model, params, two);
  CHECK(a.loss == doctest::Approx(c.loss).epsilon(1e-12));
  for (std::size_t s = 0; s < a.grads.kernels.size(); ++s) {
    CHECK(max_abs_diff(a.grads.kernels[s], c.grads.kernels[s]) < 1e-12);
  }
}

TEST_CASE("mlp correlated problem: splits, metric, and loss scale") {
  std::map<std::string, double> params;
  params["n"] = 500;
  params["dim"] = 8;
  params["signal_count"] = 3;
  params["hidden"] = 8;
  auto prob = make_problem("mlp_correlated", params, 11);
  CHECK(prob->validation_is_accuracy());
  CHECK(prob->train_size() == 400);  // 80/10/10 split

  RngStream init(1);
  ParamSet p = prob->initial_params(init);
  Evaluation val = prob->evaluate_validation(p);
  REQUIRE(val.accuracy.has_value());
  CHECK(*val.accuracy >= 0.0);
  CHECK(*val.accuracy <= 1.0);

  // loss_scale multiplies loss and gradients linearly.
  auto scaled_params = params;
  scaled_params["loss_scale"] = 50.0;
  auto scaled = make_problem("mlp_correlated", scaled_params, 11);
  RngStream init2(1);
  ParamSet p2 = scaled->initial_params(init2);
  std::vector<std::size_t> idx = {0, 1, 2, 3};
  Batch b = prob->batch_at(idx);
  Batch b2 = scaled->batch_at(idx);
  LossGrad lg = prob->loss_grad(p, b);
  LossGrad lg2 = scaled->loss_grad(p2, b2);
  CHECK(lg2.loss == doctest::Approx(50.0 * lg.loss).epsilon(1e-10));
  CHECK(max_abs_diff(lg2.grads.kernels[0], scale(lg.grads.kernels[0], 50.0)) <
        1e-10);
}

TEST_CASE("flat image files round-trip") {
  ImageSet set;
  set.rows = 2;
  set.cols = 3;
  set.images = Tensor({4, 6});
  set.labels = Tensor::vector({0.0, 1.0, 2.0, 1.0});
  RngStream r(3);
  for (double& x : set.images.data) {
    x = static_cast<double>(r.next_u64() % 256) / 255.0;
  }
  const std::string path = "/tmp/nlgd_test_images.bin";
  save_flat_images(path, set);
  ImageSet back = load_flat_images(path);
  CHECK(back.rows == 2);
  CHECK(back.cols == 3);
  CHECK(max_abs_diff(back.images, set.images) < 1e-12);
  CHECK(max_abs_diff(back.labels, set.labels) == 0.0);
  std::remove(path.c_str());
  CHECK_THROWS(load_flat_images("/tmp/nlgd_missing_file.bin"));
}

TEST_CASE("problem factory: ids and validation") {
  CHECK_THROWS_AS(make_problem("unknown_problem", {}, 1), std::invalid_argument);
  CHECK(make_problem("quadratic_deep", {}, 1)->id() == "quadratic_deep");
  CHECK(make_problem("toy_single", {}, 1)->id() == "toy_single");
  CHECK(make_problem("toy_three", {}, 1)->id() == "toy_three");

  // Same problem seed, same instance: evaluation sets agree.
  auto a = make_problem("quadratic_deep", {{"dim", 20.0}}, 7);
  auto b = make_problem("quadratic_deep", {{"dim", 20.0}}, 7);
  RngStream i1(0), i2(0);
  ParamSet pa = a->initial_params(i1);
  ParamSet pb = b->initial_params(i2);
  CHECK(a->evaluate_test(pa).loss == b->evaluate_test(pb).loss);
}
