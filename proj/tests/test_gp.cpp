#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "pes/gp.hpp"

#include <cmath>

using namespace pes;

namespace {

Hyperparams paper_hp(int d) {
  return Hyperparams(1.0, Vec::Constant(d, std::sqrt(0.1)), 1e-6);
}

Vec random_point(int d, Rng& rng) {
  Vec x(d);
  for (int j = 0; j < d; ++j) x(j) = uniform01(rng);
  return x;
}

}  // namespace

TEST_CASE("kernel at zero distance returns the amplitude") {
  Rng rng = make_rng(1);
  for (double amp : {0.3, 1.0, 4.5}) {
    Hyperparams hp(amp, Vec::Constant(3, 0.7), 1e-4);
    const Vec x = random_point(3, rng);
    CHECK(kernel_se(x, x, hp) == doctest::Approx(amp).epsilon(1e-14));
  }
}

TEST_CASE("kernel closed form at the reference settings") {
  const Hyperparams hp = paper_hp(2);
  Vec x(2), y(2);
  x << 0.0, 0.0;
  y << 0.1, 0.0;
  CHECK(kernel_se(x, y, hp) == doctest::Approx(std::exp(-0.05)).epsilon(1e-12));
}

TEST_CASE("kernel symmetry on random pairs") {
  Rng rng = make_rng(2);
  const Hyperparams hp(1.7, Vec::Constant(4, 0.4), 1e-6);
  for (int i = 0; i < 100; ++i) {
    const Vec a = random_point(4, rng);
    const Vec b = random_point(4, rng);
    CHECK(kernel_se(a, b, hp) == kernel_se(b, a, hp));
  }
}

TEST_CASE("kernel dimension mismatch throws") {
  const Hyperparams hp = paper_hp(2);
  CHECK_THROWS_AS(kernel_se(Vec::Zero(3), Vec::Zero(3), hp), std::invalid_argument);
}

TEST_CASE("derivative covariances vanish for odd derivatives at zero lag") {
  const Hyperparams hp = paper_hp(3);
  Rng rng = make_rng(3);
  const Vec x = random_point(3, rng);
  for (int j = 0; j < 3; ++j)
    CHECK(observable_cov(Observable::value(x), Observable::gradient(x, j), hp) == 0.0);
}

TEST_CASE("stacked covariance is symmetric and finite") {
  const Hyperparams hp = paper_hp(3);
  Rng rng = make_rng(4);
  Mat inputs(5, 3);
  for (int i = 0; i < 5; ++i) inputs.row(i) = random_point(3, rng).transpose();
  DerivativeBlockSpec spec;
  spec.anchor = random_point(3, rng);
  const Mat k = cov_with_derivatives(spec, inputs, hp);
  CHECK(k.rows() == 1 + 3 + 5 + 3 + 3);
  CHECK((k - k.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(k.allFinite());
}

// Each derivative order is validated by one central finite-difference step
// against the analytic covariance one order below, over random point pairs.
TEST_CASE("derivative covariances match finite differences") {
  const int d = 3;
  const Hyperparams hp(1.3, Vec::Constant(d, 0.5), 1e-6);
  Rng rng = make_rng(5);
  const double eps = 1e-5;

  auto check_rel = [](double got, double want) {
    const double scale = std::max(std::abs(want), 1e-3);
    CHECK(std::abs(got - want) / scale < 1e-4);
  };

  for (int pair = 0; pair < 50; ++pair) {
    const Vec p = random_point(d, rng);
    const Vec q = random_point(d, rng);
    const int i = pair % d;
    const int j = (pair + 1) % d;
    const int l = (pair + 2) % d;

    // value vs gradient
    check_rel(observable_cov(Observable::value(p), Observable::gradient(q, j), hp),
              oracles::fd1([&](const Vec& qq) { return kernel_se(p, qq, hp); }, q, j, eps));
    // value vs Hessian
    check_rel(observable_cov(Observable::value(p), Observable::hessian(q, std::min(j, l), std::max(j, l)), hp),
              oracles::fd1(
                  [&](const Vec& qq) {
                    return observable_cov(Observable::value(p), Observable::gradient(qq, j), hp);
                  },
                  q, l, eps));
    // gradient vs gradient
    check_rel(observable_cov(Observable::gradient(p, i), Observable::gradient(q, j), hp),
              oracles::fd1(
                  [&](const Vec& pp) {
                    return observable_cov(Observable::value(pp), Observable::gradient(q, j), hp);
                  },
                  p, i, eps));
    // gradient vs Hessian
    check_rel(observable_cov(Observable::gradient(p, i), Observable::hessian(q, std::min(j, l), std::max(j, l)), hp),
              oracles::fd1(
                  [&](const Vec& pp) {
                    return observable_cov(Observable::value(pp),
                                          Observable::hessian(q, std::min(j, l), std::max(j, l)), hp);
                  },
                  p, i, eps));
    // Hessian vs Hessian
    check_rel(observable_cov(Observable::hessian(p, std::min(i, j), std::max(i, j)),
                             Observable::hessian(q, std::min(j, l), std::max(j, l)), hp),
              oracles::fd1(
                  [&](const Vec& pp) {
                    return observable_cov(Observable::gradient(pp, std::max(i, j)),
                                          Observable::hessian(q, std::min(j, l), std::max(j, l)), hp);
                  },
                  p, std::min(i, j), eps));
  }
}

TEST_CASE("y-block of the stacked covariance matches the GP gram matrix exactly") {
  const Hyperparams hp = paper_hp(2);
  Rng rng = make_rng(6);
  Mat inputs(7, 2);
  for (int i = 0; i < 7; ++i) inputs.row(i) = random_point(2, rng).transpose();
  DerivativeBlockSpec spec;
  spec.anchor = random_point(2, rng);
  const Mat joint = cov_with_derivatives(spec, inputs, hp);
  const Mat gram = kernel_se_matrix(inputs, hp, true);
  CHECK((joint.block(3, 3, 7, 7) - gram).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prior prediction with no data") {
  const Hyperparams hp(2.5, Vec::Constant(2, 0.3), 1e-4);
  Dataset data(Domain::unit_cube(2));
  GpPosterior gp(data, hp);
  const Prediction p = gp.predict(Vec::Constant(2, 0.4));
  CHECK(p.mean == 0.0);
  CHECK(p.variance == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("near-interpolation at observed inputs with tiny noise") {
  Hyperparams hp(1.0, Vec::Constant(2, std::sqrt(0.1)), 1e-12);
  Dataset data(Domain::unit_cube(2));
  Rng rng = make_rng(7);
  for (int i = 0; i < 4; ++i) data.append(random_point(2, rng), normal01(rng));
  GpPosterior gp(data, hp);
  for (int i = 0; i < 4; ++i)
    CHECK(gp.predict(data.input(i)).mean ==
          doctest::Approx(data.outputs()(i)).epsilon(0).scale(1).epsilon(1e-4));
}

TEST_CASE("posterior matches the dense closed form") {
  const Hyperparams hp = paper_hp(2);
  Rng rng = make_rng(8);
  Dataset data(Domain::unit_cube(2));
  for (int i = 0; i < 3; ++i) data.append(random_point(2, rng), normal01(rng));
  GpPosterior gp(data, hp);

  const Mat k = kernel_se_matrix(data.inputs(), hp, true);
  const Mat kinv = k.inverse();
  for (int t = 0; t < 10; ++t) {
    const Vec x = random_point(2, rng);
    const Vec kx = kernel_se_row(data.inputs(), x, hp);
    const double mean = kx.dot(kinv * data.outputs());
    const double var = hp.amplitude - kx.dot(kinv * kx);
    const Prediction p = gp.predict(x);
    CHECK(std::abs(p.mean - mean) < 1e-10);
    CHECK(std::abs(p.variance - var) < 1e-10);
  }
}

TEST_CASE("posterior variance stays within (0, amplitude] and shrinks with data") {
  const Hyperparams hp(1.4, Vec::Constant(2, 0.4), 1e-3);
  Rng rng = make_rng(9);
  Dataset data(Domain::unit_cube(2));
  for (int i = 0; i < 12; ++i) {
    data.append(random_point(2, rng), normal01(rng));
    GpPosterior gp(data, hp);
    for (int t = 0; t < 20; ++t) {
      const double v = gp.predict(random_point(2, rng)).variance;
      CHECK(v > 0.0);
      CHECK(v <= hp.amplitude + 1e-12);
    }
  }
  // Appending a datum never increases the variance anywhere.
  Dataset grown = data;
  GpPosterior before(data, hp);
  grown.append(random_point(2, rng), 0.1);
  GpPosterior after(grown, hp);
  for (int t = 0; t < 50; ++t) {
    const Vec x = random_point(2, rng);
    CHECK(after.predict(x).variance <= before.predict(x).variance + 1e-8);
  }
}

TEST_CASE("incrementally grown dataset gives the same posterior as from scratch") {
  const Hyperparams hp = paper_hp(2);
  Rng rng = make_rng(10);
  Mat inputs(6, 2);
  Vec outputs(6);
  for (int i = 0; i < 6; ++i) {
    inputs.row(i) = random_point(2, rng).transpose();
    outputs(i) = normal01(rng);
  }
  Dataset incremental(Domain::unit_cube(2));
  for (int i = 0; i < 6; ++i) incremental.append(inputs.row(i).transpose(), outputs(i));
  Dataset scratch(Domain::unit_cube(2));
  for (int i = 0; i < 6; ++i) scratch.append(inputs.row(i).transpose(), outputs(i));
  GpPosterior a(incremental, hp);
  GpPosterior b(scratch, hp);
  for (int t = 0; t < 20; ++t) {
    const Vec x = random_point(2, rng);
    CHECK(std::abs(a.predict(x).mean - b.predict(x).mean) < 1e-8);
    CHECK(std::abs(a.predict(x).variance - b.predict(x).variance) < 1e-8);
  }
}

TEST_CASE("marginal likelihood of a single centered observation") {
  const Hyperparams hp(1.0, Vec::Constant(1, 0.5), 0.25);
  Dataset data(Domain::unit_cube(1));
  data.append(Vec::Constant(1, 0.5), 0.0);
  const double want = -0.5 * std::log(2.0 * M_PI * (1.0 + 0.25));
  CHECK(log_marginal_likelihood(data, hp) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("marginal likelihood matches the dense determinant form") {
  const Hyperparams hp = paper_hp(2);
  Rng rng = make_rng(11);
  Dataset data(Domain::unit_cube(2));
  for (int i = 0; i < 2; ++i) data.append(random_point(2, rng), normal01(rng));
  const Mat k = kernel_se_matrix(data.inputs(), hp, true);
  const Vec y = data.outputs();
  const double dense = -0.5 * y.dot(k.inverse() * y) - 0.5 * std::log(k.determinant()) -
                       std::log(2.0 * M_PI);
  CHECK(log_marginal_likelihood(data, hp) == doctest::Approx(dense).epsilon(1e-10));
}

TEST_CASE("marginal likelihood decreases as the single output grows") {
  const Hyperparams hp(1.0, Vec::Constant(1, 0.5), 0.1);
  double prev = std::numeric_limits<double>::infinity();
  for (double y : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    Dataset data(Domain::unit_cube(1));
    data.append(Vec::Constant(1, 0.5), y);
    const double ll = log_marginal_likelihood(data, hp);
    CHECK(ll < prev + 1e-12);
    prev = ll;
  }
}

TEST_CASE("gaussian entropy closed forms") {
  CHECK(gaussian_entropy(1.0 / (2.0 * M_PI * std::exp(1.0))) ==
        doctest::Approx(0.0).epsilon(0).scale(1).epsilon(1e-12));
  CHECK(gaussian_entropy(1.0) == doctest::Approx(1.41894).epsilon(1e-5));
  const double h1 = gaussian_entropy(0.37);
  const double h2 = gaussian_entropy(0.74);
  CHECK(h2 - h1 == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(gaussian_entropy(0.0), std::invalid_argument);
}
