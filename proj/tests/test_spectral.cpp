#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "pes/gp.hpp"
#include "pes/spectral.hpp"

#include <cmath>
#include <numbers>

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

TEST_CASE("frequency rows follow the spectral density") {
  Hyperparams hp(1.0, Vec(2), 1e-6);
  hp.lengthscales << 0.5, 0.25;
  Rng rng = make_rng(21);
  const FeatureBasis basis = sample_basis(hp, 100000, rng);
  CHECK(basis.alpha == 1.0);
  for (int j = 0; j < 2; ++j) {
    const double var = basis.W.col(j).squaredNorm() / basis.m;
    const double want = 1.0 / (hp.lengthscales(j) * hp.lengthscales(j));
    CHECK(std::abs(var - want) / want < 0.03);
  }
}

TEST_CASE("phases are uniform on [0, 2pi)") {
  const Hyperparams hp = paper_hp(1);
  Rng rng = make_rng(22);
  const FeatureBasis basis = sample_basis(hp, 100000, rng);
  CHECK(basis.b.minCoeff() >= 0.0);
  CHECK(basis.b.maxCoeff() < 2.0 * std::numbers::pi);
  std::vector<int> bins(10, 0);
  for (int i = 0; i < basis.m; ++i)
    ++bins[std::min(9, static_cast<int>(basis.b(i) / (2.0 * std::numbers::pi) * 10.0))];
  for (int c : bins) CHECK(std::abs(c / 10000.0 - 1.0) < 0.05);
}

TEST_CASE("feature norm is bounded by 2 alpha") {
  const Hyperparams hp(1.7, Vec::Constant(3, 0.3), 1e-6);
  Rng rng = make_rng(23);
  const FeatureBasis basis = sample_basis(hp, 64, rng);
  for (int t = 0; t < 50; ++t) {
    const Vec phi = features(basis, random_point(3, rng));
    CHECK(phi.squaredNorm() <= 2.0 * basis.alpha + 1e-12);
  }
}

TEST_CASE("feature inner products reproduce the kernel in expectation") {
  const Hyperparams hp = paper_hp(2);
  Rng rng = make_rng(24);
  const Vec x = random_point(2, rng);
  const Vec y = random_point(2, rng);
  double acc = 0.0;
  const int bases = 200;
  for (int b = 0; b < bases; ++b) {
    const FeatureBasis basis = sample_basis(hp, 1000, rng);
    acc += features(basis, x).dot(features(basis, y));
  }
  CHECK(std::abs(acc / bases - kernel_se(x, y, hp)) < 0.05);
}

TEST_CASE("kernel approximation error shrinks like the root of the feature count") {
  const Hyperparams hp = paper_hp(2);
  Rng rng = make_rng(25);
  std::vector<std::pair<Vec, Vec>> pairs;
  for (int i = 0; i < 40; ++i)
    pairs.emplace_back(random_point(2, rng), random_point(2, rng));

  auto rms_error = [&](int m) {
    double acc = 0.0;
    int count = 0;
    for (int b = 0; b < 200; ++b) {
      const FeatureBasis basis = sample_basis(hp, m, rng);
      for (const auto& [x, y] : pairs) {
        const double err = features(basis, x).dot(features(basis, y)) - kernel_se(x, y, hp);
        acc += err * err;
        ++count;
      }
    }
    return std::sqrt(acc / count);
  };

  const double ratio = rms_error(250) / rms_error(1000);
  CHECK(ratio > 1.5);
  CHECK(ratio < 2.5);
}

TEST_CASE("weight samples from an empty dataset follow the standard normal prior") {
  const Hyperparams hp = paper_hp(1);
  Rng rng = make_rng(26);
  const FeatureBasis basis = sample_basis(hp, 8, rng);
  Dataset data(Domain::unit_cube(1));
  Vec mean = Vec::Zero(8);
  const int draws = 100000;
  for (int t = 0; t < draws; ++t) mean += sample_weights(basis, data, hp, rng);
  mean /= draws;
  for (int j = 0; j < 8; ++j) CHECK(std::abs(mean(j)) < 0.02);
}

TEST_CASE("weight samples match the dense posterior and both paths agree") {
  Hyperparams hp(1.0, Vec::Constant(1, 0.4), 0.05);
  Rng rng = make_rng(27);
  const FeatureBasis basis = sample_basis(hp, 8, rng);
  Dataset data(Domain::unit_cube(1));
  for (int i = 0; i < 5; ++i) data.append(random_point(1, rng), normal01(rng));

  Mat phi(5, 8);
  for (int i = 0; i < 5; ++i) phi.row(i) = features(basis, data.input(i)).transpose();
  Mat a = phi.transpose() * phi;
  a.diagonal().array() += hp.noise_variance;
  const Mat cov = hp.noise_variance * a.inverse();
  const Vec mean = a.inverse() * phi.transpose() * data.outputs();

  const int draws = 100000;
  for (WeightPath path : {WeightPath::NSpace, WeightPath::Direct}) {
    Mat samples(draws, 8);
    for (int t = 0; t < draws; ++t)
      samples.row(t) = sample_weights(basis, data, hp, rng, path).transpose();
    const Vec emp_mean = samples.colwise().mean();
    const Mat centered = samples.rowwise() - emp_mean.transpose();
    const Mat emp_cov = centered.transpose() * centered / (draws - 1);
    for (int i = 0; i < 8; ++i) {
      const double se = std::sqrt(cov(i, i) / draws);
      CHECK(std::abs(emp_mean(i) - mean(i)) < 3.0 * se);
      for (int j = 0; j < 8; ++j) {
        const double cov_se =
            std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / draws);
        CHECK(std::abs(emp_cov(i, j) - cov(i, j)) < 3.0 * cov_se + 1e-12);
      }
    }
  }
}

TEST_CASE("path gradient matches finite differences") {
  const Hyperparams hp = paper_hp(2);
  Rng rng = make_rng(28);
  SamplePath path{sample_basis(hp, 200, rng), normal_vector(200, rng)};
  for (int t = 0; t < 50; ++t) {
    const Vec x = random_point(2, rng);
    double value;
    Vec grad;
    path.value_grad(x, value, grad);
    for (int j = 0; j < 2; ++j) {
      const double fd =
          oracles::fd1([&](const Vec& xx) { return path.value(xx); }, x, j, 1e-6);
      CHECK(std::abs(grad(j) - fd) / std::max(1.0, std::abs(fd)) < 1e-5);
    }
  }
}

TEST_CASE("path Hessian is symmetric by construction") {
  const Hyperparams hp = paper_hp(3);
  Rng rng = make_rng(29);
  SamplePath path{sample_basis(hp, 64, rng), normal_vector(64, rng)};
  double value;
  Vec grad;
  Mat hess;
  path.eval(random_point(3, rng), value, grad, hess);
  CHECK((hess - hess.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single-cosine path has stationary points at the cosine extrema") {
  FeatureBasis basis;
  basis.m = 1;
  basis.alpha = 1.0;
  basis.W = Mat::Constant(1, 1, 2.0);
  basis.b = Vec::Constant(1, 0.3);
  SamplePath path{basis, Vec::Constant(1, 1.0)};
  // Wx + b = pi at x = (pi - 0.3) / 2
  const double x_min = (std::numbers::pi - 0.3) / 2.0;
  double value;
  Vec grad;
  path.value_grad(Vec::Constant(1, x_min), value, grad);
  CHECK(std::abs(grad(0)) < 1e-12);
  path.value_grad(Vec::Constant(1, x_min + 0.3), value, grad);
  CHECK(std::abs(grad(0)) > 1e-3);
}

TEST_CASE("interior path maxima satisfy first-order stationarity") {
  const Hyperparams hp = paper_hp(2);
  Rng rng = make_rng(30);
  for (int t = 0; t < 5; ++t) {
    SamplePath path{sample_basis(hp, 400, rng), normal_vector(400, rng)};
    const MaximizerSample s = optimize_path(path, Domain::unit_cube(2), rng);
    const bool interior = (s.x.array() > 1e-9).all() && (s.x.array() < 1.0 - 1e-9).all();
    if (!interior) continue;
    double value;
    Vec grad;
    path.value_grad(s.x, value, grad);
    CHECK(grad.norm() < 1e-6);
  }
}

TEST_CASE("path optimum beats a dense 1-D grid") {
  const Hyperparams hp = paper_hp(1);
  Rng rng = make_rng(31);
  for (int t = 0; t < 5; ++t) {
    SamplePath path{sample_basis(hp, 1000, rng), normal_vector(1000, rng)};
    const MaximizerSample s = optimize_path(path, Domain::unit_cube(1), rng);
    double grid_best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 10000; ++i)
      grid_best = std::max(grid_best, path.value(Vec::Constant(1, i / 9999.0)));
    CHECK(s.value >= grid_best - 1e-6);
  }
}

TEST_CASE("monotone path pushes the maximizer to the boundary") {
  FeatureBasis basis;
  basis.m = 1;
  basis.alpha = 1.0;
  basis.W = Mat::Constant(1, 1, 0.5);
  basis.b = Vec::Constant(1, std::numbers::pi);
  SamplePath path{basis, Vec::Constant(1, 1.0)};
  // Increasing on [0, 1]: verified on a grid.
  for (int i = 0; i + 1 < 100; ++i)
    REQUIRE(path.value(Vec::Constant(1, (i + 1) / 99.0)) >
            path.value(Vec::Constant(1, i / 99.0)));
  Rng rng = make_rng(32);
  const MaximizerSample s = optimize_path(path, Domain::unit_cube(1), rng);
  CHECK(s.x(0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("maximizer samples under the prior are centered on the domain") {
  const Hyperparams hp(1.0, Vec::Constant(2, 0.5), 1e-6);
  Dataset data(Domain::unit_cube(2));
  PathOptOptions opts;
  opts.lhs_starts_per_dim = 6;
  const auto samples = sample_maximizers(data, hp, 10000, 64, 123, opts);
  Vec mean = Vec::Zero(2);
  for (const auto& s : samples) {
    CHECK(Domain::unit_cube(2).contains(s.x, 1e-12));
    mean += s.x;
  }
  mean /= static_cast<double>(samples.size());
  CHECK(std::abs(mean(0) - 0.5) < 0.02);
  CHECK(std::abs(mean(1) - 0.5) < 0.02);
}

TEST_CASE("a sharp high observation attracts most maximizer samples") {
  Hyperparams hp(1.0, Vec::Constant(1, 0.05), 1e-6);
  Dataset data(Domain::unit_cube(1));
  data.append(Vec::Constant(1, 0.37), 4.0);
  const auto samples = sample_maximizers(data, hp, 400, 2000, 321);
  int close = 0;
  for (const auto& s : samples)
    if (std::abs(s.x(0) - 0.37) <= 0.1) ++close;
  CHECK(close >= 240);  // 60%
}

TEST_CASE("maximizer sampling is deterministic under a fixed seed") {
  const Hyperparams hp = paper_hp(2);
  Dataset data(Domain::unit_cube(2));
  Rng rng = make_rng(33);
  for (int i = 0; i < 5; ++i) data.append(random_point(2, rng), normal01(rng));
  const auto a = sample_maximizers(data, hp, 8, 256, 2024);
  const auto b = sample_maximizers(data, hp, 8, 256, 2024);
  for (int i = 0; i < 8; ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].value == b[i].value);
    CHECK(a[i].upper_hessian == b[i].upper_hessian);
  }
}

// Discrete-domain agreement: the argmax-cell distribution of feature-based
// path draws on a fixed grid matches exhaustive sampling from the exact
// finite-dimensional GP posterior.
TEST_CASE("grid argmax frequencies match the exact joint posterior") {
  const Hyperparams hp(1.0, Vec::Constant(1, 0.35), 0.01);
  Dataset data(Domain::unit_cube(1));
  data.append(Vec::Constant(1, 0.25), 0.6);
  data.append(Vec::Constant(1, 0.8), -0.2);

  const int cells = 11;
  Mat grid(cells, 1);
  for (int i = 0; i < cells; ++i) grid(i, 0) = i / 10.0;

  // Exact oracle: dense posterior over the grid, Cholesky draws.
  Mat cov = kernel_se_matrix(grid, hp, false);
  Mat cross(cells, 2);
  for (int i = 0; i < cells; ++i)
    cross.row(i) = kernel_se_row(data.inputs(), grid.row(i).transpose(), hp).transpose();
  const Mat gram_inv = kernel_se_matrix(data.inputs(), hp, true).inverse();
  const Vec mean = cross * gram_inv * data.outputs();
  cov -= cross * gram_inv * cross.transpose();
  const Mat lower = chol_with_jitter(cov, 1.0).llt.matrixL();

  const int draws = 100000;
  Rng rng = make_rng(34);
  std::vector<int> exact_counts(cells, 0);
  for (int t = 0; t < draws; ++t) {
    const Vec f = mean + lower * normal_vector(cells, rng);
    int idx;
    f.maxCoeff(&idx);
    ++exact_counts[idx];
  }

  // Feature-path version: fresh basis per draw, argmax over the same grid.
  std::vector<int> rff_counts(cells, 0);
  for (int t = 0; t < draws; ++t) {
    Rng draw_rng = make_rng(split_seed(35, 0, t));
    SamplePath path{sample_basis(hp, 512, draw_rng), Vec()};
    path.theta = sample_weights(path.basis, data, hp, draw_rng);
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < cells; ++i) {
      const double v = path.value(grid.row(i).transpose());
      if (v > best_val) {
        best_val = v;
        best = i;
      }
    }
    ++rff_counts[best];
  }

  for (int i = 0; i < cells; ++i) {
    const double pa = exact_counts[i] / static_cast<double>(draws);
    const double pb = rff_counts[i] / static_cast<double>(draws);
    const double se = std::sqrt((pa * (1 - pa) + pb * (1 - pb)) / draws) + 1e-12;
    CHECK(std::abs(pa - pb) < 3.0 * se + 0.004);
  }
}
