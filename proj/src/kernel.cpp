#include "pes/kernel.hpp"

#include <cmath>

namespace pes {

namespace {

void check_dim(const Vec& x, const Hyperparams& hp) {
  if (x.size() != hp.lengthscales.size())
    throw std::invalid_argument("point dimension does not match hyperparameters");
}

// n-th derivative of exp(-t^2 / (2 l^2)) w.r.t. t, divided by the
// exponential itself. u = t / l^2.
double se_deriv_poly(int order, double tau, double inv_l2) {
  const double u = tau * inv_l2;
  switch (order) {
    case 0:
      return 1.0;
    case 1:
      return -u;
    case 2:
      return u * u - inv_l2;
    case 3:
      return -u * u * u + 3.0 * u * inv_l2;
    case 4: {
      const double u2 = u * u;
      return u2 * u2 - 6.0 * u2 * inv_l2 + 3.0 * inv_l2 * inv_l2;
    }
    default:
      throw std::logic_error("SE derivative order above 4 not supported");
  }
}

}  // namespace

double kernel_se(const Vec& x, const Vec& y, const Hyperparams& hp) {
  check_dim(x, hp);
  check_dim(y, hp);
  const double q = ((x - y).array() / hp.lengthscales.array()).square().sum();
  return hp.amplitude * std::exp(-0.5 * q);
}

Vec kernel_se_row(const Mat& points, const Vec& x, const Hyperparams& hp) {
  check_dim(x, hp);
  if (points.rows() == 0) return Vec(0);
  Mat diff = points.rowwise() - x.transpose();
  diff.array().rowwise() /= hp.lengthscales.transpose().array();
  return hp.amplitude * (-0.5 * diff.rowwise().squaredNorm().array()).exp();
}

Mat kernel_se_matrix(const Mat& points, const Hyperparams& hp, bool add_noise) {
  const int n = static_cast<int>(points.rows());
  if (n == 0) return Mat(0, 0);
  if (points.cols() != hp.lengthscales.size())
    throw std::invalid_argument("point dimension does not match hyperparameters");
  Mat scaled = points;
  scaled.array().rowwise() /= hp.lengthscales.transpose().array();
  const Vec sq = scaled.rowwise().squaredNorm();
  Mat dist2 = sq.replicate(1, n) + sq.transpose().replicate(n, 1) -
              2.0 * (scaled * scaled.transpose());
  Mat k = hp.amplitude * (-0.5 * dist2.array().cwiseMax(0.0)).exp();
  k.diagonal().setConstant(hp.amplitude);
  // Symmetrize away GEMM round-off so downstream factorizations see an
  // exactly symmetric matrix.
  k = 0.5 * (k + k.transpose()).eval();
  if (add_noise) k.diagonal().array() += hp.noise_variance;
  return k;
}

double observable_cov(const Observable& a, const Observable& b, const Hyperparams& hp) {
  check_dim(a.x, hp);
  check_dim(b.x, hp);
  const double q = ((a.x - b.x).array() / hp.lengthscales.array()).square().sum();
  double cov = hp.amplitude * std::exp(-0.5 * q);

  // Per-dimension derivative orders; only dims touched by a or b matter.
  int dims[4];
  int count = 0;
  auto note = [&](int dim) {
    if (dim < 0) return;
    for (int i = 0; i < count; ++i)
      if (dims[i] == dim) return;
    dims[count++] = dim;
  };
  note(a.di);
  note(a.dj);
  note(b.di);
  note(b.dj);

  int b_total = (b.di >= 0) + (b.dj >= 0);
  for (int i = 0; i < count; ++i) {
    const int dim = dims[i];
    const int order = (a.di == dim) + (a.dj == dim) + (b.di == dim) + (b.dj == dim);
    const double l = hp.lengthscales(dim);
    cov *= se_deriv_poly(order, a.x(dim) - b.x(dim), 1.0 / (l * l));
  }
  if (b_total % 2 == 1) cov = -cov;
  return cov;
}

Mat observable_cov_matrix(const std::vector<Observable>& obs, const Hyperparams& hp) {
  const int n = static_cast<int>(obs.size());
  Mat k(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      k(i, j) = observable_cov(obs[i], obs[j], hp);
      k(j, i) = k(i, j);
    }
  }
  return k;
}

Mat observable_cov_matrix(const std::vector<Observable>& rows,
                          const std::vector<Observable>& cols,
                          const Hyperparams& hp) {
  Mat k(rows.size(), cols.size());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i)
    for (int j = 0; j < static_cast<int>(cols.size()); ++j)
      k(i, j) = observable_cov(rows[i], cols[j], hp);
  return k;
}

Mat cov_with_derivatives(const DerivativeBlockSpec& spec, const Mat& data_inputs,
                         const Hyperparams& hp) {
  const int d = hp.dim();
  if (spec.anchor.size() != d)
    throw std::invalid_argument("anchor dimension does not match hyperparameters");
  const int n = static_cast<int>(data_inputs.rows());

  std::vector<Observable> obs;
  obs.push_back(Observable::value(spec.anchor));
  if (spec.include_hessian_diag)
    for (int i = 0; i < d; ++i) obs.push_back(Observable::hessian(spec.anchor, i, i));
  const int y_begin = static_cast<int>(obs.size());
  for (int i = 0; i < n; ++i) obs.push_back(Observable::value(data_inputs.row(i).transpose()));
  if (spec.include_gradient)
    for (int i = 0; i < d; ++i) obs.push_back(Observable::gradient(spec.anchor, i));
  if (spec.include_hessian_upper)
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) obs.push_back(Observable::hessian(spec.anchor, i, j));

  Mat k = observable_cov_matrix(obs, hp);
  // The y-block must match the plain kernel matrix bit for bit.
  if (n > 0) k.block(y_begin, y_begin, n, n) = kernel_se_matrix(data_inputs, hp, true);
  if (!k.allFinite()) throw std::runtime_error("non-finite covariance entries");
  return k;
}

}  // namespace pes
