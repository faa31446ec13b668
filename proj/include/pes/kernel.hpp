// Squared-exponential kernel, including covariances between function values
// and first/second derivative "observations" of a GP sample path.
//
// The SE kernel factorizes over dimensions, so any mixed derivative reduces
// to a product of 1-D Gaussian derivatives: differentiating w.r.t. the first
// argument raises the derivative order, differentiating w.r.t. the second
// argument raises the order and flips the sign once per order.
#pragma once

#include "pes/types.hpp"

#include <vector>

namespace pes {

double kernel_se(const Vec& x, const Vec& y, const Hyperparams& hp);

// Row of kernel values against a set of points (rows of `points`).
Vec kernel_se_row(const Mat& points, const Vec& x, const Hyperparams& hp);

// Dense kernel matrix over `points`; adds noise_variance on the diagonal
// when requested. Used verbatim by the GP posterior and by the stacked
// covariance builders so the y-blocks agree exactly.
Mat kernel_se_matrix(const Mat& points, const Hyperparams& hp, bool add_noise);

// One function-or-derivative observation of the latent path: f(x) when both
// dims are -1, df/dx_di when dj == -1, and d^2 f / dx_di dx_dj otherwise.
struct Observable {
  Vec x;
  int di = -1;
  int dj = -1;

  static Observable value(Vec point) { return {std::move(point), -1, -1}; }
  static Observable gradient(Vec point, int i) { return {std::move(point), i, -1}; }
  static Observable hessian(Vec point, int i, int j) { return {std::move(point), i, j}; }
};

double observable_cov(const Observable& a, const Observable& b, const Hyperparams& hp);

// Dense covariance over a stacked list of observables (no noise).
Mat observable_cov_matrix(const std::vector<Observable>& obs, const Hyperparams& hp);
Mat observable_cov_matrix(const std::vector<Observable>& rows,
                          const std::vector<Observable>& cols,
                          const Hyperparams& hp);

// Anchor plus block selection for joint covariances over
// [f(x*); diag Hess; y_1..y_n; grad; upper Hess].
struct DerivativeBlockSpec {
  Vec anchor;
  bool include_gradient = true;
  bool include_hessian_diag = true;
  bool include_hessian_upper = true;
};

// Full joint covariance over the stacked vector
// [f(x*); diag Hess(x*); y_1..y_n; grad(x*); upper Hess(x*)], with
// noise_variance added on the y-block diagonal only.
Mat cov_with_derivatives(const DerivativeBlockSpec& spec, const Mat& data_inputs,
                         const Hyperparams& hp);

}  // namespace pes
