#include "pes/gp.hpp"

#include <cmath>

namespace pes {

CholResult chol_with_jitter(const Mat& m, double scale) {
  CholResult result;
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 7; ++attempt) {
    Mat work = m;
    if (attempt > 0) {
      jitter = (attempt == 1) ? 1e-10 * scale : jitter * 10.0;
      if (jitter > 1e-4 * scale) break;
      work.diagonal().array() += jitter;
    }
    result.llt.compute(work);
    if (result.llt.info() == Eigen::Success) {
      result.jitter = jitter;
      return result;
    }
  }
  throw FactorizationError("Cholesky failed after jitter escalation");
}

GpPosterior::GpPosterior(const Dataset& data, const Hyperparams& hp)
    : hp_(hp), inputs_(data.inputs()), outputs_(data.outputs()), n_(data.size()) {
  if (data.domain().dim() != hp.dim())
    throw std::invalid_argument("dataset dimension does not match hyperparameters");
  if (n_ > 0) {
    Mat k = kernel_se_matrix(inputs_, hp_, true);
    chol_ = chol_with_jitter(k, hp_.amplitude);
    weights_ = chol_.llt.solve(outputs_);
  }
}

Prediction GpPosterior::predict(const Vec& x) const {
  if (n_ == 0) return {0.0, hp_.amplitude};
  const Vec k = kernel_se_row(inputs_, x, hp_);
  const double mean = k.dot(weights_);
  const Vec half = chol_.llt.matrixL().solve(k);
  double var = hp_.amplitude - half.squaredNorm();
  var = std::min(std::max(var, 1e-18 * hp_.amplitude), hp_.amplitude);
  return {mean, var};
}

Vec GpPosterior::predict_mean(const Mat& points) const {
  if (n_ == 0) return Vec::Zero(points.rows());
  Mat scaled_data = inputs_;
  scaled_data.array().rowwise() /= hp_.lengthscales.transpose().array();
  Mat scaled_pts = points;
  scaled_pts.array().rowwise() /= hp_.lengthscales.transpose().array();
  const Vec sq_d = scaled_data.rowwise().squaredNorm();
  const Vec sq_p = scaled_pts.rowwise().squaredNorm();
  Mat dist2 = sq_p.replicate(1, n_) + sq_d.transpose().replicate(points.rows(), 1) -
              2.0 * (scaled_pts * scaled_data.transpose());
  Mat cross = hp_.amplitude * (-0.5 * dist2.array().cwiseMax(0.0)).exp().matrix();
  return cross * weights_;
}

double log_marginal_likelihood(const Dataset& data, const Hyperparams& hp) {
  const int n = data.size();
  if (n < 1) throw std::invalid_argument("marginal likelihood needs n >= 1");
  Mat k = kernel_se_matrix(data.inputs(), hp, true);
  const CholResult chol = chol_with_jitter(k, hp.amplitude);
  const Vec alpha = chol.llt.solve(data.outputs());
  const double quad = data.outputs().dot(alpha);
  const double logdet =
      2.0 * Mat(chol.llt.matrixL()).diagonal().array().log().sum();
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * (quad + logdet + n * kLog2Pi);
}

double gaussian_entropy(double variance) {
  if (!(variance > 0.0)) throw std::invalid_argument("entropy needs variance > 0");
  constexpr double kLog2PiE = 2.8378770664093454836;
  return 0.5 * (kLog2PiE + std::log(variance));
}

}  // namespace pes
