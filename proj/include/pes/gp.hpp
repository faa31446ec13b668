// GP regression with the SE kernel: predictive marginals, log marginal
// likelihood and Gaussian entropy.
#pragma once

#include "pes/kernel.hpp"
#include "pes/types.hpp"

#include <Eigen/Cholesky>

namespace pes {

struct CholResult {
  Eigen::LLT<Mat> llt;
  double jitter = 0.0;  // amount added to the diagonal
};

// Cholesky with escalating jitter: starts at 1e-10 * scale and grows by
// factors of 10 up to 1e-4 * scale before giving up.
CholResult chol_with_jitter(const Mat& m, double scale);

struct Prediction {
  double mean;
  double variance;
};

// Immutable posterior of a SE-kernel GP over one dataset; safe to share
// across concurrent readers.
class GpPosterior {
 public:
  GpPosterior(const Dataset& data, const Hyperparams& hp);

  Prediction predict(const Vec& x) const;
  Vec predict_mean(const Mat& points) const;  // batched means

  int size() const { return n_; }
  const Hyperparams& hyperparams() const { return hp_; }
  const Mat& inputs() const { return inputs_; }
  // (K_n + sigma^2 I)^{-1} y_n
  const Vec& weights() const { return weights_; }
  const Eigen::LLT<Mat>& factor() const { return chol_.llt; }

 private:
  Hyperparams hp_;
  Mat inputs_;
  Vec outputs_;
  int n_;
  CholResult chol_;
  Vec weights_;
};

double log_marginal_likelihood(const Dataset& data, const Hyperparams& hp);

// Differential entropy of a 1-D Gaussian, in nats.
double gaussian_entropy(double variance);

}  // namespace pes
