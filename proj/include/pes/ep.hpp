// Conditioning the GP on a sampled maximizer location: Gaussian conditioning
// on gradient/upper-Hessian "observations", EP refinement of the truncation
// and soft-maximum factors, and the conditioned predictive variance at a
// query point.
#pragma once

#include "pes/gp.hpp"
#include "pes/kernel.hpp"
#include "pes/spectral.hpp"
#include "pes/types.hpp"

#include <vector>

namespace pes {

// Gaussian prior over z = [f(x*); diag Hess(x*)] after conditioning on the
// data, on grad(x*) = 0 and on the sampled upper Hessian values.
struct ZPrior {
  Vec m0;
  Mat V0;
};

ZPrior build_z_prior(const Dataset& data, const MaximizerSample& xstar,
                     const Hyperparams& hp);

// One EP site update: Gaussian surrogate parameters together with the tilted
// moments they were matched against.
struct SiteUpdate {
  double site_mean;
  double site_var;
  double tilted_mean;
  double tilted_var;
};

// Factor I[z < 0] against cavity N(cav_mean, cav_var).
SiteUpdate ep_site_trunc_negative(double cav_mean, double cav_var);

// Factor Phi((z - y_max)/sigma) against cavity N(cav_mean, cav_var).
SiteUpdate ep_site_softmax(double cav_mean, double cav_var, double y_max,
                           double noise_variance);

struct EpOptions {
  double tol = 1e-6;
  int max_sweeps = 200;
  double site_var_min = 1e-10;
  double site_var_max = 1e10;
};

struct EPCache {
  ZPrior prior;
  Vec site_mean;
  Vec site_var;
  Vec fused_mean;
  Mat fused_cov;
  double y_max = 0.0;
  double noise_variance = 0.0;
  bool converged = false;
  int sweeps = 0;
};

// Sweeps the soft-max site (z_1) and the d truncation sites (diag Hessian) in
// a fixed order until site parameters stabilize. Non-convergence returns the
// best iterate with the flag cleared.
EPCache ep_refine(const ZPrior& prior, double y_max, double noise_variance,
                  const EpOptions& opts = {});

// Recomputes the fused Gaussian from prior and sites; used by invariants.
void fuse_sites(const ZPrior& prior, const Vec& site_mean, const Vec& site_var,
                Vec& fused_mean, Mat& fused_cov);

struct ConditionedPrediction {
  Vec mf;         // bivariate mean over [f(x); f(x*)]
  Mat vf;         // bivariate covariance (after any kappa rescale of vf(0,1))
  double s = 0.0;
  double mu = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double kappa = 1.0;
  double mean = 0.0;      // truncated mean; computed but unused downstream
  double variance = 0.0;  // v_n(x | x*)
};

// Applies the f(x) < f(x*) truncation to a bivariate Gaussian, with the
// kappa rescue of the cross-covariance when s would vanish. The result is
// clamped into [0, vf(0,0)].
ConditionedPrediction truncated_variance(const Vec& mf, const Mat& vf);

// Per-(hyperparameter, maximizer) predictor: factorizes the joint over
// [c; z] once, then serves v_n(x | x*) per query with one triangular solve.
class ConditionedPredictor {
 public:
  ConditionedPredictor(const Dataset& data, const MaximizerSample& xstar,
                       const Hyperparams& hp, const EPCache& cache);

  ConditionedPrediction predict(const Vec& x) const;

  int system_size() const { return static_cast<int>(values_.size()); }

 private:
  Hyperparams hp_;
  Vec xstar_;
  Mat data_inputs_;
  int n_;
  std::vector<Observable> tail_entities_;  // grad, upper Hess, then z
  Vec values_;                             // [y; 0; upperH; site means]
  Eigen::LLT<Mat> chol_;
  Vec weights_;  // S^{-1} values
  Vec tstar_;    // S^{-1} cov(u, f(x*))
  double mf2_;
  double v22_;
};

}  // namespace pes
