// Posterior sampling of the model hyperparameters by coordinate-wise slice
// sampling in log space, plus the posterior-mean point estimate.
#pragma once

#include "pes/gp.hpp"
#include "pes/rng.hpp"
#include "pes/types.hpp"

#include <vector>

namespace pes {

// Independent Gamma(shape, rate) hyperpriors over the packed vector
// [amplitude, ell_1..ell_d, noise_variance].
struct HyperPrior {
  Vec shapes;
  Vec rates;

  static HyperPrior broad(int d, double shape = 1.0, double rate = 0.1) {
    HyperPrior prior;
    prior.shapes = Vec::Constant(d + 2, shape);
    prior.rates = Vec::Constant(d + 2, rate);
    return prior;
  }
  int dim() const { return static_cast<int>(shapes.size()) - 2; }
  void validate() const {
    if (shapes.size() != rates.size() || shapes.size() < 3)
      throw std::invalid_argument("hyperprior must cover amplitude, lengthscales, noise");
    if ((shapes.array() <= 0.0).any() || (rates.array() <= 0.0).any())
      throw std::invalid_argument("Gamma shapes and rates must be positive");
  }
};

double log_gamma_pdf(double x, double shape, double rate);

// log p(psi) + log p(D_n | psi), up to a constant; -inf when the likelihood
// factorization fails (the sampler then treats the point as excluded).
double log_hyper_posterior(const Hyperparams& hp, const Dataset& data,
                           const HyperPrior& prior);

struct SliceOptions {
  int burn_in = 50;
  int thin = 5;
  double width = 1.0;
  int max_stepouts = 20;
};

struct HyperPosteriorSamples {
  std::vector<Hyperparams> samples;
  long target_evaluations = 0;
  int sweeps = 0;
};

// Univariate stepping-out/shrinkage slice sampling, coordinate-wise in the
// log of each hyperparameter (which keeps every sample strictly positive).
HyperPosteriorSamples slice_sample_hypers(const Dataset& data, const HyperPrior& prior,
                                          int count, Rng& rng,
                                          const SliceOptions& opts = {});

Hyperparams posterior_mean_hypers(const std::vector<Hyperparams>& samples);

}  // namespace pes
