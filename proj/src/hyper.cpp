#include "pes/hyper.hpp"

#include <cmath>
#include <limits>

namespace pes {

double log_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) -
         rate * x;
}

double log_hyper_posterior(const Hyperparams& hp, const Dataset& data,
                           const HyperPrior& prior) {
  prior.validate();
  const Vec psi = hp.to_vector();
  if (psi.size() != prior.shapes.size())
    throw std::invalid_argument("hyperprior dimension mismatch");
  double lp = 0.0;
  for (int i = 0; i < psi.size(); ++i)
    lp += log_gamma_pdf(psi(i), prior.shapes(i), prior.rates(i));
  if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
  if (data.size() >= 1) {
    try {
      const double ll = log_marginal_likelihood(data, hp);
      if (!std::isfinite(ll)) return -std::numeric_limits<double>::infinity();
      lp += ll;
    } catch (const FactorizationError&) {
      return -std::numeric_limits<double>::infinity();
    }
  }
  return lp;
}

namespace {

struct LogSpaceTarget {
  const Dataset& data;
  const HyperPrior& prior;
  long evals = 0;

  double operator()(const Vec& t) {
    ++evals;
    Vec psi = t.array().exp();
    if (!psi.allFinite()) return -std::numeric_limits<double>::infinity();
    Hyperparams hp;
    try {
      hp = Hyperparams::from_vector(psi);
    } catch (const std::invalid_argument&) {
      return -std::numeric_limits<double>::infinity();
    }
    const double lp = log_hyper_posterior(hp, data, prior);
    // Jacobian of the log transform.
    return lp + t.sum();
  }
};

}  // namespace

HyperPosteriorSamples slice_sample_hypers(const Dataset& data, const HyperPrior& prior,
                                          int count, Rng& rng, const SliceOptions& opts) {
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  prior.validate();
  const int k = static_cast<int>(prior.shapes.size());

  LogSpaceTarget target{data, prior};

  // Start at the prior means.
  Vec t = (prior.shapes.array() / prior.rates.array()).log();
  double log_p = target(t);

  HyperPosteriorSamples out;
  out.samples.reserve(count);

  auto sweep = [&]() {
    for (int j = 0; j < k; ++j) {
      const double log_y = log_p + std::log(uniform01(rng));
      const double u = uniform01(rng);
      double left = t(j) - u * opts.width;
      double right = left + opts.width;
      Vec probe = t;
      for (int s = 0; s < opts.max_stepouts; ++s) {
        probe(j) = left;
        if (target(probe) <= log_y) break;
        left -= opts.width;
      }
      for (int s = 0; s < opts.max_stepouts; ++s) {
        probe(j) = right;
        if (target(probe) <= log_y) break;
        right += opts.width;
      }
      for (int shrink = 0; shrink < 1000; ++shrink) {
        const double cand = left + uniform01(rng) * (right - left);
        probe(j) = cand;
        const double lp = target(probe);
        if (lp > log_y) {
          t(j) = cand;
          log_p = lp;
          break;
        }
        if (cand > t(j))
          right = cand;
        else
          left = cand;
      }
    }
    ++out.sweeps;
  };

  for (int i = 0; i < opts.burn_in; ++i) sweep();
  while (static_cast<int>(out.samples.size()) < count) {
    for (int i = 0; i < opts.thin; ++i) sweep();
    out.samples.push_back(Hyperparams::from_vector(t.array().exp()));
  }
  out.target_evaluations = target.evals;
  return out;
}

Hyperparams posterior_mean_hypers(const std::vector<Hyperparams>& samples) {
  if (samples.empty()) throw std::invalid_argument("no hyperparameter samples");
  Vec acc = samples.front().to_vector();
  for (std::size_t i = 1; i < samples.size(); ++i) acc += samples[i].to_vector();
  return Hyperparams::from_vector(acc / static_cast<double>(samples.size()));
}

}  // namespace pes
