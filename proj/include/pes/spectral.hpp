// Random-feature approximation of the SE-kernel GP and posterior sampling of
// global maximizers: draw an analytic sample path through a finite cosine
// basis, then climb it with multi-start projected gradient ascent.
#pragma once

#include "pes/gp.hpp"
#include "pes/rng.hpp"
#include "pes/types.hpp"

#include <cstdint>
#include <vector>

namespace pes {

struct FeatureBasis {
  Mat W;         // m x d frequencies, rows drawn from the spectral density
  Vec b;         // m phases, uniform on [0, 2pi)
  double alpha;  // kernel normalizer; gamma^2 for the SE kernel
  int m;
};

FeatureBasis sample_basis(const Hyperparams& hp, int m, Rng& rng);

// phi(x) = sqrt(2 alpha / m) cos(W x + b)
Vec features(const FeatureBasis& basis, const Vec& x);

struct SamplePath {
  FeatureBasis basis;
  Vec theta;

  double value(const Vec& x) const;
  // value, gradient and full Hessian of the path at x
  void eval(const Vec& x, double& value, Vec& grad, Mat& hess) const;
  void value_grad(const Vec& x, double& value, Vec& grad) const;
};

enum class WeightPath { Auto, NSpace, Direct };

// Exact draw from theta | D_n ~ N(A^{-1} Phi^T y, sigma^2 A^{-1}) with
// A = Phi^T Phi + sigma^2 I. Uses an n-space reformulation costing O(n^2 m)
// while n < m; factorizes A directly otherwise. The path override exists so
// tests can compare both routes on one case.
Vec sample_weights(const FeatureBasis& basis, const Dataset& data,
                   const Hyperparams& hp, Rng& rng,
                   WeightPath path = WeightPath::Auto);

struct MaximizerSample {
  Vec x;
  double value;
  Vec upper_hessian;  // d(d-1)/2 entries, row-major over i < j
};

struct PathOptOptions {
  int lhs_starts_per_dim = 10;
  // Cap on dataset-point starts; the best observed points by path value are
  // kept when the cap binds.
  int max_observed_starts = 1 << 30;
  double grad_tol = 1e-8;
  int max_steps = 200;
};

// Multi-start projected gradient ascent over the box; returns the best local
// maximum seen together with the path's upper-triangular Hessian there.
MaximizerSample optimize_path(const SamplePath& path, const Domain& domain, Rng& rng,
                              const Mat& extra_starts = Mat(0, 0),
                              const PathOptOptions& opts = {});

// One full basis/weights/optimize pipeline with split sub-streams.
MaximizerSample draw_maximizer(const Dataset& data, const Hyperparams& hp, int m,
                               std::uint64_t seed, const PathOptOptions& opts = {});

// M independent pipelines, deterministic under a fixed seed and any thread
// count; results are gathered in index order.
std::vector<MaximizerSample> sample_maximizers(const Dataset& data, const Hyperparams& hp,
                                               int count, int m, std::uint64_t seed,
                                               const PathOptOptions& opts = {});

}  // namespace pes
