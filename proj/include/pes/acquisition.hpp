// The PES acquisition with hyperparameter marginalization, the EI baseline,
// the inner acquisition optimizer, and the outer optimization loop.
#pragma once

#include "pes/ep.hpp"
#include "pes/gp.hpp"
#include "pes/hyper.hpp"
#include "pes/rng.hpp"
#include "pes/spectral.hpp"
#include "pes/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pes {

enum class HyperMode { Bayes, FixedPsi };

// One marginalization slot: a hyperparameter draw together with everything
// needed to evaluate both variances of the information gain at any x.
struct Slot {
  Hyperparams psi;
  GpPosterior gp;
  MaximizerSample xstar;
  EPCache ep;
  ConditionedPredictor pred;
};

struct PrecomputeStats {
  double seconds_sampling = 0.0;      // hyperparameter + maximizer sampling
  double seconds_conditioning = 0.0;  // z-prior, EP, predictor factorization
  int ep_unconverged = 0;
};

struct AcquisitionContext {
  std::vector<Slot> slots;
  int data_size = 0;
  std::uint64_t seed = 0;
  PrecomputeStats stats;
};

struct PrecomputeOptions {
  HyperMode mode = HyperMode::Bayes;
  // With FixedPsi: replicate this value across slots when present, otherwise
  // replicate the posterior mean of a fresh chain.
  std::optional<Hyperparams> known_psi;
  PathOptOptions path;
  SliceOptions slice;
  EpOptions ep;
};

// Builds one slot for a given hyperparameter draw. Shared by every mode so
// that identical (psi, seed) pairs give identical slots.
Slot build_slot(const Dataset& data, const Hyperparams& psi, int m, std::uint64_t seed,
                const PrecomputeOptions& opts, PrecomputeStats* stats = nullptr);

AcquisitionContext pes_precompute(const Dataset& data, const HyperPrior& prior, int count,
                                  int m, std::uint64_t seed,
                                  const PrecomputeOptions& opts = {});

// Eq. of the marginalized information gain: the average over slots of the
// log-ratio of predictive variances with and without the maximizer
// conditioning, each inflated by that slot's noise.
double pes_acquisition(const AcquisitionContext& ctx, const Vec& x);

// Standard expected improvement for one GP; `incumbent` is the target to
// improve upon.
double ei_acquisition(const GpPosterior& gp, const Vec& x, double incumbent);

// Marginalized EI: average over hyperparameter slots with a shared incumbent.
double ei_acquisition(const std::vector<GpPosterior>& slots, const Vec& x,
                      double incumbent);

// Incumbent used by EI under noise: the largest slot-averaged posterior mean
// over the observed inputs.
double ei_incumbent(const std::vector<GpPosterior>& slots, const Dataset& data);

struct AcqOptOptions {
  int lhs_starts_per_dim = 10;
  int extra_starts = 10;        // sampled-maximizer perturbations, when available
  double perturb_scale = 0.05;  // fraction of the domain range
  double init_step = 0.10;      // pattern-search step, fraction of the range
  double final_step = 1e-5;
};

// Multi-start coordinate pattern search; ties keep the earliest start.
Vec optimize_acquisition(const std::function<double(const Vec&)>& acq,
                         const Domain& domain, Rng& rng,
                         const std::vector<Vec>& extra_starts = {},
                         const AcqOptOptions& opts = {});

// argmax of the slot-averaged posterior mean.
Vec recommend(const std::vector<GpPosterior>& slots, const Domain& domain, Rng& rng,
              const AcqOptOptions& opts = {});

enum class Method { PES, PESNB, EI };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct BoOptions {
  Method method = Method::PES;
  int budget = 30;
  int init_count = 3;
  int num_slots = 16;   // M
  int num_features = 320;  // m
  HyperPrior prior;
  std::optional<Hyperparams> known_psi;  // fix hyperparameters to this value
  bool force_fixed_psi = false;          // posterior-mean replicate even for PES/EI
  double query_noise_sd = 0.0;
  PathOptOptions path;
  SliceOptions slice;
  EpOptions ep;
  AcqOptOptions acq;
};

struct BoRunState {
  Method method = Method::PES;
  std::uint64_t seed = 0;
  Mat queries;          // (init + budget) x d, in query order
  Vec observations;     // matching noisy outputs
  Mat recommendations;  // budget x d, one per iteration
  int ep_unconverged = 0;
  bool aborted = false;
  std::string error;
  int iterations_done = 0;
};

// Latin-hypercube initialization followed by precompute / optimize / query /
// append, recording a recommendation each iteration. An objective failure
// aborts and preserves the partial state.
BoRunState bo_loop(const std::function<double(const Vec&)>& objective,
                   const Domain& domain, const BoOptions& opts, std::uint64_t seed);

}  // namespace pes
