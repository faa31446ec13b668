// Rejection-sampling ground truth for the information-gain acquisition on a
// discretized domain, with kernel-based differential entropy estimation.
#pragma once

#include "pes/gp.hpp"
#include "pes/rng.hpp"
#include "pes/types.hpp"

#include <cstdint>
#include <vector>

namespace pes {

struct GridSpec {
  Domain domain;
  Eigen::VectorXi resolution;  // cells per dimension

  GridSpec(Domain dom, Eigen::VectorXi res) : domain(std::move(dom)), resolution(std::move(res)) {
    if (resolution.size() != domain.dim())
      throw std::invalid_argument("grid resolution dimension mismatch");
    if ((resolution.array() < 2).any())
      throw std::invalid_argument("grid needs at least 2 cells per dimension");
    long total = 1;
    for (int i = 0; i < resolution.size(); ++i) total *= resolution(i);
    if (total > 1000000) throw std::invalid_argument("grid exceeds the cell guard");
  }

  int cells() const {
    int total = 1;
    for (int i = 0; i < resolution.size(); ++i) total *= resolution(i);
    return total;
  }
  // Cell centers in row-major order over the index lattice.
  Mat centers() const;
};

// Exact draws from the finite-dimensional GP posterior over the cell
// centers; one draw per row.
Mat joint_grid_samples(const GpPosterior& gp, const GridSpec& grid, int count, Rng& rng);

// Resubstitution entropy estimate with a Gaussian kernel and Silverman's
// bandwidth; -inf for degenerate (zero-spread) samples. Switches to a binned
// evaluation above a few thousand points.
double kde_entropy(const std::vector<double>& samples);
double kde_entropy(const Vec& samples);

struct RsOptions {
  int batch = 256;
  int min_cell_count = 20;      // acceptance floor per maximizer cell
  int per_cell_cap = 256;       // KDE sample cap per cell
  double storage_budget_mb = 256.0;
};

struct RsEstimate {
  Vec alpha;                       // estimate per query point
  Vec first_term;                  // analytic entropy term per query point
  std::vector<int> cell_counts;    // argmax frequency per grid cell
  std::vector<int> eligible;       // cells above the acceptance floor
  Vec cell_probability;            // normalized over eligible cells
  Mat conditional_entropy;         // eligible x queries
  double acceptance_mass = 0.0;    // fraction of draws landing in eligible cells
  int total_draws = 0;
};

// Estimates alpha(x) = H[p(y | D, x)] - E_{x*}[ H[p(y | D, x, x*)] ] on the
// grid: the first term analytically, the second by sampling maximizer cells,
// rejecting non-matching draws, adding observation noise and applying the
// kernel entropy estimate. Cells under the floor are skipped and the
// expectation is renormalized.
RsEstimate rs_acquisition(const GpPosterior& gp, const GridSpec& grid, const Mat& queries,
                          double noise_variance, int budget, std::uint64_t seed,
                          const RsOptions& opts = {});

}  // namespace pes
