#include "pes/oracle.hpp"

#include "pes/parallel.hpp"

#include <cmath>
#include <numbers>

namespace pes {

Mat GridSpec::centers() const {
  const int d = domain.dim();
  const int total = cells();
  Mat out(total, d);
  for (int c = 0; c < total; ++c) {
    int rem = c;
    for (int j = d - 1; j >= 0; --j) {
      const int idx = rem % resolution(j);
      rem /= resolution(j);
      out(c, j) = domain.lower(j) +
                  (idx + 0.5) * (domain.upper(j) - domain.lower(j)) / resolution(j);
    }
  }
  return out;
}

namespace {

struct JointPosterior {
  Vec mean;
  Mat chol_lower;
};

JointPosterior joint_posterior(const GpPosterior& gp, const Mat& points) {
  const Hyperparams& hp = gp.hyperparams();
  Mat cov = kernel_se_matrix(points, hp, false);
  Vec mean = Vec::Zero(points.rows());
  if (gp.size() > 0) {
    Mat cross(points.rows(), gp.size());
    for (int i = 0; i < points.rows(); ++i)
      cross.row(i) = kernel_se_row(gp.inputs(), points.row(i).transpose(), hp).transpose();
    mean = cross * gp.weights();
    cov -= cross * gp.factor().solve(cross.transpose());
    cov = 0.5 * (cov + cov.transpose()).eval();
  }
  const CholResult chol = chol_with_jitter(cov, hp.amplitude);
  return {std::move(mean), Mat(chol.llt.matrixL())};
}

}  // namespace

Mat joint_grid_samples(const GpPosterior& gp, const GridSpec& grid, int count, Rng& rng) {
  const Mat centers = grid.centers();
  if (static_cast<long>(count) * centers.rows() > 200000000L)
    throw std::invalid_argument("joint sample matrix exceeds the memory guard");
  const JointPosterior post = joint_posterior(gp, centers);
  const int p = static_cast<int>(centers.rows());
  Mat z(p, count);
  for (int j = 0; j < count; ++j)
    for (int i = 0; i < p; ++i) z(i, j) = normal01(rng);
  Mat draws = (post.chol_lower * z).transpose();
  draws.rowwise() += post.mean.transpose();
  return draws;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double silverman_bandwidth(const Vec& s) {
  const int n = static_cast<int>(s.size());
  const double mean = s.mean();
  const double var = (s.array() - mean).square().sum() / (n - 1);
  return 1.06 * std::sqrt(var) * std::pow(static_cast<double>(n), -0.2);
}

double kde_entropy_exact(const Vec& s, double h) {
  const int n = static_cast<int>(s.size());
  const double log_norm = std::log(n * h) + 0.5 * kLog2Pi;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double sum = (-0.5 * ((s.array() - s(i)) / h).square()).exp().sum();
    acc += std::log(sum) - log_norm;
  }
  return -acc / n;
}

// Nearest-bin approximation for large sample sets; the bin width is far
// below the bandwidth, so the approximation error is negligible next to the
// estimator's own bias.
double kde_entropy_binned(const Vec& s, double h) {
  const int n = static_cast<int>(s.size());
  const int bins = 8192;
  const double lo = s.minCoeff() - 5.0 * h;
  const double hi = s.maxCoeff() + 5.0 * h;
  const double width = (hi - lo) / bins;

  std::vector<double> count(bins, 0.0);
  for (int i = 0; i < n; ++i) {
    int b = static_cast<int>((s(i) - lo) / width);
    b = std::min(std::max(b, 0), bins - 1);
    count[b] += 1.0;
  }

  const int radius = std::max(1, static_cast<int>(std::ceil(8.0 * h / width)));
  std::vector<double> kernel(radius + 1);
  for (int r = 0; r <= radius; ++r) {
    const double q = r * width / h;
    kernel[r] = std::exp(-0.5 * q * q);
  }

  const double log_norm = std::log(n * h) + 0.5 * kLog2Pi;
  double acc = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (count[b] == 0.0) continue;
    double sum = count[b] * kernel[0];
    for (int r = 1; r <= radius; ++r) {
      if (b - r >= 0) sum += count[b - r] * kernel[r];
      if (b + r < bins) sum += count[b + r] * kernel[r];
    }
    acc += count[b] * (std::log(sum) - log_norm);
  }
  return -acc / n;
}

}  // namespace

double kde_entropy(const Vec& s) {
  const int n = static_cast<int>(s.size());
  if (n < 2) throw std::invalid_argument("entropy estimate needs at least 2 samples");
  const double h = silverman_bandwidth(s);
  if (!(h > 0.0)) return -std::numeric_limits<double>::infinity();
  if (n <= 4096) return kde_entropy_exact(s, h);
  return kde_entropy_binned(s, h);
}

double kde_entropy(const std::vector<double>& samples) {
  return kde_entropy(Eigen::Map<const Vec>(samples.data(), samples.size()));
}

RsEstimate rs_acquisition(const GpPosterior& gp, const GridSpec& grid, const Mat& queries,
                          double noise_variance, int budget, std::uint64_t seed,
                          const RsOptions& opts) {
  if (budget < 1000) throw std::invalid_argument("rejection sampling needs >= 1000 draws");
  const Mat centers = grid.centers();
  const int n_cells = static_cast<int>(centers.rows());
  const int n_query = static_cast<int>(queries.rows());

  Mat all_points(n_cells + n_query, centers.cols());
  all_points.topRows(n_cells) = centers;
  all_points.bottomRows(n_query) = queries;
  const JointPosterior post = joint_posterior(gp, all_points);
  const int p = n_cells + n_query;

  // Pass 1: argmax cell per draw.
  std::vector<int> draw_cell(budget);
  std::vector<int> counts(n_cells, 0);
  {
    Mat z(p, opts.batch);
    for (int start = 0; start < budget; start += opts.batch) {
      const int b = std::min(opts.batch, budget - start);
      for (int j = 0; j < b; ++j) {
        Rng rng = make_rng(split_seed(seed, StreamTag::OracleSample, start + j));
        for (int i = 0; i < p; ++i) z(i, j) = normal01(rng);
      }
      const Mat vals = post.chol_lower.topRows(n_cells) * z.leftCols(b);
      for (int j = 0; j < b; ++j) {
        int best = 0;
        (vals.col(j) + post.mean.head(n_cells)).maxCoeff(&best);
        draw_cell[start + j] = best;
        ++counts[best];
      }
    }
  }

  RsEstimate est;
  est.total_draws = budget;
  est.cell_counts = counts;
  for (int c = 0; c < n_cells; ++c)
    if (counts[c] >= opts.min_cell_count) est.eligible.push_back(c);
  if (est.eligible.empty())
    throw std::runtime_error("no maximizer cell reached the acceptance floor");

  long eligible_mass = 0;
  for (int c : est.eligible) eligible_mass += counts[c];
  est.acceptance_mass = static_cast<double>(eligible_mass) / budget;
  est.cell_probability.resize(est.eligible.size());
  for (std::size_t e = 0; e < est.eligible.size(); ++e)
    est.cell_probability(e) =
        static_cast<double>(counts[est.eligible[e]]) / eligible_mass;

  // Per-cell sample cap under the storage budget.
  int cap = opts.per_cell_cap;
  const double budget_bytes = opts.storage_budget_mb * 1048576.0;
  const double per_sample_bytes = 8.0 * n_query;
  const int affordable = static_cast<int>(
      budget_bytes / (per_sample_bytes * static_cast<double>(est.eligible.size())));
  cap = std::max(opts.min_cell_count, std::min(cap, affordable));

  std::vector<int> cell_slot(n_cells, -1);
  for (std::size_t e = 0; e < est.eligible.size(); ++e) cell_slot[est.eligible[e]] = e;

  // Pass 2: regenerate the same draws, keep query values and noise for
  // accepted draws until every reservoir is full.
  std::vector<Mat> reservoir(est.eligible.size());
  std::vector<int> filled(est.eligible.size(), 0);
  for (auto& r : reservoir) r.resize(cap, n_query);
  const double noise_sd = std::sqrt(noise_variance);
  {
    Mat z(p, opts.batch);
    int remaining = static_cast<int>(est.eligible.size());
    for (int start = 0; start < budget && remaining > 0; start += opts.batch) {
      const int b = std::min(opts.batch, budget - start);
      std::vector<int> wanted;
      for (int j = 0; j < b; ++j) {
        const int slot = cell_slot[draw_cell[start + j]];
        if (slot >= 0 && filled[slot] < cap) wanted.push_back(j);
      }
      if (wanted.empty()) continue;
      for (int j = 0; j < b; ++j) {
        Rng rng = make_rng(split_seed(seed, StreamTag::OracleSample, start + j));
        for (int i = 0; i < p; ++i) z(i, j) = normal01(rng);
      }
      const Mat qvals = post.chol_lower.bottomRows(n_query) * z.leftCols(b);
      for (int j : wanted) {
        const int slot = cell_slot[draw_cell[start + j]];
        if (filled[slot] >= cap) continue;
        Rng noise_rng = make_rng(split_seed(seed, StreamTag::QueryNoise, start + j));
        Vec row = qvals.col(j) + post.mean.tail(n_query);
        for (int q = 0; q < n_query; ++q) row(q) += noise_sd * normal01(noise_rng);
        reservoir[slot].row(filled[slot]++) = row.transpose();
        if (filled[slot] == cap) --remaining;
      }
    }
  }

  est.first_term.resize(n_query);
  for (int q = 0; q < n_query; ++q) {
    const Prediction pr = gp.predict(queries.row(q).transpose());
    est.first_term(q) = gaussian_entropy(pr.variance + noise_variance);
  }

  est.conditional_entropy.resize(est.eligible.size(), n_query);
  parallel_for(0, n_query, [&](int q) {
    for (std::size_t e = 0; e < est.eligible.size(); ++e) {
      const Vec col = reservoir[e].col(q).head(filled[e]);
      est.conditional_entropy(e, q) = kde_entropy(col);
    }
  });

  est.alpha = est.first_term - est.conditional_entropy.transpose() * est.cell_probability;
  return est;
}

}  // namespace pes
