#include "pes/ep.hpp"

#include "pes/normal.hpp"

#include <cmath>

namespace pes {

namespace {

// Entities conditioned on to enforce the local-maximum constraint:
// y_1..y_n, grad(x*) = 0, upper Hess(x*) = sampled values.
std::vector<Observable> c_tail_entities(const Vec& xstar, int d) {
  std::vector<Observable> obs;
  for (int i = 0; i < d; ++i) obs.push_back(Observable::gradient(xstar, i));
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) obs.push_back(Observable::hessian(xstar, i, j));
  return obs;
}

std::vector<Observable> z_entities(const Vec& xstar, int d) {
  std::vector<Observable> obs;
  obs.push_back(Observable::value(xstar));
  for (int i = 0; i < d; ++i) obs.push_back(Observable::hessian(xstar, i, i));
  return obs;
}

// Joint covariance over [y_1..y_n; tail...] with noise only on the y block.
Mat stacked_cov(const Mat& data_inputs, const std::vector<Observable>& tail,
                const Hyperparams& hp, bool add_noise) {
  const int n = static_cast<int>(data_inputs.rows());
  const int t = static_cast<int>(tail.size());
  Mat k(n + t, n + t);
  if (n > 0) {
    k.topLeftCorner(n, n) = kernel_se_matrix(data_inputs, hp, add_noise);
    for (int j = 0; j < t; ++j) {
      for (int i = 0; i < n; ++i) {
        const double cov = observable_cov(
            Observable::value(data_inputs.row(i).transpose()), tail[j], hp);
        k(i, n + j) = cov;
        k(n + j, i) = cov;
      }
    }
  }
  for (int i = 0; i < t; ++i)
    for (int j = 0; j <= i; ++j) {
      const double cov = observable_cov(tail[i], tail[j], hp);
      k(n + i, n + j) = cov;
      k(n + j, n + i) = cov;
    }
  return k;
}

SiteUpdate site_from_tilted(double cav_mean, double cav_var, double tilted_mean,
                            double tilted_var) {
  SiteUpdate site;
  site.tilted_mean = tilted_mean;
  site.tilted_var = tilted_var;
  const double prec = 1.0 / tilted_var - 1.0 / cav_var;
  const double shift = tilted_mean / tilted_var - cav_mean / cav_var;
  if (prec > 0.0) {
    site.site_var = 1.0 / prec;
    site.site_mean = shift / prec;
  } else {
    // Candidate site variance came out non-positive; fall back to a
    // near-flat site centered on the tilted mean.
    site.site_var = -1.0;
    site.site_mean = tilted_mean;
  }
  return site;
}

}  // namespace

ZPrior build_z_prior(const Dataset& data, const MaximizerSample& xstar,
                     const Hyperparams& hp) {
  if (data.size() < 1) throw std::invalid_argument("z-prior needs n >= 1");
  const int d = hp.dim();
  const int n = data.size();
  const int n_upper = d * (d - 1) / 2;
  if (xstar.upper_hessian.size() != n_upper)
    throw std::invalid_argument("maximizer sample has wrong upper-Hessian size");

  const std::vector<Observable> tail = c_tail_entities(xstar.x, d);
  const std::vector<Observable> z = z_entities(xstar.x, d);

  // K_c over [y; grad; upperH] with noise on the y block only.
  const Mat k_c = stacked_cov(data.inputs(), tail, hp, true);

  Vec c(n + d + n_upper);
  c.head(n) = data.outputs();
  c.segment(n, d).setZero();
  c.tail(n_upper) = xstar.upper_hessian;

  std::vector<Observable> c_all;
  c_all.reserve(n + tail.size());
  for (int i = 0; i < n; ++i)
    c_all.push_back(Observable::value(data.input(i)));
  c_all.insert(c_all.end(), tail.begin(), tail.end());

  const Mat k_zc = observable_cov_matrix(z, c_all, hp);
  const Mat k_z = observable_cov_matrix(z, hp);

  const CholResult chol = chol_with_jitter(k_c, hp.amplitude);
  const Mat solved = chol.llt.solve(k_zc.transpose());  // K_c^{-1} K_cz
  ZPrior prior;
  prior.m0 = k_zc * chol.llt.solve(c);
  prior.V0 = k_z - k_zc * solved;
  prior.V0 = 0.5 * (prior.V0 + prior.V0.transpose()).eval();
  if (!prior.m0.allFinite() || !prior.V0.allFinite())
    throw std::runtime_error("non-finite z-prior");
  return prior;
}

SiteUpdate ep_site_trunc_negative(double cav_mean, double cav_var) {
  if (!(cav_var > 0.0)) throw std::invalid_argument("cavity variance must be positive");
  const double sd = std::sqrt(cav_var);
  const double alpha = -cav_mean / sd;
  const double h = norm_pdf_cdf_ratio(alpha);
  const double tilted_mean = cav_mean - sd * h;
  double tilted_var = cav_var * (1.0 - h * (h + alpha));
  tilted_var = std::max(tilted_var, 1e-300);
  return site_from_tilted(cav_mean, cav_var, tilted_mean, tilted_var);
}

SiteUpdate ep_site_softmax(double cav_mean, double cav_var, double y_max,
                           double noise_variance) {
  if (!(cav_var > 0.0)) throw std::invalid_argument("cavity variance must be positive");
  const double denom = cav_var + noise_variance;
  const double sd = std::sqrt(denom);
  const double alpha = (cav_mean - y_max) / sd;
  const double h = norm_pdf_cdf_ratio(alpha);
  const double tilted_mean = cav_mean + cav_var * h / sd;
  double tilted_var = cav_var - cav_var * cav_var * h * (h + alpha) / denom;
  tilted_var = std::max(tilted_var, 1e-300);
  return site_from_tilted(cav_mean, cav_var, tilted_mean, tilted_var);
}

void fuse_sites(const ZPrior& prior, const Vec& site_mean, const Vec& site_var,
                Vec& fused_mean, Mat& fused_cov) {
  const int k = static_cast<int>(prior.m0.size());
  const CholResult chol = chol_with_jitter(prior.V0, prior.V0.diagonal().maxCoeff());
  const Mat prior_prec = chol.llt.solve(Mat::Identity(k, k));
  Mat prec = prior_prec;
  Vec shift = prior_prec * prior.m0;
  for (int i = 0; i < k; ++i) {
    prec(i, i) += 1.0 / site_var(i);
    shift(i) += site_mean(i) / site_var(i);
  }
  const Eigen::LLT<Mat> post(prec);
  fused_cov = post.solve(Mat::Identity(k, k));
  fused_cov = 0.5 * (fused_cov + fused_cov.transpose()).eval();
  fused_mean = post.solve(shift);
}

EPCache ep_refine(const ZPrior& prior, double y_max, double noise_variance,
                  const EpOptions& opts) {
  const int k = static_cast<int>(prior.m0.size());
  EPCache cache;
  cache.prior = prior;
  cache.y_max = y_max;
  cache.noise_variance = noise_variance;

  const CholResult prior_chol =
      chol_with_jitter(prior.V0, prior.V0.diagonal().maxCoeff());
  const Mat prior_prec = prior_chol.llt.solve(Mat::Identity(k, k));
  const Vec prior_shift = prior_prec * prior.m0;

  // Natural parameters of the sites; zero precision is the flat start.
  Vec prec = Vec::Zero(k);
  Vec shift = Vec::Zero(k);
  std::vector<double> damping(k, 1.0);

  Vec m = prior.m0;
  Mat v = prior.V0;
  auto refuse = [&]() {
    Mat q = prior_prec;
    q.diagonal() += prec;
    const Eigen::LLT<Mat> post(q);
    v = post.solve(Mat::Identity(k, k));
    v = 0.5 * (v + v.transpose()).eval();
    m = post.solve(prior_shift + shift);
  };

  auto report_var = [&](double p) {
    return 1.0 / std::min(std::max(p, 1.0 / opts.site_var_max), 1.0 / opts.site_var_min);
  };

  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (int i = 0; i < k; ++i) {
      const double marg_var = v(i, i);
      const double marg_mean = m(i);
      const double cav_prec = 1.0 / marg_var - prec(i);
      if (!(cav_prec > 1e-14)) {
        damping[i] = 0.5;
        max_delta = std::max(max_delta, opts.tol * 2.0);  // not settled yet
        continue;
      }
      const double cav_var = 1.0 / cav_prec;
      const double cav_mean = cav_var * (marg_mean / marg_var - shift(i));

      const SiteUpdate upd = (i == 0)
                                 ? ep_site_softmax(cav_mean, cav_var, y_max, noise_variance)
                                 : ep_site_trunc_negative(cav_mean, cav_var);
      double cand_var = upd.site_var;
      double cand_mean = upd.site_mean;
      if (cand_var <= 0.0) {
        cand_var = opts.site_var_max;
        damping[i] = 0.5;
      }
      cand_var = std::min(std::max(cand_var, opts.site_var_min), opts.site_var_max);

      const double old_prec = prec(i);
      const double old_shift = shift(i);
      const double delta = damping[i];
      const double new_prec = (1.0 - delta) * old_prec + delta / cand_var;
      const double new_shift = (1.0 - delta) * old_shift + delta * cand_mean / cand_var;

      const double old_var_rep = report_var(old_prec);
      const double new_var_rep = report_var(new_prec);
      const double old_mean_rep = old_prec > 0.0 ? old_shift / old_prec : 0.0;
      const double new_mean_rep = new_prec > 0.0 ? new_shift / new_prec : 0.0;
      max_delta = std::max(max_delta, std::abs(new_var_rep - old_var_rep));
      max_delta = std::max(max_delta, std::abs(new_mean_rep - old_mean_rep));

      prec(i) = new_prec;
      shift(i) = new_shift;
      refuse();
    }
    cache.sweeps = sweep;
    if (max_delta < opts.tol) {
      cache.converged = true;
      break;
    }
  }

  cache.site_var.resize(k);
  cache.site_mean.resize(k);
  for (int i = 0; i < k; ++i) {
    cache.site_var(i) = report_var(prec(i));
    cache.site_mean(i) = prec(i) > 0.0 ? shift(i) / prec(i) : 0.0;
  }
  fuse_sites(prior, cache.site_mean, cache.site_var, cache.fused_mean, cache.fused_cov);
  return cache;
}

ConditionedPrediction truncated_variance(const Vec& mf, const Mat& vf) {
  ConditionedPrediction out;
  out.mf = mf;
  out.vf = vf;
  double v11 = vf(0, 0);
  double v22 = vf(1, 1);
  double v12 = 0.5 * (vf(0, 1) + vf(1, 0));
  if (!(v11 > 0.0) || !(v22 > 0.0))
    throw std::invalid_argument("truncated_variance needs positive diagonal");

  constexpr double kSMin = 1e-10;
  double s = v11 + v22 - 2.0 * v12;
  if (s <= kSMin) {
    if (v12 > 0.0) {
      const double target = kSMin * (1.0 + 1e-7);
      out.kappa = std::min(1.0, std::max(0.0, (v11 + v22 - target) / (2.0 * v12)));
      v12 *= out.kappa;
      out.vf(0, 1) = v12;
      out.vf(1, 0) = v12;
      s = v11 + v22 - 2.0 * v12;
    }
  }
  if (s <= kSMin) {
    // Both variances are essentially zero; the truncation cannot move them.
    out.variance = std::max(0.0, v11);
    out.mean = mf(0);
    out.s = s;
    return out;
  }

  out.s = s;
  out.mu = mf(1) - mf(0);
  out.alpha = out.mu / std::sqrt(s);
  out.beta = norm_pdf_cdf_ratio(out.alpha);
  const double gap = v11 - v12;
  out.variance = v11 - out.beta * (out.beta + out.alpha) / s * gap * gap;
  out.variance = std::min(std::max(out.variance, 0.0), v11);
  out.mean = mf(0) - out.beta * gap / std::sqrt(s);
  return out;
}

ConditionedPredictor::ConditionedPredictor(const Dataset& data,
                                           const MaximizerSample& xstar,
                                           const Hyperparams& hp, const EPCache& cache)
    : hp_(hp), xstar_(xstar.x), data_inputs_(data.inputs()), n_(data.size()) {
  const int d = hp.dim();
  const int n_upper = d * (d - 1) / 2;

  // Stacked conditioning vector u = [y; grad; upperH; z] with pseudo
  // observations (site means, site variances) on the z block.
  tail_entities_ = c_tail_entities(xstar_, d);
  const std::vector<Observable> z = z_entities(xstar_, d);
  tail_entities_.insert(tail_entities_.end(), z.begin(), z.end());

  const int total = n_ + static_cast<int>(tail_entities_.size());
  values_.resize(total);
  values_.head(n_) = data.outputs();
  values_.segment(n_, d).setZero();
  values_.segment(n_ + d, n_upper) = xstar.upper_hessian;
  values_.tail(d + 1) = cache.site_mean;

  Mat k = stacked_cov(data_inputs_, tail_entities_, hp_, true);
  const int z_begin = n_ + d + n_upper;
  // Noise-free covariance against f(x*) = z_1, grabbed before the site
  // variances land on the z diagonal.
  const Vec rstar = k.col(z_begin);
  for (int i = 0; i <= d; ++i)
    k(z_begin + i, z_begin + i) += cache.site_var(i);

  const CholResult chol = chol_with_jitter(k, hp_.amplitude);
  chol_ = chol.llt;
  weights_ = chol_.solve(values_);
  tstar_ = chol_.solve(rstar);
  mf2_ = rstar.dot(weights_);
  v22_ = hp_.amplitude - rstar.dot(tstar_);
  v22_ = std::min(std::max(v22_, 1e-18 * hp_.amplitude), hp_.amplitude);
}

ConditionedPrediction ConditionedPredictor::predict(const Vec& x) const {
  const int total = static_cast<int>(values_.size());
  Vec r(total);
  if (n_ > 0) r.head(n_) = kernel_se_row(data_inputs_, x, hp_);
  const Observable fx = Observable::value(x);
  for (int j = 0; j < static_cast<int>(tail_entities_.size()); ++j)
    r(n_ + j) = observable_cov(fx, tail_entities_[j], hp_);

  const double kxs = kernel_se(x, xstar_, hp_);
  const double mf1 = r.dot(weights_);
  const Vec half = chol_.matrixL().solve(r);
  double v11 = hp_.amplitude - half.squaredNorm();
  v11 = std::min(std::max(v11, 1e-18 * hp_.amplitude), hp_.amplitude);
  const double v12 = kxs - r.dot(tstar_);

  Vec mf(2);
  mf << mf1, mf2_;
  Mat vf(2, 2);
  vf << v11, v12, v12, v22_;
  return truncated_variance(mf, vf);
}

}  // namespace pes
