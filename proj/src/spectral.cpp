#include "pes/spectral.hpp"

#include "pes/parallel.hpp"

#include <cmath>
#include <numbers>

namespace pes {

FeatureBasis sample_basis(const Hyperparams& hp, int m, Rng& rng) {
  if (m < 1) throw std::invalid_argument("feature count must be >= 1");
  const int d = hp.dim();
  FeatureBasis basis;
  basis.m = m;
  basis.alpha = hp.amplitude;
  basis.W.resize(m, d);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j) basis.W(i, j) = gauss(rng) / hp.lengthscales(j);
  basis.b.resize(m);
  std::uniform_real_distribution<double> unif(0.0, 2.0 * std::numbers::pi);
  for (int i = 0; i < m; ++i) basis.b(i) = unif(rng);
  return basis;
}

Vec features(const FeatureBasis& basis, const Vec& x) {
  if (x.size() != basis.W.cols())
    throw std::invalid_argument("point dimension does not match basis");
  const double scale = std::sqrt(2.0 * basis.alpha / basis.m);
  return scale * ((basis.W * x + basis.b).array().cos()).matrix();
}

double SamplePath::value(const Vec& x) const {
  const double scale = std::sqrt(2.0 * basis.alpha / basis.m);
  return scale * ((basis.W * x + basis.b).array().cos().matrix()).dot(theta);
}

void SamplePath::value_grad(const Vec& x, double& value, Vec& grad) const {
  const double scale = std::sqrt(2.0 * basis.alpha / basis.m);
  const Vec t = basis.W * x + basis.b;
  const Vec c = t.array().cos();
  const Vec s = t.array().sin();
  value = scale * c.dot(theta);
  grad = -scale * (basis.W.transpose() * (s.array() * theta.array()).matrix());
}

void SamplePath::eval(const Vec& x, double& value, Vec& grad, Mat& hess) const {
  const double scale = std::sqrt(2.0 * basis.alpha / basis.m);
  const Vec t = basis.W * x + basis.b;
  const Vec c = t.array().cos();
  const Vec s = t.array().sin();
  value = scale * c.dot(theta);
  grad = -scale * (basis.W.transpose() * (s.array() * theta.array()).matrix());
  hess = -scale *
         (basis.W.transpose() *
          (c.array() * theta.array()).matrix().asDiagonal() * basis.W);
}

Vec sample_weights(const FeatureBasis& basis, const Dataset& data,
                   const Hyperparams& hp, Rng& rng, WeightPath path) {
  const int m = basis.m;
  const int n = data.size();
  if (n == 0) return normal_vector(m, rng);

  Mat phi(n, m);  // rows are phi(x_i)
  for (int i = 0; i < n; ++i) phi.row(i) = features(basis, data.input(i)).transpose();
  const double s2 = hp.noise_variance;

  const bool use_nspace = path == WeightPath::NSpace ||
                          (path == WeightPath::Auto && n < m);
  if (use_nspace) {
    // theta = theta0 + Phi^T (Phi Phi^T + s2 I)^{-1} (y - Phi theta0 - eps)
    // has mean A^{-1} Phi^T y and covariance s2 A^{-1}.
    const Vec theta0 = normal_vector(m, rng);
    const Vec eps = std::sqrt(s2) * normal_vector(n, rng);
    Mat b = phi * phi.transpose();
    b.diagonal().array() += s2;
    const CholResult chol = chol_with_jitter(b, basis.alpha);
    const Vec resid = data.outputs() - phi * theta0 - eps;
    return theta0 + phi.transpose() * chol.llt.solve(resid);
  }

  Mat a = phi.transpose() * phi;
  a.diagonal().array() += s2;
  const CholResult chol = chol_with_jitter(a, std::max(s2, 1e-12));
  const Vec mean = chol.llt.solve(phi.transpose() * data.outputs());
  const Vec xi = normal_vector(m, rng);
  // L^{-T} xi has covariance A^{-1}
  const Vec white = chol.llt.matrixU().solve(xi);
  return mean + std::sqrt(s2) * white;
}

namespace {

// Component of the gradient pointing into the feasible box.
Vec projected_gradient(const Vec& x, const Vec& g, const Domain& domain) {
  Vec pg = g;
  const double eps = 1e-12;
  for (int j = 0; j < x.size(); ++j) {
    if (x(j) <= domain.lower(j) + eps && g(j) < 0.0) pg(j) = 0.0;
    if (x(j) >= domain.upper(j) - eps && g(j) > 0.0) pg(j) = 0.0;
  }
  return pg;
}

struct AscentResult {
  Vec x;
  double value;
};

AscentResult ascend(const SamplePath& path, const Domain& domain, Vec x,
                    const PathOptOptions& opts) {
  double fx;
  Vec grad;
  path.value_grad(x, fx, grad);
  double step = 1.0;
  for (int iter = 0; iter < opts.max_steps; ++iter) {
    const Vec pg = projected_gradient(x, grad, domain);
    if (pg.norm() < opts.grad_tol) break;
    bool moved = false;
    while (step > 1e-14) {
      const Vec cand = domain.clip(x + step * grad);
      const Vec delta = cand - x;
      if (delta.squaredNorm() == 0.0) {
        step *= 0.5;
        continue;
      }
      const double fc = path.value(cand);
      if (fc > fx + 1e-4 * grad.dot(delta)) {
        x = cand;
        fx = fc;
        path.value_grad(x, fx, grad);
        step = std::min(step * 2.0, 1e3);
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return {x, fx};
}

}  // namespace

MaximizerSample optimize_path(const SamplePath& path, const Domain& domain, Rng& rng,
                              const Mat& extra_starts, const PathOptOptions& opts) {
  const int d = domain.dim();
  std::vector<Vec> starts = latin_hypercube(domain, opts.lhs_starts_per_dim * d, rng);

  const int n_extra = static_cast<int>(extra_starts.rows());
  if (n_extra > 0 && n_extra <= opts.max_observed_starts) {
    for (int i = 0; i < n_extra; ++i) starts.push_back(extra_starts.row(i).transpose());
  } else if (n_extra > 0) {
    // Keep the observed points where the path is highest.
    std::vector<std::pair<double, int>> scored(n_extra);
    for (int i = 0; i < n_extra; ++i)
      scored[i] = {path.value(extra_starts.row(i).transpose()), i};
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < opts.max_observed_starts; ++i)
      starts.push_back(extra_starts.row(scored[i].second).transpose());
  }

  AscentResult best{domain.clip(starts.front()), -std::numeric_limits<double>::infinity()};
  for (const Vec& s : starts) {
    const AscentResult res = ascend(path, domain, domain.clip(s), opts);
    if (res.value > best.value) best = res;
  }

  MaximizerSample sample;
  sample.x = best.x;
  double value;
  Vec grad;
  Mat hess;
  path.eval(best.x, value, grad, hess);
  sample.value = value;
  sample.upper_hessian.resize(d * (d - 1) / 2);
  int k = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) sample.upper_hessian(k++) = hess(i, j);
  return sample;
}

MaximizerSample draw_maximizer(const Dataset& data, const Hyperparams& hp, int m,
                               std::uint64_t seed, const PathOptOptions& opts) {
  Rng rng_basis = make_rng(split_seed(seed, StreamTag::SlotBasis));
  Rng rng_weights = make_rng(split_seed(seed, StreamTag::SlotWeights));
  Rng rng_opt = make_rng(split_seed(seed, StreamTag::SlotOptimize));
  SamplePath path{sample_basis(hp, m, rng_basis), Vec()};
  path.theta = sample_weights(path.basis, data, hp, rng_weights);
  return optimize_path(path, data.domain(), rng_opt, data.inputs(), opts);
}

std::vector<MaximizerSample> sample_maximizers(const Dataset& data, const Hyperparams& hp,
                                               int count, int m, std::uint64_t seed,
                                               const PathOptOptions& opts) {
  if (count < 1) throw std::invalid_argument("maximizer sample count must be >= 1");
  return parallel_map<MaximizerSample>(count, [&](int i) {
    return draw_maximizer(data, hp, m, split_seed(seed, 0x6d61780aULL, i), opts);
  });
}

}  // namespace pes
