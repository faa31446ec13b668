// Independent oracles used by the test suites: finite differences, adaptive
// quadrature, dense Gaussian conditioning and small Monte Carlo helpers.
// Everything here is deliberately simple and separate from the library's
// computation paths.
#pragma once

#include "pes/kernel.hpp"
#include "pes/rng.hpp"
#include "pes/types.hpp"

#include <cmath>
#include <functional>

namespace oracles {

using pes::Mat;
using pes::Vec;

// Central finite difference of f along coordinate j.
inline double fd1(const std::function<double(const Vec&)>& f, Vec x, int j,
                  double eps = 1e-5) {
  Vec xp = x, xm = x;
  xp(j) += eps;
  xm(j) -= eps;
  return (f(xp) - f(xm)) / (2.0 * eps);
}

inline double fd2(const std::function<double(const Vec&)>& f, Vec x, int i, int j,
                  double eps = 1e-4) {
  if (i == j) {
    Vec xp = x, xm = x;
    xp(i) += eps;
    xm(i) -= eps;
    return (f(xp) - 2.0 * f(x) + f(xm)) / (eps * eps);
  }
  Vec xpp = x, xpm = x, xmp = x, xmm = x;
  xpp(i) += eps;
  xpp(j) += eps;
  xpm(i) += eps;
  xpm(j) -= eps;
  xmp(i) -= eps;
  xmp(j) += eps;
  xmm(i) -= eps;
  xmm(j) -= eps;
  return (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * eps * eps);
}

// Adaptive Simpson quadrature.
namespace detail {
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adapt(const std::function<double(double)>& f, double a, double b, double fa,
                    double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(f, a, m, fa, flm, fm);
  const double right = simpson(f, m, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-13) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = detail::simpson(f, a, b, fa, fm, fb);
  return detail::adapt(f, a, b, fa, fm, fb, whole, tol, 60);
}

struct Moments {
  double normalizer;
  double mean;
  double variance;
};

// Moments of N(m, v) * weight(z), integrated over [lo, hi] by quadrature.
inline Moments tilted_moments(double m, double v, const std::function<double(double)>& weight,
                              double lo, double hi) {
  const double inv = 1.0 / std::sqrt(2.0 * M_PI * v);
  auto dens = [&](double z) {
    return inv * std::exp(-0.5 * (z - m) * (z - m) / v) * weight(z);
  };
  const double z0 = integrate(dens, lo, hi);
  const double z1 = integrate([&](double z) { return z * dens(z); }, lo, hi);
  const double z2 = integrate([&](double z) { return z * z * dens(z); }, lo, hi);
  const double mean = z1 / z0;
  return {z0, mean, z2 / z0 - mean * mean};
}

// Conditional of a jointly Gaussian vector: x_a | x_b = obs.
struct DenseConditional {
  Vec mean;
  Mat cov;
};

inline DenseConditional condition(const Vec& mean, const Mat& cov,
                                  const std::vector<int>& keep,
                                  const std::vector<int>& given, const Vec& obs) {
  const int ka = static_cast<int>(keep.size());
  const int kb = static_cast<int>(given.size());
  Mat saa(ka, ka), sab(ka, kb), sbb(kb, kb);
  Vec ma(ka), mb(kb);
  for (int i = 0; i < ka; ++i) {
    ma(i) = mean(keep[i]);
    for (int j = 0; j < ka; ++j) saa(i, j) = cov(keep[i], keep[j]);
    for (int j = 0; j < kb; ++j) sab(i, j) = cov(keep[i], given[j]);
  }
  for (int i = 0; i < kb; ++i) {
    mb(i) = mean(given[i]);
    for (int j = 0; j < kb; ++j) sbb(i, j) = cov(given[i], given[j]);
  }
  const Mat sol = sbb.ldlt().solve(sab.transpose()).transpose();
  DenseConditional out;
  out.mean = ma + sol * (obs - mb);
  out.cov = saa - sol * sab.transpose();
  return out;
}

// Gaussian product update: N(m, V) * N(z_i | obs_mean, obs_var) over one
// coordinate, as a rank-one precision update evaluated densely.
inline DenseConditional gaussian_site_update(const Vec& mean, const Mat& cov, int index,
                                             double obs_mean, double obs_var) {
  const int k = static_cast<int>(mean.size());
  const Mat prec = cov.ldlt().solve(Mat::Identity(k, k));
  Mat prec2 = prec;
  prec2(index, index) += 1.0 / obs_var;
  Vec shift = prec * mean;
  shift(index) += obs_mean / obs_var;
  DenseConditional out;
  out.cov = prec2.ldlt().solve(Mat::Identity(k, k));
  out.mean = out.cov * shift;
  return out;
}

}  // namespace oracles
