#include "pes/normal.hpp"

#include <cmath>

namespace pes {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kInvSqrt2 = 0.70710678118654752440;
}  // namespace

double norm_pdf(double x) { return std::exp(-0.5 * x * x - 0.5 * kLog2Pi); }

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double log_norm_pdf(double x) { return -0.5 * x * x - 0.5 * kLog2Pi; }

double log_norm_cdf(double x) {
  if (x > -36.0) {
    return std::log(0.5 * std::erfc(-x * kInvSqrt2));
  }
  // Asymptotic series for the deep lower tail:
  // Phi(x) ~ phi(x)/(-x) * (1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8).
  const double x2 = x * x;
  double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  series += 105.0 / (x2 * x2 * x2 * x2);
  return log_norm_pdf(x) - std::log(-x) + std::log(series);
}

double norm_pdf_cdf_ratio(double x) {
  if (x > 5.0) return norm_pdf(x);  // Phi(x) ~ 1
  return std::exp(log_norm_pdf(x) - log_norm_cdf(x));
}

}  // namespace pes
