// Standard-normal density/cdf helpers, stable deep into the lower tail.
#pragma once

namespace pes {

double norm_pdf(double x);
double norm_cdf(double x);
double log_norm_pdf(double x);

// log Phi(x); switches to an asymptotic expansion once erfc underflows.
double log_norm_cdf(double x);

// phi(x)/Phi(x), the inverse Mills ratio of the lower tail. Safe for
// arbitrarily negative x (grows like -x).
double norm_pdf_cdf_ratio(double x);

}  // namespace pes
