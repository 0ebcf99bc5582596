#pragma once

namespace gps {

// Regularized incomplete gamma functions in log space. Series below a+1,
// continued fraction above, so neither tail underflows before its log does.
double log_gamma_p(double a, double x);
double log_gamma_q(double a, double x);

double chi2_cdf(double x, int df);
double chi2_sf(double x, int df);
double chi2_quantile(double p, int df);

// log P(lo <= W <= hi) for W ~ chi2_df; hi may be +inf.
double log_chi2_interval_mass(double lo, double hi, int df);

}  // namespace gps
