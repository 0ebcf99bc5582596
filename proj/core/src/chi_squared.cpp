#include "gps/chi_squared.hpp"

#include <cmath>
#include <limits>

#include "gps/errors.hpp"

namespace gps {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 100000;
constexpr double kInf = std::numeric_limits<double>::infinity();

double log_prefactor(double a, double x) { return -x + a * std::log(x) - std::lgamma(a); }

double log_p_series(double a, double x) {
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < kMaxIter; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    return log_prefactor(a, x) + std::log(sum);
}

double log_q_fraction(double a, double x) {
    double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return log_prefactor(a, x) + std::log(h);
}

void check_args(double a, double x) {
    if (!(a > 0.0)) throw ValidationError("incomplete gamma needs a > 0");
    if (std::isnan(x) || x < 0.0) throw ValidationError("incomplete gamma needs x ≥ 0");
}

// log(exp(hi) - exp(lo)) for hi >= lo.
double log_diff(double hi, double lo) {
    if (lo == -kInf) return hi;
    if (lo >= hi) return -kInf;
    return hi + std::log1p(-std::exp(lo - hi));
}

double log_sum(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

}  // namespace

double log_gamma_p(double a, double x) {
    check_args(a, x);
    if (x == 0.0) return -kInf;
    if (x == kInf) return 0.0;
    if (x < a + 1.0) return log_p_series(a, x);
    return std::log1p(-std::exp(log_q_fraction(a, x)));
}

double log_gamma_q(double a, double x) {
    check_args(a, x);
    if (x == 0.0) return 0.0;
    if (x == kInf) return -kInf;
    if (x < a + 1.0) return std::log1p(-std::exp(log_p_series(a, x)));
    return log_q_fraction(a, x);
}

double chi2_cdf(double x, int df) {
    if (df < 1) throw ValidationError("degrees of freedom must be ≥ 1");
    return x <= 0.0 ? 0.0 : std::exp(log_gamma_p(0.5 * df, 0.5 * x));
}

double chi2_sf(double x, int df) {
    if (df < 1) throw ValidationError("degrees of freedom must be ≥ 1");
    return x <= 0.0 ? 1.0 : std::exp(log_gamma_q(0.5 * df, 0.5 * x));
}

double chi2_quantile(double p, int df) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile level must lie in (0,1)");
    double lo = 0.0, hi = std::max(1.0, 2.0 * df);
    while (chi2_cdf(hi, df) < p) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (chi2_cdf(mid, df) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double log_chi2_interval_mass(double lo, double hi, int df) {
    if (df < 1) throw ValidationError("degrees of freedom must be ≥ 1");
    lo = std::max(lo, 0.0);
    if (!(hi > lo)) return -kInf;
    const double a = 0.5 * df, x_lo = 0.5 * lo, x_hi = 0.5 * hi, split = a + 1.0;
    auto lower_part = [&](double u, double v) { return log_diff(log_gamma_p(a, v), log_gamma_p(a, u)); };
    auto upper_part = [&](double u, double v) { return log_diff(log_gamma_q(a, u), log_gamma_q(a, v)); };
    if (x_hi <= split) return lower_part(x_lo, x_hi);
    if (x_lo >= split) return upper_part(x_lo, x_hi);
    return log_sum(lower_part(x_lo, split), upper_part(split, x_hi));
}

}  // namespace gps
