#include "gps/truncation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "gps/chi_squared.hpp"
#include "gps/errors.hpp"

namespace gps {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSlack = 1e-9;
constexpr double kDiscTol = 1e-12;
constexpr double kTieFloor = 1e-12;
}  // namespace

TruncationSet::TruncationSet(std::vector<Interval> intervals) {
    std::sort(intervals.begin(), intervals.end(),
              [](const Interval& x, const Interval& y) { return x.lower < y.lower; });
    for (auto iv : intervals) {
        iv.lower = std::max(iv.lower, 0.0);
        if (std::isnan(iv.lower) || std::isnan(iv.upper) || iv.upper < iv.lower) continue;
        if (!intervals_.empty() && iv.lower <= intervals_.back().upper)
            intervals_.back().upper = std::max(intervals_.back().upper, iv.upper);
        else
            intervals_.push_back(iv);
    }
}

bool TruncationSet::is_full() const {
    return intervals_.size() == 1 && intervals_[0].lower == 0.0 && !intervals_[0].bounded();
}

bool TruncationSet::contains(double phi, double tol) const {
    for (const auto& iv : intervals_)
        if (phi >= iv.lower - tol && phi <= iv.upper + tol) return true;
    return false;
}

TruncationSet TruncationSet::intersect(const TruncationSet& other) const {
    std::vector<Interval> out;
    std::size_t p = 0, q = 0;
    const auto& x = intervals_;
    const auto& y = other.intervals_;
    while (p < x.size() && q < y.size()) {
        const double lo = std::max(x[p].lower, y[q].lower);
        const double hi = std::min(x[p].upper, y[q].upper);
        if (lo <= hi) out.push_back({lo, hi});
        (x[p].upper < y[q].upper ? p : q)++;
    }
    TruncationSet s;
    s.intervals_ = std::move(out);
    return s;
}

std::string TruncationSet::to_string() const {
    if (intervals_.empty()) return "{}";
    std::ostringstream out;
    out.precision(6);
    for (std::size_t k = 0; k < intervals_.size(); ++k) {
        if (k) out << " U ";
        out << '[' << intervals_[k].lower << ", ";
        if (intervals_[k].bounded())
            out << intervals_[k].upper << ']';
        else
            out << "inf)";
    }
    return out.str();
}

TruncationSet solve_quadratic(const QuadraticConstraint& q) {
    const double a = q.a, b = q.b, c = q.c;
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c))
        throw NumericalError("non-finite constraint coefficient");
    if (a == 0.0) {
        if (b == 0.0) return c <= 0.0 ? TruncationSet::full() : TruncationSet::empty_set();
        const double root = -c / b;
        if (b > 0.0) return root >= 0.0 ? TruncationSet({{0.0, root}}) : TruncationSet::empty_set();
        return TruncationSet({{std::max(root, 0.0), kInf}});
    }
    double disc = b * b - 4.0 * a * c;
    const double scale = std::max(b * b, std::abs(4.0 * a * c));
    if (disc < 0.0 && disc > -kDiscTol * scale) disc = 0.0;
    if (disc < 0.0) return a > 0.0 ? TruncationSet::empty_set() : TruncationSet::full();

    const double sq = std::sqrt(disc);
    const double qq = -0.5 * (b + (b >= 0.0 ? sq : -sq));
    double r1, r2;
    if (qq == 0.0) {
        r1 = r2 = 0.0;
    } else {
        r1 = qq / a;
        r2 = c / qq;
    }
    if (r1 > r2) std::swap(r1, r2);
    if (a > 0.0) {
        if (r2 < 0.0) return TruncationSet::empty_set();
        return TruncationSet({{std::max(r1, 0.0), r2}});
    }
    std::vector<Interval> parts;
    if (r1 >= 0.0) parts.push_back({0.0, r1});
    parts.push_back({std::max(r2, 0.0), kInf});
    return TruncationSet(parts);
}

namespace {

// Root rounding can leave phi_obs a hair outside its own solution set;
// widen the nearest edge when the gap is within slack.
TruncationSet include_observed(const TruncationSet& piece, double phi_obs, const QuadraticConstraint& q) {
    if (piece.contains(phi_obs)) return piece;
    const double tol = kSlack * std::max(1.0, phi_obs);
    std::vector<Interval> widened = piece.intervals();
    for (auto& iv : widened) {
        if (phi_obs < iv.lower && iv.lower - phi_obs <= tol) {
            iv.lower = phi_obs;
            return TruncationSet(widened);
        }
        if (phi_obs > iv.upper && phi_obs - iv.upper <= tol) {
            iv.upper = phi_obs;
            return TruncationSet(widened);
        }
    }
    if (std::abs(q.value(phi_obs)) <= kSlack * (std::abs(q.a) * phi_obs * phi_obs + std::abs(q.b) * phi_obs + std::abs(q.c))) {
        widened.push_back({phi_obs, phi_obs});
        return TruncationSet(widened);
    }
    throw InfeasibleError("trace infeasible — decomposition inconsistent (phi_obs outside the solution set of "
                          "iteration " + std::to_string(q.m) + ", unit " + std::to_string(q.i + 1) + ", group " +
                          std::to_string(q.g + 1) + ")");
}

}  // namespace

TruncationSet feasible_set(const std::vector<QuadraticConstraint>& constraints, double phi_obs) {
    if (!(phi_obs >= 0.0) || !std::isfinite(phi_obs)) throw ValidationError("phi_obs must be finite and ≥ 0");
    TruncationSet s = TruncationSet::full();
    for (auto q : constraints) {
        const double val = q.value(phi_obs);
        const double magnitude = std::abs(q.a) * phi_obs * phi_obs + std::abs(q.b) * phi_obs + std::abs(q.c);
        if (val > 0.0) {
            // The absolute floor matches the tie tolerance used when assigning.
            if (val > kSlack * magnitude + kTieFloor) {
                char excess[32];
                std::snprintf(excess, sizeof excess, "%.3g", val);
                throw InfeasibleError("trace infeasible — decomposition inconsistent (iteration " +
                                      std::to_string(q.m) + ", unit " + std::to_string(q.i + 1) + ", group " +
                                      std::to_string(q.g + 1) + ", excess " + excess + ")");
            }
            q.c -= val;
        }
        s = s.intersect(include_observed(solve_quadratic(q), phi_obs, q));
    }
    return s;
}

namespace {

double log_mass(int r, const TruncationSet& s, double h_floor) {
    double acc = -kInf;
    for (const auto& iv : s.intervals()) {
        const double hi = iv.bounded() ? iv.upper * iv.upper : kInf;
        const double lo = std::max(iv.lower * iv.lower, h_floor);
        if (hi < lo) continue;
        const double m = log_chi2_interval_mass(lo, hi, r);
        if (m == -kInf) continue;
        acc = acc == -kInf ? m : std::max(acc, m) + std::log1p(std::exp(-std::abs(acc - m)));
    }
    return acc;
}

}  // namespace

double truncation_mass(int r, const TruncationSet& s) {
    if (r < 1) throw ValidationError("degrees of freedom must be ≥ 1");
    return std::exp(log_mass(r, s, 0.0));
}

double truncated_chi2_pvalue(double h, int r, const TruncationSet& s) {
    if (r < 1) throw ValidationError("degrees of freedom must be ≥ 1");
    if (std::isnan(h) || h < 0.0) throw ValidationError("statistic must be ≥ 0");
    if (h == 0.0) return 1.0;
    if (s.empty()) throw NumericalError("empty truncation set");
    const double den = log_mass(r, s, 0.0);
    if (den == -kInf) throw NumericalError("truncation set has zero probability mass");
    const double num = log_mass(r, s, h);
    if (num == -kInf) return 0.0;
    return std::clamp(std::exp(num - den), 0.0, 1.0);
}

}  // namespace gps
