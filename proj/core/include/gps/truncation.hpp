#pragma once

#include <limits>
#include <string>
#include <vector>

namespace gps {

// {phi >= 0 : a phi^2 + b phi + c <= 0}; (m, i, g) records the iteration,
// unit and competing group the inequality came from.
struct QuadraticConstraint {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    int m = 0;
    int i = 0;
    int g = 0;

    double value(double phi) const { return (a * phi + b) * phi + c; }
};

struct Interval {
    double lower = 0.0;
    double upper = std::numeric_limits<double>::infinity();

    bool bounded() const { return upper < std::numeric_limits<double>::infinity(); }
};

// Sorted, disjoint, closed intervals on [0, inf).
class TruncationSet {
public:
    TruncationSet() = default;
    explicit TruncationSet(std::vector<Interval> intervals);

    static TruncationSet full() { return TruncationSet({Interval{}}); }
    static TruncationSet empty_set() { return TruncationSet(); }

    const std::vector<Interval>& intervals() const { return intervals_; }
    bool empty() const { return intervals_.empty(); }
    bool is_full() const;
    bool contains(double phi, double tol = 0.0) const;
    TruncationSet intersect(const TruncationSet& other) const;
    std::string to_string() const;

private:
    std::vector<Interval> intervals_;
};

// Solution set of a single inequality on [0, inf).
TruncationSet solve_quadratic(const QuadraticConstraint& q);

// Intersection of all solution sets. The observed phi must be feasible; a
// violation within 1e-9 relative slack is absorbed, anything larger throws
// InfeasibleError.
TruncationSet feasible_set(const std::vector<QuadraticConstraint>& constraints, double phi_obs);

// P(W >= h, W in S^2) / P(W in S^2) for W ~ chi2_r, S on the phi = sqrt(W) scale.
double truncated_chi2_pvalue(double h, int r, const TruncationSet& s);

// P(W in S^2).
double truncation_mass(int r, const TruncationSet& s);

}  // namespace gps
