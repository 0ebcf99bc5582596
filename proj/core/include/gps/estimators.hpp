#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gps/panel.hpp"

namespace gps {

enum class Method { TSK, PCR, GFE };

std::string to_string(Method m);
Method parse_method(const std::string& s);

// Unit-level coefficient estimates, row i = beta_i'.
class CoefMatrix {
public:
    explicit CoefMatrix(Eigen::MatrixXd values);

    int n() const { return static_cast<int>(values_.rows()); }
    int k() const { return static_cast<int>(values_.cols()); }
    const Eigen::MatrixXd& values() const { return values_; }
    Eigen::VectorXd row(int i) const { return values_.row(i).transpose(); }
    Eigen::VectorXd stacked() const;
    static CoefMatrix from_stacked(const Eigen::VectorXd& b, int k);

private:
    Eigen::MatrixXd values_;
};

enum class FitStatus { Converged, IterationLimit };

// assignments[m] is gamma^(m); centers[m] are the optimal centers for
// assignments[m]; objective[m] is evaluated at that pair.
struct FitTrace {
    std::vector<GroupAssignment> assignments;
    std::vector<Eigen::MatrixXd> centers;
    std::vector<double> objective;

    int iterations() const { return static_cast<int>(assignments.size()) - 1; }
};

struct GroupFit {
    Method method = Method::PCR;
    int groups = 1;
    int k = 1;          // slope coefficients per group
    int coef_dim = 1;   // coefficients per group incl. time dummies
    bool within = false;
    FitTrace trace;
    GroupAssignment gamma;
    Eigen::VectorXd alpha;  // stacked (alpha_1', ..., alpha_G')'
    double objective = 0.0;
    FitStatus status = FitStatus::Converged;
    int restart_count = 0;
    int winning_restart = 0;
    int discarded_restarts = 0;
    std::uint64_t seed = 0;

    Eigen::MatrixXd alpha_matrix() const;  // G x coef_dim
    Eigen::VectorXd slopes() const;        // G*k, dummy block dropped
};

struct FitOptions {
    int groups = 2;
    int restarts = 100;
    std::uint64_t seed = 0;
    int max_iterations = 500;
    int jobs = 1;
};

CoefMatrix unit_ols(const PanelDataset& d);

GroupFit tsk_fit(const CoefMatrix& b, const FitOptions& opts);
GroupFit pcr_fit(const PanelDataset& d, const FitOptions& opts);
GroupFit gfe_fit(const PanelDataset& d, const FitOptions& opts);

// The panel a method actually fits: time dummies for GFE, then the within
// transform if requested.
PanelDataset design_panel(const PanelDataset& raw, Method method, bool within);

// Fits `method` on design_panel(raw, method, within).
GroupFit fit_model(const PanelDataset& raw, Method method, const FitOptions& opts, bool within);

double objective(const CoefMatrix& b, const GroupAssignment& gamma);
double objective(const PanelDataset& d, const GroupAssignment& gamma);

// Exhaustive search over labelings up to relabeling; restart_count holds
// the number of labelings visited.
GroupFit brute_force_fit(const CoefMatrix& b, int groups);
GroupFit brute_force_fit(const PanelDataset& d, int groups);

// Building blocks, shared with the truncation oracle.
Eigen::MatrixXd group_means(const Eigen::MatrixXd& rows, const GroupAssignment& gamma);
std::optional<Eigen::MatrixXd> pooled_group_ols(const PanelDataset& d, const GroupAssignment& gamma);
Eigen::MatrixXd tsk_costs(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& centers);
Eigen::MatrixXd pcr_costs(const PanelDataset& d, const Eigen::MatrixXd& centers);

// Row-wise argmin with the tie rule: within 1e-12 keep the current label,
// otherwise take the smallest index.
GroupAssignment assign_groups(const Eigen::MatrixXd& costs, const GroupAssignment& current);

// Relabels groups of a fit (trace, centers, alpha). perm[old] = new.
GroupFit relabel_fit(const GroupFit& fit, const std::vector<int>& perm);

}  // namespace gps
