#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gps/estimators.hpp"
#include "gps/panel.hpp"

namespace gps {

enum class CovMethod { Pesaran, DriscollKraay, Theoretical };

std::string to_string(CovMethod m);
CovMethod parse_cov_method(const std::string& s);

struct GroupCovariances {
    CovMethod method = CovMethod::Theoretical;
    std::vector<Eigen::MatrixXd> per_group;

    int groups() const { return static_cast<int>(per_group.size()); }
    int dim() const { return per_group.empty() ? 0 : static_cast<int>(per_group.front().rows()); }
    Eigen::MatrixXd block() const;
};

// [n_g (n_g - 1)]^-1 sum_i (b_i - mean_g)(b_i - mean_g)'.
GroupCovariances pesaran_group_cov(const CoefMatrix& b, const GroupAssignment& gamma);

int default_bandwidth(int t);
double bartlett_weight(int lag, int bandwidth);

// Driscoll-Kraay with Bartlett weights; alpha is the stacked G*K' vector.
GroupCovariances driscoll_kraay_cov(const PanelDataset& d, const GroupAssignment& gamma,
                                    const Eigen::VectorXd& alpha, int bandwidth);

// Blocks sigma2 / n_g * sigma^-1.
GroupCovariances theoretical_cov(const Eigen::MatrixXd& sigma, double sigma2, const GroupAssignment& gamma);

// Blocks sigma2 * (sum_{i in g} X_i'X_i)^-1, the exact pooled-OLS variance
// under iid errors.
GroupCovariances theoretical_pooled_cov(const PanelDataset& d, double sigma2, const GroupAssignment& gamma);

// R bdiag(cov) R', symmetrized. Throws "hypothesis covariance singular".
Eigen::MatrixXd hypothesis_cov(const GroupCovariances& cov, const LinearHypothesis& h);

// The estimator's default pairing: Pesaran for TSK, Driscoll-Kraay otherwise.
GroupCovariances default_covariance(Method method, const PanelDataset& design, const GroupFit& fit,
                                    int bandwidth = 0);

GroupCovariances estimate_covariance(CovMethod cov_method, const PanelDataset& design, const GroupFit& fit,
                                     int bandwidth = 0, double sigma2 = 0.0);

}  // namespace gps
