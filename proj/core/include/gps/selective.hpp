#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gps/estimators.hpp"
#include "gps/panel.hpp"
#include "gps/truncation.hpp"
#include "gps/variance.hpp"

namespace gps {

enum class PerturbationSpace { Coef, Obs };

// data(phi) = phi * v + w, unit-major. Coef space stacks the unit OLS
// coefficients (N*K); Obs space stacks the outcomes (N*T). At phi = sqrt(h)
// the original data is recovered.
struct Decomposition {
    PerturbationSpace space = PerturbationSpace::Coef;
    Eigen::VectorXd v;
    Eigen::VectorXd w;
    Eigen::VectorXd j_dir;
    double statistic = 0.0;
    int df = 0;
    int unit_dim = 0;
    bool degenerate = false;
    Eigen::VectorXd alpha;
    Eigen::VectorXd alpha_constrained;
    Eigen::MatrixXd cov_r;
    // Obs space only: the same perturbation written on the scores X_i'y_i.
    Eigen::VectorXd score_direction;
    Eigen::VectorXd score_invariant;

    double phi_obs() const;
    Eigen::VectorXd perturbed(double phi) const { return phi * v + w; }
    Eigen::MatrixXd perturbed_rows(double phi) const;  // N x unit_dim
};

double wald_statistic(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& cov_r, const LinearHypothesis& h);

// alpha - W^-1 R' (R W^-1 R')^-1 (R alpha - r).
Eigen::VectorXd constrained_alpha(const Eigen::VectorXd& alpha, const LinearHypothesis& h,
                                  const Eigen::MatrixXd& weight);

Decomposition decompose_tsk(const CoefMatrix& b, const GroupFit& fit, const LinearHypothesis& h,
                            const GroupCovariances& cov);
Decomposition decompose_pcr(const PanelDataset& design, const GroupFit& fit, const LinearHypothesis& h,
                            const GroupCovariances& cov);

std::vector<QuadraticConstraint> quadratic_constraints_tsk(const Decomposition& dec, const FitTrace& trace);
std::vector<QuadraticConstraint> quadratic_constraints_pcr(const Decomposition& dec, const FitTrace& trace,
                                                           const PanelDataset& design);

// Brute-force membership of each grid point in S: rebuild the data at phi
// and replay every recorded assignment step.
std::vector<bool> grid_truncation_oracle_tsk(const Decomposition& dec, const FitTrace& trace,
                                             const std::vector<double>& grid);
std::vector<bool> grid_truncation_oracle_pcr(const Decomposition& dec, const FitTrace& trace,
                                             const PanelDataset& design, const std::vector<double>& grid);

struct TestResult {
    Method method = Method::PCR;
    CovMethod cov_method = CovMethod::DriscollKraay;
    double statistic = 0.0;
    int df = 0;
    double naive_p = 1.0;
    double selective_p = 1.0;
    TruncationSet truncation;
    Eigen::MatrixXd r_matrix;
    Eigen::VectorXd r_vec;
    int iterations = 0;
    int constraint_count = 0;
    double truncation_mass = 1.0;
    bool degenerate = false;
};

double naive_pvalue(double statistic, int df);

// Hypotheses are stated on the slope block; for GFE fits they are padded
// over the dummy coefficients automatically.
TestResult selective_test(const GroupFit& fit, const CoefMatrix& b, const LinearHypothesis& h,
                          const GroupCovariances& cov);
TestResult selective_test(const GroupFit& fit, const PanelDataset& design, const LinearHypothesis& h,
                          const GroupCovariances& cov);

// Reconstruction residual max|data(sqrt h) - data| / max(1, max|data|).
double reconstruction_error(const Decomposition& dec, const Eigen::VectorXd& data);

// max|X_i' y_i(phi) - s_i(phi)| relative to the score scale, Obs space only.
double score_identity_error(const Decomposition& dec, const PanelDataset& design, double phi);

// Matrices that vanish exactly when the restriction estimate is
// independent of the invariant part, under a common unit Gram matrix.
Eigen::MatrixXd tsk_independence_product(const GroupAssignment& gamma, const Eigen::MatrixXd& sigma,
                                         const LinearHypothesis& h);
Eigen::MatrixXd pcr_independence_product(const PanelDataset& d, const GroupAssignment& gamma,
                                         const LinearHypothesis& h);

}  // namespace gps
