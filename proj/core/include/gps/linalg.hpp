#pragma once

#include <Eigen/Dense>

namespace gps {

// Relative eigenvalue floor used for square roots and singularity checks.
inline constexpr double kEigenFloor = 1e-12;

struct SymmetricRoots {
    Eigen::MatrixXd sqrt;
    Eigen::MatrixXd inv_sqrt;
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
};

// Symmetric square root and inverse square root. Eigenvalues are floored
// at kEigenFloor * max eigenvalue before the inverse root is taken.
SymmetricRoots symmetric_roots(const Eigen::MatrixXd& a);

bool numerically_singular(const Eigen::MatrixXd& symmetric);

// Inverse of a symmetric positive definite matrix; throws NumericalError
// with `what` in the message when it is singular.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a, const char* what);

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a);

int matrix_rank(const Eigen::MatrixXd& a, double rel_tol = 1e-10);

}  // namespace gps
