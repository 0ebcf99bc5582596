#include "gps/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gps/errors.hpp"

namespace gps {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) {
    return 0.5 * (a + a.transpose());
}

SymmetricRoots symmetric_roots(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    SymmetricRoots out;
    out.min_eigenvalue = ev.size() ? ev.minCoeff() : 0.0;
    out.max_eigenvalue = ev.size() ? ev.maxCoeff() : 0.0;
    const double floor = kEigenFloor * std::max(out.max_eigenvalue, 0.0);
    Eigen::VectorXd root(ev.size()), inv_root(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        const double lam = std::max(ev[i], floor);
        root[i] = std::sqrt(std::max(ev[i], 0.0));
        inv_root[i] = lam > 0.0 ? 1.0 / std::sqrt(lam) : 0.0;
    }
    const Eigen::MatrixXd& u = es.eigenvectors();
    out.sqrt = u * root.asDiagonal() * u.transpose();
    out.inv_sqrt = u * inv_root.asDiagonal() * u.transpose();
    return out;
}

bool numerically_singular(const Eigen::MatrixXd& symmetric) {
    if (symmetric.size() == 0) return true;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(symmetric), Eigen::EigenvaluesOnly);
    const double hi = es.eigenvalues().maxCoeff();
    const double lo = es.eigenvalues().minCoeff();
    return !(hi > 0.0) || lo < kEigenFloor * hi;
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a, const char* what) {
    if (numerically_singular(a)) throw NumericalError(std::string(what) + " singular");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(symmetrize(a));
    Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
    return symmetrize(inv);
}

int matrix_rank(const Eigen::MatrixXd& a, double rel_tol) {
    if (a.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& s = svd.singularValues();
    const double top = s.size() ? s[0] : 0.0;
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s[i] > rel_tol * top && s[i] > 0.0) ++rank;
    return rank;
}

}  // namespace gps
