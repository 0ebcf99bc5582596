#include "gps/variance.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

#include "gps/errors.hpp"
#include "gps/linalg.hpp"

namespace gps {

std::string to_string(CovMethod m) {
    switch (m) {
        case CovMethod::Pesaran: return "pesaran";
        case CovMethod::DriscollKraay: return "dk";
        case CovMethod::Theoretical: return "theory";
    }
    return "?";
}

CovMethod parse_cov_method(const std::string& s) {
    if (s == "pesaran") return CovMethod::Pesaran;
    if (s == "dk" || s == "driscoll-kraay") return CovMethod::DriscollKraay;
    if (s == "theory" || s == "theoretical") return CovMethod::Theoretical;
    throw ValidationError("unknown variance estimator '" + s + "' (expected pesaran, dk or theory)");
}

Eigen::MatrixXd GroupCovariances::block() const {
    const int k = dim();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups()) * k,
                                                static_cast<Eigen::Index>(groups()) * k);
    for (int g = 0; g < groups(); ++g)
        out.block(static_cast<Eigen::Index>(g) * k, static_cast<Eigen::Index>(g) * k, k, k) = per_group[g];
    return out;
}

GroupCovariances pesaran_group_cov(const CoefMatrix& b, const GroupAssignment& gamma) {
    if (gamma.n() != b.n()) throw ValidationError("assignment length does not match N");
    const auto sizes = gamma.sizes();
    for (int g = 0; g < gamma.groups(); ++g)
        if (sizes[g] < 2)
            throw ValidationError("Pesaran variance needs at least 2 units in group " + std::to_string(g + 1));
    const Eigen::MatrixXd means = group_means(b.values(), gamma);
    GroupCovariances out;
    out.method = CovMethod::Pesaran;
    out.per_group.assign(gamma.groups(), Eigen::MatrixXd::Zero(b.k(), b.k()));
    for (int i = 0; i < b.n(); ++i) {
        Eigen::VectorXd dev = (b.values().row(i) - means.row(gamma[i])).transpose();
        out.per_group[gamma[i]] += dev * dev.transpose();
    }
    for (int g = 0; g < gamma.groups(); ++g)
        out.per_group[g] = symmetrize(out.per_group[g]) / (static_cast<double>(sizes[g]) * (sizes[g] - 1));
    return out;
}

int default_bandwidth(int t) {
    return static_cast<int>(std::floor(4.0 * std::pow(t / 100.0, 2.0 / 9.0))) + 1;
}

double bartlett_weight(int lag, int bandwidth) {
    const double x = std::abs(lag) / static_cast<double>(bandwidth);
    return x <= 1.0 ? 1.0 - x : 0.0;
}

namespace {

Eigen::MatrixXd clip_negative(const Eigen::MatrixXd& a, int group) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
    Eigen::VectorXd ev = es.eigenvalues();
    if (ev.size() == 0 || ev.minCoeff() >= 0.0) return symmetrize(a);
    const double hi = std::max(ev.maxCoeff(), 0.0);
    if (ev.minCoeff() < -1e-10 * hi)
        spdlog::warn("Driscoll-Kraay block of group {} had eigenvalue {:.3g}; clipped to 0", group + 1, ev.minCoeff());
    ev = ev.cwiseMax(0.0);
    return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

}  // namespace

GroupCovariances driscoll_kraay_cov(const PanelDataset& d, const GroupAssignment& gamma,
                                    const Eigen::VectorXd& alpha, int bandwidth) {
    if (bandwidth < 1) throw ValidationError("bandwidth must be ≥ 1");
    if (gamma.n() != d.n()) throw ValidationError("assignment length does not match N");
    const int g_count = gamma.groups(), k = d.k(), t = d.t();
    if (alpha.size() != static_cast<Eigen::Index>(g_count) * k)
        throw ValidationError("alpha has length " + std::to_string(alpha.size()) + ", expected G*K = " +
                              std::to_string(g_count * k));
    const auto sizes = gamma.sizes();
    std::vector<Eigen::MatrixXd> gram(g_count, Eigen::MatrixXd::Zero(k, k));
    std::vector<Eigen::MatrixXd> scores(g_count, Eigen::MatrixXd::Zero(k, t));  // column s = S_s
    for (int i = 0; i < d.n(); ++i) {
        const int g = gamma[i];
        const Eigen::MatrixXd& x = d.x(i);
        Eigen::VectorXd u = d.y().row(i).transpose() - x * alpha.segment(static_cast<Eigen::Index>(g) * k, k);
        gram[g] += x.transpose() * x;
        scores[g] += x.transpose() * u.asDiagonal();
    }
    GroupCovariances out;
    out.method = CovMethod::DriscollKraay;
    for (int g = 0; g < g_count; ++g) {
        if (sizes[g] == 0) throw ValidationError("empty group " + std::to_string(g + 1));
        const double ng = sizes[g];
        Eigen::MatrixXd q = gram[g] / (ng * t);
        Eigen::MatrixXd q_inv = spd_inverse(q, "group Gram matrix");
        const Eigen::MatrixXd& s = scores[g];
        Eigen::MatrixXd meat = s * s.transpose();
        for (int lag = 1; lag < std::min(bandwidth, t); ++lag) {
            Eigen::MatrixXd c = s.leftCols(t - lag) * s.rightCols(t - lag).transpose();
            meat += bartlett_weight(lag, bandwidth) * (c + c.transpose());
        }
        meat /= static_cast<double>(t) * t * ng * ng;
        out.per_group.push_back(clip_negative(q_inv * meat * q_inv, g));
    }
    return out;
}

GroupCovariances theoretical_cov(const Eigen::MatrixXd& sigma, double sigma2, const GroupAssignment& gamma) {
    if (!(sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
    Eigen::MatrixXd inv = spd_inverse(sigma, "Sigma");
    const auto sizes = gamma.sizes();
    GroupCovariances out;
    out.method = CovMethod::Theoretical;
    for (int g = 0; g < gamma.groups(); ++g) {
        if (sizes[g] == 0) throw ValidationError("empty group " + std::to_string(g + 1));
        out.per_group.push_back(sigma2 / sizes[g] * inv);
    }
    return out;
}

GroupCovariances theoretical_pooled_cov(const PanelDataset& d, double sigma2, const GroupAssignment& gamma) {
    if (!(sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
    std::vector<Eigen::MatrixXd> gram(gamma.groups(), Eigen::MatrixXd::Zero(d.k(), d.k()));
    for (int i = 0; i < d.n(); ++i) gram[gamma[i]] += d.x(i).transpose() * d.x(i);
    GroupCovariances out;
    out.method = CovMethod::Theoretical;
    for (auto& g : gram) out.per_group.push_back(sigma2 * spd_inverse(g, "pooled Gram matrix"));
    return out;
}

Eigen::MatrixXd hypothesis_cov(const GroupCovariances& cov, const LinearHypothesis& h) {
    if (cov.groups() != h.groups() || cov.dim() != h.k())
        throw ValidationError("hypothesis dimensions (G=" + std::to_string(h.groups()) + ", K=" +
                              std::to_string(h.k()) + ") do not match covariance (G=" +
                              std::to_string(cov.groups()) + ", K=" + std::to_string(cov.dim()) + ")");
    const Eigen::MatrixXd& r = h.r_matrix();
    const int k = cov.dim();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(r.rows(), r.rows());
    for (int g = 0; g < cov.groups(); ++g) {
        auto rg = r.middleCols(static_cast<Eigen::Index>(g) * k, k);
        out += rg * cov.per_group[g] * rg.transpose();
    }
    out = symmetrize(out);
    if (numerically_singular(out)) throw NumericalError("hypothesis covariance singular");
    return out;
}

GroupCovariances estimate_covariance(CovMethod cov_method, const PanelDataset& design, const GroupFit& fit,
                                     int bandwidth, double sigma2) {
    switch (cov_method) {
        case CovMethod::Pesaran:
            if (fit.method != Method::TSK) throw ValidationError("Pesaran variance applies to TSK fits only");
            return pesaran_group_cov(unit_ols(design), fit.gamma);
        case CovMethod::DriscollKraay:
            return driscoll_kraay_cov(design, fit.gamma, fit.alpha,
                                      bandwidth > 0 ? bandwidth : default_bandwidth(design.t()));
        case CovMethod::Theoretical: {
            if (!(sigma2 > 0.0)) throw ValidationError("theory variance needs a positive sigma2");
            if (fit.method == Method::TSK) {
                Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(design.k(), design.k());
                for (int i = 0; i < design.n(); ++i) sigma += design.x(i).transpose() * design.x(i);
                return theoretical_cov(sigma / design.n(), sigma2, fit.gamma);
            }
            return theoretical_pooled_cov(design, sigma2, fit.gamma);
        }
    }
    throw ValidationError("unknown variance estimator");
}

GroupCovariances default_covariance(Method method, const PanelDataset& design, const GroupFit& fit, int bandwidth) {
    return estimate_covariance(method == Method::TSK ? CovMethod::Pesaran : CovMethod::DriscollKraay, design, fit,
                               bandwidth);
}

}  // namespace gps
