#include "gps/selective.hpp"

#include <cmath>
#include <unsupported/Eigen/KroneckerProduct>

#include "gps/chi_squared.hpp"
#include "gps/errors.hpp"
#include "gps/linalg.hpp"

namespace gps {

namespace {

Eigen::VectorXd stack_rows(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd t = m.transpose();
    return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

Eigen::MatrixXd unstack_rows(const Eigen::VectorXd& v, int cols) {
    Eigen::MatrixXd t = Eigen::Map<const Eigen::MatrixXd>(v.data(), cols, v.size() / cols);
    return t.transpose();
}

Eigen::VectorXd segment(const Eigen::VectorXd& v, int g, int k) {
    return v.segment(static_cast<Eigen::Index>(g) * k, k);
}

Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& rhs, const char* what) {
    if (numerically_singular(a)) throw NumericalError(what);
    return symmetrize(a).ldlt().solve(rhs);
}

// Unit direction of the standardized restriction deviation. Returns false
// when the deviation is zero (h = 0).
bool restriction_direction(const Eigen::VectorXd& dev, const Eigen::MatrixXd& cov_r, Eigen::VectorXd& j,
                           Eigen::MatrixXd& cov_sqrt) {
    SymmetricRoots roots = symmetric_roots(cov_r);
    cov_sqrt = roots.sqrt;
    Eigen::VectorXd z = roots.inv_sqrt * dev;
    const double norm = z.norm();
    if (!(norm > 0.0)) {
        j = Eigen::VectorXd::Unit(dev.size(), 0);
        return false;
    }
    j = z / norm;
    return true;
}

LinearHypothesis fit_hypothesis(const GroupFit& fit, const LinearHypothesis& h) {
    if (h.groups() != fit.groups)
        throw ValidationError("hypothesis is for G=" + std::to_string(h.groups()) + " but the fit has G=" +
                              std::to_string(fit.groups));
    if (h.k() == fit.coef_dim) return h;
    if (h.k() == fit.k) return h.embedded(fit.coef_dim);
    throw ValidationError("hypothesis has K=" + std::to_string(h.k()) + " but the fit has K=" +
                          std::to_string(fit.k));
}

void quadratic_pieces(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double& a, double& b, double& c) {
    a = p.squaredNorm();
    b = 2.0 * p.dot(q);
    c = q.squaredNorm();
}

// Constraints for one iteration given per-(unit, group) residual pieces:
// the residual of unit i under group g is phi * P[i][g] + Q[i][g].
template <class Piece>
void append_constraints(std::vector<QuadraticConstraint>& out, int m, const GroupAssignment& cur, int groups,
                        Piece&& piece) {
    const int n = cur.n();
    std::vector<double> a(groups), b(groups), c(groups);
    for (int i = 0; i < n; ++i) {
        for (int g = 0; g < groups; ++g) {
            auto [p, q] = piece(i, g);
            quadratic_pieces(p, q, a[g], b[g], c[g]);
        }
        const int k = cur[i];
        for (int g = 0; g < groups; ++g)
            if (g != k) out.push_back({a[k] - a[g], b[k] - b[g], c[k] - c[g], m, i, g});
    }
}

}  // namespace

double Decomposition::phi_obs() const { return std::sqrt(std::max(statistic, 0.0)); }

Eigen::MatrixXd Decomposition::perturbed_rows(double phi) const { return unstack_rows(perturbed(phi), unit_dim); }

double wald_statistic(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& cov_r, const LinearHypothesis& h) {
    if (alpha.size() != h.r_matrix().cols()) throw ValidationError("alpha length does not match R");
    if (cov_r.rows() != h.df() || cov_r.cols() != h.df()) throw ValidationError("cov_R must be r x r");
    Eigen::VectorXd dev = h.r_matrix() * alpha - h.r_vec();
    const Eigen::VectorXd sol = solve_spd(cov_r, dev, "hypothesis covariance singular");
    const double stat = dev.dot(sol);
    return std::max(stat, 0.0);
}

Eigen::VectorXd constrained_alpha(const Eigen::VectorXd& alpha, const LinearHypothesis& h,
                                  const Eigen::MatrixXd& weight) {
    const Eigen::MatrixXd& r = h.r_matrix();
    if (weight.rows() != alpha.size() || weight.cols() != alpha.size() || alpha.size() != r.cols())
        throw ValidationError("weight, alpha and R dimensions disagree");
    Eigen::MatrixXd winv_rt = solve_spd(weight, r.transpose(), "constraint weight singular");
    Eigen::MatrixXd bracket = r * winv_rt;
    return alpha - winv_rt * solve_spd(bracket, r * alpha - h.r_vec(), "constraint bracket singular");
}

Decomposition decompose_tsk(const CoefMatrix& b, const GroupFit& fit, const LinearHypothesis& h,
                            const GroupCovariances& cov) {
    if (fit.method != Method::TSK) throw ValidationError("decompose_tsk needs a TSK fit");
    if (b.n() != fit.gamma.n() || b.k() != fit.k) throw ValidationError("coefficients do not match the fit");
    const LinearHypothesis hyp = fit_hypothesis(fit, h);
    const int n = b.n(), k = b.k();
    const Eigen::MatrixXd& r = hyp.r_matrix();

    Decomposition dec;
    dec.space = PerturbationSpace::Coef;
    dec.unit_dim = k;
    dec.df = hyp.df();
    dec.alpha = stack_rows(group_means(b.values(), fit.gamma));
    dec.cov_r = hypothesis_cov(cov, hyp);
    dec.statistic = wald_statistic(dec.alpha, dec.cov_r, hyp);

    const Eigen::VectorXd dev = r * dec.alpha - hyp.r_vec();
    Eigen::MatrixXd cov_sqrt;
    dec.degenerate = !restriction_direction(dev, dec.cov_r, dec.j_dir, cov_sqrt) || dec.statistic == 0.0;

    // V R' (R V R')^-1, V the block covariance of the group means.
    const Eigen::MatrixXd v_rt = cov.block() * r.transpose();
    const Eigen::MatrixXd gain = solve_spd(dec.cov_r, v_rt.transpose(), "hypothesis covariance singular").transpose();
    dec.alpha_constrained = dec.alpha - gain * dev;
    const Eigen::VectorXd u = dec.degenerate ? Eigen::VectorXd::Zero(dec.alpha.size())
                                             : Eigen::VectorXd(gain * (cov_sqrt * dec.j_dir));

    dec.v.resize(static_cast<Eigen::Index>(n) * k);
    dec.w.resize(static_cast<Eigen::Index>(n) * k);
    for (int i = 0; i < n; ++i) {
        const int g = fit.gamma[i];
        dec.v.segment(static_cast<Eigen::Index>(i) * k, k) = segment(u, g, k);
        dec.w.segment(static_cast<Eigen::Index>(i) * k, k) =
            segment(dec.alpha_constrained, g, k) + (b.row(i) - segment(dec.alpha, g, k));
    }
    if (dec.degenerate) dec.w = b.stacked();
    return dec;
}

Decomposition decompose_pcr(const PanelDataset& design, const GroupFit& fit, const LinearHypothesis& h,
                            const GroupCovariances& cov) {
    if (fit.method == Method::TSK) throw ValidationError("decompose_pcr needs a PCR or GFE fit");
    if (design.n() != fit.gamma.n() || design.k() != fit.coef_dim)
        throw ValidationError("panel does not match the fit (N=" + std::to_string(design.n()) + ", K=" +
                              std::to_string(design.k()) + " vs K'=" + std::to_string(fit.coef_dim) + ")");
    const LinearHypothesis hyp = fit_hypothesis(fit, h);
    const int n = design.n(), t = design.t(), k = design.k(), groups = fit.groups;
    const Eigen::MatrixXd& r = hyp.r_matrix();
    const GroupAssignment& gamma = fit.gamma;

    std::vector<Eigen::MatrixXd> unit_gram(n);
    std::vector<Eigen::MatrixXd> group_gram(groups, Eigen::MatrixXd::Zero(k, k));
    std::vector<Eigen::VectorXd> group_score(groups, Eigen::VectorXd::Zero(k));
    Eigen::MatrixXd scores(n, k);
    for (int i = 0; i < n; ++i) {
        unit_gram[i] = design.x(i).transpose() * design.x(i);
        scores.row(i) = (design.x(i).transpose() * design.y().row(i).transpose()).transpose();
        group_gram[gamma[i]] += unit_gram[i];
        group_score[gamma[i]] += scores.row(i).transpose();
    }
    Eigen::MatrixXd gram_inv = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups) * k,
                                                     static_cast<Eigen::Index>(groups) * k);
    Decomposition dec;
    dec.alpha.resize(static_cast<Eigen::Index>(groups) * k);
    for (int g = 0; g < groups; ++g) {
        Eigen::MatrixXd inv = spd_inverse(group_gram[g], "pooled Gram matrix");
        gram_inv.block(static_cast<Eigen::Index>(g) * k, static_cast<Eigen::Index>(g) * k, k, k) = inv;
        dec.alpha.segment(static_cast<Eigen::Index>(g) * k, k) = inv * group_score[g];
    }

    dec.space = PerturbationSpace::Obs;
    dec.unit_dim = t;
    dec.df = hyp.df();
    dec.cov_r = hypothesis_cov(cov, hyp);
    dec.statistic = wald_statistic(dec.alpha, dec.cov_r, hyp);
    const Eigen::VectorXd dev = r * dec.alpha - hyp.r_vec();
    Eigen::MatrixXd cov_sqrt;
    dec.degenerate = !restriction_direction(dev, dec.cov_r, dec.j_dir, cov_sqrt) || dec.statistic == 0.0;

    // G^-1 R' (R G^-1 R')^-1 with G the pooled Gram of the fitted assignment.
    const Eigen::MatrixXd ginv_rt = gram_inv * r.transpose();
    const Eigen::MatrixXd gain =
        solve_spd(r * ginv_rt, ginv_rt.transpose(), "restriction bracket singular").transpose();
    dec.alpha_constrained = dec.alpha - gain * dev;
    const Eigen::VectorXd shift = gain * dev;
    const Eigen::VectorXd u = dec.degenerate ? Eigen::VectorXd::Zero(dec.alpha.size())
                                             : Eigen::VectorXd(gain * (cov_sqrt * dec.j_dir));

    dec.v.resize(static_cast<Eigen::Index>(n) * t);
    dec.w.resize(static_cast<Eigen::Index>(n) * t);
    dec.score_direction.resize(static_cast<Eigen::Index>(n) * k);
    dec.score_invariant.resize(static_cast<Eigen::Index>(n) * k);
    for (int i = 0; i < n; ++i) {
        const int g = gamma[i];
        const Eigen::MatrixXd& x = design.x(i);
        Eigen::VectorXd resid = design.y().row(i).transpose() - x * segment(dec.alpha, g, k);
        dec.v.segment(static_cast<Eigen::Index>(i) * t, t) = x * segment(u, g, k);
        dec.w.segment(static_cast<Eigen::Index>(i) * t, t) = x * segment(dec.alpha_constrained, g, k) + resid;
        dec.score_direction.segment(static_cast<Eigen::Index>(i) * k, k) = unit_gram[i] * segment(u, g, k);
        dec.score_invariant.segment(static_cast<Eigen::Index>(i) * k, k) =
            scores.row(i).transpose() - unit_gram[i] * segment(shift, g, k);
    }
    if (dec.degenerate) {
        dec.w = design.stacked_y();
        dec.score_invariant = stack_rows(scores);
    }
    return dec;
}

std::vector<QuadraticConstraint> quadratic_constraints_tsk(const Decomposition& dec, const FitTrace& trace) {
    if (dec.space != PerturbationSpace::Coef) throw ValidationError("TSK constraints need a coefficient-space decomposition");
    std::vector<QuadraticConstraint> out;
    if (trace.assignments.empty()) return out;
    const int groups = trace.assignments.front().groups();
    const Eigen::MatrixXd vr = unstack_rows(dec.v, dec.unit_dim);
    const Eigen::MatrixXd wr = unstack_rows(dec.w, dec.unit_dim);
    out.reserve(static_cast<std::size_t>(trace.iterations()) * vr.rows() * (groups - 1));
    for (int m = 1; m <= trace.iterations(); ++m) {
        const GroupAssignment& prev = trace.assignments[m - 1];
        const Eigen::MatrixXd cv = group_means(vr, prev);
        const Eigen::MatrixXd cw = group_means(wr, prev);
        append_constraints(out, m, trace.assignments[m], groups, [&](int i, int g) {
            return std::pair<Eigen::VectorXd, Eigen::VectorXd>((vr.row(i) - cv.row(g)).transpose(),
                                                               (wr.row(i) - cw.row(g)).transpose());
        });
    }
    return out;
}

std::vector<QuadraticConstraint> quadratic_constraints_pcr(const Decomposition& dec, const FitTrace& trace,
                                                           const PanelDataset& design) {
    if (dec.space != PerturbationSpace::Obs) throw ValidationError("PCR constraints need an observation-space decomposition");
    std::vector<QuadraticConstraint> out;
    if (trace.assignments.empty()) return out;
    const int groups = trace.assignments.front().groups();
    const int n = design.n(), t = design.t(), k = design.k();
    if (dec.v.size() != static_cast<Eigen::Index>(n) * t) throw ValidationError("decomposition does not match panel");
    const Eigen::MatrixXd vr = unstack_rows(dec.v, t);
    const Eigen::MatrixXd wr = unstack_rows(dec.w, t);
    std::vector<Eigen::MatrixXd> unit_gram(n);
    Eigen::MatrixXd xv(n, k), xw(n, k);
    for (int i = 0; i < n; ++i) {
        const Eigen::MatrixXd& x = design.x(i);
        unit_gram[i] = x.transpose() * x;
        xv.row(i) = (x.transpose() * vr.row(i).transpose()).transpose();
        xw.row(i) = (x.transpose() * wr.row(i).transpose()).transpose();
    }
    out.reserve(static_cast<std::size_t>(trace.iterations()) * n * (groups - 1));
    for (int m = 1; m <= trace.iterations(); ++m) {
        const GroupAssignment& prev = trace.assignments[m - 1];
        std::vector<Eigen::MatrixXd> gram(groups, Eigen::MatrixXd::Zero(k, k));
        Eigen::MatrixXd sv = Eigen::MatrixXd::Zero(groups, k), sw = Eigen::MatrixXd::Zero(groups, k);
        for (int i = 0; i < n; ++i) {
            gram[prev[i]] += unit_gram[i];
            sv.row(prev[i]) += xv.row(i);
            sw.row(prev[i]) += xw.row(i);
        }
        Eigen::MatrixXd cv(groups, k), cw(groups, k);
        for (int g = 0; g < groups; ++g) {
            if (numerically_singular(gram[g])) throw NumericalError("pooled Gram matrix singular in recorded trace");
            Eigen::LDLT<Eigen::MatrixXd> ldlt(gram[g]);
            cv.row(g) = ldlt.solve(sv.row(g).transpose()).transpose();
            cw.row(g) = ldlt.solve(sw.row(g).transpose()).transpose();
        }
        // Residual pieces for every unit under every group.
        std::vector<Eigen::MatrixXd> pv(n), pw(n);
        for (int i = 0; i < n; ++i) {
            pv[i] = (-design.x(i) * cv.transpose()).colwise() + vr.row(i).transpose();
            pw[i] = (-design.x(i) * cw.transpose()).colwise() + wr.row(i).transpose();
        }
        append_constraints(out, m, trace.assignments[m], groups, [&](int i, int g) {
            return std::pair<Eigen::VectorXd, Eigen::VectorXd>(pv[i].col(g), pw[i].col(g));
        });
    }
    return out;
}

std::vector<bool> grid_truncation_oracle_tsk(const Decomposition& dec, const FitTrace& trace,
                                             const std::vector<double>& grid) {
    std::vector<bool> mask;
    mask.reserve(grid.size());
    for (double phi : grid) {
        const Eigen::MatrixXd rows = dec.perturbed_rows(phi);
        bool member = true;
        for (int m = 1; m <= trace.iterations() && member; ++m) {
            const GroupAssignment& prev = trace.assignments[m - 1];
            member = assign_groups(tsk_costs(rows, group_means(rows, prev)), prev) == trace.assignments[m];
        }
        mask.push_back(member);
    }
    return mask;
}

std::vector<bool> grid_truncation_oracle_pcr(const Decomposition& dec, const FitTrace& trace,
                                             const PanelDataset& design, const std::vector<double>& grid) {
    std::vector<bool> mask;
    mask.reserve(grid.size());
    for (double phi : grid) {
        const PanelDataset d = design.with_outcome(dec.perturbed_rows(phi));
        bool member = true;
        for (int m = 1; m <= trace.iterations() && member; ++m) {
            const GroupAssignment& prev = trace.assignments[m - 1];
            auto centers = pooled_group_ols(d, prev);
            member = centers && assign_groups(pcr_costs(d, *centers), prev) == trace.assignments[m];
        }
        mask.push_back(member);
    }
    return mask;
}

double naive_pvalue(double statistic, int df) { return chi2_sf(statistic, df); }

namespace {

TestResult finish_test(const GroupFit& fit, const LinearHypothesis& h, const GroupCovariances& cov,
                       const Decomposition& dec, const std::vector<QuadraticConstraint>& constraints) {
    TestResult res;
    res.method = fit.method;
    res.cov_method = cov.method;
    res.statistic = dec.statistic;
    res.df = dec.df;
    res.r_matrix = h.r_matrix();
    res.r_vec = h.r_vec();
    res.iterations = fit.trace.iterations();
    res.constraint_count = static_cast<int>(constraints.size());
    res.degenerate = dec.degenerate;
    res.naive_p = naive_pvalue(dec.statistic, dec.df);
    res.truncation = feasible_set(constraints, dec.phi_obs());
    res.truncation_mass = truncation_mass(dec.df, res.truncation);
    res.selective_p = dec.degenerate ? 1.0 : truncated_chi2_pvalue(dec.statistic, dec.df, res.truncation);
    return res;
}

}  // namespace

TestResult selective_test(const GroupFit& fit, const CoefMatrix& b, const LinearHypothesis& h,
                          const GroupCovariances& cov) {
    const Decomposition dec = decompose_tsk(b, fit, h, cov);
    return finish_test(fit, h, cov, dec, quadratic_constraints_tsk(dec, fit.trace));
}

TestResult selective_test(const GroupFit& fit, const PanelDataset& design, const LinearHypothesis& h,
                          const GroupCovariances& cov) {
    if (fit.method == Method::TSK) return selective_test(fit, unit_ols(design), h, cov);
    const Decomposition dec = decompose_pcr(design, fit, h, cov);
    return finish_test(fit, h, cov, dec, quadratic_constraints_pcr(dec, fit.trace, design));
}

double reconstruction_error(const Decomposition& dec, const Eigen::VectorXd& data) {
    if (data.size() != dec.v.size()) throw ValidationError("data length does not match decomposition");
    const double scale = std::max(1.0, data.cwiseAbs().maxCoeff());
    return (dec.perturbed(dec.phi_obs()) - data).cwiseAbs().maxCoeff() / scale;
}

double score_identity_error(const Decomposition& dec, const PanelDataset& design, double phi) {
    if (dec.space != PerturbationSpace::Obs) throw ValidationError("score identity applies to the observation space");
    const int n = design.n(), t = design.t(), k = design.k();
    const Eigen::VectorXd y = dec.perturbed(phi);
    const Eigen::VectorXd s = phi * dec.score_direction + dec.score_invariant;
    double err = 0.0, scale = 1.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd xy = design.x(i).transpose() * y.segment(static_cast<Eigen::Index>(i) * t, t);
        Eigen::VectorXd si = s.segment(static_cast<Eigen::Index>(i) * k, k);
        err = std::max(err, (xy - si).cwiseAbs().maxCoeff());
        scale = std::max(scale, xy.cwiseAbs().maxCoeff());
    }
    return err / scale;
}

Eigen::MatrixXd tsk_independence_product(const GroupAssignment& gamma, const Eigen::MatrixXd& sigma,
                                         const LinearHypothesis& h) {
    const int n = gamma.n(), k = static_cast<int>(sigma.rows()), groups = gamma.groups();
    const Eigen::MatrixXd& r = h.r_matrix();
    const Eigen::MatrixXd dd = group_dummy_matrix(gamma, k).kron;
    const Eigen::MatrixXd dtd_inv = spd_inverse(dd.transpose() * dd, "D'D");
    const Eigen::MatrixXd sigma_inv = spd_inverse(sigma, "Sigma");
    const Eigen::MatrixXd i_sigma_inv = Eigen::kroneckerProduct(Eigen::MatrixXd::Identity(n, n), sigma_inv);
    const Eigen::MatrixXd i_sigma = Eigen::kroneckerProduct(Eigen::MatrixXd::Identity(n, n), sigma);
    const Eigen::MatrixXd n_sigma = dd.transpose() * i_sigma * dd;
    const Eigen::MatrixXd n_inv = spd_inverse(n_sigma, "N_Sigma");
    const Eigen::MatrixXd bracket_inv = spd_inverse(r * n_inv * r.transpose(), "restriction bracket");
    const Eigen::MatrixXd igk = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(groups) * k,
                                                          static_cast<Eigen::Index>(groups) * k);
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n) * k, static_cast<Eigen::Index>(n) * k) -
                              dd * (igk - n_inv * r.transpose() * bracket_inv * r) * dtd_inv * dd.transpose() -
                              i_sigma_inv * dd * dtd_inv * n_sigma * dtd_inv * dd.transpose();
    return a * i_sigma_inv * dd * dtd_inv * r.transpose();
}

Eigen::MatrixXd pcr_independence_product(const PanelDataset& d, const GroupAssignment& gamma,
                                         const LinearHypothesis& h) {
    const int n = d.n(), k = d.k();
    const Eigen::MatrixXd& r = h.r_matrix();
    Eigen::MatrixXd xx = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * k, static_cast<Eigen::Index>(n) * k);
    for (int i = 0; i < n; ++i)
        xx.block(static_cast<Eigen::Index>(i) * k, static_cast<Eigen::Index>(i) * k, k, k) = d.x(i).transpose() * d.x(i);
    const Eigen::MatrixXd dd = group_dummy_matrix(gamma, k).kron;
    const Eigen::MatrixXd xx_g = xx * dd;
    const Eigen::MatrixXd g_inv = spd_inverse(dd.transpose() * xx * dd, "pooled Gram matrix");
    const Eigen::MatrixXd bracket_inv = spd_inverse(r * g_inv * r.transpose(), "restriction bracket");
    const Eigen::MatrixXd left = xx_g * g_inv * r.transpose() * bracket_inv * r * g_inv * dd.transpose() -
                                 Eigen::MatrixXd::Identity(xx.rows(), xx.cols());
    return left * xx * dd * g_inv * r.transpose();
}

}  // namespace gps
