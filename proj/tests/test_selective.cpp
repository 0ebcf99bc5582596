#include <gtest/gtest.h>

#include <random>

#include "gps/chi_squared.hpp"
#include "gps/errors.hpp"
#include "gps/selective.hpp"
#include "support.hpp"

using namespace gps;

namespace {

LinearHypothesis equal_slopes(int groups = 2, int k = 2) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(k, groups * k);
    for (int j = 0; j < k; ++j) {
        r(j, j) = 1;
        r(j, k + j) = -1;
    }
    return LinearHypothesis(r, Eigen::VectorXd::Zero(k), groups, k);
}

FitOptions opts(int groups, int restarts, std::uint64_t seed) {
    FitOptions o;
    o.groups = groups;
    o.restarts = restarts;
    o.seed = seed;
    return o;
}

struct Instance {
    PanelDataset design;
    GroupFit fit;
};

Instance pcr_instance(std::uint64_t seed, int n = 16, int t = 6, int groups = 2, double gap = 0.7) {
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd coef = fixtures::random_matrix(groups, 2, rng, gap);
    const PanelDataset d = fixtures::grouped_panel(fixtures::block_labels(n, groups), coef, t, 1.0, seed + 1);
    GroupFit fit = pcr_fit(d, opts(groups, 1, seed));
    return {d, fit};
}

}  // namespace

TEST(Wald, ExactNullIsZero) {
    Eigen::VectorXd alpha(4);
    alpha << 1, 2, 1, 2;
    EXPECT_DOUBLE_EQ(wald_statistic(alpha, Eigen::MatrixXd::Identity(2, 2), equal_slopes()), 0.0);
}

TEST(Wald, ScalarExample) {
    Eigen::MatrixXd r(1, 2);
    r << 1, -1;
    const LinearHypothesis h(r, Eigen::VectorXd::Zero(1), 2, 1);
    EXPECT_DOUBLE_EQ(wald_statistic(Eigen::Vector2d(3, 1), Eigen::MatrixXd::Constant(1, 1, 2.0), h), 2.0);
}

TEST(Wald, ScaleInvariance) {
    std::mt19937_64 rng(2);
    GroupCovariances cov;
    for (int g = 0; g < 2; ++g) {
        const Eigen::MatrixXd a = fixtures::random_matrix(2, 2, rng);
        cov.per_group.push_back(a * a.transpose() + Eigen::MatrixXd::Identity(2, 2));
    }
    const Eigen::VectorXd alpha = fixtures::random_matrix(4, 1, rng);
    const LinearHypothesis h = equal_slopes();
    const LinearHypothesis scaled(-3.5 * h.r_matrix(), -3.5 * h.r_vec(), 2, 2);
    EXPECT_NEAR(wald_statistic(alpha, hypothesis_cov(cov, h), h), wald_statistic(alpha, hypothesis_cov(cov, scaled), scaled), 1e-10);
}

TEST(ConstrainedAlpha, FeasiblePointIsFixed) {
    Eigen::VectorXd alpha(4);
    alpha << 1, 2, 1, 2;
    EXPECT_LT((constrained_alpha(alpha, equal_slopes(), Eigen::MatrixXd::Identity(4, 4)) - alpha).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ConstrainedAlpha, HandExamples) {
    Eigen::MatrixXd r(1, 2);
    r << 1, -1;
    const LinearHypothesis h(r, Eigen::VectorXd::Zero(1), 2, 1);
    const Eigen::VectorXd a = constrained_alpha(Eigen::Vector2d(3, 1), h, Eigen::MatrixXd::Identity(2, 2));
    EXPECT_NEAR(a(0), 2.0, 1e-15);
    EXPECT_NEAR(a(1), 2.0, 1e-15);
    const Eigen::VectorXd b = constrained_alpha(Eigen::Vector2d(3, 1), h, Eigen::Vector2d(3, 1).asDiagonal().toDenseMatrix());
    EXPECT_NEAR(b(0), 2.5, 1e-15);
    EXPECT_NEAR(b(1), 2.5, 1e-15);
}

TEST(DecomposeTsk, ReconstructionAndFeasibility) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed);
        const PanelDataset d = fixtures::grouped_panel(fixtures::block_labels(12, 2), fixtures::random_matrix(2, 2, rng), 8, 1.0, seed);
        const CoefMatrix b = unit_ols(d);
        const GroupFit fit = tsk_fit(b, opts(2, 1, seed));
        const GroupCovariances cov = pesaran_group_cov(b, fit.gamma);
        const Decomposition dec = decompose_tsk(b, fit, equal_slopes(), cov);
        EXPECT_LT(reconstruction_error(dec, b.stacked()), 1e-8);
        for (const auto& q : quadratic_constraints_tsk(dec, fit.trace))
            EXPECT_LE(q.value(dec.phi_obs()), 1e-9 * std::max(1.0, std::abs(q.c)));
        const TestResult res = selective_test(fit, b, equal_slopes(), cov);
        EXPECT_TRUE(res.truncation.contains(dec.phi_obs(), 1e-9));
        EXPECT_GE(res.selective_p, 0.0);
        EXPECT_LE(res.selective_p, 1.0);
    }
}

TEST(DecomposeTsk, ExactNullIsDegenerate) {
    // Two groups with identical centers: R alpha = 0 holds exactly.
    Eigen::MatrixXd b(4, 2);
    b << 0, 0, 2, 2, 1, 3, 1, -1;
    const CoefMatrix coefs(b);
    FitTrace trace;
    const GroupAssignment gamma({0, 0, 1, 1}, 2);
    trace.assignments = {gamma, gamma};
    GroupFit fit;
    fit.method = Method::TSK;
    fit.groups = 2;
    fit.k = fit.coef_dim = 2;
    fit.gamma = gamma;
    fit.trace = trace;
    fit.alpha = Eigen::Vector4d(1, 1, 1, 1);
    const GroupCovariances cov = pesaran_group_cov(coefs, gamma);
    const Decomposition dec = decompose_tsk(coefs, fit, equal_slopes(), cov);
    EXPECT_TRUE(dec.degenerate);
    EXPECT_EQ(dec.v.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(dec.w, coefs.stacked());
    for (const auto& q : quadratic_constraints_tsk(dec, trace)) {
        EXPECT_EQ(q.a, 0.0);
        EXPECT_EQ(q.b, 0.0);
        EXPECT_LE(q.c, 0.0);
    }
    EXPECT_DOUBLE_EQ(selective_test(fit, coefs, equal_slopes(), cov).selective_p, 1.0);
}

TEST(DecomposePcr, ExactNullIsDegenerate) {
    // Group 2 repeats group 1 unit for unit, so both pooled fits agree bitwise.
    Eigen::MatrixXd coef(1, 2);
    coef << 1, 2;
    const PanelDataset half = fixtures::grouped_panel({0, 0, 0}, coef, 4, 0.5, 8);
    Eigen::MatrixXd y(6, 4);
    y << half.y(), half.y();
    std::vector<Eigen::MatrixXd> x = half.x();
    x.insert(x.end(), half.x().begin(), half.x().end());
    const PanelDataset d(y, x);
    const GroupAssignment gamma({0, 0, 0, 1, 1, 1}, 2);
    GroupFit fit;
    fit.method = Method::PCR;
    fit.groups = 2;
    fit.k = fit.coef_dim = 2;
    fit.gamma = gamma;
    fit.trace.assignments = {gamma, gamma};
    const Eigen::MatrixXd centers = *pooled_group_ols(d, gamma);
    fit.alpha = Eigen::Vector4d(centers(0, 0), centers(0, 1), centers(1, 0), centers(1, 1));
    const GroupCovariances cov = theoretical_pooled_cov(d, 1.0, gamma);
    const TestResult res = selective_test(fit, d, equal_slopes(), cov);
    EXPECT_EQ(res.statistic, 0.0);
    EXPECT_TRUE(res.degenerate);
    EXPECT_DOUBLE_EQ(res.selective_p, 1.0);
    const Decomposition dec = decompose_pcr(d, fit, equal_slopes(), cov);
    EXPECT_EQ(dec.w, d.stacked_y());
}

TEST(DecomposePcr, ReconstructionAndScoreIdentity) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Instance inst = pcr_instance(seed);
        const GroupCovariances cov = default_covariance(Method::PCR, inst.design, inst.fit);
        const Decomposition dec = decompose_pcr(inst.design, inst.fit, equal_slopes(), cov);
        EXPECT_LT(reconstruction_error(dec, inst.design.stacked_y()), 1e-8);
        for (double phi : {0.0, 0.5 * dec.phi_obs(), dec.phi_obs(), 3.0})
            EXPECT_LT(score_identity_error(dec, inst.design, phi), 1e-8);
    }
}

TEST(DecomposePcr, ZeroPhiCoefficientIsWOnlySsrDifference) {
    const Instance inst = pcr_instance(5);
    const GroupCovariances cov = default_covariance(Method::PCR, inst.design, inst.fit);
    const Decomposition dec = decompose_pcr(inst.design, inst.fit, equal_slopes(), cov);
    const auto constraints = quadratic_constraints_pcr(dec, inst.fit.trace, inst.design);
    const PanelDataset w_only = inst.design.with_outcome(dec.perturbed_rows(0.0));
    for (const auto& q : constraints) {
        const GroupAssignment& prev = inst.fit.trace.assignments[q.m - 1];
        const int cur = inst.fit.trace.assignments[q.m][q.i];
        const Eigen::MatrixXd centers = *pooled_group_ols(w_only, prev);
        auto ssr = [&](int g) {
            return (w_only.y_unit(q.i) - w_only.x(q.i) * centers.row(g).transpose()).squaredNorm();
        };
        EXPECT_NEAR(q.c, ssr(cur) - ssr(q.g), 1e-9 * std::max(1.0, ssr(cur)));
        EXPECT_LE(q.value(dec.phi_obs()), 1e-8 * std::max(1.0, ssr(cur)));
    }
}

TEST(Constraints, SingleGroupHasNone) {
    std::mt19937_64 rng(3);
    const PanelDataset d = fixtures::grouped_panel(std::vector<int>(8, 0), fixtures::random_matrix(1, 2, rng), 6, 1.0, 4);
    Eigen::MatrixXd r(1, 2);
    r << 1, 0;
    const LinearHypothesis h(r, Eigen::VectorXd::Constant(1, 0.3), 1, 2);
    const GroupFit pcr = pcr_fit(d, opts(1, 3, 1));
    const TestResult res_pcr = selective_test(pcr, d, h, default_covariance(Method::PCR, d, pcr));
    EXPECT_EQ(res_pcr.constraint_count, 0);
    EXPECT_TRUE(res_pcr.truncation.is_full());
    EXPECT_NEAR(res_pcr.selective_p, res_pcr.naive_p, 1e-12);
    const CoefMatrix b = unit_ols(d);
    const GroupFit tsk = tsk_fit(b, opts(1, 3, 1));
    const TestResult res_tsk = selective_test(tsk, b, h, pesaran_group_cov(b, tsk.gamma));
    EXPECT_TRUE(res_tsk.truncation.is_full());
    EXPECT_NEAR(res_tsk.selective_p, res_tsk.naive_p, 1e-12);
}

TEST(Constraints, OneDimensionalCrossingPoint) {
    // Units 0, 1 in group 0 and unit 2 in group 1, K = 1.
    Decomposition dec;
    dec.space = PerturbationSpace::Coef;
    dec.unit_dim = 1;
    dec.v = Eigen::Vector3d(0.4, 2.0, 1.0);
    dec.w = Eigen::Vector3d(0.1, 0.9, 3.0);
    const GroupAssignment gamma({0, 0, 1}, 2);
    FitTrace trace;
    trace.assignments = {gamma, gamma};
    const auto constraints = quadratic_constraints_tsk(dec, trace);
    ASSERT_EQ(constraints.size(), 3u);
    const QuadraticConstraint& q = constraints[1];  // unit 1 against center 1
    ASSERT_EQ(q.i, 1);
    // Unit position phi*v1 + w1, centers phi*vbar + wbar. Equal distances
    // where the unit meets the midpoint of the two centers, or the centers
    // coincide.
    const double v1 = 2.0, w1 = 0.9, cv0 = 1.2, cw0 = 0.5, cv1 = 1.0, cw1 = 3.0;
    std::vector<double> crossings;
    // phi*v1 + w1 - (phi*cv0 + cw0) = +/- (phi*v1 + w1 - (phi*cv1 + cw1))
    const double slope_plus = (v1 - cv0) - (v1 - cv1), icpt_plus = (w1 - cw0) - (w1 - cw1);
    const double slope_minus = (v1 - cv0) + (v1 - cv1), icpt_minus = (w1 - cw0) + (w1 - cw1);
    for (auto [s, c] : {std::pair{slope_plus, icpt_plus}, std::pair{slope_minus, icpt_minus}})
        if (s != 0.0 && -c / s >= 0.0) crossings.push_back(-c / s);
    ASSERT_EQ(crossings.size(), 2u);
    for (double root : crossings) EXPECT_NEAR(q.value(root), 0.0, 1e-12);
    const TruncationSet s = solve_quadratic(q);
    for (double root : crossings) {
        bool at_edge = false;
        for (const auto& iv : s.intervals())
            at_edge = at_edge || std::abs(iv.lower - root) < 1e-12 || std::abs(iv.upper - root) < 1e-12;
        EXPECT_TRUE(at_edge) << root << " " << s.to_string();
    }
}

TEST(GridOracle, AgreesWithAnalyticSet) {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const Instance inst = pcr_instance(seed, 14, 5, 2 + seed % 2, 0.4);
        const GroupCovariances cov = default_covariance(Method::PCR, inst.design, inst.fit);
        LinearHypothesis h = equal_slopes();
        if (inst.fit.groups == 3) {
            Eigen::MatrixXd r = Eigen::MatrixXd::Zero(2, 6);
            r(0, 0) = 1, r(0, 2) = -1, r(1, 2) = 1, r(1, 4) = -1;
            h = LinearHypothesis(r, Eigen::VectorXd::Zero(2), 3, 2);
        }
        const Decomposition dec = decompose_pcr(inst.design, inst.fit, h, cov);
        const TruncationSet s = feasible_set(quadratic_constraints_pcr(dec, inst.fit.trace, inst.design), dec.phi_obs());
        const double top = 3.0 * std::max(dec.phi_obs(), 1.0), step = top / 399.0;
        std::vector<double> grid;
        for (int j = 0; j < 400; ++j) grid.push_back(j * step);
        const auto mask = grid_truncation_oracle_pcr(dec, inst.fit.trace, inst.design, grid);
        EXPECT_TRUE(grid_truncation_oracle_pcr(dec, inst.fit.trace, inst.design, {dec.phi_obs()})[0]);
        for (std::size_t j = 0; j < grid.size(); ++j) {
            if (mask[j] == s.contains(grid[j])) continue;
            double nearest = std::numeric_limits<double>::infinity();
            for (const auto& iv : s.intervals())
                nearest = std::min({nearest, std::abs(grid[j] - iv.lower), std::abs(grid[j] - iv.upper)});
            EXPECT_LE(nearest, step) << seed << " phi=" << grid[j];
        }
        if (!s.empty() && s.intervals().back().bounded()) {
            const double far = s.intervals().back().upper * 2 + 1;
            EXPECT_FALSE(grid_truncation_oracle_pcr(dec, inst.fit.trace, inst.design, {far})[0]);
        }
    }
}

TEST(GridOracle, TskAgreesWithAnalyticSet) {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        std::mt19937_64 rng(seed);
        const PanelDataset d = fixtures::grouped_panel(fixtures::block_labels(15, 3), fixtures::random_matrix(3, 2, rng, 0.5), 6, 1.0, seed);
        const CoefMatrix b = unit_ols(d);
        const GroupFit fit = tsk_fit(b, opts(2, 1, seed));
        const GroupCovariances cov = pesaran_group_cov(b, fit.gamma);
        const Decomposition dec = decompose_tsk(b, fit, equal_slopes(), cov);
        const TruncationSet s = feasible_set(quadratic_constraints_tsk(dec, fit.trace), dec.phi_obs());
        const double top = 3.0 * std::max(dec.phi_obs(), 1.0), step = top / 399.0;
        std::vector<double> grid;
        for (int j = 0; j < 400; ++j) grid.push_back(j * step);
        const auto mask = grid_truncation_oracle_tsk(dec, fit.trace, grid);
        for (std::size_t j = 0; j < grid.size(); ++j) {
            if (mask[j] == s.contains(grid[j])) continue;
            double nearest = std::numeric_limits<double>::infinity();
            for (const auto& iv : s.intervals())
                nearest = std::min({nearest, std::abs(grid[j] - iv.lower), std::abs(grid[j] - iv.upper)});
            EXPECT_LE(nearest, step) << seed << " phi=" << grid[j];
        }
    }
}

TEST(IndependenceProducts, VanishUnderCommonGram) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        const std::vector<int> labels = fixtures::block_labels(9, 3);
        const PanelDataset d = fixtures::common_x_panel(labels, fixtures::random_matrix(3, 2, rng), 7, 1.0, trial);
        const GroupAssignment gamma(labels, 3);
        Eigen::MatrixXd r = fixtures::random_matrix(2, 6, rng);
        const LinearHypothesis h(r, Eigen::VectorXd::Zero(2), 3, 2);
        const Eigen::MatrixXd sigma = d.x(0).transpose() * d.x(0) / d.t();
        EXPECT_LT(tsk_independence_product(gamma, sigma, h).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT(pcr_independence_product(d, gamma, h).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(SelectiveTest, GfeHypothesisIsPadded) {
    std::mt19937_64 rng(4);
    const PanelDataset raw = fixtures::grouped_panel(fixtures::block_labels(12, 2), fixtures::random_matrix(2, 2, rng), 5, 1.0, 6);
    const GroupFit fit = fit_model(raw, Method::GFE, opts(2, 1, 3), false);
    const PanelDataset design = design_panel(raw, Method::GFE, false);
    const TestResult res = selective_test(fit, design, equal_slopes(), default_covariance(Method::GFE, design, fit));
    EXPECT_EQ(res.df, 2);
    EXPECT_EQ(res.r_matrix.cols(), 4);  // reported as supplied, on the slope block
    EXPECT_GT(fit.coef_dim, fit.k);
    EXPECT_TRUE(res.selective_p >= 0.0 && res.selective_p <= 1.0);
}
