#include <gtest/gtest.h>

#include <random>

#include "gps/errors.hpp"
#include "gps/estimators.hpp"
#include "support.hpp"

using namespace gps;

namespace {

// Every assignment of n units to `groups` labels, empty groups allowed.
template <class F>
void all_labelings(int n, int groups, F&& f) {
    std::vector<int> l(n, 0);
    while (true) {
        f(l);
        int i = 0;
        while (i < n && ++l[i] == groups) l[i++] = 0;
        if (i == n) return;
    }
}

double tsk_objective_direct(const Eigen::MatrixXd& b, const std::vector<int>& labels, int groups) {
    double total = 0.0;
    for (int g = 0; g < groups; ++g) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(b.cols());
        int count = 0;
        for (int i = 0; i < b.rows(); ++i)
            if (labels[i] == g) mean += b.row(i), ++count;
        if (count == 0) continue;
        mean /= count;
        for (int i = 0; i < b.rows(); ++i)
            if (labels[i] == g) total += (b.row(i) - mean).squaredNorm();
    }
    return total;
}

FitOptions opts(int groups, int restarts = 20, std::uint64_t seed = 1) {
    FitOptions o;
    o.groups = groups;
    o.restarts = restarts;
    o.seed = seed;
    return o;
}

}  // namespace

TEST(UnitOls, ConstantFit) {
    Eigen::MatrixXd y(2, 3);
    y << 2, 2, 2, 1, 2, 3;
    Eigen::MatrixXd x0 = Eigen::MatrixXd::Ones(3, 1), x1(3, 1);
    x1 << 1, 2, 3;
    const CoefMatrix b = unit_ols(PanelDataset(y, {x0, x1}));
    EXPECT_NEAR(b.values()(0, 0), 2.0, 1e-14);
    EXPECT_NEAR(b.values()(1, 0), 1.0, 1e-14);
}

TEST(UnitOls, ExactRecovery) {
    Eigen::MatrixXd coef(1, 3);
    coef << 0.5, -2.0, 3.0;
    const PanelDataset d = fixtures::grouped_panel(std::vector<int>(5, 0), coef, 8, 0.0, 2);
    const CoefMatrix b = unit_ols(d);
    for (int i = 0; i < 5; ++i) EXPECT_LT((b.row(i) - coef.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(UnitOls, MatchesHandInvertedNormalEquations) {
    std::mt19937_64 rng(42);
    const PanelDataset d = fixtures::grouped_panel({0, 0, 0}, fixtures::random_matrix(1, 2, rng), 6, 1.0, 43);
    const CoefMatrix b = unit_ols(d);
    for (int i = 0; i < 3; ++i) {
        const Eigen::MatrixXd& x = d.x(i);
        double sxx = 0, sxz = 0, szz = 0, sxy = 0, szy = 0;
        for (int s = 0; s < d.t(); ++s) {
            sxx += x(s, 0) * x(s, 0);
            sxz += x(s, 0) * x(s, 1);
            szz += x(s, 1) * x(s, 1);
            sxy += x(s, 0) * d.y()(i, s);
            szy += x(s, 1) * d.y()(i, s);
        }
        const double det = sxx * szz - sxz * sxz;
        EXPECT_NEAR(b.values()(i, 0), (szz * sxy - sxz * szy) / det, 1e-10);
        EXPECT_NEAR(b.values()(i, 1), (sxx * szy - sxz * sxy) / det, 1e-10);
    }
}

TEST(UnitOls, RequiresTAtLeastK) {
    const PanelDataset d(Eigen::MatrixXd::Ones(3, 1), std::vector<Eigen::MatrixXd>(3, Eigen::MatrixXd::Ones(1, 2)));
    try {
        unit_ols(d);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_STREQ(e.what(), "TSK requires T ≥ K");
    }
}

TEST(UnitOls, CollinearUnitIsNumericalError) {
    Eigen::MatrixXd x(3, 2);
    x << 1, 2, 1, 2, 1, 2;
    const PanelDataset d(Eigen::MatrixXd::Ones(2, 3), {x, x});
    EXPECT_THROW(unit_ols(d), NumericalError);
}

TEST(TskFit, SingleGroup) {
    std::mt19937_64 rng(1);
    const CoefMatrix b(fixtures::random_matrix(9, 2, rng));
    const GroupFit fit = tsk_fit(b, opts(1));
    EXPECT_EQ(fit.trace.iterations(), 1);
    EXPECT_LT((fit.alpha - b.values().colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TskFit, TwoCloudsMatchExhaustiveSearch) {
    std::mt19937_64 rng(7);
    Eigen::MatrixXd b = fixtures::random_matrix(10, 2, rng, 0.5);
    std::vector<int> truth(10);
    for (int i = 0; i < 10; ++i) {
        truth[i] = i % 2;
        if (truth[i] == 1) b.row(i).array() += 10.0;
    }
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_labels;
    all_labelings(10, 2, [&](const std::vector<int>& l) {
        const double v = tsk_objective_direct(b, l, 2);
        if (v < best) best = v, best_labels = l;
    });
    const GroupFit fit = tsk_fit(CoefMatrix(b), opts(2));
    EXPECT_EQ(fit.gamma, GroupAssignment(truth, 2).canonical());
    EXPECT_EQ(fit.gamma, GroupAssignment(best_labels, 2).canonical());
    EXPECT_NEAR(fit.objective, best, 1e-10);
    EXPECT_NEAR(fit.objective, tsk_objective_direct(b, truth, 2), 1e-10);
}

TEST(TskFit, IdenticalRowsGiveZeroObjective) {
    const CoefMatrix b(Eigen::MatrixXd::Constant(6, 2, 1.5));
    EXPECT_DOUBLE_EQ(objective(b, GroupAssignment({0, 1, 0, 1, 1, 0}, 2)), 0.0);
    // Two identical rows cannot fill two groups with distinct centers; any
    // surviving restart still reports objective 0.
    try {
        const GroupFit fit = tsk_fit(b, opts(2));
        EXPECT_DOUBLE_EQ(fit.objective, 0.0);
    } catch (const NumericalError&) {
        SUCCEED();
    }
}

TEST(Objective, FourUnitTwoPairs) {
    const double d = 3.0;
    Eigen::MatrixXd b(4, 1);
    b << 0, 0, d, d;
    EXPECT_DOUBLE_EQ(objective(CoefMatrix(b), GroupAssignment({0, 0, 1, 1}, 2)), 0.0);
    EXPECT_NEAR(objective(CoefMatrix(b), GroupAssignment({0, 1, 0, 1}, 2)), d * d, 1e-12);
    EXPECT_NEAR(objective(CoefMatrix(b), GroupAssignment({0, 1, 0, 1}, 2)), tsk_objective_direct(b, {0, 1, 0, 1}, 2), 1e-12);
}

TEST(Objective, PcrPerfectFit) {
    Eigen::MatrixXd coef(2, 2);
    coef << 2, 1, 4, 2;
    const std::vector<int> labels = {0, 1, 0, 1, 1};
    const PanelDataset d = fixtures::grouped_panel(labels, coef, 5, 0.0, 3);
    EXPECT_NEAR(objective(d, GroupAssignment(labels, 2)), 0.0, 1e-20);
}

TEST(PcrFit, SingleGroupIsPooledOls) {
    std::mt19937_64 rng(2);
    const PanelDataset d = fixtures::grouped_panel(fixtures::block_labels(6, 2), fixtures::random_matrix(2, 2, rng), 5, 0.3, 4);
    const GroupFit fit = pcr_fit(d, opts(1));
    Eigen::MatrixXd xx = Eigen::MatrixXd::Zero(2, 2);
    Eigen::VectorXd xy = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < d.n(); ++i) {
        xx += d.x(i).transpose() * d.x(i);
        xy += d.x(i).transpose() * d.y_unit(i);
    }
    EXPECT_LT((fit.alpha - xx.ldlt().solve(xy)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PcrFit, RecoversNoiselessPartition) {
    Eigen::MatrixXd coef(2, 2);
    coef << 2, 1, 4, 2;
    const std::vector<int> truth = {0, 1, 1, 0, 1, 0};
    const PanelDataset d = fixtures::grouped_panel(truth, coef, 6, 1e-9, 12);
    GroupFit brute = brute_force_fit(d, 2);
    EXPECT_EQ(brute.gamma, GroupAssignment(truth, 2).canonical());
    const GroupFit fit = pcr_fit(d, opts(2));
    EXPECT_EQ(fit.gamma, GroupAssignment(truth, 2).canonical());
}

TEST(PcrFit, RunsWhenTBelowK) {
    Eigen::MatrixXd coef(2, 2);
    coef << 2, 1, -1, 3;
    const PanelDataset d = fixtures::grouped_panel(fixtures::block_labels(40, 2), coef, 1, 0.1, 5);
    const GroupFit fit = pcr_fit(d, opts(2, 10));
    EXPECT_EQ(fit.gamma.n(), 40);
    EXPECT_TRUE(fit.gamma.all_nonempty());
}

TEST(GfeFit, AddsDummies) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(6, 2);
    std::mt19937_64 rng(9);
    std::vector<Eigen::MatrixXd> x(6);
    for (auto& xi : x) xi = fixtures::random_matrix(2, 1, rng);
    const GroupFit fit = gfe_fit(PanelDataset(y, x), opts(1));
    EXPECT_EQ(fit.coef_dim, 2);
    EXPECT_EQ(fit.k, 1);
}

TEST(GfeFit, TimeConstantDataGiveZeroDummies) {
    std::mt19937_64 rng(10);
    std::vector<Eigen::MatrixXd> x(8);
    Eigen::MatrixXd y(8, 4);
    for (int i = 0; i < 8; ++i) {
        x[i] = Eigen::MatrixXd::Constant(4, 1, 1.0 + 0.1 * i);
        y.row(i).setConstant(2.0 * x[i](0, 0));
    }
    const GroupFit fit = gfe_fit(PanelDataset(y, x), opts(1));
    EXPECT_NEAR(fit.alpha(0), 2.0, 1e-10);
    EXPECT_LT(fit.alpha.tail(3).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GfeFit, RecoversGroupsThroughTimeEffects) {
    const int n = 7, t = 6;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z;
    const std::vector<int> truth = {0, 0, 1, 0, 1, 1, 0};
    Eigen::MatrixXd y(n, t);
    std::vector<Eigen::MatrixXd> x(n, Eigen::MatrixXd(t, 1));
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < t; ++s) {
            x[i](s, 0) = z(rng);
            const double eta = truth[i] == 0 ? 0.8 * std::sin(2 * M_PI * s / t) : 2 + std::sin(2 * M_PI * s / t + M_PI / 4);
            y(i, s) = 1.5 * x[i](s, 0) + eta + 1e-9 * z(rng);
        }
    // Without a constant the base-period level is only absorbed after the
    // within transform.
    const PanelDataset d(y, x);
    const GroupFit brute = brute_force_fit(design_panel(d, Method::GFE, true), 2);
    EXPECT_EQ(brute.gamma, GroupAssignment(truth, 2).canonical());
    const GroupFit fit = fit_model(d, Method::GFE, opts(2, 30), true);
    EXPECT_EQ(fit.gamma, GroupAssignment(truth, 2).canonical());
    EXPECT_NEAR(fit.slopes()(0), 1.5, 1e-6);
    EXPECT_NEAR(fit.slopes()(1), 1.5, 1e-6);
}

TEST(BruteForce, TwoUnitsTwoGroups) {
    Eigen::MatrixXd b(2, 1);
    b << 0, 1;
    const GroupFit fit = brute_force_fit(CoefMatrix(b), 2);
    EXPECT_EQ(fit.restart_count, 2);
    EXPECT_DOUBLE_EQ(fit.objective, 0.0);
}

TEST(BruteForce, NeverBeatenByHeuristic) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 15; ++trial) {
        const CoefMatrix b(fixtures::random_matrix(7, 2, rng));
        const GroupFit brute = brute_force_fit(b, 3);
        const GroupFit fit = tsk_fit(b, opts(3, 5, trial));
        EXPECT_LE(brute.objective, fit.objective + 1e-12);
    }
}

TEST(Fits, Deterministic) {
    std::mt19937_64 rng(31);
    const PanelDataset d = fixtures::grouped_panel(fixtures::block_labels(30, 3), fixtures::random_matrix(3, 2, rng), 8, 1.0, 5);
    for (Method m : {Method::TSK, Method::PCR, Method::GFE}) {
        FitOptions o = opts(3, 15, 99);
        const GroupFit a = fit_model(d, m, o, false);
        o.jobs = 3;
        const GroupFit b = fit_model(d, m, o, false);
        EXPECT_EQ(a.gamma, b.gamma);
        EXPECT_EQ(a.alpha, b.alpha);
        EXPECT_EQ(a.winning_restart, b.winning_restart);
    }
}

TEST(Fits, ObjectiveTraceNonIncreasingAndAlphaConsistent) {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        const PanelDataset d = fixtures::grouped_panel(fixtures::block_labels(25, 2), fixtures::random_matrix(2, 2, rng, 0.5), 6, 1.0, trial);
        for (Method m : {Method::TSK, Method::PCR, Method::GFE}) {
            const GroupFit fit = fit_model(d, m, opts(3, 4, trial), trial % 2 == 0);
            const auto& obj = fit.trace.objective;
            for (std::size_t j = 1; j < obj.size(); ++j) EXPECT_LE(obj[j], obj[j - 1] * (1 + 1e-12) + 1e-12);
            EXPECT_EQ(fit.trace.assignments.back(), fit.gamma);
            const PanelDataset design = design_panel(d, m, fit.within);
            Eigen::MatrixXd centers = m == Method::TSK ? group_means(unit_ols(design).values(), fit.gamma)
                                                       : *pooled_group_ols(design, fit.gamma);
            EXPECT_LT((fit.alpha_matrix() - centers).cwiseAbs().maxCoeff(), 1e-10);
        }
    }
}

TEST(AssignGroups, TieKeepsCurrentLabel) {
    Eigen::MatrixXd costs(2, 2);
    costs << 1.0, 1.0, 2.0, 1.0;
    const GroupAssignment cur({1, 0}, 2);
    const GroupAssignment next = assign_groups(costs, cur);
    EXPECT_EQ(next[0], 1);
    EXPECT_EQ(next[1], 1);
}
