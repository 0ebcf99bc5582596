#include "gps/estimators.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <random>

#include "gps/errors.hpp"
#include "parallel.hpp"

namespace gps {

std::string to_string(Method m) {
    switch (m) {
        case Method::TSK: return "tsk";
        case Method::PCR: return "pcr";
        case Method::GFE: return "gfe";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "tsk" || s == "TSK") return Method::TSK;
    if (s == "pcr" || s == "PCR") return Method::PCR;
    if (s == "gfe" || s == "GFE") return Method::GFE;
    throw ValidationError("unknown method '" + s + "' (expected tsk, pcr or gfe)");
}

CoefMatrix::CoefMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
    if (values_.size() == 0) throw ValidationError("empty coefficient matrix");
    if (!values_.allFinite()) throw ValidationError("non-finite unit coefficient");
}

Eigen::VectorXd CoefMatrix::stacked() const {
    Eigen::MatrixXd t = values_.transpose();
    return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

CoefMatrix CoefMatrix::from_stacked(const Eigen::VectorXd& b, int k) {
    if (k < 1 || b.size() % k != 0) throw ValidationError("stacked length not divisible by K");
    Eigen::MatrixXd t = Eigen::Map<const Eigen::MatrixXd>(b.data(), k, b.size() / k);
    return CoefMatrix(t.transpose());
}

Eigen::MatrixXd GroupFit::alpha_matrix() const {
    Eigen::MatrixXd t = Eigen::Map<const Eigen::MatrixXd>(alpha.data(), coef_dim, groups);
    return t.transpose();
}

Eigen::VectorXd GroupFit::slopes() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(groups) * k);
    for (int g = 0; g < groups; ++g)
        out.segment(static_cast<Eigen::Index>(g) * k, k) = alpha.segment(static_cast<Eigen::Index>(g) * coef_dim, k);
    return out;
}

namespace {

Eigen::VectorXd stack_rows(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd t = m.transpose();
    return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

constexpr double kTieTol = 1e-12;
constexpr double kGramRcond = 1e-12;

}  // namespace

GroupAssignment assign_groups(const Eigen::MatrixXd& costs, const GroupAssignment& current) {
    const int n = static_cast<int>(costs.rows()), g = static_cast<int>(costs.cols());
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        const double best = costs.row(i).minCoeff();
        const double tol = kTieTol * std::max(1.0, std::abs(best));
        int pick = -1;
        if (costs(i, current[i]) <= best + tol) {
            pick = current[i];
        } else {
            for (int c = 0; c < g && pick < 0; ++c)
                if (costs(i, c) <= best + tol) pick = c;
        }
        labels[i] = pick;
    }
    return GroupAssignment(std::move(labels), g);
}

Eigen::MatrixXd group_means(const Eigen::MatrixXd& rows, const GroupAssignment& gamma) {
    const auto sizes = gamma.sizes();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(gamma.groups(), rows.cols());
    for (int i = 0; i < gamma.n(); ++i) c.row(gamma[i]) += rows.row(i);
    for (int g = 0; g < gamma.groups(); ++g) {
        if (sizes[g] == 0) throw ValidationError("empty group " + std::to_string(g + 1));
        c.row(g) /= sizes[g];
    }
    return c;
}

Eigen::MatrixXd tsk_costs(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& centers) {
    Eigen::MatrixXd out(rows.rows(), centers.rows());
    for (Eigen::Index g = 0; g < centers.rows(); ++g)
        out.col(g) = (rows.rowwise() - centers.row(g)).rowwise().squaredNorm();
    return out;
}

Eigen::MatrixXd pcr_costs(const PanelDataset& d, const Eigen::MatrixXd& centers) {
    Eigen::MatrixXd out(d.n(), centers.rows());
    for (int i = 0; i < d.n(); ++i) {
        Eigen::MatrixXd fitted = d.x(i) * centers.transpose();  // T x G
        for (Eigen::Index g = 0; g < centers.rows(); ++g)
            out(i, g) = (d.y().row(i).transpose() - fitted.col(g)).squaredNorm();
    }
    return out;
}

namespace {

struct UnitMoments {
    std::vector<Eigen::MatrixXd> xx;
    std::vector<Eigen::VectorXd> xy;

    explicit UnitMoments(const PanelDataset& d) {
        xx.reserve(d.n());
        xy.reserve(d.n());
        for (int i = 0; i < d.n(); ++i) {
            xx.push_back(d.x(i).transpose() * d.x(i));
            xy.push_back(d.x(i).transpose() * d.y().row(i).transpose());
        }
    }
};

std::optional<Eigen::MatrixXd> pooled_from_moments(const UnitMoments& m, const GroupAssignment& gamma, int k) {
    const int g_count = gamma.groups();
    std::vector<Eigen::MatrixXd> gram(g_count, Eigen::MatrixXd::Zero(k, k));
    std::vector<Eigen::VectorXd> score(g_count, Eigen::VectorXd::Zero(k));
    for (int i = 0; i < gamma.n(); ++i) {
        gram[gamma[i]] += m.xx[i];
        score[gamma[i]] += m.xy[i];
    }
    Eigen::MatrixXd c(g_count, k);
    for (int g = 0; g < g_count; ++g) {
        Eigen::LLT<Eigen::MatrixXd> llt(gram[g]);
        if (llt.info() != Eigen::Success || !(llt.rcond() > kGramRcond)) return std::nullopt;
        c.row(g) = llt.solve(score[g]).transpose();
    }
    return c;
}

class TskModel {
public:
    explicit TskModel(const Eigen::MatrixXd& rows) : rows_(rows) {}
    int n() const { return static_cast<int>(rows_.rows()); }
    std::optional<Eigen::MatrixXd> centers(const GroupAssignment& g) const { return group_means(rows_, g); }
    Eigen::MatrixXd costs(const Eigen::MatrixXd& c) const { return tsk_costs(rows_, c); }

private:
    const Eigen::MatrixXd& rows_;
};

class PcrModel {
public:
    explicit PcrModel(const PanelDataset& d) : d_(d), moments_(d) {}
    int n() const { return d_.n(); }
    std::optional<Eigen::MatrixXd> centers(const GroupAssignment& g) const {
        return pooled_from_moments(moments_, g, d_.k());
    }
    Eigen::MatrixXd costs(const Eigen::MatrixXd& c) const { return pcr_costs(d_, c); }

private:
    const PanelDataset& d_;
    UnitMoments moments_;
};

enum class RestartOutcome { Converged, IterationLimit, EmptiedGroup, Singular };

struct RestartResult {
    RestartOutcome outcome = RestartOutcome::Singular;
    FitTrace trace;
};

std::mt19937_64 restart_rng(std::uint64_t seed, int restart) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(restart), 0x6770u};
    return std::mt19937_64(seq);
}

GroupAssignment random_assignment(int n, int groups, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> label(0, groups - 1);
    std::vector<int> labels(n);
    for (int attempt = 0; attempt < 100000; ++attempt) {
        for (auto& l : labels) l = label(rng);
        GroupAssignment a(labels, groups);
        if (a.all_nonempty()) return a;
    }
    throw NumericalError("could not draw an initial assignment with nonempty groups");
}

double trace_objective(const Eigen::MatrixXd& costs, const GroupAssignment& gamma) {
    double s = 0.0;
    for (int i = 0; i < gamma.n(); ++i) s += costs(i, gamma[i]);
    return s;
}

template <class Model>
RestartResult run_restart(const Model& model, int groups, std::uint64_t seed, int restart, int max_iterations) {
    RestartResult out;
    auto rng = restart_rng(seed, restart);
    GroupAssignment gamma = random_assignment(model.n(), groups, rng);
    auto centers = model.centers(gamma);
    if (!centers) return out;
    out.trace.assignments.push_back(gamma);
    out.trace.centers.push_back(*centers);
    out.trace.objective.push_back(trace_objective(model.costs(*centers), gamma));
    for (int m = 1; m <= max_iterations; ++m) {
        GroupAssignment next = assign_groups(model.costs(*centers), gamma);
        if (!next.all_nonempty()) {
            out.outcome = RestartOutcome::EmptiedGroup;
            return out;
        }
        auto next_centers = model.centers(next);
        if (!next_centers) {
            out.outcome = RestartOutcome::Singular;
            return out;
        }
        const bool stable = next == gamma;
        out.trace.assignments.push_back(next);
        out.trace.centers.push_back(*next_centers);
        out.trace.objective.push_back(trace_objective(model.costs(*next_centers), next));
        gamma = std::move(next);
        centers = std::move(next_centers);
        if (stable) {
            out.outcome = RestartOutcome::Converged;
            return out;
        }
    }
    out.outcome = RestartOutcome::IterationLimit;
    return out;
}

template <class Model>
GroupFit multi_start(const Model& model, Method method, int k, const FitOptions& opts) {
    if (opts.groups < 1) throw ValidationError("groups must be ≥ 1");
    if (opts.groups > model.n()) throw ValidationError("groups must not exceed the number of units");
    if (opts.restarts < 1) throw ValidationError("restarts must be ≥ 1");
    if (opts.max_iterations < 1) throw ValidationError("max_iterations must be ≥ 1");

    std::vector<RestartResult> results(opts.restarts);
    detail::parallel_for(opts.restarts, opts.jobs, [&](int r) {
        results[r] = run_restart(model, opts.groups, opts.seed, r, opts.max_iterations);
    });

    int best = -1, discarded = 0;
    bool best_converged = false;
    for (int r = 0; r < opts.restarts; ++r) {
        const auto outcome = results[r].outcome;
        if (outcome == RestartOutcome::EmptiedGroup || outcome == RestartOutcome::Singular) {
            ++discarded;
            continue;
        }
        const bool conv = outcome == RestartOutcome::Converged;
        const double obj = results[r].trace.objective.back();
        if (best < 0 || (conv && !best_converged) ||
            (conv == best_converged && obj < results[best].trace.objective.back())) {
            best = r;
            best_converged = conv;
        }
    }
    if (discarded > 0)
        spdlog::debug("{} fit: {} of {} restarts discarded (emptied group or singular Gram)", to_string(method),
                      discarded, opts.restarts);
    if (best < 0) throw NumericalError("all restarts discarded (emptied groups or singular pooled Gram)");

    GroupFit fit;
    fit.method = method;
    fit.groups = opts.groups;
    fit.k = k;
    fit.coef_dim = static_cast<int>(results[best].trace.centers.back().cols());
    fit.trace = std::move(results[best].trace);
    fit.gamma = fit.trace.assignments.back();
    fit.alpha = stack_rows(fit.trace.centers.back());
    fit.objective = fit.trace.objective.back();
    fit.status = best_converged ? FitStatus::Converged : FitStatus::IterationLimit;
    fit.restart_count = opts.restarts;
    fit.winning_restart = best;
    fit.discarded_restarts = discarded;
    fit.seed = opts.seed;
    return relabel_fit(fit, fit.gamma.canonical_permutation());
}

}  // namespace

GroupFit relabel_fit(const GroupFit& fit, const std::vector<int>& perm) {
    GroupFit out = fit;
    auto permute_rows = [&](const Eigen::MatrixXd& c) {
        Eigen::MatrixXd p(c.rows(), c.cols());
        for (Eigen::Index g = 0; g < c.rows(); ++g) p.row(perm[g]) = c.row(g);
        return p;
    };
    for (auto& a : out.trace.assignments) a = a.relabeled(perm);
    for (auto& c : out.trace.centers) c = permute_rows(c);
    out.gamma = fit.gamma.relabeled(perm);
    out.alpha = stack_rows(permute_rows(fit.alpha_matrix()));
    return out;
}

CoefMatrix unit_ols(const PanelDataset& d) {
    if (d.t() < d.k()) throw ValidationError("TSK requires T ≥ K");
    Eigen::MatrixXd b(d.n(), d.k());
    for (int i = 0; i < d.n(); ++i) {
        const Eigen::MatrixXd& x = d.x(i);
        Eigen::MatrixXd xx = x.transpose() * x;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xx, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
        const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
        if (!(cond < 1e12))
            throw NumericalError("unit " + d.unit_ids()[i] + ": singular Gram matrix (condition number " +
                                 std::to_string(cond) + ")");
        b.row(i) = xx.ldlt().solve(x.transpose() * d.y().row(i).transpose()).transpose();
    }
    return CoefMatrix(std::move(b));
}

GroupFit tsk_fit(const CoefMatrix& b, const FitOptions& opts) {
    TskModel model(b.values());
    return multi_start(model, Method::TSK, b.k(), opts);
}

GroupFit pcr_fit(const PanelDataset& d, const FitOptions& opts) {
    PcrModel model(d);
    return multi_start(model, Method::PCR, d.k(), opts);
}

GroupFit gfe_fit(const PanelDataset& d, const FitOptions& opts) {
    PanelDataset a = augment_time_dummies(d);
    PcrModel model(a);
    return multi_start(model, Method::GFE, d.k(), opts);
}

PanelDataset design_panel(const PanelDataset& raw, Method method, bool within) {
    PanelDataset d = method == Method::GFE ? augment_time_dummies(raw) : raw;
    return within ? within_transform(d) : d;
}

GroupFit fit_model(const PanelDataset& raw, Method method, const FitOptions& opts, bool within) {
    PanelDataset d = design_panel(raw, method, within);
    GroupFit fit;
    if (method == Method::TSK) {
        fit = tsk_fit(unit_ols(d), opts);
    } else {
        PcrModel model(d);
        fit = multi_start(model, method, raw.k(), opts);
    }
    fit.within = within;
    return fit;
}

double objective(const CoefMatrix& b, const GroupAssignment& gamma) {
    if (gamma.n() != b.n()) throw ValidationError("assignment length does not match N");
    return trace_objective(tsk_costs(b.values(), group_means(b.values(), gamma)), gamma);
}

std::optional<Eigen::MatrixXd> pooled_group_ols(const PanelDataset& d, const GroupAssignment& gamma) {
    if (gamma.n() != d.n()) throw ValidationError("assignment length does not match N");
    if (!gamma.all_nonempty()) throw ValidationError("empty group");
    return pooled_from_moments(UnitMoments(d), gamma, d.k());
}

double objective(const PanelDataset& d, const GroupAssignment& gamma) {
    auto c = pooled_group_ols(d, gamma);
    if (!c) throw NumericalError("pooled Gram matrix singular");
    return trace_objective(pcr_costs(d, *c), gamma);
}

namespace {

// Visits every labeling up to relabeling: restricted growth strings with at
// most `groups` distinct labels.
template <class Visit>
void for_each_partition(int n, int groups, Visit&& visit) {
    std::vector<int> labels(n, 0);
    auto rec = [&](auto&& self, int i, int used) -> void {
        if (i == n) {
            visit(labels, used);
            return;
        }
        for (int g = 0; g <= std::min(used, groups - 1); ++g) {
            labels[i] = g;
            self(self, i + 1, std::max(used, g + 1));
        }
    };
    rec(rec, 0, 0);
}

void check_enumerable(int n, int groups) {
    if (groups < 1) throw ValidationError("groups must be ≥ 1");
    if (groups > n) throw ValidationError("groups must not exceed the number of units");
    if (n * std::log(static_cast<double>(groups)) > std::log(1e6) + 1e-9)
        throw ValidationError("instance too large for exhaustive search (G^N > 1e6)");
}

template <class Model>
GroupFit brute_force(const Model& model, Method method, int k, int groups) {
    check_enumerable(model.n(), groups);
    double best = std::numeric_limits<double>::infinity();
    std::optional<GroupAssignment> best_gamma;
    Eigen::MatrixXd best_centers;
    int visited = 0;
    for_each_partition(model.n(), groups, [&](const std::vector<int>& labels, int used) {
        ++visited;
        if (used < groups) return;
        GroupAssignment gamma(labels, groups);
        auto c = model.centers(gamma);
        if (!c) return;
        const double obj = trace_objective(model.costs(*c), gamma);
        if (obj < best) {
            best = obj;
            best_gamma = gamma;
            best_centers = *c;
        }
    });
    if (!best_gamma) throw NumericalError("every partition has a singular pooled Gram matrix");
    GroupFit fit;
    fit.method = method;
    fit.groups = groups;
    fit.k = k;
    fit.coef_dim = static_cast<int>(best_centers.cols());
    fit.trace.assignments = {*best_gamma};
    fit.trace.centers = {best_centers};
    fit.trace.objective = {best};
    fit.gamma = *best_gamma;
    fit.alpha = stack_rows(best_centers);
    fit.objective = best;
    fit.restart_count = visited;
    return fit;
}

}  // namespace

GroupFit brute_force_fit(const CoefMatrix& b, int groups) {
    TskModel model(b.values());
    return brute_force(model, Method::TSK, b.k(), groups);
}

GroupFit brute_force_fit(const PanelDataset& d, int groups) {
    PcrModel model(d);
    return brute_force(model, Method::PCR, d.k(), groups);
}

}  // namespace gps
