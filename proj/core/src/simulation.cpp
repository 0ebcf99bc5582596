#include "gps/simulation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "gps/errors.hpp"
#include "gps/estimators.hpp"
#include "gps/selective.hpp"
#include "parallel.hpp"

namespace gps {

namespace {

template <class E>
struct Names {
    E value;
    const char* name;
};

constexpr Names<Dgp> kDgps[] = {{Dgp::DGP1, "DGP1"}, {Dgp::DGP2, "DGP2"}, {Dgp::DGP3, "DGP3"}};
constexpr Names<SimCase> kCases[] = {
    {SimCase::Baseline, "baseline"}, {SimCase::UnitFE, "unit_fe"}, {SimCase::GroupFE, "group_fe"}};
constexpr Names<Procedure> kProcedures[] = {
    {Procedure::Predetermined, "Predetermined"},     {Procedure::NaiveTSK, "NaiveTSK"},
    {Procedure::NaivePCR, "NaivePCR"},               {Procedure::NaiveGFE, "NaiveGFE"},
    {Procedure::ConditionalTSK, "ConditionalTSK"},   {Procedure::ConditionalPCR, "ConditionalPCR"},
    {Procedure::ConditionalGFE, "ConditionalGFE"}};
constexpr Names<HypothesisId> kHypotheses[] = {
    {HypothesisId::H01, "H01"}, {HypothesisId::H02, "H02"}, {HypothesisId::H03, "H03"}};

template <class E, std::size_t N>
std::string name_of(const Names<E> (&table)[N], E v) {
    for (const auto& e : table)
        if (e.value == v) return e.name;
    return "?";
}

template <class E, std::size_t N>
E parse_name(const Names<E> (&table)[N], const std::string& s, const char* what) {
    auto lower = [](std::string x) {
        for (auto& c : x) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return x;
    };
    for (const auto& e : table)
        if (lower(e.name) == lower(s)) return e.value;
    throw ValidationError(std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

std::string to_string(Dgp d) { return name_of(kDgps, d); }
std::string to_string(SimCase c) { return name_of(kCases, c); }
std::string to_string(Procedure p) { return name_of(kProcedures, p); }
std::string to_string(HypothesisId h) { return name_of(kHypotheses, h); }
Dgp parse_dgp(const std::string& s) { return parse_name(kDgps, s, "DGP"); }
SimCase parse_case(const std::string& s) { return parse_name(kCases, s, "case"); }
Procedure parse_procedure(const std::string& s) { return parse_name(kProcedures, s, "procedure"); }
HypothesisId parse_hypothesis(const std::string& s) { return parse_name(kHypotheses, s, "hypothesis"); }

LinearHypothesis study_hypothesis(HypothesisId id) {
    switch (id) {
        case HypothesisId::H01: {
            Eigen::MatrixXd r(2, 4);
            r << 1, 0, -1, 0, 0, 1, 0, -1;
            return LinearHypothesis(r, Eigen::VectorXd::Zero(2), 2, 2);
        }
        case HypothesisId::H02: {
            Eigen::MatrixXd r(1, 4);
            r << 0, 1, 0, -1;
            return LinearHypothesis(r, Eigen::VectorXd::Zero(1), 2, 2);
        }
        case HypothesisId::H03: {
            Eigen::MatrixXd r(2, 4);
            r << 1, 0, 0, 0, 0, 0, 1, 0;
            return LinearHypothesis(r, Eigen::VectorXd::Zero(2), 2, 2);
        }
    }
    throw ValidationError("unknown hypothesis");
}

void SimConfig::validate() const {
    if (n < 4) throw ValidationError("N must be at least 4");
    if (t < 2) throw ValidationError("T must be at least 2");
    if (reps < 1) throw ValidationError("reps must be ≥ 1");
    const int c1 = cluster1();
    if (c1 < 2 || n - c1 < 2) throw ValidationError("both true clusters need at least 2 units");
    if (std::abs(rho_u) >= 1.0 || std::abs(rho_x) >= 1.0) throw ValidationError("AR coefficients must lie in (-1,1)");
    if (rho_s < 0.0 || rho_s > 1.0) throw ValidationError("rho_S must lie in [0,1]");
    if (!(ell > 0.0)) throw ValidationError("length scale must be positive");
    if (std::abs(innovation_corr) >= 1.0) throw ValidationError("innovation correlation must lie in (-1,1)");
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("level must lie in (0,1)");
    if (restarts < 1) throw ValidationError("restarts must be ≥ 1");
    if (jobs < 1) throw ValidationError("jobs must be ≥ 1");
    if (burn_in < 0) throw ValidationError("burn_in must be ≥ 0");
    if (bandwidth < 0) throw ValidationError("bandwidth must be ≥ 0");
    if (procedures.empty() || hypotheses.empty()) throw ValidationError("no procedures or hypotheses requested");
    if (tsk_variance == CovMethod::Theoretical) throw ValidationError("simulation TSK variance must be pesaran or dk");
}

Eigen::MatrixXd spatial_cov(int n_g, double rho_s, double ell) {
    if (n_g < 2) throw ValidationError("spatial covariance needs n_g ≥ 2");
    Eigen::MatrixXd s(n_g, n_g);
    for (int i = 0; i < n_g; ++i)
        for (int j = 0; j < n_g; ++j) {
            const double dist = std::abs(i - j) / static_cast<double>(n_g - 1);
            s(i, j) = rho_s * std::exp(-dist / ell) + (i == j ? 1.0 - rho_s : 0.0);
        }
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) throw NumericalError("spatial covariance not positive definite");
    return s;
}

namespace {

std::mt19937_64 replication_rng(std::uint64_t seed, int rep, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(rep), stream};
    return std::mt19937_64(seq);
}

std::uint64_t fit_seed(std::uint64_t seed, int rep) {
    auto rng = replication_rng(seed, rep, 0xF17u);
    return rng();
}

Eigen::Vector2d slopes(Dgp dgp, int group) {
    if (group == 0) return {2.0, 1.0};
    switch (dgp) {
        case Dgp::DGP1: return {2.0, 1.0};
        case Dgp::DGP2: return {4.0, 1.0};
        case Dgp::DGP3: return {4.0, 2.0};
    }
    return {0.0, 0.0};
}

}  // namespace

SimulatedPanel simulate_panel(const SimConfig& cfg, int rep) {
    cfg.validate();
    const int n = cfg.n, t = cfg.t, n1 = cfg.cluster1(), n2 = n - n1;
    auto rng = replication_rng(cfg.seed, rep, 0x5EEDu);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::chi_squared_distribution<double> chi6(6.0);

    const Eigen::MatrixXd l1 = spatial_cov(n1, cfg.rho_s, cfg.ell).llt().matrixL();
    const Eigen::MatrixXd l2 = spatial_cov(n2, cfg.rho_s, cfg.ell).llt().matrixL();
    auto spatial = [&](const Eigen::MatrixXd& z) {
        Eigen::MatrixXd out(z.rows(), z.cols());
        out.topRows(n1) = l1 * z.topRows(n1);
        out.bottomRows(n2) = l2 * z.bottomRows(n2);
        return out;
    };
    Eigen::Matrix2d corr;
    corr << 1.0, cfg.innovation_corr, cfg.innovation_corr, 1.0;
    const Eigen::Matrix2d c_chol = corr.llt().matrixL();
    auto draw = [&](int rows, int cols) {
        Eigen::MatrixXd z(rows, cols);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) z(i, j) = normal(rng);
        return z;
    };

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
    if (cfg.sim_case != SimCase::Baseline) mu = 0.5 * draw(n, 1).col(0);

    // period s (1-based) innovations; s <= 0 are burn-in periods.
    auto eps = [&](int s) -> Eigen::VectorXd {
        Eigen::VectorXd e = spatial(draw(n, 1)).col(0);
        if (cfg.t_innovations && s > 0 && 2 * s > t) e *= std::sqrt(4.0 / 6.0) / std::sqrt(chi6(rng) / 6.0);
        return e;
    };
    auto eta = [&]() -> Eigen::MatrixXd { return spatial(draw(n, 2)) * c_chol.transpose(); };

    const double su = std::sqrt(1.0 - cfg.rho_u * cfg.rho_u), sx = std::sqrt(1.0 - cfg.rho_x * cfg.rho_x);
    Eigen::VectorXd u;
    Eigen::MatrixXd x;
    int first = 1;
    if (cfg.stationary_init) {
        u = eps(1);
        x = eta();
        first = 2;
    } else {
        u = Eigen::VectorXd::Zero(n);
        x = Eigen::MatrixXd::Zero(n, 2);
        for (int s = 1 - cfg.burn_in; s <= 0; ++s) {
            u = cfg.rho_u * u + su * eps(s);
            x = cfg.rho_x * x + sx * eta();
        }
        first = 1;
    }

    Eigen::MatrixXd y(n, t);
    std::vector<Eigen::MatrixXd> xs(n, Eigen::MatrixXd(t, 2));
    const double two_pi = 2.0 * std::acos(-1.0);
    for (int s = 1; s <= t; ++s) {
        if (s >= first) {
            u = cfg.rho_u * u + su * eps(s);
            x = cfg.rho_x * x + sx * eta();
        }
        for (int i = 0; i < n; ++i) {
            const int g = i < n1 ? 0 : 1;
            double xi = mu[i];
            if (cfg.sim_case == SimCase::GroupFE)
                xi += g == 0 ? 0.8 * std::sin(two_pi * s / t) : 2.0 + std::sin(two_pi * s / t + two_pi / 8.0);
            xs[i].row(s - 1) = x.row(i);
            y(i, s - 1) = x.row(i).dot(slopes(cfg.dgp, g)) + xi + u[i];
        }
    }
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i < n1 ? 0 : 1;
    return {PanelDataset(std::move(y), std::move(xs)), GroupAssignment(std::move(labels), 2)};
}

std::vector<SimConfig> StudySpec::expand() const {
    std::vector<SimConfig> out;
    const std::vector<int> ts = periods.empty() ? std::vector<int>{base.t} : periods;
    const std::vector<Dgp> ds = dgps.empty() ? std::vector<Dgp>{base.dgp} : dgps;
    const std::vector<SimCase> cs = cases.empty() ? std::vector<SimCase>{base.sim_case} : cases;
    for (auto c : cs)
        for (int t : ts)
            for (auto d : ds) {
                SimConfig cfg = base;
                cfg.t = t;
                cfg.dgp = d;
                cfg.sim_case = c;
                cfg.validate();
                out.push_back(cfg);
            }
    return out;
}

double RejectionRow::se() const {
    if (valid == 0) return 0.0;
    const double p = rate();
    return std::sqrt(p * (1.0 - p) / valid);
}

const RejectionRow& RejectionTable::find(HypothesisId h, Procedure p) const {
    for (const auto& r : rows)
        if (r.hypothesis == h && r.procedure == p) return r;
    throw ValidationError("no row for " + to_string(h) + "/" + to_string(p));
}

std::string RejectionTable::to_csv() const {
    std::ostringstream out;
    out << "T,hypothesis,dgp,case,procedure,rate,se,valid,failures\n";
    out.setf(std::ios::fixed);
    out.precision(6);
    for (const auto& r : rows)
        out << r.t << ',' << to_string(r.hypothesis) << ',' << to_string(r.dgp) << ',' << to_string(r.sim_case) << ','
            << to_string(r.procedure) << ',' << r.rate() << ',' << r.se() << ',' << r.valid << ',' << r.failures
            << '\n';
    return out.str();
}

std::vector<int> align_to_reference(const GroupAssignment& estimated, const GroupAssignment& reference) {
    if (estimated.n() != reference.n() || estimated.groups() != reference.groups())
        throw ValidationError("assignments to align differ in shape");
    const int g = estimated.groups();
    Eigen::MatrixXi overlap = Eigen::MatrixXi::Zero(g, g);
    for (int i = 0; i < estimated.n(); ++i) ++overlap(estimated[i], reference[i]);
    std::vector<int> perm(g), best;
    std::iota(perm.begin(), perm.end(), 0);
    int best_score = -1;
    do {
        int score = 0;
        for (int a = 0; a < g; ++a) score += overlap(a, perm[a]);
        if (score > best_score) {
            best_score = score;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

namespace {

bool uses(const SimConfig& cfg, Procedure a, Procedure b) {
    return std::find(cfg.procedures.begin(), cfg.procedures.end(), a) != cfg.procedures.end() ||
           std::find(cfg.procedures.begin(), cfg.procedures.end(), b) != cfg.procedures.end();
}

struct MethodRun {
    std::optional<GroupFit> fit;
    std::optional<PanelDataset> design;
    std::optional<GroupCovariances> cov;
    std::string error;
};

MethodRun prepare(const SimConfig& cfg, const SimulatedPanel& sim, Method method, std::uint64_t seed) {
    MethodRun run;
    try {
        const bool within = cfg.sim_case != SimCase::Baseline;
        run.design = design_panel(sim.data, method, within);
        FitOptions opts;
        opts.groups = 2;
        opts.restarts = cfg.restarts;
        opts.seed = seed;
        GroupFit fit = fit_model(sim.data, method, opts, within);
        fit = relabel_fit(fit, align_to_reference(fit.gamma, sim.truth));
        const CovMethod cm = method == Method::TSK ? cfg.tsk_variance : CovMethod::DriscollKraay;
        run.cov = estimate_covariance(cm, *run.design, fit, cfg.bandwidth);
        run.fit = std::move(fit);
    } catch (const std::exception& e) {
        run.error = e.what();
    }
    return run;
}

}  // namespace

ReplicationOutcome run_replication(const SimConfig& cfg, int rep) {
    const SimulatedPanel sim = simulate_panel(cfg, rep);
    const std::uint64_t seed = fit_seed(cfg.seed, rep);
    const int np = static_cast<int>(cfg.procedures.size());
    ReplicationOutcome out;
    out.pvalues.assign(cfg.hypotheses.size() * np, std::numeric_limits<double>::quiet_NaN());
    out.errors.assign(out.pvalues.size(), "");

    MethodRun tsk, pcr, gfe;
    if (uses(cfg, Procedure::NaiveTSK, Procedure::ConditionalTSK)) tsk = prepare(cfg, sim, Method::TSK, seed);
    if (uses(cfg, Procedure::NaivePCR, Procedure::ConditionalPCR)) pcr = prepare(cfg, sim, Method::PCR, seed);
    if (uses(cfg, Procedure::NaiveGFE, Procedure::ConditionalGFE)) gfe = prepare(cfg, sim, Method::GFE, seed);

    for (std::size_t hi = 0; hi < cfg.hypotheses.size(); ++hi) {
        const LinearHypothesis hyp = study_hypothesis(cfg.hypotheses[hi]);
        for (int pi = 0; pi < np; ++pi) {
            const Procedure proc = cfg.procedures[pi];
            const std::size_t slot = hi * np + pi;
            try {
                double p = 0.0;
                if (proc == Procedure::Predetermined) {
                    const PanelDataset d = cfg.sim_case == SimCase::Baseline ? sim.data : within_transform(sim.data);
                    auto centers = pooled_group_ols(d, sim.truth);
                    if (!centers) throw NumericalError("pooled Gram matrix singular");
                    Eigen::MatrixXd ct = centers->transpose();
                    Eigen::VectorXd alpha = Eigen::Map<const Eigen::VectorXd>(ct.data(), ct.size());
                    const int bw = cfg.bandwidth > 0 ? cfg.bandwidth : default_bandwidth(d.t());
                    const GroupCovariances cov = driscoll_kraay_cov(d, sim.truth, alpha, bw);
                    p = naive_pvalue(wald_statistic(alpha, hypothesis_cov(cov, hyp), hyp), hyp.df());
                } else {
                    const bool is_tsk = proc == Procedure::NaiveTSK || proc == Procedure::ConditionalTSK;
                    const bool is_pcr = proc == Procedure::NaivePCR || proc == Procedure::ConditionalPCR;
                    const MethodRun& run = is_tsk ? tsk : is_pcr ? pcr : gfe;
                    if (!run.fit) throw NumericalError(run.error);
                    const bool naive = proc == Procedure::NaiveTSK || proc == Procedure::NaivePCR ||
                                       proc == Procedure::NaiveGFE;
                    const LinearHypothesis wide = hyp.embedded(run.fit->coef_dim);
                    if (naive) {
                        const Eigen::MatrixXd cov_r = hypothesis_cov(*run.cov, wide);
                        p = naive_pvalue(wald_statistic(run.fit->alpha, cov_r, wide), wide.df());
                    } else {
                        p = selective_test(*run.fit, *run.design, hyp, *run.cov).selective_p;
                    }
                }
                out.pvalues[slot] = p;
            } catch (const std::exception& e) {
                out.errors[slot] = e.what();
            }
        }
    }
    return out;
}

RejectionTable run_rejection_study(const SimConfig& cfg) {
    cfg.validate();
    std::vector<ReplicationOutcome> outcomes(cfg.reps);
    detail::parallel_for(cfg.reps, cfg.jobs, [&](int rep) { outcomes[rep] = run_replication(cfg, rep); });

    RejectionTable table;
    table.reps = cfg.reps;
    const int np = static_cast<int>(cfg.procedures.size());
    for (std::size_t hi = 0; hi < cfg.hypotheses.size(); ++hi)
        for (int pi = 0; pi < np; ++pi) {
            RejectionRow row;
            row.t = cfg.t;
            row.hypothesis = cfg.hypotheses[hi];
            row.dgp = cfg.dgp;
            row.sim_case = cfg.sim_case;
            row.procedure = cfg.procedures[pi];
            for (int rep = 0; rep < cfg.reps; ++rep) {
                const std::size_t slot = hi * np + pi;
                const double p = outcomes[rep].pvalues[slot];
                if (std::isnan(p)) {
                    ++row.failures;
                    spdlog::warn("replication {} {} {}: {}", rep, to_string(row.hypothesis), to_string(row.procedure),
                                 outcomes[rep].errors[slot]);
                    continue;
                }
                ++row.valid;
                if (p < cfg.level) ++row.rejections;
            }
            if (row.failures > 0.05 * cfg.reps) table.valid = false;
            table.rows.push_back(row);
        }
    return table;
}

double ks_uniform_distance(std::vector<double> sample) {
    if (sample.empty()) throw ValidationError("empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double x = std::clamp(sample[i], 0.0, 1.0);
        d = std::max({d, (i + 1) / n - x, x - i / n});
    }
    return d;
}

}  // namespace gps
