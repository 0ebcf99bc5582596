#include "gps/serialization.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "gps/errors.hpp"

namespace gps {

using nlohmann::json;

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
    return rows;
}

Eigen::VectorXd json_vec(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd json_mat(const json& j) {
    if (!j.is_array() || j.empty()) throw ValidationError("matrix must be a non-empty list of rows");
    const auto cols = j.front().size();
    Eigen::MatrixXd m(j.size(), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].size() != cols) throw ValidationError("matrix rows have unequal length");
        m.row(static_cast<Eigen::Index>(i)) = json_vec(j[i]).transpose();
    }
    return m;
}

json labels_json(const GroupAssignment& a) {
    std::vector<int> one_based(a.labels());
    for (auto& l : one_based) ++l;
    return one_based;
}

GroupAssignment json_labels(const json& j, int groups) {
    auto labels = j.get<std::vector<int>>();
    for (auto& l : labels) --l;
    return GroupAssignment(std::move(labels), groups);
}

template <class Fn>
auto guarded(const char* what, Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid ") + what + " JSON: " + e.what());
    }
}

json interval_json(const Interval& iv) {
    return json::array({iv.lower, iv.bounded() ? json(iv.upper) : json(nullptr)});
}

}  // namespace

std::string fit_to_json(const GroupFit& fit) {
    json j;
    j["method"] = to_string(fit.method);
    j["G"] = fit.groups;
    j["K"] = fit.k;
    j["coef_dim"] = fit.coef_dim;
    j["within"] = fit.within;
    j["gamma"] = labels_json(fit.gamma);
    j["alpha"] = vec_json(fit.alpha);
    j["alpha_by_group"] = mat_json(fit.alpha_matrix());
    j["objective"] = fit.objective;
    j["M"] = fit.trace.iterations();
    j["converged"] = fit.status == FitStatus::Converged;
    j["restart_count"] = fit.restart_count;
    j["winning_restart"] = fit.winning_restart;
    j["discarded_restarts"] = fit.discarded_restarts;
    j["seed"] = fit.seed;
    json assignments = json::array(), centers = json::array();
    for (const auto& a : fit.trace.assignments) assignments.push_back(labels_json(a));
    for (const auto& c : fit.trace.centers) centers.push_back(mat_json(c));
    j["assignments"] = assignments;
    j["centers"] = centers;
    j["objective_trace"] = fit.trace.objective;
    return j.dump(2);
}

GroupFit fit_from_json(const std::string& text) {
    return guarded("fit", [&] {
        const json j = json::parse(text);
        GroupFit fit;
        fit.method = parse_method(j.at("method").get<std::string>());
        fit.groups = j.at("G").get<int>();
        fit.k = j.at("K").get<int>();
        fit.coef_dim = j.value("coef_dim", fit.k);
        fit.within = j.value("within", false);
        fit.gamma = json_labels(j.at("gamma"), fit.groups);
        fit.alpha = json_vec(j.at("alpha"));
        fit.objective = j.at("objective").get<double>();
        fit.status = j.value("converged", true) ? FitStatus::Converged : FitStatus::IterationLimit;
        fit.restart_count = j.value("restart_count", 0);
        fit.winning_restart = j.value("winning_restart", 0);
        fit.discarded_restarts = j.value("discarded_restarts", 0);
        fit.seed = j.value("seed", std::uint64_t{0});
        for (const auto& a : j.at("assignments")) fit.trace.assignments.push_back(json_labels(a, fit.groups));
        if (j.contains("centers"))
            for (const auto& c : j.at("centers")) fit.trace.centers.push_back(json_mat(c));
        fit.trace.objective = j.value("objective_trace", std::vector<double>{});
        if (fit.alpha.size() != static_cast<Eigen::Index>(fit.groups) * fit.coef_dim)
            throw ValidationError("fit alpha has wrong length");
        if (fit.trace.assignments.empty() || !(fit.trace.assignments.back() == fit.gamma))
            throw ValidationError("fit trace does not end at gamma");
        if (j.at("M").get<int>() != fit.trace.iterations()) throw ValidationError("fit M does not match its trace");
        return fit;
    });
}

std::string test_result_to_json(const TestResult& r) {
    json j;
    j["method"] = to_string(r.method);
    j["variance"] = to_string(r.cov_method);
    j["statistic"] = r.statistic;
    j["df"] = r.df;
    j["naive_p"] = r.naive_p;
    j["selective_p"] = r.selective_p;
    json intervals = json::array();
    for (const auto& iv : r.truncation.intervals()) intervals.push_back(interval_json(iv));
    j["truncation"] = intervals;
    j["hypothesis"] = {{"R", mat_json(r.r_matrix)}, {"r", vec_json(r.r_vec)}};
    j["diagnostics"] = {{"M", r.iterations},
                        {"constraints", r.constraint_count},
                        {"truncation_mass", r.truncation_mass},
                        {"degenerate", r.degenerate}};
    return j.dump(2);
}

TestResult test_result_from_json(const std::string& text) {
    return guarded("test result", [&] {
        const json j = json::parse(text);
        TestResult r;
        r.method = parse_method(j.at("method").get<std::string>());
        r.cov_method = parse_cov_method(j.at("variance").get<std::string>());
        r.statistic = j.at("statistic").get<double>();
        r.df = j.at("df").get<int>();
        r.naive_p = j.at("naive_p").get<double>();
        r.selective_p = j.at("selective_p").get<double>();
        std::vector<Interval> intervals;
        for (const auto& iv : j.at("truncation"))
            intervals.push_back({iv.at(0).get<double>(),
                                 iv.at(1).is_null() ? std::numeric_limits<double>::infinity() : iv.at(1).get<double>()});
        r.truncation = TruncationSet(intervals);
        r.r_matrix = json_mat(j.at("hypothesis").at("R"));
        r.r_vec = json_vec(j.at("hypothesis").at("r"));
        const json& d = j.at("diagnostics");
        r.iterations = d.at("M").get<int>();
        r.constraint_count = d.at("constraints").get<int>();
        r.truncation_mass = d.at("truncation_mass").get<double>();
        r.degenerate = d.at("degenerate").get<bool>();
        return r;
    });
}

std::string covariances_to_json(const GroupCovariances& cov) {
    json blocks = json::array();
    for (const auto& b : cov.per_group) blocks.push_back(mat_json(b));
    return json{{"method", to_string(cov.method)}, {"per_group", blocks}}.dump(2);
}

LinearHypothesis hypothesis_from_json(const std::string& text, int groups) {
    return guarded("hypothesis", [&] {
        const json j = json::parse(text);
        Eigen::MatrixXd r = json_mat(j.at("R"));
        const json& rv = j.contains("r") ? j.at("r") : j.at("r_vec");
        Eigen::VectorXd r_vec = json_vec(rv);
        if (groups < 1) throw ValidationError("groups must be ≥ 1");
        if (r.cols() % groups != 0)
            throw ValidationError("R has " + std::to_string(r.cols()) + " columns, not a multiple of G = " +
                                  std::to_string(groups));
        return LinearHypothesis(r, r_vec, groups, static_cast<int>(r.cols() / groups));
    });
}

std::string hypothesis_to_json(const LinearHypothesis& h) {
    return json{{"R", mat_json(h.r_matrix())}, {"r", vec_json(h.r_vec())}}.dump(2);
}

std::string sim_config_to_json(const SimConfig& cfg) {
    json procs = json::array(), hyps = json::array();
    for (auto p : cfg.procedures) procs.push_back(to_string(p));
    for (auto h : cfg.hypotheses) hyps.push_back(to_string(h));
    json j = {{"N", cfg.n},
              {"T", cfg.t},
              {"reps", cfg.reps},
              {"seed", cfg.seed},
              {"dgp", to_string(cfg.dgp)},
              {"case", to_string(cfg.sim_case)},
              {"rho_u", cfg.rho_u},
              {"rho_x", cfg.rho_x},
              {"rho_s", cfg.rho_s},
              {"ell", cfg.ell},
              {"innovation_corr", cfg.innovation_corr},
              {"n1", cfg.cluster1()},
              {"level", cfg.level},
              {"stationary_init", cfg.stationary_init},
              {"burn_in", cfg.burn_in},
              {"t_innovations", cfg.t_innovations},
              {"procedures", procs},
              {"hypotheses", hyps},
              {"restarts", cfg.restarts},
              {"bandwidth", cfg.bandwidth},
              {"tsk_variance", to_string(cfg.tsk_variance)}};
    return j.dump(2);
}

StudySpec study_from_json(const std::string& text) {
    return guarded("study config", [&] {
        const json j = json::parse(text);
        if (!j.is_object()) throw ValidationError("study config must be a JSON object");
        static const std::set<std::string> known = {
            "N",     "T",     "reps",       "seed",  "dgp",   "case",  "rho_u",           "rho_x",
            "rho_s", "ell",   "innovation_corr", "n1", "level", "stationary_init", "burn_in",
            "t_innovations", "procedures", "hypotheses", "restarts", "jobs", "bandwidth", "tsk_variance",
            "description"};
        for (const auto& [key, _] : j.items())
            if (!known.count(key)) throw ValidationError("unknown study config key '" + key + "'");

        StudySpec spec;
        SimConfig& c = spec.base;
        c.n = j.value("N", c.n);
        c.reps = j.value("reps", c.reps);
        c.seed = j.value("seed", c.seed);
        c.rho_u = j.value("rho_u", c.rho_u);
        c.rho_x = j.value("rho_x", c.rho_x);
        c.rho_s = j.value("rho_s", c.rho_s);
        c.ell = j.value("ell", c.ell);
        c.innovation_corr = j.value("innovation_corr", c.innovation_corr);
        c.n1 = j.value("n1", c.n1);
        c.level = j.value("level", c.level);
        c.stationary_init = j.value("stationary_init", c.stationary_init);
        c.burn_in = j.value("burn_in", c.burn_in);
        c.t_innovations = j.value("t_innovations", c.t_innovations);
        c.restarts = j.value("restarts", c.restarts);
        c.jobs = j.value("jobs", c.jobs);
        c.bandwidth = j.value("bandwidth", c.bandwidth);
        if (j.contains("tsk_variance")) c.tsk_variance = parse_cov_method(j.at("tsk_variance").get<std::string>());

        auto list = [&](const char* key) {
            std::vector<json> out;
            if (!j.contains(key)) return out;
            const json& v = j.at(key);
            if (v.is_array())
                for (const auto& e : v) out.push_back(e);
            else
                out.push_back(v);
            return out;
        };
        for (const auto& t : list("T")) spec.periods.push_back(t.get<int>());
        for (const auto& d : list("dgp")) spec.dgps.push_back(parse_dgp(d.get<std::string>()));
        for (const auto& s : list("case")) spec.cases.push_back(parse_case(s.get<std::string>()));
        if (j.contains("procedures")) {
            c.procedures.clear();
            for (const auto& p : list("procedures")) c.procedures.push_back(parse_procedure(p.get<std::string>()));
        }
        if (j.contains("hypotheses")) {
            c.hypotheses.clear();
            for (const auto& h : list("hypotheses")) c.hypotheses.push_back(parse_hypothesis(h.get<std::string>()));
        }
        if (!spec.periods.empty()) c.t = spec.periods.front();
        if (!spec.dgps.empty()) c.dgp = spec.dgps.front();
        if (!spec.cases.empty()) c.sim_case = spec.cases.front();
        c.validate();
        return spec;
    });
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + path + "'");
    f << text;
    if (!f) throw ValidationError("write to '" + path + "' failed");
}

}  // namespace gps
