#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "gps/errors.hpp"
#include "gps/estimators.hpp"
#include "gps/panel.hpp"
#include "gps/selective.hpp"
#include "gps/serialization.hpp"
#include "gps/simulation.hpp"
#include "gps/variance.hpp"

#ifndef GPS_VERSION
#define GPS_VERSION "dev"
#endif

namespace gps::cli {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    std::ostringstream o;
    o << std::hex << std::setw(16) << std::setfill('0') << v;
    return o.str();
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
    if (flag) return *flag;
    if (const char* env = std::getenv("GPS_SEED")) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw ValidationError(std::string("GPS_SEED is not an unsigned integer: '") + env + "'");
    }
    return fallback;
}

struct DataFlags {
    std::string path;
    std::string unit_col = "unit";
    std::string time_col = "time";
    std::string y_col = "y";
    std::vector<std::string> x_cols;

    void add(CLI::App* app) {
        app->add_option("--data", path, "Long-format panel CSV")->required();
        app->add_option("--unit-col", unit_col, "Unit id column");
        app->add_option("--time-col", time_col, "Time id column");
        app->add_option("--y-col", y_col, "Outcome column");
        app->add_option("--x-cols", x_cols, "Regressor columns (default: all others)")->delimiter(',');
    }

    PanelDataset load() const { return load_panel(path, ColumnMapping{unit_col, time_col, y_col, x_cols}); }
};

void write_manifest(const std::string& path, const std::string& command, const std::string& config_text,
                    std::uint64_t seed, Clock::time_point start, const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = hex(fnv1a(config_text));
    j["seed"] = seed;
    j["wall_time_seconds"] = std::chrono::duration<double>(Clock::now() - start).count();
    j["versions"] = {{"gps", GPS_VERSION}};
    j["outputs"] = outputs;
    for (const auto& o : outputs)
        if (!std::filesystem::exists(o) || std::filesystem::file_size(o) == 0)
            throw NumericalError("output file '" + o + "' missing or empty");
    write_text_file(path, j.dump(2));
}

std::string summary_table(const GroupFit& fit, const PanelDataset& raw) {
    std::ostringstream o;
    o << "method " << to_string(fit.method) << "  G=" << fit.groups << "  objective=" << std::setprecision(10)
      << fit.objective << "  M=" << fit.trace.iterations()
      << (fit.status == FitStatus::Converged ? "" : "  (iteration limit reached)") << "\n";
    o << "restarts " << fit.restart_count << "  winner " << fit.winning_restart << "  discarded "
      << fit.discarded_restarts << "  seed " << fit.seed << "\n";
    const auto sizes = fit.gamma.sizes();
    const Eigen::MatrixXd a = fit.alpha_matrix();
    o << std::left << std::setw(7) << "group" << std::setw(7) << "size";
    for (int j = 0; j < fit.k; ++j) o << std::setw(14) << raw.regressor_names()[j];
    o << "\n" << std::fixed << std::setprecision(6);
    for (int g = 0; g < fit.groups; ++g) {
        o << std::setw(7) << g + 1 << std::setw(7) << sizes[g];
        for (int j = 0; j < fit.k; ++j) o << std::setw(14) << a(g, j);
        o << "\n";
    }
    return o.str();
}

std::string default_sibling(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Selective inference for panels with latent group structure", "gps"};
    app.require_subcommand(1);
    app.set_version_flag("--version", GPS_VERSION);

    std::string command_echo;
    for (int i = 0; i < argc; ++i) command_echo += (i ? " " : "") + std::string(argv[i]);

    // estimate
    auto* est = app.add_subcommand("estimate", "Estimate latent groups (TSK, PCR or GFE)");
    DataFlags est_data;
    est_data.add(est);
    std::string method_name;
    int groups = 0, restarts = 100, jobs = 1;
    std::optional<std::uint64_t> est_seed;
    bool within = false;
    std::string fit_out = "fit.json", summary_out, est_manifest;
    est->add_option("--method", method_name, "tsk, pcr or gfe")->required();
    est->add_option("--groups", groups, "Number of groups G")->required();
    est->add_option("--restarts", restarts, "Random restarts");
    est->add_option("--seed", est_seed, "Seed (falls back to GPS_SEED, then 0)");
    est->add_option("--jobs", jobs, "Worker threads for restarts");
    est->add_flag("--within", within, "Apply the within transformation first");
    est->add_option("--out", fit_out, "Fit JSON path");
    est->add_option("--summary", summary_out, "Summary table path");
    est->add_option("--manifest", est_manifest, "Run manifest path");

    // test
    auto* tst = app.add_subcommand("test", "Selective test of a linear hypothesis on group coefficients");
    DataFlags tst_data;
    tst_data.add(tst);
    std::string fit_in, hyp_in, variance_name, test_out = "test.json", tst_manifest;
    int bandwidth = 0;
    double sigma2 = 0.0;
    tst->add_option("--fit", fit_in, "Fit JSON from estimate")->required();
    tst->add_option("--hypothesis", hyp_in, "Hypothesis JSON {\"R\": [[...]], \"r\": [...]}")->required();
    tst->add_option("--variance", variance_name, "pesaran, dk or theory (default: pesaran for TSK, dk otherwise)");
    tst->add_option("--bandwidth", bandwidth, "Driscoll-Kraay bandwidth (default rule when 0)");
    tst->add_option("--sigma2", sigma2, "Known error variance for --variance theory");
    tst->add_option("--out", test_out, "Test result JSON path");
    tst->add_option("--manifest", tst_manifest, "Run manifest path");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Monte Carlo rejection-rate study");
    std::string config_in, sim_out = "rejections.csv", sim_manifest;
    std::optional<int> reps_flag, sim_jobs;
    std::optional<std::uint64_t> sim_seed;
    sim->add_option("--config", config_in, "Study config JSON")->required();
    sim->add_option("--reps", reps_flag, "Override replications");
    sim->add_option("--seed", sim_seed, "Override seed (falls back to GPS_SEED, then the config)");
    sim->add_option("--jobs", sim_jobs, "Worker threads for replications");
    sim->add_option("--out", sim_out, "Rejection table CSV path");
    sim->add_option("--manifest", sim_manifest, "Run manifest path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, eo;
        const int code = app.exit(e, o, eo);
        out << o.str();
        err << eo.str();
        return code == 0 ? 0 : 2;
    }

    const auto start = Clock::now();
    try {
        if (est->parsed()) {
            if (groups < 1) throw ValidationError("groups must be ≥ 1");
            if (restarts < 1) throw ValidationError("restarts must be ≥ 1");
            if (jobs < 1) throw ValidationError("jobs must be ≥ 1");
            const Method method = parse_method(method_name);
            const PanelDataset raw = est_data.load();
            FitOptions opts;
            opts.groups = groups;
            opts.restarts = restarts;
            opts.seed = resolve_seed(est_seed, 0);
            opts.jobs = jobs;
            const GroupFit fit = fit_model(raw, method, opts, within);
            write_text_file(fit_out, fit_to_json(fit));
            const std::string table = summary_table(fit, raw);
            if (summary_out.empty()) summary_out = default_sibling(fit_out, "_summary.txt");
            write_text_file(summary_out, table);
            out << table;
            if (est_manifest.empty()) est_manifest = default_sibling(fit_out, "_manifest.json");
            write_manifest(est_manifest, command_echo, command_echo, opts.seed, start, {fit_out, summary_out});
        } else if (tst->parsed()) {
            const PanelDataset raw = tst_data.load();
            const GroupFit fit = fit_from_json(read_text_file(fit_in));
            if (fit.gamma.n() != raw.n()) throw ValidationError("fit has N=" + std::to_string(fit.gamma.n()) +
                                                                 " but the panel has N=" + std::to_string(raw.n()));
            const LinearHypothesis hyp = hypothesis_from_json(read_text_file(hyp_in), fit.groups);
            const PanelDataset design = design_panel(raw, fit.method, fit.within);
            const CovMethod cm = variance_name.empty()
                                     ? (fit.method == Method::TSK ? CovMethod::Pesaran : CovMethod::DriscollKraay)
                                     : parse_cov_method(variance_name);
            const GroupCovariances cov = estimate_covariance(cm, design, fit, bandwidth, sigma2);
            const TestResult res = selective_test(fit, design, hyp, cov);
            write_text_file(test_out, test_result_to_json(res));
            out << std::setprecision(6) << "statistic " << res.statistic << "  df " << res.df << "  naive_p "
                << res.naive_p << "  selective_p " << res.selective_p << "\nS = " << res.truncation.to_string() << "\n";
            if (tst_manifest.empty()) tst_manifest = default_sibling(test_out, "_manifest.json");
            write_manifest(tst_manifest, command_echo, read_text_file(hyp_in) + read_text_file(fit_in), fit.seed, start,
                           {test_out});
        } else if (sim->parsed()) {
            const std::string config_text = read_text_file(config_in);
            StudySpec spec = study_from_json(config_text);
            if (reps_flag) spec.base.reps = *reps_flag;
            if (sim_jobs) spec.base.jobs = *sim_jobs;
            if (sim_seed || !nlohmann::json::parse(config_text).contains("seed"))
                spec.base.seed = resolve_seed(sim_seed, spec.base.seed);
            RejectionTable all;
            all.reps = spec.base.reps;
            for (const SimConfig& cfg : spec.expand()) {
                out << "T=" << cfg.t << " " << to_string(cfg.dgp) << " " << to_string(cfg.sim_case) << " ..."
                    << std::endl;
                RejectionTable t = run_rejection_study(cfg);
                all.valid = all.valid && t.valid;
                all.rows.insert(all.rows.end(), t.rows.begin(), t.rows.end());
            }
            write_text_file(sim_out, all.to_csv());
            out << all.to_csv();
            if (!all.valid) err << "warning: more than 5% of replications failed for some rows; study marked invalid\n";
            if (sim_manifest.empty()) sim_manifest = default_sibling(sim_out, "_manifest.json");
            write_manifest(sim_manifest, command_echo, config_text, spec.base.seed, start, {sim_out});
        }
    } catch (const Error& e) {
        err << "error: " << (e.kind() == ErrorKind::Validation ? "validation" : e.kind() == ErrorKind::Infeasible ? "infeasible" : "numerical")
            << ": " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "error: numerical: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<std::string> storage;
    storage.push_back("gps");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace gps::cli
