#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gps/panel.hpp"
#include "gps/variance.hpp"

namespace gps {

enum class Dgp { DGP1, DGP2, DGP3 };
enum class SimCase { Baseline, UnitFE, GroupFE };
enum class Procedure { Predetermined, NaiveTSK, NaivePCR, NaiveGFE, ConditionalTSK, ConditionalPCR, ConditionalGFE };
enum class HypothesisId { H01, H02, H03 };

std::string to_string(Dgp d);
std::string to_string(SimCase c);
std::string to_string(Procedure p);
std::string to_string(HypothesisId h);
Dgp parse_dgp(const std::string& s);
SimCase parse_case(const std::string& s);
Procedure parse_procedure(const std::string& s);
HypothesisId parse_hypothesis(const std::string& s);

// The study hypotheses on G = 2, K = 2 (coefficient k of group g is
// alpha_{k,g}): equal slope vectors, equal second slopes, zero first slopes.
LinearHypothesis study_hypothesis(HypothesisId id);

struct SimConfig {
    int n = 120;
    int t = 20;
    int reps = 250;
    std::uint64_t seed = 20240601;
    Dgp dgp = Dgp::DGP1;
    SimCase sim_case = SimCase::Baseline;
    double rho_u = 0.5;
    double rho_x = 0.5;
    double rho_s = 0.2;
    double ell = 0.3;
    double innovation_corr = 0.4;
    int n1 = 0;  // 0: N / 3
    double level = 0.05;
    bool stationary_init = true;
    int burn_in = 100;
    bool t_innovations = true;  // t(6) innovations in the second half
    std::vector<Procedure> procedures = {Procedure::Predetermined, Procedure::NaiveTSK,     Procedure::NaivePCR,
                                         Procedure::NaiveGFE,      Procedure::ConditionalTSK, Procedure::ConditionalPCR,
                                         Procedure::ConditionalGFE};
    std::vector<HypothesisId> hypotheses = {HypothesisId::H01, HypothesisId::H02, HypothesisId::H03};
    int restarts = 50;
    int jobs = 1;
    int bandwidth = 0;  // 0: default rule
    CovMethod tsk_variance = CovMethod::DriscollKraay;

    int cluster1() const { return n1 > 0 ? n1 : n / 3; }
    void validate() const;
};

Eigen::MatrixXd spatial_cov(int n_g, double rho_s, double ell);

struct SimulatedPanel {
    PanelDataset data;
    GroupAssignment truth;
};

// A grid of studies sharing one base configuration.
struct StudySpec {
    SimConfig base;
    std::vector<int> periods;
    std::vector<Dgp> dgps;
    std::vector<SimCase> cases;

    std::vector<SimConfig> expand() const;
};

SimulatedPanel simulate_panel(const SimConfig& cfg, int rep);

struct RejectionRow {
    int t = 0;
    HypothesisId hypothesis = HypothesisId::H01;
    Dgp dgp = Dgp::DGP1;
    SimCase sim_case = SimCase::Baseline;
    Procedure procedure = Procedure::Predetermined;
    int rejections = 0;
    int valid = 0;
    int failures = 0;
    double rate() const { return valid > 0 ? static_cast<double>(rejections) / valid : 0.0; }
    double se() const;
};

struct RejectionTable {
    std::vector<RejectionRow> rows;
    int reps = 0;
    bool valid = true;

    const RejectionRow& find(HypothesisId h, Procedure p) const;
    std::string to_csv() const;
};

// Per-replication p-values, one entry per (hypothesis, procedure); NaN
// marks a failed replication.
struct ReplicationOutcome {
    std::vector<double> pvalues;
    std::vector<std::string> errors;
};

ReplicationOutcome run_replication(const SimConfig& cfg, int rep);
RejectionTable run_rejection_study(const SimConfig& cfg);

// Kolmogorov-Smirnov distance of a sample from Uniform[0,1].
double ks_uniform_distance(std::vector<double> sample);

// Aligns estimated labels to a reference partition by maximal overlap.
// Returns perm[estimated] = reference label.
std::vector<int> align_to_reference(const GroupAssignment& estimated, const GroupAssignment& reference);

}  // namespace gps
