#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace gps {

// Balanced N x T panel with K regressors. Unit i's regressors are stored as
// a T x K matrix so unit-level regressions are contiguous.
class PanelDataset {
public:
    PanelDataset(Eigen::MatrixXd y, std::vector<Eigen::MatrixXd> x,
                 std::vector<std::string> unit_ids = {},
                 std::vector<std::string> time_ids = {},
                 std::vector<std::string> regressor_names = {});

    int n() const { return static_cast<int>(y_.rows()); }
    int t() const { return static_cast<int>(y_.cols()); }
    int k() const { return static_cast<int>(x_.front().cols()); }

    const Eigen::MatrixXd& y() const { return y_; }
    const std::vector<Eigen::MatrixXd>& x() const { return x_; }
    const Eigen::MatrixXd& x(int unit) const { return x_[unit]; }
    Eigen::VectorXd y_unit(int unit) const { return y_.row(unit).transpose(); }

    const std::vector<std::string>& unit_ids() const { return unit_ids_; }
    const std::vector<std::string>& time_ids() const { return time_ids_; }
    const std::vector<std::string>& regressor_names() const { return regressor_names_; }

    // Outcome stacked unit-major: (y_11..y_1T, y_21..).
    Eigen::VectorXd stacked_y() const;

    // Same regressors, different outcome. Used for perturbed data.
    PanelDataset with_outcome(const Eigen::MatrixXd& y) const;

private:
    Eigen::MatrixXd y_;
    std::vector<Eigen::MatrixXd> x_;
    std::vector<std::string> unit_ids_;
    std::vector<std::string> time_ids_;
    std::vector<std::string> regressor_names_;
};

// Group labels are 0-based internally; JSON and CSV outputs are 1-based.
class GroupAssignment {
public:
    GroupAssignment() = default;
    GroupAssignment(std::vector<int> labels, int groups);

    int groups() const { return groups_; }
    int n() const { return static_cast<int>(labels_.size()); }
    int operator[](int i) const { return labels_[i]; }
    const std::vector<int>& labels() const { return labels_; }

    std::vector<int> sizes() const;
    bool all_nonempty() const;

    // Relabel by first occurrence. perm[old] = new.
    std::vector<int> canonical_permutation() const;
    GroupAssignment relabeled(const std::vector<int>& perm) const;
    GroupAssignment canonical() const { return relabeled(canonical_permutation()); }

    bool operator==(const GroupAssignment& o) const {
        return groups_ == o.groups_ && labels_ == o.labels_;
    }

private:
    std::vector<int> labels_;
    int groups_ = 0;
};

// H0: R alpha = r on the stacked group coefficients (alpha_1', ..., alpha_G')'.
class LinearHypothesis {
public:
    LinearHypothesis(Eigen::MatrixXd r_matrix, Eigen::VectorXd r_vec, int groups, int k);

    const Eigen::MatrixXd& r_matrix() const { return r_; }
    const Eigen::VectorXd& r_vec() const { return rv_; }
    int groups() const { return groups_; }
    int k() const { return k_; }
    int df() const { return static_cast<int>(r_.rows()); }

    // Pads each group's block with zero columns so the hypothesis applies to
    // the leading k coefficients of a wider per-group vector.
    LinearHypothesis embedded(int k_total) const;

private:
    Eigen::MatrixXd r_;
    Eigen::VectorXd rv_;
    int groups_;
    int k_;
};

struct ColumnMapping {
    std::string unit = "unit";
    std::string time = "time";
    std::string y = "y";
    std::vector<std::string> x;  // empty: every other column, in file order
};

PanelDataset load_panel(const std::string& path, const ColumnMapping& schema = {});
PanelDataset parse_panel_csv(const std::string& text, const ColumnMapping& schema = {});
void write_panel(const std::string& path, const PanelDataset& d);
std::string panel_to_csv(const PanelDataset& d);

PanelDataset within_transform(const PanelDataset& d);
PanelDataset augment_time_dummies(const PanelDataset& d);

struct GroupDummies {
    Eigen::MatrixXd d;       // N x G
    Eigen::MatrixXd kron;    // NK x GK, D kron I_K
};
GroupDummies group_dummy_matrix(const GroupAssignment& gamma, int k);

}  // namespace gps
