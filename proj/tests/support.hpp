#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "gps/panel.hpp"

namespace gps::fixtures {

// Panel with y_it = x_it' coef[label_i] + sigma * e_it, standard normal x.
inline PanelDataset grouped_panel(const std::vector<int>& labels, const Eigen::MatrixXd& coefs, int t,
                                  double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    const int n = static_cast<int>(labels.size());
    const int k = static_cast<int>(coefs.cols());
    Eigen::MatrixXd y(n, t);
    std::vector<Eigen::MatrixXd> x(n, Eigen::MatrixXd(t, k));
    for (int i = 0; i < n; ++i) {
        for (int s = 0; s < t; ++s) {
            for (int j = 0; j < k; ++j) x[i](s, j) = z(rng);
            y(i, s) = x[i].row(s).dot(coefs.row(labels[i])) + sigma * z(rng);
        }
    }
    return PanelDataset(y, x);
}

// Every unit shares the same T x K regressor matrix.
inline PanelDataset common_x_panel(const std::vector<int>& labels, const Eigen::MatrixXd& coefs, int t,
                                   double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    const int n = static_cast<int>(labels.size());
    const int k = static_cast<int>(coefs.cols());
    Eigen::MatrixXd x0(t, k);
    for (int s = 0; s < t; ++s)
        for (int j = 0; j < k; ++j) x0(s, j) = z(rng);
    Eigen::MatrixXd y(n, t);
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < t; ++s) y(i, s) = x0.row(s).dot(coefs.row(labels[i])) + sigma * z(rng);
    return PanelDataset(y, std::vector<Eigen::MatrixXd>(n, x0));
}

inline std::vector<int> block_labels(int n, int groups) {
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) l[i] = i * groups / n;
    return l;
}

inline Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> z(0.0, scale);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = z(rng);
    return m;
}

}  // namespace gps::fixtures
