#include "gps/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "gps/errors.hpp"
#include "gps/linalg.hpp"

namespace gps {

PanelDataset::PanelDataset(Eigen::MatrixXd y, std::vector<Eigen::MatrixXd> x,
                           std::vector<std::string> unit_ids,
                           std::vector<std::string> time_ids,
                           std::vector<std::string> regressor_names)
    : y_(std::move(y)), x_(std::move(x)), unit_ids_(std::move(unit_ids)),
      time_ids_(std::move(time_ids)), regressor_names_(std::move(regressor_names)) {
    const auto n = y_.rows();
    const auto t = y_.cols();
    if (n == 0 || t == 0) throw ValidationError("empty panel");
    if (n < 2) throw ValidationError("panel needs at least 2 units");
    if (static_cast<Eigen::Index>(x_.size()) != n)
        throw ValidationError("regressor array has " + std::to_string(x_.size()) +
                              " units, outcome has " + std::to_string(n));
    const auto k = x_.front().cols();
    if (k < 1) throw ValidationError("panel needs at least 1 regressor");
    for (std::size_t i = 0; i < x_.size(); ++i) {
        if (x_[i].rows() != t || x_[i].cols() != k)
            throw ValidationError("regressor block of unit " + std::to_string(i) + " has wrong shape");
        if (!x_[i].allFinite()) throw ValidationError("non-finite regressor in unit " + std::to_string(i));
    }
    if (!y_.allFinite()) throw ValidationError("non-finite outcome value");

    if (unit_ids_.empty())
        for (Eigen::Index i = 0; i < n; ++i) unit_ids_.push_back(std::to_string(i + 1));
    if (time_ids_.empty())
        for (Eigen::Index s = 0; s < t; ++s) time_ids_.push_back(std::to_string(s + 1));
    if (regressor_names_.empty())
        for (Eigen::Index j = 0; j < k; ++j) regressor_names_.push_back("x" + std::to_string(j + 1));
    if (static_cast<Eigen::Index>(unit_ids_.size()) != n || static_cast<Eigen::Index>(time_ids_.size()) != t ||
        static_cast<Eigen::Index>(regressor_names_.size()) != k)
        throw ValidationError("label counts do not match panel shape");
}

Eigen::VectorXd PanelDataset::stacked_y() const {
    Eigen::MatrixXd yt = y_.transpose();
    return Eigen::Map<const Eigen::VectorXd>(yt.data(), yt.size());
}

PanelDataset PanelDataset::with_outcome(const Eigen::MatrixXd& y) const {
    if (y.rows() != y_.rows() || y.cols() != y_.cols())
        throw ValidationError("replacement outcome has wrong shape");
    return PanelDataset(y, x_, unit_ids_, time_ids_, regressor_names_);
}

GroupAssignment::GroupAssignment(std::vector<int> labels, int groups)
    : labels_(std::move(labels)), groups_(groups) {
    if (groups_ < 1) throw ValidationError("groups must be ≥ 1");
    for (int g : labels_)
        if (g < 0 || g >= groups_)
            throw ValidationError("group label " + std::to_string(g + 1) + " outside 1.." + std::to_string(groups_));
}

std::vector<int> GroupAssignment::sizes() const {
    std::vector<int> s(groups_, 0);
    for (int g : labels_) ++s[g];
    return s;
}

bool GroupAssignment::all_nonempty() const {
    auto s = sizes();
    return std::all_of(s.begin(), s.end(), [](int c) { return c > 0; });
}

std::vector<int> GroupAssignment::canonical_permutation() const {
    std::vector<int> perm(groups_, -1);
    int next = 0;
    for (int g : labels_)
        if (perm[g] < 0) perm[g] = next++;
    for (auto& p : perm)
        if (p < 0) p = next++;
    return perm;
}

GroupAssignment GroupAssignment::relabeled(const std::vector<int>& perm) const {
    std::vector<int> out(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) out[i] = perm[labels_[i]];
    return GroupAssignment(std::move(out), groups_);
}

LinearHypothesis::LinearHypothesis(Eigen::MatrixXd r_matrix, Eigen::VectorXd r_vec, int groups, int k)
    : r_(std::move(r_matrix)), rv_(std::move(r_vec)), groups_(groups), k_(k) {
    if (groups_ < 1) throw ValidationError("groups must be ≥ 1");
    if (k_ < 1) throw ValidationError("hypothesis needs K ≥ 1");
    if (r_.rows() < 1) throw ValidationError("hypothesis needs at least one restriction");
    if (r_.cols() != static_cast<Eigen::Index>(groups_) * k_)
        throw ValidationError("R has " + std::to_string(r_.cols()) + " columns, expected G*K = " +
                              std::to_string(groups_ * k_));
    if (rv_.size() != r_.rows()) throw ValidationError("r vector length does not match rows of R");
    if (!r_.allFinite() || !rv_.allFinite()) throw ValidationError("non-finite hypothesis entry");
    if (r_.rows() > r_.cols() || matrix_rank(r_) < r_.rows())
        throw ValidationError("R is rank deficient");
}

LinearHypothesis LinearHypothesis::embedded(int k_total) const {
    if (k_total < k_) throw ValidationError("cannot embed hypothesis into fewer coefficients");
    if (k_total == k_) return *this;
    Eigen::MatrixXd wide = Eigen::MatrixXd::Zero(r_.rows(), static_cast<Eigen::Index>(groups_) * k_total);
    for (int g = 0; g < groups_; ++g)
        wide.middleCols(static_cast<Eigen::Index>(g) * k_total, k_) = r_.middleCols(static_cast<Eigen::Index>(g) * k_, k_);
    return LinearHypothesis(wide, rv_, groups_, k_total);
}

namespace {

std::string trim(std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && issp(s.back())) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && issp(s[b])) ++b;
    s.erase(0, b);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') quoted = !quoted;
        if (c == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

// Numeric labels sort numerically, anything else lexicographically.
std::vector<std::string> sorted_labels(std::vector<std::string> labels) {
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    std::vector<double> values(labels.size());
    bool numeric = true;
    for (std::size_t i = 0; i < labels.size() && numeric; ++i) numeric = parse_double(labels[i], values[i]);
    if (numeric) {
        std::vector<std::size_t> idx(labels.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a] < values[b]; });
        std::vector<std::string> out;
        for (auto i : idx) out.push_back(labels[i]);
        return out;
    }
    return labels;
}

}  // namespace

PanelDataset parse_panel_csv(const std::string& text, const ColumnMapping& schema) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        header = split_row(line);
        break;
    }
    if (header.empty()) throw ValidationError("empty panel");

    auto column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ValidationError("missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t cu = column(schema.unit), ct = column(schema.time), cy = column(schema.y);
    std::vector<std::size_t> cx;
    std::vector<std::string> xnames = schema.x;
    if (xnames.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (j != cu && j != ct && j != cy) xnames.push_back(header[j]);
    }
    for (const auto& name : xnames) cx.push_back(column(name));
    if (cx.empty()) throw ValidationError("no regressor columns");

    struct Row {
        std::string unit, time;
        double y;
        std::vector<double> x;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto cells = split_row(line);
        if (cells.size() != header.size())
            throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                  " fields, found " + std::to_string(cells.size()));
        Row row{cells[cu], cells[ct], 0.0, std::vector<double>(cx.size())};
        auto num = [&](std::size_t col, double& out) {
            if (!parse_double(cells[col], out))
                throw ValidationError("non-numeric value '" + cells[col] + "' at line " + std::to_string(line_no) +
                                      ", column " + header[col]);
        };
        num(cy, row.y);
        for (std::size_t j = 0; j < cx.size(); ++j) num(cx[j], row.x[j]);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("empty panel");

    std::vector<std::string> units, times;
    for (const auto& r : rows) {
        units.push_back(r.unit);
        times.push_back(r.time);
    }
    units = sorted_labels(std::move(units));
    times = sorted_labels(std::move(times));
    std::map<std::string, int> uidx, tidx;
    for (std::size_t i = 0; i < units.size(); ++i) uidx[units[i]] = static_cast<int>(i);
    for (std::size_t s = 0; s < times.size(); ++s) tidx[times[s]] = static_cast<int>(s);

    const int n = static_cast<int>(units.size()), t = static_cast<int>(times.size()), k = static_cast<int>(cx.size());
    Eigen::MatrixXd y(n, t);
    std::vector<Eigen::MatrixXd> x(n, Eigen::MatrixXd(t, k));
    std::vector<char> seen(static_cast<std::size_t>(n) * t, 0);
    for (const auto& r : rows) {
        const int i = uidx[r.unit], s = tidx[r.time];
        char& flag = seen[static_cast<std::size_t>(i) * t + s];
        if (flag) throw ValidationError("duplicate cell (" + r.unit + "," + r.time + ")");
        flag = 1;
        y(i, s) = r.y;
        for (int j = 0; j < k; ++j) x[i](s, j) = r.x[j];
    }
    std::string missing;
    int missing_count = 0;
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < t; ++s)
            if (!seen[static_cast<std::size_t>(i) * t + s]) {
                if (missing_count < 20) missing += (missing_count ? ", (" : "(") + units[i] + "," + times[s] + ")";
                ++missing_count;
            }
    if (missing_count) {
        if (missing_count > 20) missing += ", ... (" + std::to_string(missing_count) + " cells)";
        throw ValidationError("unbalanced: missing " + missing);
    }
    return PanelDataset(std::move(y), std::move(x), units, times, xnames);
}

PanelDataset load_panel(const std::string& path, const ColumnMapping& schema) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_panel_csv(buf.str(), schema);
}

std::string panel_to_csv(const PanelDataset& d) {
    std::ostringstream out;
    out.precision(17);
    out << "unit,time,y";
    for (const auto& name : d.regressor_names()) out << ',' << name;
    out << '\n';
    for (int i = 0; i < d.n(); ++i)
        for (int s = 0; s < d.t(); ++s) {
            out << d.unit_ids()[i] << ',' << d.time_ids()[s] << ',' << d.y()(i, s);
            for (int j = 0; j < d.k(); ++j) out << ',' << d.x(i)(s, j);
            out << '\n';
        }
    return out.str();
}

void write_panel(const std::string& path, const PanelDataset& d) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + path + "'");
    f << panel_to_csv(d);
}

PanelDataset within_transform(const PanelDataset& d) {
    if (d.t() < 2) throw ValidationError("within transform needs T ≥ 2");
    Eigen::MatrixXd y = d.y().colwise() - d.y().rowwise().mean();
    std::vector<Eigen::MatrixXd> x;
    x.reserve(d.n());
    for (const auto& xi : d.x()) x.push_back(xi.rowwise() - xi.colwise().mean());
    return PanelDataset(std::move(y), std::move(x), d.unit_ids(), d.time_ids(), d.regressor_names());
}

PanelDataset augment_time_dummies(const PanelDataset& d) {
    if (d.t() < 2) throw ValidationError("time dummies need T ≥ 2");
    const int t = d.t(), k = d.k();
    std::vector<Eigen::MatrixXd> x;
    x.reserve(d.n());
    for (const auto& xi : d.x()) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(t, k + t - 1);
        a.leftCols(k) = xi;
        for (int s = 1; s < t; ++s) a(s, k + s - 1) = 1.0;
        x.push_back(std::move(a));
    }
    auto names = d.regressor_names();
    for (int s = 1; s < t; ++s) names.push_back("d_" + d.time_ids()[s]);
    return PanelDataset(d.y(), std::move(x), d.unit_ids(), d.time_ids(), names);
}

GroupDummies group_dummy_matrix(const GroupAssignment& gamma, int k) {
    const int n = gamma.n(), g = gamma.groups();
    GroupDummies out;
    out.d = Eigen::MatrixXd::Zero(n, g);
    out.kron = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * k, static_cast<Eigen::Index>(g) * k);
    for (int i = 0; i < n; ++i) {
        out.d(i, gamma[i]) = 1.0;
        out.kron.block(static_cast<Eigen::Index>(i) * k, static_cast<Eigen::Index>(gamma[i]) * k, k, k).setIdentity();
    }
    return out;
}

}  // namespace gps
